"""QND measurement of the cesium clock pseudospin and the squeezing it builds.

Atoms sit on the x axis at distance ``r_perp`` from the fiber centre, where
the quasilinear H mode is polarised in the x-z plane and V along y.  A
probe launched diagonally (equal H and V) acquires a differential phase
proportional to J3 = (N_up - N_down)/2 once its frequency is tuned so that
the two clock states shift the summed H + V phase equally ("magic"
condition).  The measurement strength is kappa = chi_J3^2 Ndot_L.

Photon scattering pumps atoms out of, and within, the clock subspace.
With a Gaussian closure the collective moments obey

    dN_C  = (-g00 N_C + 2 g03 J3) dt
    dJ1   = -g11 J1 dt
    dJ3   = sqrt(kappa) var dW - g33 J3 dt + g30 N_C dt / 2
    dvar  = [-kappa var^2 - 2 g33 var + (2 g33 - g00) N_C / 4
             + (g03 - 2 g30) J3 / 2] dt

and the metrological squeezing is xi^2 = N_A var / J1^2.  Time is measured
in units of 1/gamma_s, so only kappa/gamma_s = OD/N_A and the rate ratios
enter the dynamics.

Frequencies are rad/s offsets from the D-line centre unless a name says
MHz; areas are nm^2.
"""

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .atomic_structure import (
    DEFAULT_GUARD,
    QuantizationAxis,
    check_detunings,
    clock_coefficients,
    irreducible_coefficients,
    mixed_scalar_weight,
    transition_dipoles,
)
from .errors import RootNotFound, StepTooLarge
from .fiber_modes import local_modes

TWO_PI_MHZ = 2 * np.pi * 1e6
MIN_R_OVER_A = 1.5
OBSERVABLE_DB = 0.1


def mhz(omega):
    return omega / TWO_PI_MHZ


@dataclass(frozen=True)
class TrapSite:
    """Guided-mode fields at an atom on the x axis (phi = 0)."""

    r_perp: float
    uH: np.ndarray
    uV: np.ndarray
    n_g: float

    @classmethod
    def at(cls, sol, r_perp, phi=0.0):
        uH, uV = local_modes(sol, r_perp * np.cos(phi), r_perp * np.sin(phi))
        return cls(float(r_perp), uH, uV, sol.n_g)

    @property
    def H2(self):
        return float(np.vdot(self.uH, self.uH).real)

    @property
    def V2(self):
        return float(np.vdot(self.uV, self.uV).real)

    def projections(self, axis):
        z = axis.z_tilde
        return float(abs(z @ self.uH) ** 2), float(abs(z @ self.uV) ** 2)

    def _amplitude(self, polarization):
        if isinstance(polarization, str):
            polarization = {"H": (1, 0), "V": (0, 1), "diagonal": (1, 1)}[polarization]
        cH, cV = (complex(c) for c in polarization)
        return (cH * self.uH + cV * self.uV) / np.sqrt(abs(cH) ** 2 + abs(cV) ** 2)

    def input_polarization(self, polarization="diagonal"):
        """Unit polarization vector of the probe field at the atom."""
        u = self._amplitude(polarization)
        return u / np.linalg.norm(u)

    def area_in(self, polarization="diagonal"):
        u = self._amplitude(polarization)
        return 1.0 / (self.n_g * np.vdot(u, u).real)

    @property
    def area_N(self):
        return 1.0 / (0.5 * self.n_g * (self.H2 - self.V2))

    def inverse_area_j3(self, axis):
        pH, pV = self.projections(axis)
        return self.n_g * (pV * self.H2 - pH * self.V2) / (self.H2 + self.V2)


def _magic_function(system, site, axis, guard):
    pH, pV = site.projections(axis)
    S, T = site.H2 + site.V2, pH + pV
    up, down = system.f_up, system.f_down

    def F(probe):
        a4, b4 = clock_coefficients(system, up, probe, guard=0.0)
        a3, b3 = clock_coefficients(system, down, probe, guard=0.0)
        return (a4 - a3) * S - (b4 - b3) * T

    return F


@dataclass(frozen=True)
class MagicDetunings:
    """Magic probe offsets (rad/s from line centre) for the two branches.

    ``delta[f]`` is the detuning of branch f from its nearest f -> f'
    transition, the quantity plotted against the axis angle.
    """

    probe: dict
    delta: dict

    def delta_mhz(self, f):
        return mhz(self.delta[f])


def _branch_window(system, f, guard):
    offs = sorted(system.transition_offset(f, fp) for fp in system.excited_f)
    pad = guard * system.gamma
    return offs[0] + pad, offs[-1] - pad


def magic_detunings(system, sol, axis, r_perp, guard=DEFAULT_GUARD, n_scan=400, site=None):
    """Both magic probe frequencies for quantization axis ``axis``.

    Branch f lies between the hyperfine transitions out of ground level f;
    each window is scanned for a sign change and polished with brentq.
    """
    site = site or TrapSite.at(sol, r_perp)
    F = _magic_function(system, site, axis, guard)
    probes, deltas = {}, {}
    for f in system.ground_f:
        lo, hi = _branch_window(system, f, guard)
        grid = np.linspace(lo, hi, n_scan)
        vals = F(grid)
        idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
        if len(idx) == 0:
            raise RootNotFound(f"no magic root for ground level {f} at phi = {np.degrees(axis.varphi):.2f} deg")
        i = idx[0]
        root = optimize.brentq(lambda x: float(F(x)), grid[i], grid[i + 1], xtol=1e-9, rtol=1e-15, maxiter=500)
        probes[f] = root
        dets = [system.detuning(f, fp, root) for fp in system.excited_f]
        deltas[f] = min(dets, key=abs)
    return MagicDetunings(probes, deltas)


@dataclass(frozen=True)
class CouplingSet:
    chi_pf: dict
    chi_J3: float
    Delta_J3: float
    A_J3: float
    A_in: float
    A_N: float
    kappa: float
    gamma_s: float
    od_per_atom: float
    chi_N: float
    probe: float
    branch: int
    varphi: float
    photon_flux: float
    chi_J3_vanishes: bool = False

    def as_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "chi_pf"}
        d.update({f"chi_{p}_{f}": v for (p, f), v in self.chi_pf.items()})
        d["probe_MHz"] = mhz(self.probe)
        d["Delta_J3_MHz"] = mhz(self.Delta_J3)
        return d


def coupling_set(system, sol, axis, r_perp, magic_branch=None, photon_flux=1e8,
                 input_polarization="diagonal", guard=DEFAULT_GUARD, site=None, magic=None):
    """All interface scalars at the chosen magic frequency."""
    site = site or TrapSite.at(sol, r_perp)
    branch = system.f_up if magic_branch is None else magic_branch
    magic = magic or magic_detunings(system, sol, axis, r_perp, guard, site=site)
    probe = magic.probe[branch]
    check_detunings(system, probe, guard=guard)
    s0, ng = system.sigma0, sol.n_g
    pH, pV = site.projections(axis)
    chi = {}
    coeffs = {}
    for f in system.ground_f:
        a, b = clock_coefficients(system, f, probe, guard)
        coeffs[f] = (a, b)
        chi[("H", f)] = ng * s0 * (a * site.H2 - b * pH)
        chi[("V", f)] = ng * s0 * (a * site.V2 - b * pV)
    up, down = system.f_up, system.f_down
    inv_delta_j3 = 4 / system.gamma * (coeffs[up][1] - coeffs[down][1])
    delta_j3 = 1.0 / inv_delta_j3
    inv_a_j3 = site.inverse_area_j3(axis)
    a_in = site.area_in(input_polarization)
    chi_j3 = s0 * inv_a_j3 * system.gamma / (2 * delta_j3)
    vanishes = abs(inv_a_j3) < 1e-12 * ng * (site.H2 + site.V2)
    kappa = chi_j3**2 * photon_flux
    gamma_s = s0 / a_in * (system.gamma / (2 * delta_j3)) ** 2 * photon_flux
    od = kappa / gamma_s
    a_n = site.area_N
    chi_n = s0 / a_n * _mixed_scalar_response(system, probe)

    # consistency of the derived quantities
    sum_up = chi[("H", up)] + chi[("V", up)]
    sum_down = chi[("H", down)] + chi[("V", down)]
    assert abs(sum_up - sum_down) <= 1e-8 * max(abs(sum_up), abs(chi_j3), 1e-300)
    two_route = 2 * (chi[("H", up)] - chi[("H", down)])
    assert abs(two_route - chi_j3) <= 1e-8 * max(abs(chi_j3), abs(sum_up), 1e-300)
    assert abs(od - s0 * a_in * inv_a_j3**2) <= 1e-10 * max(od, 1e-300)
    return CouplingSet(
        chi_pf=chi, chi_J3=chi_j3, Delta_J3=delta_j3,
        A_J3=np.inf if vanishes else 1.0 / inv_a_j3, A_in=a_in, A_N=a_n,
        kappa=kappa, gamma_s=gamma_s, od_per_atom=od, chi_N=chi_n, probe=probe,
        branch=branch, varphi=axis.varphi, photon_flux=photon_flux, chi_J3_vanishes=bool(vanishes),
    )


def _mixed_scalar_response(system, probe):
    # sum_{f,f'} p_f C0 Gamma / (2 Delta) for the fully mixed ground state
    total = sum(2 * f + 1 for f in system.ground_f)
    acc = 0.0
    for f in system.ground_f:
        for fp in system.excited_f:
            c0 = irreducible_coefficients(system, f, fp).c0
            acc += (2 * f + 1) / total * c0 * system.gamma / (2 * system.detuning(f, fp, probe))
    return acc


@lru_cache(maxsize=None)
def _clock_dipoles(system, f):
    # rows: (f', m', vector) for transitions out of |f, 0> in the local frame
    return tuple((fp, mp, vec) for fp, mp, vec in transition_dipoles(system, f, 0))


@dataclass(frozen=True)
class RateSet:
    gamma_up: float
    gamma_down: float
    gamma_uu: float
    gamma_ud: float
    gamma_du: float
    gamma_dd: float
    gamma_00: float
    gamma_03: float
    gamma_33: float
    gamma_30: float
    gamma_11: float
    gamma_s: float = 1.0

    @classmethod
    def from_base(cls, up, down, uu, ud, du, dd, gamma_s=1.0):
        g00 = (up + down - uu - ud - dd - du) / 2
        g03 = (-up + down + uu + ud - dd - du) / 2
        g33 = (up + down - uu + ud - dd + du) / 2
        g30 = (-up + down + uu - ud - dd + du) / 2
        g11 = (up + down) / 2
        return cls(up, down, uu, ud, du, dd, g00, g03, g33, g30, g11, gamma_s)

    @classmethod
    def zero(cls, gamma_s=1.0):
        return cls.from_base(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, gamma_s)

    def scaled(self):
        """Rates in units of gamma_s."""
        s = self.gamma_s
        vals = {k: v / s for k, v in self.__dict__.items() if k != "gamma_s"}
        return RateSet(**vals, gamma_s=1.0)

    def as_dict(self):
        return dict(self.__dict__)

    def check(self, tol=1e-12):
        base = (self.gamma_up, self.gamma_down, self.gamma_uu, self.gamma_ud, self.gamma_du, self.gamma_dd)
        scale = max(max(abs(x) for x in base), 1e-300)
        assert self.gamma_11 == (self.gamma_up + self.gamma_down) / 2
        assert all(x >= -tol * scale for x in base)
        assert self.gamma_00 >= -tol * scale
        assert self.gamma_uu + self.gamma_ud <= self.gamma_up * (1 + tol) + tol * scale
        assert self.gamma_dd + self.gamma_du <= self.gamma_down * (1 + tol) + tol * scale


def scattering_rates(system, sol, r_perp, axis, coupling, input_polarization="diagonal",
                     coherent=False, site=None):
    """Optical pumping rates of the clock states during the probe.

    Far-detuned forms: gamma_f = gamma_s Delta_J3^2 sum_{f'} sum_e
    |<e|D.e_in|f0>|^2 / Delta_{ff'}^2 and gamma_{f->f~} with the emission
    strength |<f~0|D^dag|e>|^2 inserted.  Hyperfine paths through different
    f' add incoherently unless ``coherent`` is set.  ``e_in`` is the local
    probe polarization expressed in the quantization frame.
    """
    site = site or TrapSite.at(sol, r_perp)
    e_lab = site.input_polarization(input_polarization)
    e_loc = axis.to_local(e_lab)
    probe = coupling.probe
    dj2 = coupling.Delta_J3**2
    f_vals = system.ground_f
    absorb, trans = {}, {}
    for f in f_vals:
        rows = _clock_dipoles(system, f)
        det = {fp: system.detuning(f, fp, probe) for fp in system.excited_f}
        absorb[f] = sum(abs(vec @ e_loc) ** 2 / det[fp] ** 2 for fp, mp, vec in rows)
        for ft in f_vals:
            emit = {(fp, mp): vec for fp, mp, vec in _clock_dipoles(system, ft)}
            if coherent:
                amp = {}
                for fp, mp, vec in rows:
                    back = emit.get((fp, mp))
                    if back is None:
                        continue
                    amp[mp] = amp.get(mp, 0) + back.conj() * (vec @ e_loc) / det[fp]
                trans[f, ft] = sum(np.vdot(a, a).real for a in amp.values())
            else:
                total = 0.0
                for fp, mp, vec in rows:
                    back = emit.get((fp, mp))
                    if back is None:
                        continue
                    total += np.vdot(back, back).real * abs(vec @ e_loc) ** 2 / det[fp] ** 2
                trans[f, ft] = total
    gs = coupling.gamma_s
    up, down = system.f_up, system.f_down
    rates = RateSet.from_base(
        gs * dj2 * absorb[up], gs * dj2 * absorb[down],
        gs * dj2 * trans[up, up], gs * dj2 * trans[up, down],
        gs * dj2 * trans[down, up], gs * dj2 * trans[down, down], gs,
    )
    rates.check()
    return rates


@dataclass(frozen=True)
class MomentState:
    t: float
    N_C: float
    J1: float
    J3: float
    varJ3: float


def coherent_state(N_A):
    """Spin coherent state along J1 with every atom in the clock subspace."""
    return MomentState(0.0, float(N_A), N_A / 2, 0.0, N_A / 4)


@dataclass
class SqueezeTrajectory:
    t: np.ndarray
    N_C: np.ndarray
    J1: np.ndarray
    J3: np.ndarray
    varJ3: np.ndarray
    N_A: float
    dt: float
    peak_db: float
    t_peak: float
    meta: dict = field(default_factory=dict)

    @property
    def xi2(self):
        return self.N_A * self.varJ3 / self.J1**2

    @property
    def xi2_db(self):
        return -10 * np.log10(self.xi2) + 0.0

    @property
    def samples(self):
        return [MomentState(*row) for row in zip(self.t, self.N_C, self.J1, self.J3, self.varJ3)]


def _rhs(y, k, g):
    N, J1, J3, v = y
    g00, g03, g33, g30, g11 = g
    return np.array([
        -g00 * N + 2 * g03 * J3,
        -g11 * J1,
        -g33 * J3 + 0.5 * g30 * N,
        -k * v * v - 2 * g33 * v + 0.25 * (2 * g33 - g00) * N + 0.5 * (g03 - 2 * g30) * J3,
    ])


def _run_batch(y0, k, g, N_A, dt, T, stride, rng=None, sign=None, stop_after_peak=None, dW=None):
    """Integrate a batch of moment systems; columns are independent runs.

    Deterministic runs use Heun's method; with ``rng`` (or precomputed
    Wiener increments ``dW`` of shape (steps, runs)) the J3 equation gets
    the Euler-Maruyama measurement-noise increment.
    """
    y = np.array(y0, dtype=float)
    n_steps = int(np.ceil(T / dt - 1e-9)) if T is not None else None
    limit = n_steps if n_steps is not None else int(np.ceil(stop_after_peak[1] / dt))
    out_t, out_y = [0.0], [y.copy()]
    best = -10 * np.log10(N_A * y[3] / y[1] ** 2) + 0.0  # no negative zero
    t_best = np.zeros_like(best)
    sqrt_k = np.sqrt(k)
    for n in range(1, limit + 1):
        if rng is None and dW is None:
            k1 = _rhs(y, k, g)
            k2 = _rhs(y + dt * k1, k, g)
            y = y + 0.5 * dt * (k1 + k2)
        else:
            inc = dW[n - 1] if dW is not None else rng.normal(0.0, np.sqrt(dt), size=y.shape[1:])
            kick = sign * sqrt_k * y[3] * inc
            y = y + dt * _rhs(y, k, g)
            y[2] += kick
        if not np.all(np.isfinite(y)) or np.any(y[3] < 0) or np.any(y[0] < 0) \
                or np.any(y[0] > N_A * (1 + 1e-9)):
            raise StepTooLarge(f"moment state left its domain at step {n}")
        db = -10 * np.log10(N_A * y[3] / y[1] ** 2)
        better = db > best
        best = np.where(better, db, best)
        t_best = np.where(better, n * dt, t_best)
        if n % stride == 0 or n == limit:
            out_t.append(n * dt)
            out_y.append(y.copy())
        if n_steps is None:
            margin, _ = stop_after_peak
            if np.all(db < best - margin):
                if out_t[-1] != n * dt:
                    out_t.append(n * dt)
                    out_y.append(y.copy())
                break
    return np.array(out_t), np.array(out_y), best, t_best


def integrate_moments(init, od_per_atom, rates, T=None, dt=2e-4, noise="off", seed=None,
                      stride=10, N_A=None, T_max=50.0, max_halvings=8, sign=1.0):
    """Integrate the moment equations from ``init`` (time in 1/gamma_s).

    ``od_per_atom`` is kappa/gamma_s and ``rates`` a RateSet (any units;
    it is rescaled by its own gamma_s).  With ``T=None`` the run stops once
    the squeezing has fallen 0.5 dB below its peak, or at ``T_max``.
    ``noise`` is "off" or "on"; "on" needs an integer ``seed``.
    """
    N_A = float(N_A if N_A is not None else init.N_C)
    r = rates.scaled()
    g = (r.gamma_00, r.gamma_03, r.gamma_33, r.gamma_30, r.gamma_11)
    y0 = np.array([[init.N_C], [init.J1], [init.J3], [init.varJ3]])
    stop = None if T is not None else (0.5, T_max)
    for attempt in range(max_halvings + 1):
        rng = None
        if noise == "on":
            if seed is None:
                raise ValueError("stochastic integration needs an explicit seed")
            rng = np.random.default_rng(seed)
        elif noise != "off":
            raise ValueError(f"noise must be 'off' or 'on', not {noise!r}")
        try:
            ts, ys, best, tb = _run_batch(y0, od_per_atom, g, N_A, dt, T, stride, rng, sign, stop)
            break
        except StepTooLarge:
            if attempt == max_halvings:
                raise
            dt /= 2
            stride *= 2
    return SqueezeTrajectory(
        t=ts + init.t, N_C=ys[:, 0, 0], J1=ys[:, 1, 0], J3=ys[:, 2, 0], varJ3=ys[:, 3, 0],
        N_A=N_A, dt=dt, peak_db=float(best[0]), t_peak=float(tb[0] + init.t),
    )


def peak_squeezing_batch(od_per_atom, rates_list, N_A, dt=2e-4, T=None, T_max=50.0):
    """Peak -10 log10 xi^2 and its time for many configurations at once.

    ``od_per_atom`` and ``N_A`` broadcast against ``rates_list``.
    """
    n = len(rates_list)
    od = np.broadcast_to(np.asarray(od_per_atom, dtype=float), (n,)).copy()
    NA = np.broadcast_to(np.asarray(N_A, dtype=float), (n,)).copy()
    sc = [r.scaled() for r in rates_list]
    g = tuple(np.array([getattr(r, name) for r in sc])
              for name in ("gamma_00", "gamma_03", "gamma_33", "gamma_30", "gamma_11"))
    y0 = np.array([NA, NA / 2, np.zeros(n), NA / 4])
    stop = None if T is not None else (0.5, T_max)
    for _ in range(9):
        try:
            _, _, best, tb = _run_batch(y0, od, g, NA, dt, T, 10**9, None, None, stop)
            return best, tb
        except StepTooLarge:
            dt /= 2
    raise StepTooLarge("batch integration failed after repeated halving")


def ensemble_moments(init, od_per_atom, rates, T, seeds, dt=2e-4, stride=10, N_A=None, sign=1.0):
    """Stochastic trajectories for many seeds, integrated as one batch.

    Column i reproduces ``integrate_moments(..., noise="on", seed=seeds[i])``
    at the same ``dt``.  Returns (t, y) with y shaped (samples, 4, runs)
    and rows N_C, J1, J3, varJ3.
    """
    N_A = float(N_A if N_A is not None else init.N_C)
    r = rates.scaled()
    g = (r.gamma_00, r.gamma_03, r.gamma_33, r.gamma_30, r.gamma_11)
    n_steps = int(np.ceil(T / dt - 1e-9))
    dW = np.column_stack([np.random.default_rng(s).normal(0.0, np.sqrt(dt), size=n_steps) for s in seeds])
    y0 = np.tile(np.array([[init.N_C], [init.J1], [init.J3], [init.varJ3]]), (1, len(seeds)))
    ts, ys, _, _ = _run_batch(y0, od_per_atom, g, N_A, dt, T, stride, sign=sign, dW=dW)
    return ts + init.t, ys


def variance_decomposition(traj, N_A=None):
    """Split varJ3 into single-atom and pairwise-correlation parts.

    single = N_C/4 - J3^2/N_A is N_A times the one-atom variance of j3;
    the remainder is N_A(N_A-1) times the pair covariance.
    """
    N_A = traj.N_A if N_A is None else N_A
    single = traj.N_C / 4 - traj.J3**2 / N_A
    return single, traj.varJ3 - single


@dataclass(frozen=True)
class AxisResult:
    varphi: float
    coupling: CouplingSet
    rates: RateSet
    magic: MagicDetunings


def evaluate_axis(system, sol, r_perp, varphi, branch=None, photon_flux=1e8,
                  decoherence=True, coherent=False, site=None, theta=np.pi / 2):
    """Coupling, rates and magic roots for one axis direction (rad).

    ``theta`` is the polar angle from the fiber axis; the default keeps
    the axis in the x-y plane.
    """
    site = site or TrapSite.at(sol, r_perp)
    axis = QuantizationAxis(varphi, theta)
    magic = magic_detunings(system, sol, axis, r_perp, site=site)
    cs = coupling_set(system, sol, axis, r_perp, branch, photon_flux, site=site, magic=magic)
    if decoherence:
        rates = scattering_rates(system, sol, r_perp, axis, cs, coherent=coherent, site=site)
    else:
        rates = RateSet.zero(cs.gamma_s)
    return AxisResult(varphi, cs, rates, magic)


def _grid(grid_deg):
    n = int(round(180.0 / grid_deg))
    return np.arange(n) * grid_deg


def axis_scan(system, sol, r_perp, N_A, grid_deg=2.0, branch=None, decoherence=True,
              coherent=False, dt=2e-4):
    """Peak squeezing on a grid of in-plane axis angles in [0, 180) deg."""
    site = TrapSite.at(sol, r_perp)
    phis = _grid(grid_deg)
    res = [evaluate_axis(system, sol, r_perp, np.radians(p), branch, decoherence=decoherence,
                         coherent=coherent, site=site) for p in phis]
    od = np.array([r.coupling.od_per_atom for r in res])
    best, tb = peak_squeezing_batch(od, [r.rates for r in res], N_A, dt)
    return phis, best, tb, res


def optimize_axis(system, sol, r_perp, N_A, grid_deg=2.0, refine=True, decoherence=True,
                  branch=None, coherent=False, dt=2e-4, xtol_deg=0.05):
    """Axis angle (deg) maximising peak squeezing, and that peak in dB.

    A coarse grid is followed by golden-section refinement.  Without
    decoherence the squeezing only grows, so the objective becomes the
    measurement strength |chi_J3| at fixed flux and absolute time, and the
    returned peak is the squeezing reached after one x-axis scattering
    time (1/gamma_s at phi = 0).
    """
    site = TrapSite.at(sol, r_perp)

    if decoherence:
        phis, best, _, _ = axis_scan(system, sol, r_perp, N_A, grid_deg, branch, True, coherent, dt)

        def objective(p):
            r = evaluate_axis(system, sol, r_perp, np.radians(p), branch, site=site, coherent=coherent)
            b, _ = peak_squeezing_batch([r.coupling.od_per_atom], [r.rates], N_A, dt)
            return float(b[0])
    else:
        phis = _grid(grid_deg)

        def objective(p):
            r = evaluate_axis(system, sol, r_perp, np.radians(p), branch, decoherence=False, site=site)
            return abs(r.coupling.chi_J3)

        best = np.array([objective(p) for p in phis])

    i = int(np.argmax(best))  # first maximum, so ties go to the smaller angle
    phi_opt, val = float(phis[i]), float(best[i])
    if refine:
        lo, hi = phi_opt - grid_deg, phi_opt + grid_deg
        if objective(lo) < val and objective(hi) < val:
            res = optimize.minimize_scalar(
                lambda p: -objective(p), bracket=(lo, phi_opt, hi), method="golden",
                options={"xtol": xtol_deg / max(abs(phi_opt), 1.0)},
            )
            if -res.fun >= val:
                phi_opt, val = float(res.x), float(-res.fun)
    phi_opt %= 180.0
    if min(phi_opt, 180.0 - phi_opt) < xtol_deg:
        phi_opt = 0.0
    if decoherence:
        return phi_opt, val
    ref = evaluate_axis(system, sol, r_perp, 0.0, branch, decoherence=False, site=site).coupling
    chi = evaluate_axis(system, sol, r_perp, np.radians(phi_opt), branch, decoherence=False, site=site).coupling
    r = chi.chi_J3**2 * chi.photon_flux / ref.gamma_s * N_A / 4
    return phi_opt, float(10 * np.log10(1 + r))


def sphere_scan(system, sol, r_perp, N_A, grid_deg=10.0, branch=None, dt=2e-4):
    """Peak squeezing for axis directions over a hemisphere.

    Polar angles run over [0, 90] deg from the fiber axis and azimuths over
    [0, 180) deg; the opposite hemisphere follows from z~ -> -z~.  Returns
    (theta_deg, phi_deg, peak_db) with peak_db shaped (n_theta, n_phi);
    directions without a magic root are NaN.
    """
    site = TrapSite.at(sol, r_perp)
    thetas = np.arange(int(round(90.0 / grid_deg)) + 1) * grid_deg
    phis = _grid(grid_deg)
    peak = np.full((len(thetas), len(phis)), np.nan)
    cells, ods, rates = [], [], []
    for i, th in enumerate(thetas):
        for j, ph in enumerate(phis):
            try:
                r = evaluate_axis(system, sol, r_perp, np.radians(ph), branch, site=site,
                                  theta=np.radians(th))
            except RootNotFound:
                continue
            cells.append((i, j))
            ods.append(r.coupling.od_per_atom)
            rates.append(r.rates)
    if cells:
        best, _ = peak_squeezing_batch(ods, rates, N_A, dt)
        for (i, j), b in zip(cells, best):
            peak[i, j] = b
    return thetas, phis, peak


@dataclass(frozen=True)
class SweepRow:
    r_over_a: float
    N_A: int
    phi_opt_deg: float
    od_per_atom: float
    delta_magic_MHz: float
    peak_db: float
    t_peak: float
    observable: bool
    status: str = "ok"


def _thread_count():
    env = os.environ.get("NANOFIBER_QSIM_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _sweep_radius(system, sol, ra, N_A_list, grid_deg, branch, refine, dt, threshold):
    r_perp = ra * sol.a
    rows = []
    for N_A in N_A_list:
        phi, peak = optimize_axis(system, sol, r_perp, N_A, grid_deg, refine, True, branch, dt=dt)
        res = evaluate_axis(system, sol, r_perp, np.radians(phi), branch)
        _, tb = peak_squeezing_batch([res.coupling.od_per_atom], [res.rates], N_A, dt)
        rows.append(SweepRow(
            r_over_a=float(ra), N_A=int(N_A), phi_opt_deg=phi,
            od_per_atom=res.coupling.od_per_atom,
            delta_magic_MHz=res.magic.delta_mhz(res.coupling.branch), peak_db=peak,
            t_peak=float(tb[0]), observable=bool(peak >= threshold),
        ))
    return rows


def sweep(system, fiber_solution, r_over_a, N_A_list, grid_deg=2.0, branch=None, refine=False,
          dt=2e-4, allow_close=False, threshold_db=OBSERVABLE_DB, threads=None):
    """Peak squeezing at the optimal axis over trap distance and atom number.

    Rows with peak squeezing under ``threshold_db`` are kept and marked
    unobservable.  Radii below 1.5 a are rejected unless ``allow_close``.
    Rows come back sorted by (r_over_a, N_A) whatever the worker order.
    """
    sol = fiber_solution
    radii = [float(x) for x in r_over_a]
    rows = []
    todo = []
    for ra in radii:
        if ra <= 1.0:
            rows += [SweepRow(ra, int(n), np.nan, np.nan, np.nan, np.nan, np.nan, False, "inside_fiber")
                     for n in N_A_list]
        elif ra < MIN_R_OVER_A and not allow_close:
            rows += [SweepRow(ra, int(n), np.nan, np.nan, np.nan, np.nan, np.nan, False, "invalid_range")
                     for n in N_A_list]
        else:
            if ra < MIN_R_OVER_A:
                warnings.warn(f"r = {ra} a is closer than the model validity bound {MIN_R_OVER_A} a")
            todo.append(ra)
    workers = threads or _thread_count()
    job = lambda ra: _sweep_radius(system, sol, ra, N_A_list, grid_deg, branch, refine, dt, threshold_db)
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for chunk in ex.map(job, todo):
                rows += chunk
    else:
        for ra in todo:
            rows += job(ra)
    return sorted(rows, key=lambda r: (r.r_over_a, r.N_A))


@dataclass(frozen=True)
class AtomNumberResult:
    chi_N: float
    A_N: float
    A_in: float
    delta_N_A: float
    scalar_weight: float


def atom_number_resolution(system, sol, r_perp, photon_flux=1e8, probe=None):
    """Shot-noise-limited atom-number resolution of an H/V phase probe.

    For a fully mixed ground state only the scalar polarizability acts and
    the H and V modes pick up different phases in proportion to
    |u_H|^2 - |u_V|^2.  Integrating for one scattering time gives
    delta N_A = (1/C0_j') sqrt(A_N^2 / (A_in sigma0)), independent of the
    photon flux.  ``chi_N`` is evaluated at ``probe`` (default 1 GHz
    above the line centre).
    """
    site = TrapSite.at(sol, r_perp)
    probe = TWO_PI_MHZ * 1000.0 if probe is None else probe
    a_n = site.area_N
    a_in = site.area_in("diagonal")
    chi_n = system.sigma0 / a_n * _mixed_scalar_response(system, probe)
    c0 = mixed_scalar_weight(system)
    # far-detuned limit: chi_N -> (sigma0/A_N) C0 Gamma/2Delta and
    # gamma_s -> (sigma0/A_in) (Gamma/2Delta)^2 Ndot; any common Delta works
    w = system.gamma / (2 * (TWO_PI_MHZ * 1e5))
    chi_far = system.sigma0 / a_n * c0 * w
    gamma_s = system.sigma0 / a_in * w**2 * photon_flux
    dn = 1.0 / (abs(chi_far) * np.sqrt(photon_flux / gamma_s))
    return AtomNumberResult(chi_n, a_n, a_in, float(dn), c0)
