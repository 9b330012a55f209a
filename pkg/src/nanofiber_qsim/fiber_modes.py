"""HE11 guided mode of a step-index nanofiber.

The fiber is a dielectric cylinder of radius ``a`` and index ``n1`` in a
homogeneous cladding ``n2``.  Inside the core the transverse wavenumber
is ``h = sqrt(n1^2 k0^2 - beta^2)``; outside the field decays at
``q = sqrt(beta^2 - n2^2 k0^2)``.  The propagation constant solves the
hybrid-mode characteristic equation

    J0(ha) / (ha J1(ha)) = -(n1^2 + n2^2)/(2 n1^2) K1'(qa)/(qa K1(qa))
                           + 1/(ha)^2 - sqrt(R)

with ``R = ((n1^2 - n2^2)/(2 n1^2) K1'/(qa K1))^2
+ beta^2/(n1^2 k0^2) (1/(qa)^2 + 1/(ha)^2)^2``; the minus root gives the
HE family and the largest root is HE11.

Mode profiles use the quasicircular convention

    u_{b,+-} = [e_r u_r +- i e_phi u_phi + i b e_z u_z] exp(+- i phi)

and the quasilinear pair H, V built from them.  Amplitudes are normalised
so that ``int d^2r n^2 |u|^2 = 1``.  Lengths are in nm throughout.
"""

import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import integrate, optimize
from scipy.special import jv, jvp, kv, kvp

from .errors import MultiModeWarning, NoGuidedMode, QuadratureFailure

C_NM_PER_S = 299792458.0e9
# first zero of J0: cutoff of the TE01/TM01 pair
SECOND_MODE_CUTOFF = 2.404825557695773
N_SCAN = 2048


@dataclass(frozen=True)
class FiberSpec:
    """Step-index fiber geometry; ``radius_a`` in nm."""

    radius_a: float = 225.0
    n1: float = 1.4469
    n2: float = 1.0

    def __post_init__(self):
        if not self.radius_a > 0:
            raise ValueError("fiber radius must be positive")
        if not (self.n1 > self.n2 >= 1.0):
            raise ValueError("need n1 > n2 >= 1")

    def v_number(self, wavelength):
        k0 = 2 * np.pi / wavelength
        return k0 * self.radius_a * np.sqrt(self.n1**2 - self.n2**2)

    def index(self, r_perp):
        return np.where(np.asarray(r_perp) <= self.radius_a, self.n1, self.n2)


@dataclass(frozen=True)
class GuidedModeSolution:
    fiber: FiberSpec
    wavelength: float
    omega0: float
    k0: float
    beta0: float
    h_in: float
    q_out: float
    s_param: float
    u0: float
    n_g: float

    @property
    def a(self):
        return self.fiber.radius_a

    @property
    def sigma0(self):
        """Resonant two-level cross section 3 lambda^2 / 2 pi (nm^2)."""
        return 3 * self.wavelength**2 / (2 * np.pi)

    def with_amplitude(self, u0):
        return replace(self, u0=float(u0))


class ModeBasis(str, Enum):
    H = "H"
    V = "V"
    PLUS = "+"
    MINUS = "-"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {
            "quasilinear_h": "H", "h": "H", "quasilinear_v": "V", "v": "V",
            "quasicircular_plus": "+", "plus": "+", "+": "+",
            "quasicircular_minus": "-", "minus": "-", "-": "-",
        }
        try:
            return cls(aliases[str(value).lower()])
        except KeyError:
            raise ValueError(f"unknown mode basis {value!r}") from None


@dataclass(frozen=True)
class ModeField:
    """Guided-mode field at one transverse point, cylindrical components."""

    basis: ModeBasis
    direction_b: int
    r_perp: float
    phi: float
    value: np.ndarray

    def cartesian(self):
        return cyl_to_cart(self.value, self.phi)


def cyl_to_cart(vec, phi):
    """Rotate (e_r, e_phi, e_z) components into (e_x, e_y, e_z)."""
    vec = np.asarray(vec)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack(
        [c * vec[..., 0] - s * vec[..., 1], s * vec[..., 0] + c * vec[..., 1], vec[..., 2]],
        axis=-1,
    )


def _wavenumbers(beta, k0, fiber):
    h = np.sqrt(fiber.n1**2 * k0**2 - beta**2)
    q = np.sqrt(beta**2 - fiber.n2**2 * k0**2)
    return h, q


def _sides(beta, k0, fiber):
    n1, n2, a = fiber.n1, fiber.n2, fiber.radius_a
    h, q = _wavenumbers(beta, k0, fiber)
    ha, qa = h * a, q * a
    kr = kvp(1, qa) / (qa * kv(1, qa))
    lhs = jv(0, ha) / (ha * jv(1, ha))
    root = np.sqrt(
        ((n1**2 - n2**2) / (2 * n1**2) * kr) ** 2
        + beta**2 / (n1**2 * k0**2) * (1 / qa**2 + 1 / ha**2) ** 2
    )
    rhs = -(n1**2 + n2**2) / (2 * n1**2) * kr + 1 / ha**2 - root
    return lhs, rhs


def dispersion_residual(beta, k0, fiber):
    """lhs - rhs of the HE characteristic equation (vectorised in beta)."""
    lhs, rhs = _sides(beta, k0, fiber)
    return lhs - rhs


def relative_residual(beta, k0, fiber):
    lhs, rhs = _sides(beta, k0, fiber)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs))


def propagation_constant(fiber, k0, n_scan=N_SCAN):
    """Largest root of the HE equation in (n2 k0, n1 k0), i.e. HE11."""
    lo, hi = fiber.n2 * k0, fiber.n1 * k0
    grid = np.linspace(lo, hi, n_scan + 2)[1:-1]
    with np.errstate(all="ignore"):
        vals = dispersion_residual(grid, k0, fiber)
    ok = np.isfinite(vals)
    # walk from the top of the band so the first accepted root is HE11
    for i in range(len(grid) - 2, -1, -1):
        if not (ok[i] and ok[i + 1]) or np.sign(vals[i]) == np.sign(vals[i + 1]):
            continue
        beta = optimize.brentq(
            dispersion_residual, grid[i], grid[i + 1], args=(k0, fiber),
            xtol=1e-300, rtol=1e-15, maxiter=500,
        )
        # sign changes across poles of J0/J1 converge to the pole; reject them
        if relative_residual(beta, k0, fiber) < 1e-9:
            return beta
    raise NoGuidedMode(f"no HE11 root in ({lo:.6g}, {hi:.6g}) 1/nm")


def s_parameter(beta, k0, fiber):
    a = fiber.radius_a
    h, q = _wavenumbers(beta, k0, fiber)
    ha, qa = h * a, q * a
    num = 1 / ha**2 + 1 / qa**2
    den = jvp(1, ha) / (ha * jv(1, ha)) + kvp(1, qa) / (qa * kv(1, qa))
    return num / den


def group_index(fiber, k0, rel_step=1e-6):
    """n_g = d beta / d k0 from a centred difference of the HE11 root."""
    dk = rel_step * k0
    return (propagation_constant(fiber, k0 + dk) - propagation_constant(fiber, k0 - dk)) / (2 * dk)


def solve_he11(fiber, wavelength, normalize_mode=True, rel_step=1e-6):
    """Solve the HE11 dispersion problem at ``wavelength`` (nm)."""
    v = fiber.v_number(wavelength)
    if v >= SECOND_MODE_CUTOFF:
        warnings.warn(
            f"V = {v:.3f} exceeds {SECOND_MODE_CUTOFF:.4f}; higher-order modes are also guided",
            MultiModeWarning, stacklevel=2,
        )
    k0 = 2 * np.pi / wavelength
    beta = propagation_constant(fiber, k0)
    h, q = _wavenumbers(beta, k0, fiber)
    sol = GuidedModeSolution(
        fiber=fiber, wavelength=float(wavelength), omega0=C_NM_PER_S * k0, k0=k0,
        beta0=float(beta), h_in=float(h), q_out=float(q),
        s_param=float(s_parameter(beta, k0, fiber)), u0=1.0,
        n_g=float(group_index(fiber, k0, rel_step)),
    )
    if normalize_mode:
        sol = sol.with_amplitude(normalize(sol))
    return sol


def mode_profile(sol, r_perp):
    """Radial profiles (u_r, u_phi, u_z), real arrays shaped like r_perp.

    Outside the core the profiles are built from K0, K1, K2 and decay at
    q_out; inside they are the matching J-Bessel forms, continuous in the
    tangential components and in n^2 u_r at the surface.
    """
    r = np.asarray(r_perp, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r_perp must be positive")
    a, h, q, s, beta = sol.a, sol.h_in, sol.q_out, sol.s_param, sol.beta0
    ha, qa = h * a, q * a
    inside = r <= a
    ro = np.where(inside, a, r)
    ri = np.where(inside, r, a)
    ur_out = (1 - s) * kv(0, q * ro) + (1 + s) * kv(2, q * ro)
    up_out = (1 - s) * kv(0, q * ro) - (1 + s) * kv(2, q * ro)
    uz_out = -(2 * q / beta) * kv(1, q * ro)
    c = (q / h) * kv(1, qa) / jv(1, ha)
    ur_in = c * ((1 - s) * jv(0, h * ri) - (1 + s) * jv(2, h * ri))
    up_in = c * ((1 - s) * jv(0, h * ri) + (1 + s) * jv(2, h * ri))
    uz_in = -(2 * q / beta) * (kv(1, qa) / jv(1, ha)) * jv(1, h * ri)
    u0 = sol.u0
    return (
        u0 * np.where(inside, ur_in, ur_out),
        u0 * np.where(inside, up_in, up_out),
        u0 * np.where(inside, uz_in, uz_out),
    )


def mode_field(sol, basis, b, r_perp, phi):
    """Assemble the cylindrical field vector of one guided mode."""
    basis = ModeBasis.parse(basis)
    if b not in (1, -1):
        raise ValueError("direction b must be +1 or -1")
    ur, up, uz = (float(x) for x in mode_profile(sol, r_perp))
    c, s = np.cos(phi), np.sin(phi)
    rt2 = np.sqrt(2.0)
    if basis is ModeBasis.H:
        vec = rt2 * np.array([ur * c, -up * s, 1j * b * uz * c])
    elif basis is ModeBasis.V:
        vec = rt2 * np.array([ur * s, up * c, 1j * b * uz * s])
    else:
        l = 1 if basis is ModeBasis.PLUS else -1
        vec = np.array([ur, 1j * l * up, 1j * b * uz]) * np.exp(1j * l * phi)
    return ModeField(basis, b, float(r_perp), float(phi), vec.astype(complex))


def guided_vector(sol, basis, b, x, y):
    """Cartesian field vector of a guided mode at transverse point (x, y)."""
    r, phi = np.hypot(x, y), np.arctan2(y, x)
    return mode_field(sol, basis, b, r, phi).cartesian()


def _radial_energy(sol, r):
    ur, up, uz = mode_profile(sol, r)
    return r * (ur**2 + up**2 + uz**2)


def _exterior_cutoff(sol, rel=1e-16):
    # radius where r |u|^2 has dropped to rel times its peak value
    f = lambda r: _radial_energy(sol.with_amplitude(1.0), r)
    rs = np.linspace(1e-6 * sol.a, 3 * sol.a, 600)
    peak = max(f(rs).max() * sol.fiber.n1**2, f(sol.a))
    g = lambda r: np.log(f(r)) - np.log(rel * peak)
    hi = sol.a + 10.0 / sol.q_out
    while g(hi) > 0:
        hi *= 2
    return optimize.brentq(g, sol.a, hi, xtol=1e-6)


def norm_integral(sol, epsrel=1e-13):
    """2 pi int r n^2 (u_r^2 + u_phi^2 + u_z^2) dr at the current amplitude."""
    f = lambda r: float(_radial_energy(sol, r))
    opts = dict(epsabs=0.0, epsrel=epsrel, limit=400)
    inner, e1 = integrate.quad(f, 0.0, sol.a, **opts)
    outer, e2 = integrate.quad(f, sol.a, _exterior_cutoff(sol), **opts)
    total = 2 * np.pi * (sol.fiber.n1**2 * inner + sol.fiber.n2**2 * outer)
    err = 2 * np.pi * (sol.fiber.n1**2 * e1 + sol.fiber.n2**2 * e2)
    if not err <= 1e-11 * total:
        raise QuadratureFailure(f"norm quadrature error {err:.3e} exceeds tolerance")
    return total


def normalize(sol):
    """Amplitude u0 that makes the n^2-weighted mode norm equal to one."""
    raw = norm_integral(sol.with_amplitude(1.0))
    return float(1.0 / np.sqrt(raw))


def overlap(sol, basis1, basis2, b=1, n_phi=64, epsrel=1e-12):
    """int d^2r n^2 u1* . u2 over the transverse plane.

    The azimuthal integral uses the periodic trapezoid rule, exact for the
    low-order harmonics present here; the radial one is adaptive.
    """
    phis = 2 * np.pi * np.arange(n_phi) / n_phi

    def ring(r):
        acc = 0.0j
        for ph in phis:
            u1 = mode_field(sol, basis1, b, r, ph).value
            u2 = mode_field(sol, basis2, b, r, ph).value
            acc += np.vdot(u1, u2)
        return r * acc * (2 * np.pi / n_phi)

    opts = dict(epsabs=1e-14, epsrel=epsrel, limit=400)
    rmax = _exterior_cutoff(sol)
    parts = []
    for lo, hi, n in ((0.0, sol.a, sol.fiber.n1), (sol.a, rmax, sol.fiber.n2)):
        re = integrate.quad(lambda r: ring(r).real, lo, hi, **opts)[0]
        im = integrate.quad(lambda r: ring(r).imag, lo, hi, **opts)[0]
        parts.append(n**2 * (re + 1j * im))
    return sum(parts)


def local_modes(sol, x, y, b=1):
    """Quasilinear H and V Cartesian field vectors at (x, y)."""
    return guided_vector(sol, "H", b, x, y), guided_vector(sol, "V", b, x, y)


def input_field(sol, x, y, polarization="diagonal"):
    """Field of the probe launched in a superposition of H and V.

    ``polarization`` is "H", "V", "diagonal" (equal in-phase H and V) or a
    pair of complex amplitudes (c_H, c_V), normalised internally.
    """
    uH, uV = local_modes(sol, x, y)
    if isinstance(polarization, str):
        coeffs = {"H": (1, 0), "V": (0, 1), "diagonal": (1, 1), "D": (1, 1)}[polarization]
    else:
        coeffs = polarization
    cH, cV = (complex(c) for c in coeffs)
    norm = np.sqrt(abs(cH) ** 2 + abs(cV) ** 2)
    return (cH * uH + cV * uV) / norm


def effective_area_in(sol, r_prime, polarization="diagonal"):
    """A_in = 1/(n_g |u_in|^2) at the transverse point r_prime = (x, y)."""
    u = input_field(sol, r_prime[0], r_prime[1], polarization)
    return 1.0 / (sol.n_g * np.vdot(u, u).real)
