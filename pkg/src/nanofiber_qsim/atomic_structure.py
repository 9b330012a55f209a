"""Cesium level structure and the tensor polarizability of the clock states.

Dipole matrix elements are expressed in units of the cycling-transition
oscillator: every excited Zeeman sublevel satisfies
``sum_{g,q} |<e|D_q|g>|^2 = 1`` so that the free-space decay rate is Gamma
and ``d0^2 / hbar = sigma0 Gamma / (8 pi k0)``.  Within one hyperfine
pair the Wigner-Eckart theorem gives

    <f' m'| D_q |f m> = o_{ff'} <f m; 1 q | f' m'>

and the operator ``D_i^dag P_{f'} D_j`` restricted to the ground manifold
``f`` splits into scalar, vector and rank-2 parts with weights
``C0, C1, C2``.  Probe frequencies are passed as an offset (rad/s) from
the fine-structure line centre, so ``Delta_{ff'} = probe - (E_{f'} - E_f)``.

Atomic constants are read from JSON files shipped in ``data/``.
"""

import json
from functools import lru_cache
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .angular import clebsch_gordan, wigner_6j
from .errors import ResonanceError
from .fiber_modes import C_NM_PER_S

OSCILLATOR_CONVENTIONS = ("standard", "printed")
DEFAULT_GUARD = 10.0


@dataclass(frozen=True)
class AtomicSystem:
    """One alkali D line with hyperfine structure; frequencies in rad/s."""

    line: str
    wavelength_nm: float
    gamma: float
    nuclear_spin: float
    j_ground: float
    j_excited: float
    ground_f: tuple
    ground_offsets: tuple
    excited_f: tuple
    excited_offsets: tuple
    reduced_dipole: float = 1.0
    oscillator_convention: str = "standard"
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if self.oscillator_convention not in OSCILLATOR_CONVENTIONS:
            raise ValueError(f"unknown oscillator convention {self.oscillator_convention!r}")
        if len(self.ground_f) != len(self.ground_offsets):
            raise ValueError("ground_f and hyperfine_ground_hz lengths differ")
        if len(self.excited_f) != len(self.excited_offsets):
            raise ValueError("excited_f and hyperfine_excited_hz lengths differ")
        if not self.gamma > 0:
            raise ValueError("linewidth must be positive")
        # detuning differences between ground levels must equal the splitting
        split = self.ground_splitting
        for fp in self.excited_f:
            diff = self.detuning(self.f_up, fp, 0.0) - self.detuning(self.f_down, fp, 0.0)
            assert abs(diff - split) <= 1e-9 * split

    @property
    def f_up(self):
        return max(self.ground_f)

    @property
    def f_down(self):
        return min(self.ground_f)

    @property
    def k0(self):
        return 2 * np.pi / self.wavelength_nm

    @property
    def omega_line(self):
        return C_NM_PER_S * self.k0

    @property
    def sigma0(self):
        return 3 * self.wavelength_nm**2 / (2 * np.pi)

    @property
    def ground_splitting(self):
        return abs(self.ground_offsets[1] - self.ground_offsets[0])

    def ground_offset(self, f):
        return self.ground_offsets[self.ground_f.index(f)]

    def excited_offset(self, fp):
        return self.excited_offsets[self.excited_f.index(fp)]

    def transition_offset(self, f, fp):
        """omega_{ff'} minus the line centre (rad/s)."""
        return self.excited_offset(fp) - self.ground_offset(f)

    def detuning(self, f, fp, probe):
        return probe - self.transition_offset(f, fp)

    def probe_from_detuning(self, f, fp, delta):
        """Probe offset that sits ``delta`` away from the f -> f' transition."""
        return delta + self.transition_offset(f, fp)

    def min_detuning(self, probe):
        return min(abs(self.detuning(f, fp, probe)) for f in self.ground_f for fp in self.excited_f)


def load_system(line="D1", oscillator_convention="standard"):
    """Load "D1", "D2" or a path to a JSON file with the same schema."""
    key = str(line)
    if key.upper() in ("D1", "D2"):
        text = resources.files("nanofiber_qsim").joinpath(f"data/cs_{key.lower()}.json").read_text()
        src = f"cs_{key.lower()}.json"
    else:
        text = Path(key).read_text()
        src = key
    d = json.loads(text)
    two_pi = 2 * np.pi
    return AtomicSystem(
        line=d["line"],
        wavelength_nm=float(d["wavelength_nm"]),
        gamma=two_pi * float(d["gamma_hz"]),
        nuclear_spin=float(d["nuclear_spin"]),
        j_ground=float(d["j_ground"]),
        j_excited=float(d["j_excited"]),
        ground_f=tuple(int(f) for f in d["ground_f"]),
        ground_offsets=tuple(two_pi * float(x) for x in d["hyperfine_ground_hz"]),
        excited_f=tuple(int(f) for f in d["excited_f"]),
        excited_offsets=tuple(two_pi * float(x) for x in d["hyperfine_excited_hz"]),
        reduced_dipole=float(d.get("reduced_dipole", 1.0)),
        oscillator_convention=oscillator_convention,
        source=src,
    )


def check_detunings(system, probe, f_values=None, guard=DEFAULT_GUARD):
    """Raise ResonanceError if any relevant |Delta_{ff'}| < guard * Gamma."""
    for f in f_values or system.ground_f:
        for fp in system.excited_f:
            d = system.detuning(f, fp, probe)
            if abs(d) < guard * system.gamma:
                raise ResonanceError(
                    f"|Delta({f}->{fp}')| = {abs(d) / (2 * np.pi * 1e6):.3f} MHz "
                    f"is inside the {guard:g} Gamma guard"
                )


@lru_cache(maxsize=None)
def oscillator_amplitude(system, f, fp):
    """Signed reduced element o_{ff'} linking ground f to excited f'."""
    I, j, jp = system.nuclear_spin, system.j_ground, system.j_excited
    six = wigner_6j(jp, fp, I, f, j, 1)
    phase = -1 if int(round(jp + I + f + 1)) % 2 else 1
    weight = 2 * f + 1 if system.oscillator_convention == "standard" else 2 * f + 2
    return phase * np.sqrt((2 * jp + 1) * weight) * six


def oscillator_strength(system, f, fp):
    """|o|^2 = (2j'+1)(2f+1){f' I j'; j 1 f}^2 (or 2f+2 when "printed")."""
    return oscillator_amplitude(system, f, fp) ** 2


@dataclass(frozen=True)
class IrreducibleCoefficients:
    f: int
    f_prime: int
    c0: float
    c1: float
    c2: float


@lru_cache(maxsize=None)
def irreducible_coefficients(system, f, f_prime):
    """Scalar, vector and rank-2 weights of D^dag P_{f'} D within manifold f."""
    fp = f_prime
    o2 = oscillator_strength(system, f, fp)
    g = o2 * (2 * fp + 1)
    sign = -1 if (f + fp) % 2 else 1
    c0 = g / (3 * (2 * f + 1))
    c1 = c2 = 0.0
    if f >= 1:
        c1 = sign * np.sqrt(3 / (2 * f * (f + 1) * (2 * f + 1))) * wigner_6j(1, 1, 1, f, f, fp) * g
    if f >= 1:
        norm = f * (f + 1) * (2 * f + 1) * (2 * f - 1) * (2 * f + 3)
        c2 = sign * np.sqrt(30 / norm) * wigner_6j(1, 1, 2, f, f, fp) * g
    return IrreducibleCoefficients(f, fp, float(c0), float(c1), float(c2))


def spin_matrices(f):
    """(f_x, f_y, f_z) in the basis m = f, f-1, ..., -f."""
    m = np.arange(f, -f - 1, -1, dtype=float)
    fp = np.diag(np.sqrt(f * (f + 1) - m[1:] * (m[1:] + 1)), 1)
    return np.array([(fp + fp.T) / 2, (fp - fp.T) / 2j, np.diag(m)])


_LEVI = np.zeros((3, 3, 3))
_LEVI[0, 1, 2] = _LEVI[1, 2, 0] = _LEVI[2, 0, 1] = 1
_LEVI[0, 2, 1] = _LEVI[2, 1, 0] = _LEVI[1, 0, 2] = -1


def rank_operator(coeffs, f):
    """A_ij = C0 d_ij + i C1 eps_ijk f_k + C2 ({f_i f_j}/2 - f(f+1)/3 d_ij).

    Returned with shape (3, 3, 2f+1, 2f+1).
    """
    F = spin_matrices(f)
    n = 2 * f + 1
    eye = np.eye(n)
    out = np.zeros((3, 3, n, n), dtype=complex)
    for i in range(3):
        for j in range(3):
            sym = 0.5 * (F[i] @ F[j] + F[j] @ F[i]) - f * (f + 1) / 3 * eye * (i == j)
            out[i, j] = (
                coeffs.c0 * eye * (i == j)
                + 1j * coeffs.c1 * np.tensordot(_LEVI[i, j], F, axes=1)
                + coeffs.c2 * sym
            )
    return out


@dataclass(frozen=True)
class QuantizationAxis:
    """Direction of e_z~ given by azimuth ``varphi`` and polar ``theta``.

    The default theta = pi/2 keeps the axis in the x-y plane.
    """

    varphi: float
    theta: float = np.pi / 2

    @classmethod
    def from_degrees(cls, varphi_deg, theta_deg=90.0):
        return cls(np.radians(varphi_deg), np.radians(theta_deg))

    @property
    def z_tilde(self):
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.varphi), st * np.sin(self.varphi), np.cos(self.theta)])

    def frame(self):
        """Orthonormal (x~, y~, z~); x~ is the fiber axis projected off z~."""
        z = self.z_tilde
        ref = np.array([0.0, 0.0, 1.0])
        if abs(ref @ z) > 1 - 1e-6:
            ref = np.array([1.0, 0.0, 0.0])
        x = ref - (ref @ z) * z
        x /= np.linalg.norm(x)
        # second pass restores orthogonality lost to cancellation
        x -= (x @ z) * z
        x /= np.linalg.norm(x)
        return x, np.cross(z, x), z

    def to_local(self, vec):
        """Components of a lab-frame vector along (x~, y~, z~)."""
        x, y, z = self.frame()
        vec = np.asarray(vec)
        return np.array([x @ vec, y @ vec, z @ vec])


def _cartesian_from_spherical(dm, d0, dp):
    # D_x, D_y, D_z from spherical components q = -1, 0, +1
    return np.array([(dm - dp) / np.sqrt(2), 1j * (dm + dp) / np.sqrt(2), d0])


def transition_dipoles(system, f, m, axis=None):
    """Dipole vectors <f' m'| D |f m> for every excited sublevel.

    Returns a list of ``(f', m', vec)`` with ``vec`` the Cartesian vector of
    matrix elements.  Components refer to the quantization frame, or to the
    lab frame when ``axis`` is given.
    """
    out = []
    for fp in system.excited_f:
        o = oscillator_amplitude(system, f, fp)
        for mp in range(-fp, fp + 1):
            sph = [o * clebsch_gordan(f, m, 1, q, fp, mp) for q in (-1, 0, 1)]
            if not any(sph):
                continue
            vec = _cartesian_from_spherical(*sph)
            if axis is not None:
                vec = np.column_stack(axis.frame()) @ vec
            out.append((fp, mp, vec))
    return out


def alpha0(system, delta, dispersive=False):
    """Scalar two-level polarizability (nm^3) at detuning ``delta``."""
    pref = -system.sigma0 / (8 * np.pi * system.k0)
    if dispersive:
        return pref * system.gamma / delta
    return pref * system.gamma / (delta + 0.5j * system.gamma)


def clock_polarizability(system, f, axis, probe, dispersive=False, guard=DEFAULT_GUARD):
    """Lab-frame 3x3 tensor <f,0| alpha |f,0> (nm^3).

    Only the scalar and rank-2 parts survive for m = 0; the result is
    sum_{f'} alpha0 [C0 I + C2 f(f+1)/6 (I - 3 z~ z~)].
    """
    check_detunings(system, probe, (f,), guard)
    z = axis.z_tilde
    eye = np.eye(3)
    out = np.zeros((3, 3), dtype=complex)
    for fp in system.excited_f:
        c = irreducible_coefficients(system, f, fp)
        a0 = alpha0(system, system.detuning(f, fp, probe), dispersive)
        out += a0 * (c.c0 * eye + c.c2 * f * (f + 1) / 6 * (eye - 3 * np.outer(z, z)))
    return out


@lru_cache(maxsize=None)
def _clock_table(system, f):
    # transition offsets and the two weights entering (a_f, b_f)
    offs, wa, wb = [], [], []
    for fp in system.excited_f:
        c = irreducible_coefficients(system, f, fp)
        offs.append(system.transition_offset(f, fp))
        wa.append(c.c0 + f * (f + 1) * c.c2 / 6)
        wb.append(f * (f + 1) / 2 * c.c2)
    return np.array(offs), np.array(wa), np.array(wb)


def clock_coefficients(system, f, probe, guard=DEFAULT_GUARD):
    """(a_f, b_f) of the dispersive clock-state coupling.

    ``probe`` may be an array; the guard check is skipped when guard is 0.
    """
    if guard:
        for p in np.atleast_1d(probe):
            check_detunings(system, p, (f,), guard)
    offs, wa, wb = _clock_table(system, f)
    w = system.gamma / (4 * (np.asarray(probe)[..., None] - offs))
    return (w * wa).sum(-1), (w * wb).sum(-1)


def coupling_chi(system, sol, f, u_p, axis, probe, guard=DEFAULT_GUARD):
    """chi_{p,f} = n_g sigma0 (a_f |u_p|^2 - b_f |z~ . u_p|^2), rad per photon.

    ``u_p`` is the Cartesian guided-mode vector at the atom (see
    ``fiber_modes.local_modes``).
    """
    a, b = clock_coefficients(system, f, probe, guard)
    u_p = np.asarray(u_p)
    proj = abs(axis.z_tilde @ u_p) ** 2
    return sol.n_g * system.sigma0 * (a * np.vdot(u_p, u_p).real - b * proj)


def coupling_chi_tensor(system, sol, f, u_p, axis, probe, guard=DEFAULT_GUARD):
    """Same coupling from -2 pi k0 n_g u* . alpha . u with the dispersive alpha."""
    alpha = clock_polarizability(system, f, axis, probe, dispersive=True, guard=guard)
    u_p = np.asarray(u_p)
    return float((-2 * np.pi * system.k0 * sol.n_g * (u_p.conj() @ alpha @ u_p)).real)


def mixed_scalar_weight(system):
    """Population-weighted sum_{f,f'} C0 for the fully mixed ground state."""
    total = sum(2 * f + 1 for f in system.ground_f)
    return sum(
        (2 * f + 1) / total * irreducible_coefficients(system, f, fp).c0
        for f in system.ground_f
        for fp in system.excited_f
    )
