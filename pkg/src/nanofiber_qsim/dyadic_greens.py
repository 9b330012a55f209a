"""Guided part of the dyadic Green's function and the scattering it implies.

For a single transverse mode family the guided Green's function is

    G(r, r') = 2 pi i k0 n_g sum_p u_{b,p}(r_perp) u*_{b,p}(r'_perp)
               exp(i b beta0 (z - z')),   b = sign(z - z')

so only forward modes reach a detector downstream of the source and only
backward modes reach one upstream.  Its imaginary part at coincident
points sets the emission rate into the fiber, and projecting the field
scattered by an atom of polarizability ``alpha`` back onto the modes gives
the transmission and reflection matrices

    t_pp' = delta_pp' + 2 pi i k0 n_g u*_{+,p} . alpha . u_{+,p'}
    r_pp' = 2 pi i k0 n_g u*_{-,p} . alpha . u_{+,p'} exp(2 i beta0 z').

Dipole moments are in units of the unit-strength oscillator used in
``atomic_structure``; decay rates come out in units of its free-space
rate Gamma.  Positions are Cartesian (x, y, z) in nm.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, ResonanceError
from .fiber_modes import effective_area_in, guided_vector

LINEAR = ("H", "V")
CIRCULAR = ("+", "-")


def _bases(basis):
    if basis in ("linear", "quasilinear"):
        return LINEAR
    if basis in ("circular", "quasicircular"):
        return CIRCULAR
    raise ValueError(f"unknown polarization basis {basis!r}")


def mode_vectors(sol, x, y, basis="linear"):
    """{(b, p): Cartesian field vector} for both directions."""
    return {(b, p): guided_vector(sol, p, b, x, y) for b in (1, -1) for p in _bases(basis)}


@dataclass(frozen=True)
class GuidedGreens:
    r: tuple
    r_prime: tuple
    value: np.ndarray
    omega0: float


def guided_greens(sol, r, r_prime, basis="linear"):
    """Guided dyadic G(r, r') for z != z' (3x3, 1/nm^3 convention)."""
    dz = r[2] - r_prime[2]
    if dz == 0:
        raise DegenerateGeometry("z == z'; use im_greens_local for the coincident limit")
    b = 1 if dz > 0 else -1
    pref = 2j * np.pi * sol.k0 * sol.n_g
    val = np.zeros((3, 3), dtype=complex)
    for p in _bases(basis):
        u = guided_vector(sol, p, b, r[0], r[1])
        up = guided_vector(sol, p, b, r_prime[0], r_prime[1])
        val += np.outer(u, up.conj())
    val *= pref * np.exp(1j * b * sol.beta0 * dz)
    return GuidedGreens(tuple(r), tuple(r_prime), val, sol.omega0)


def im_greens_local(sol, r_prime):
    """Im G at coincident points: pi k0 n_g sum_{b,p} u u* (real symmetric)."""
    acc = np.zeros((3, 3), dtype=complex)
    for u in mode_vectors(sol, r_prime[0], r_prime[1]).values():
        acc += np.outer(u, u.conj())
    # the b = +- pair makes the sum real; drop the rounding residue
    return (np.pi * sol.k0 * sol.n_g * acc).real


def _as_dipoles(dipoles):
    d = np.asarray(dipoles, dtype=complex)
    return d.reshape(-1, 3)


def gamma_1d(sol, dipoles, r_prime):
    """Emission rate into the guided modes, Green's-function route.

    ``dipoles`` holds one or more vectors <e|D|g> (one row per ground
    state g).  Result is in units of the free-space rate Gamma.
    """
    im_g = im_greens_local(sol, r_prime)
    d = _as_dipoles(dipoles)
    # 2/hbar sum_g d* . ImG . d with d0^2/hbar = 3 Gamma / (4 k0^3)
    total = sum((dg.conj() @ im_g @ dg).real for dg in d)
    return 3 / (2 * sol.k0**3) * total


def gamma_1d_mode_sum(sol, dipoles, r_prime):
    """Same rate from 2 pi sum |g_{mu,e,g}|^2 over guided modes and g."""
    d = _as_dipoles(dipoles)
    vecs = mode_vectors(sol, r_prime[0], r_prime[1])
    total = 0.0
    for dg in d:
        for u in vecs.values():
            total += abs(dg.conj() @ u) ** 2
    return 3 * np.pi * sol.n_g / (2 * sol.k0**2) * total


@dataclass(frozen=True)
class ScatteringMatrices:
    basis: tuple
    t: np.ndarray
    r: np.ndarray
    phase: np.ndarray
    attenuation: np.ndarray
    area: np.ndarray


def scattering_matrices(sol, alpha, r_prime, basis="linear"):
    """Transmission/reflection of the guided modes off one point scatterer.

    ``alpha`` is the 3x3 polarizability (nm^3) of an atom at
    r_prime = (x, y, z).  Per-mode phase shifts and attenuations use the
    p-polarised input area: delta phi_p = (2 pi k0 / A_p) Re alpha_pp and
    R_p = (4 pi k0 / A_p) Im alpha_pp, alpha_pp = e_p* . alpha . e_p.
    """
    alpha = np.asarray(alpha, dtype=complex)
    labels = _bases(basis)
    x, y = r_prime[0], r_prime[1]
    z = r_prime[2] if len(r_prime) > 2 else 0.0
    fwd = [guided_vector(sol, p, 1, x, y) for p in labels]
    bwd = [guided_vector(sol, p, -1, x, y) for p in labels]
    pref = 2j * np.pi * sol.k0 * sol.n_g
    t = np.eye(2, dtype=complex)
    r = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            t[i, j] += pref * (fwd[i].conj() @ alpha @ fwd[j])
            r[i, j] = pref * (bwd[i].conj() @ alpha @ fwd[j]) * np.exp(2j * sol.beta0 * z)
    phase = np.zeros(2)
    att = np.zeros(2)
    area = np.zeros(2)
    for i, u in enumerate(fwd):
        norm2 = np.vdot(u, u).real
        area[i] = 1.0 / (sol.n_g * norm2)
        e = u / np.sqrt(norm2)
        a_pp = e.conj() @ alpha @ e
        phase[i] = 2 * np.pi * sol.k0 / area[i] * a_pp.real
        att[i] = 4 * np.pi * sol.k0 / area[i] * a_pp.imag
    return ScatteringMatrices(labels, t, r, phase, att, area)


def phase_shift_multilevel(sol, dipoles, detunings, gamma, p, r_prime, guard=10.0):
    """Dispersive phase of p-polarised light on an atom in ground state g.

    delta phi = -n_g sigma0 sum_e |D_eg . u_{+,p}|^2 Gamma / (4 Delta_eg)

    with ``dipoles`` the vectors <e|D|g> (unit-oscillator units, e.g. from
    ``atomic_structure.transition_dipoles``) and ``detunings`` the matching
    probe detunings Delta_eg in the same units as ``gamma``.
    """
    d = _as_dipoles(dipoles)
    det = np.atleast_1d(np.asarray(detunings, dtype=float))
    if len(det) != len(d):
        raise ValueError("need one detuning per dipole vector")
    if np.any(np.abs(det) < guard * gamma):
        raise ResonanceError(f"a detuning lies within {guard:g} Gamma of resonance")
    u = guided_vector(sol, p, 1, r_prime[0], r_prime[1])
    strength = np.abs(d @ u) ** 2
    return float(-sol.n_g * sol.sigma0 * np.sum(strength * gamma / (4 * det)))


def input_area(sol, r_prime, polarization="diagonal"):
    """Convenience re-export of the input-mode area at the atom."""
    return effective_area_in(sol, r_prime, polarization)
