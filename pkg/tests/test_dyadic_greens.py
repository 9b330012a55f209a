import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nanofiber_qsim.atomic_structure import alpha0, transition_dipoles
from nanofiber_qsim.dyadic_greens import (
    gamma_1d,
    gamma_1d_mode_sum,
    guided_greens,
    im_greens_local,
    input_area,
    phase_shift_multilevel,
    scattering_matrices,
)
from nanofiber_qsim.errors import DegenerateGeometry, ResonanceError
from nanofiber_qsim.fiber_modes import guided_vector, mode_profile


def _random_dipoles(rng, n):
    return rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))


def test_gamma_1d_two_routes(sol_d1, rng):
    r = (1.8 * sol_d1.a, 0.0)
    for _ in range(20):
        d = _random_dipoles(rng, 1)[0]
        g1 = gamma_1d(sol_d1, d, r)
        g2 = gamma_1d_mode_sum(sol_d1, d, r)
        assert abs(g1 - g2) <= 1e-10 * abs(g2)


def test_gamma_1d_two_routes_off_axis_and_multiple_ground_states(sol_d1, rng):
    for _ in range(10):
        x, y = rng.uniform(-3, 3, 2) * sol_d1.a
        if np.hypot(x, y) < 1.1 * sol_d1.a:
            continue
        d = _random_dipoles(rng, 3)
        assert gamma_1d(sol_d1, d, (x, y)) == pytest.approx(gamma_1d_mode_sum(sol_d1, d, (x, y)), rel=1e-10)


def test_gamma_1d_cesium_excited_state(sol_d1, d1):
    # emission of |f'=4, m'=4> into the fiber, both routes, from the real dipole set
    rows = []
    for f in d1.ground_f:
        for m in range(-f, f + 1):
            for fp, mp, vec in transition_dipoles(d1, f, m):
                if (fp, mp) == (4, 4):
                    rows.append(vec)
    assert sum(np.vdot(v, v).real for v in rows) == pytest.approx(1.0, abs=1e-14)
    r = (1.8 * sol_d1.a, 0.0)
    g = gamma_1d(sol_d1, rows, r)
    assert g == pytest.approx(gamma_1d_mode_sum(sol_d1, rows, r), rel=1e-10)
    assert 0 < g < 1


def test_gamma_1d_zero_dipole(sol_d1):
    assert gamma_1d(sol_d1, np.zeros(3), (1.8 * sol_d1.a, 0)) == 0.0


def test_gamma_1d_decreases_with_distance(sol_d1, rng):
    d = _random_dipoles(rng, 1)[0]
    rs = np.linspace(1.2, 4.0, 25) * sol_d1.a
    vals = [gamma_1d(sol_d1, d, (r, 0.0)) for r in rs]
    assert np.all(np.diff(vals) < 0)


def test_im_greens_local_closed_form(sol_d1):
    # atom at phi = 0: pi k0 n_g * 4 diag(u_r^2, u_phi^2, u_z^2)
    r = 1.8 * sol_d1.a
    ur, up, uz = mode_profile(sol_d1, r)
    ref = np.pi * sol_d1.k0 * sol_d1.n_g * 4 * np.diag([ur**2, up**2, uz**2])
    np.testing.assert_allclose(im_greens_local(sol_d1, (r, 0.0)), ref, rtol=1e-13, atol=1e-25)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.05, 5.0), st.floats(-np.pi, np.pi))
def test_im_greens_psd_symmetric(sol_d1, r_over_a, phi):
    r = r_over_a * sol_d1.a
    M = im_greens_local(sol_d1, (r * np.cos(phi), r * np.sin(phi)))
    np.testing.assert_allclose(M, M.T, atol=1e-14 * np.abs(M).max())
    assert np.linalg.eigvalsh(M).min() >= -1e-12 * np.abs(M).max()


def test_im_greens_linear_in_intensity(sol_d1):
    r = (1.8 * sol_d1.a, 0.0)
    s2 = sol_d1.with_amplitude(np.sqrt(2) * sol_d1.u0)
    np.testing.assert_allclose(im_greens_local(s2, r), 2 * im_greens_local(sol_d1, r), rtol=1e-14)


def test_greens_degenerate_geometry(sol_d1):
    with pytest.raises(DegenerateGeometry):
        guided_greens(sol_d1, (400, 0, 5.0), (400, 0, 5.0))


def test_greens_causal_structure_and_modulus(sol_d1):
    a = sol_d1.a
    r, rp = (1.8 * a, 0.3 * a, 0.0), (1.6 * a, -0.5 * a, 0.0)
    pref = 2j * np.pi * sol_d1.k0 * sol_d1.n_g
    for b in (1, -1):
        block = sum(np.outer(guided_vector(sol_d1, p, b, *r[:2]), guided_vector(sol_d1, p, b, *rp[:2]).conj())
                    for p in ("H", "V"))
        for dz in (37.0, 1234.5):
            G = guided_greens(sol_d1, (r[0], r[1], b * dz), rp).value
            ref = pref * block * np.exp(1j * sol_d1.beta0 * dz)  # b (z - z') = dz for both directions
            np.testing.assert_allclose(G, ref, rtol=1e-13, atol=1e-30)
    g1 = np.abs(guided_greens(sol_d1, (r[0], r[1], 10.0), rp).value)
    g2 = np.abs(guided_greens(sol_d1, (r[0], r[1], 9999.0), rp).value)
    np.testing.assert_allclose(g1, g2, rtol=1e-12)


def test_greens_reciprocity(sol_d1):
    a = sol_d1.a
    r, rp = (1.8 * a, 0.3 * a, 120.0), (-1.6 * a, 0.7 * a, -40.0)
    G = guided_greens(sol_d1, r, rp).value
    Gt = guided_greens(sol_d1, rp, r).value.T
    np.testing.assert_allclose(G, Gt, rtol=1e-13, atol=1e-30)


def test_greens_coincident_limit(sol_d1):
    a = sol_d1.a
    x = (1.8 * a, 0.0)
    eps = 1e-9
    up = guided_greens(sol_d1, (*x, eps), (*x, 0.0)).value.imag
    down = guided_greens(sol_d1, (*x, -eps), (*x, 0.0)).value.imag
    local = im_greens_local(sol_d1, x)
    np.testing.assert_allclose(0.5 * (up + down), local, rtol=1e-8, atol=1e-12 * np.abs(local).max())
    assert np.trace(up) == pytest.approx(np.trace(local), rel=1e-8)
    assert np.trace(down) == pytest.approx(np.trace(local), rel=1e-8)


def _alpha_two_level(system, delta):
    return alpha0(system, delta) * np.eye(3)


def test_scattering_zero_alpha(sol_d1):
    for basis in ("linear", "circular"):
        sm = scattering_matrices(sol_d1, np.zeros((3, 3)), (1.8 * sol_d1.a, 0.0, 3.0), basis)
        np.testing.assert_array_equal(sm.t, np.eye(2))
        np.testing.assert_array_equal(sm.r, np.zeros((2, 2)))
        assert np.all(sm.phase == 0) and np.all(sm.attenuation == 0)


def test_scattering_real_scalar_alpha_is_pure_phase(sol_d1):
    sm = scattering_matrices(sol_d1, 0.7 * np.eye(3), (1.8 * sol_d1.a, 0.0))
    np.testing.assert_array_equal(sm.attenuation, 0.0)
    assert np.all(sm.phase > 0)


def test_scattering_weak_bounds(sol_d1, d1):
    for delta in (10, 30, -50):
        alpha = _alpha_two_level(d1, delta * d1.gamma)
        sm = scattering_matrices(sol_d1, alpha, (1.8 * sol_d1.a, 0.0))
        assert np.all(np.abs(np.diag(sm.t)) <= 1 + 1e-9)
        assert np.all(sm.attenuation >= 0) and np.all(sm.attenuation < 1)


def test_t_linear_in_alpha(sol_d1, rng):
    A = 1e6 * (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    r = (1.8 * sol_d1.a, 0.0)
    ratios = []
    for eps in (1.0, 0.1, 0.01):
        t = scattering_matrices(sol_d1, eps * A, r).t
        ratios.append(np.linalg.norm(t - np.eye(2)) / (eps * np.linalg.norm(A)))
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)


def test_circular_linear_basis_change(sol_d1, rng):
    # u_+ = (u_H + i u_V)/sqrt2, u_- = (u_H - i u_V)/sqrt2, so t_c - I = W^dag (t_l - I) W
    W = np.array([[1, 1], [1j, -1j]]) / np.sqrt(2)
    r = (1.8 * sol_d1.a, 0.4 * sol_d1.a, 17.0)
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    alpha = np.outer(v, v.conj())
    tl = scattering_matrices(sol_d1, alpha, r, "linear")
    tc = scattering_matrices(sol_d1, alpha, r, "circular")
    np.testing.assert_allclose(tc.t - np.eye(2), W.conj().T @ (tl.t - np.eye(2)) @ W, atol=1e-15)


def test_faraday_rotation_from_circular_phases(sol_d1):
    # a gyrotropic alpha makes the circular basis diagonal on axis-symmetric sites;
    # then t_HV = -i (t_++ - t_--)/2, i.e. half the differential circular phase
    g = 0.3
    alpha = np.array([[0, -1j * g, 0], [1j * g, 0, 0], [0, 0, 0]])
    r = (1.8 * sol_d1.a, 0.0)
    tl = scattering_matrices(sol_d1, alpha, r, "linear")
    tc = scattering_matrices(sol_d1, alpha, r, "circular")
    pred = -1j * (tc.t[0, 0] - tc.t[1, 1]) / 2
    W = np.array([[1, 1], [1j, -1j]]) / np.sqrt(2)
    full = W @ (tc.t - np.eye(2)) @ W.conj().T
    assert tl.t[0, 1] == pytest.approx(full[0, 1], abs=1e-15)
    assert abs(tc.t[0, 1]) < 1e-3 * abs(tc.t[0, 0] - tc.t[1, 1])
    assert tl.t[0, 1] == pytest.approx(pred, rel=1e-2)


def test_phase_matches_arg_t_quadratically(sol_d1, d1):
    r = (1.8 * sol_d1.a, 0.0)
    base = _alpha_two_level(d1, 3 * d1.gamma)
    errs = []
    for eps in (1.0, 0.5, 0.25):
        sm = scattering_matrices(sol_d1, eps * base, r)
        errs.append(abs(np.angle(sm.t[0, 0]) - sm.phase[0]))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_reflection_phase_factor(sol_d1, d1):
    alpha = _alpha_two_level(d1, 20 * d1.gamma)
    x = (1.8 * sol_d1.a, 0.0)
    r0 = scattering_matrices(sol_d1, alpha, (*x, 0.0)).r
    r1 = scattering_matrices(sol_d1, alpha, (*x, 250.0)).r
    np.testing.assert_allclose(r1, r0 * np.exp(2j * sol_d1.beta0 * 250.0), rtol=1e-12)


def _isotropic(d):
    return np.eye(3), np.full(3, d)


def test_phase_shift_odd_and_inverse_in_detuning(sol_d1, d1):
    D, _ = _isotropic(1)
    r = (1.8 * sol_d1.a, 0.0)
    G = d1.gamma
    p1 = phase_shift_multilevel(sol_d1, D[:1], [20 * G], G, "H", r)
    p2 = phase_shift_multilevel(sol_d1, D[:1], [-20 * G], G, "H", r)
    p3 = phase_shift_multilevel(sol_d1, D[:1], [40 * G], G, "H", r)
    assert p1 < 0
    assert p2 == pytest.approx(-p1, rel=1e-15)
    assert p3 == pytest.approx(p1 / 2, rel=1e-15)


def test_phase_shift_scalar_atom_matches_scattering(sol_d1, d1):
    # J=0 -> J'=1 atom: three orthogonal unit dipoles give a scalar alpha
    G = d1.gamma
    delta = 25 * G
    D, det = _isotropic(delta)
    r = (1.8 * sol_d1.a, 0.0)
    sm = scattering_matrices(sol_d1, alpha0(d1, delta, dispersive=True) * np.eye(3), r)
    for i, p in enumerate(("H", "V")):
        assert phase_shift_multilevel(sol_d1, D, det, G, p, r) == pytest.approx(sm.phase[i], rel=1e-13)


def test_phase_shift_guard(sol_d1, d1):
    G = d1.gamma
    with pytest.raises(ResonanceError):
        phase_shift_multilevel(sol_d1, np.eye(3)[:1], [5 * G], G, "H", (400.0, 0.0))
    phase_shift_multilevel(sol_d1, np.eye(3)[:1], [5 * G], G, "H", (400.0, 0.0), guard=2)
    with pytest.raises(ValueError):
        phase_shift_multilevel(sol_d1, np.eye(3), [20 * G], G, "H", (400.0, 0.0))


def test_input_area_reexport(sol_d1):
    sm = scattering_matrices(sol_d1, np.eye(3), (1.8 * sol_d1.a, 0.0))
    assert sm.area[0] == pytest.approx(input_area(sol_d1, (1.8 * sol_d1.a, 0.0), "H"), rel=1e-14)
    assert sm.area[1] == pytest.approx(input_area(sol_d1, (1.8 * sol_d1.a, 0.0), "V"), rel=1e-14)
