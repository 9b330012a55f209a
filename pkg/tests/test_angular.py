import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sympy import S
from sympy.physics.wigner import clebsch_gordan as sym_cg, wigner_3j as sym_3j, wigner_6j as sym_6j

from nanofiber_qsim.angular import clebsch_gordan, two, wigner_3j, wigner_6j

HALF = [Fraction(n, 2) for n in range(0, 10)]


def _ms(j):
    return [j - k for k in range(int(2 * j) + 1)]


def _sym6j(*args):
    try:
        return float(sym_6j(*[S(x) for x in args]))
    except ValueError:
        return 0.0


def test_two_rejects_non_half_integers():
    assert two(3.5) == 7
    with pytest.raises(ValueError):
        two(0.3)


def test_cg_matches_sympy_exhaustive():
    worst = 0.0
    for j1 in (Fraction(1, 2), 1, Fraction(7, 2), 4):
        for j2 in (1, Fraction(3, 2)):
            for J in [abs(j1 - j2) + k for k in range(int(2 * min(j1, j2)) + 1)]:
                for m1 in _ms(j1):
                    for m2 in _ms(j2):
                        M = m1 + m2
                        if abs(M) > J:
                            continue
                        ref = float(sym_cg(S(j1), S(j2), S(J), S(m1), S(m2), S(M)))
                        worst = max(worst, abs(clebsch_gordan(j1, m1, j2, m2, J, M) - ref))
    assert worst < 1e-14


def test_cg_selection_rules_give_zero():
    assert clebsch_gordan(1, 1, 1, 1, 1, 1) == 0.0   # m1 + m2 != M
    assert clebsch_gordan(1, 0, 1, 0, 3, 0) == 0.0   # triangle fails
    assert clebsch_gordan(1, 0, 1, 0, 1, 0) == 0.0   # parity zero


def test_cg_golden_value():
    # one hyperfine-sized element and the singlet amplitude
    ref = float(sym_cg(S(4), S(1), S(4), S(1), S(-1), S(0)))
    assert clebsch_gordan(4, 1, 1, -1, 4, 0) == pytest.approx(ref, abs=1e-15)
    assert clebsch_gordan(Fraction(1, 2), Fraction(1, 2), Fraction(1, 2), Fraction(-1, 2), 0, 0) \
        == pytest.approx(1 / np.sqrt(2), abs=1e-15)


@pytest.mark.parametrize("j1,j2", [(Fraction(7, 2), Fraction(1, 2)), (4, 1), (Fraction(3, 2), 1), (5, 1)])
def test_cg_completeness(j1, j2):
    # the CG table is an orthogonal matrix between product and coupled bases
    rows = [(m1, m2) for m1 in _ms(j1) for m2 in _ms(j2)]
    Js = [abs(j1 - j2) + k for k in range(int(2 * min(j1, j2)) + 1)]
    cols = [(J, M) for J in Js for M in _ms(J)]
    U = np.array([[clebsch_gordan(j1, m1, j2, m2, J, M) for (J, M) in cols] for (m1, m2) in rows])
    assert U.shape[0] == U.shape[1]
    assert np.abs(U @ U.T - np.eye(len(rows))).max() < 1e-12
    assert np.abs(U.T @ U - np.eye(len(rows))).max() < 1e-12


def test_3j_matches_sympy():
    for j1, j2, j3 in [(4, 1, 4), (Fraction(7, 2), Fraction(1, 2), 4), (5, 1, 4), (2, 2, 2)]:
        for m1 in _ms(j1):
            for m2 in _ms(j2):
                m3 = -m1 - m2
                if abs(m3) > j3:
                    continue
                ref = float(sym_3j(S(j1), S(j2), S(j3), S(m1), S(m2), S(m3)))
                assert wigner_3j(j1, j2, j3, m1, m2, m3) == pytest.approx(ref, abs=1e-14)


def test_6j_matches_sympy_over_cesium_arguments():
    vals = [Fraction(1, 2), 1, Fraction(3, 2), 2, 3, Fraction(7, 2), 4, 5]
    worst = 0.0
    for args in [(1, 1, 0, 4, 4, 4), (1, 1, 1, 3, 3, 4), (1, 1, 2, 4, 4, 5)]:
        worst = max(worst, abs(wigner_6j(*args) - _sym6j(*args)))
    rng = np.random.default_rng(3)
    for _ in range(300):
        args = [vals[i] for i in rng.integers(0, len(vals), 6)]
        worst = max(worst, abs(wigner_6j(*args) - _sym6j(*args)))
    assert worst < 1e-14


@pytest.mark.parametrize("j1,j2,j4,j5", [(1, 1, 4, 4), (Fraction(7, 2), Fraction(1, 2), 1, 4),
                                         (Fraction(3, 2), 1, Fraction(5, 2), 2), (1, 1, 3, 3)])
def test_6j_orthogonality(j1, j2, j4, j5):
    # sum_x (2x+1)(2j3+1) {j1 j2 x; j4 j5 j3} {j1 j2 x; j4 j5 j3'} = delta
    def rng_of(a, b):
        return [abs(a - b) + k for k in range(int(a + b - abs(a - b)) + 1)]

    xs = [x for x in rng_of(j1, j2) if x in rng_of(j4, j5)]
    j3s = [y for y in rng_of(j1, j5) if y in rng_of(j4, j2)]
    for a, b in itertools.product(j3s, repeat=2):
        s = sum((2 * x + 1) * (2 * a + 1) * wigner_6j(j1, j2, x, j4, j5, a) * wigner_6j(j1, j2, x, j4, j5, b)
                for x in xs)
        assert abs(s - (a == b)) < 1e-12


@given(st.sampled_from(HALF[1:]), st.sampled_from(HALF[1:]), st.sampled_from(HALF))
def test_6j_with_zero_closed_form(a, b, c):
    # {a b c; b a 0} = (-1)^(a+b+c) / sqrt((2a+1)(2b+1)) when (a b c) is a triad
    val = wigner_6j(a, b, c, b, a, 0)
    if not (abs(a - b) <= c <= a + b and (a + b + c).denominator == 1):
        assert val == 0.0
        return
    ref = (-1) ** int(a + b + c) / np.sqrt(float((2 * a + 1) * (2 * b + 1)))
    assert val == pytest.approx(ref, abs=1e-14)


@settings(max_examples=60)
@given(st.sampled_from(HALF), st.sampled_from(HALF), st.sampled_from(HALF),
       st.sampled_from(HALF), st.sampled_from(HALF), st.sampled_from(HALF))
def test_6j_column_permutation_symmetry(a, b, c, d, e, f):
    base = wigner_6j(a, b, c, d, e, f)
    assert wigner_6j(b, a, c, e, d, f) == pytest.approx(base, abs=1e-14)
    assert wigner_6j(c, b, a, f, e, d) == pytest.approx(base, abs=1e-14)
    assert wigner_6j(d, e, c, a, b, f) == pytest.approx(base, abs=1e-14)
