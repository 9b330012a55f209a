"""Angular-momentum coupling coefficients.

Clebsch-Gordan, 3-j and 6-j symbols from the Racah closed-form sums.
Every factorial ratio is accumulated as an exact rational so the only
rounding happens in the final square root, which keeps the result at
machine precision even for the f = 4, f' = 5 manifolds of cesium.

Arguments may be ints, floats or ``fractions.Fraction`` as long as they
are integers or half-integers.
"""

from fractions import Fraction
from functools import lru_cache
from math import factorial, sqrt

__all__ = ["clebsch_gordan", "wigner_3j", "wigner_6j", "two"]


def two(j):
    """Return 2*j as an int, raising if j is not a half-integer."""
    d = 2 * j
    n = int(round(d))
    if abs(d - n) > 1e-9:
        raise ValueError(f"{j!r} is not an integer or half-integer")
    return n


def _triangle(a2, b2, c2):
    """Check the triangle rule on doubled arguments."""
    return (a2 + b2 + c2) % 2 == 0 and abs(a2 - b2) <= c2 <= a2 + b2


def _delta_sq(a2, b2, c2):
    # triangle coefficient Delta(abc)^2 as an exact rational
    return Fraction(
        factorial((a2 + b2 - c2) // 2)
        * factorial((a2 - b2 + c2) // 2)
        * factorial((-a2 + b2 + c2) // 2),
        factorial((a2 + b2 + c2) // 2 + 1),
    )


def _signed_sqrt(x):
    """sign(x)*sqrt(|x|) for an exact rational stored as (sign, |x|)."""
    sign, mag = x
    return sign * sqrt(mag) if mag else 0.0


@lru_cache(maxsize=None)
def _cg_exact(j1, m1, j2, m2, J, M):
    # doubled arguments; returns (sign, value^2) so the caller takes one sqrt
    if m1 + m2 != M:
        return (1, Fraction(0))
    if not _triangle(j1, j2, J):
        return (1, Fraction(0))
    for j, m in ((j1, m1), (j2, m2), (J, M)):
        if abs(m) > j or (j + m) % 2:
            return (1, Fraction(0))
    pre = Fraction(J + 1) * _delta_sq(j1, j2, J)
    pre *= (
        factorial((j1 + m1) // 2) * factorial((j1 - m1) // 2)
        * factorial((j2 + m2) // 2) * factorial((j2 - m2) // 2)
        * factorial((J + M) // 2) * factorial((J - M) // 2)
    )
    total = Fraction(0)
    kmin = max(0, (j2 - J - m1) // 2, (j1 - J + m2) // 2)
    kmax = min((j1 + j2 - J) // 2, (j1 - m1) // 2, (j2 + m2) // 2)
    for k in range(kmin, kmax + 1):
        den = (
            factorial(k)
            * factorial((j1 + j2 - J) // 2 - k)
            * factorial((j1 - m1) // 2 - k)
            * factorial((j2 + m2) // 2 - k)
            * factorial((J - j2 + m1) // 2 + k)
            * factorial((J - j1 - m2) // 2 + k)
        )
        total += Fraction((-1) ** k, den)
    if total == 0:
        return (1, Fraction(0))
    sign = 1 if total > 0 else -1
    return (sign, pre * total * total)


def clebsch_gordan(j1, m1, j2, m2, J, M):
    """<j1 m1; j2 m2 | J M> in the Condon-Shortley phase convention.

    Selection-rule violations return 0.0 rather than raising.
    """
    args = tuple(two(x) for x in (j1, m1, j2, m2, J, M))
    return _signed_sqrt(_cg_exact(*args))


def wigner_3j(j1, j2, j3, m1, m2, m3):
    """Wigner 3-j symbol, via its relation to the Clebsch-Gordan coefficient."""
    a = tuple(two(x) for x in (j1, j2, j3, m1, m2, m3))
    sign, mag = _cg_exact(a[0], a[3], a[1], a[4], a[2], -a[5])
    if not mag:
        return 0.0
    phase = -1 if ((a[0] - a[1] - a[5]) // 2) % 2 else 1
    return phase * sign * sqrt(mag / (a[2] + 1))


@lru_cache(maxsize=None)
def _sixj_exact(a, b, c, d, e, f):
    # {a b c; d e f} with doubled arguments
    triads = ((a, b, c), (a, e, f), (d, b, f), (d, e, c))
    if not all(_triangle(*t) for t in triads):
        return (1, Fraction(0))
    pre = Fraction(1)
    for t in triads:
        pre *= _delta_sq(*t)
    s1 = (a + b + c) // 2
    s2 = (a + e + f) // 2
    s3 = (d + b + f) // 2
    s4 = (d + e + c) // 2
    p1 = (a + b + d + e) // 2
    p2 = (a + c + d + f) // 2
    p3 = (b + c + e + f) // 2
    total = 0
    for t in range(max(s1, s2, s3, s4), min(p1, p2, p3) + 1):
        den = (
            factorial(t - s1) * factorial(t - s2) * factorial(t - s3)
            * factorial(t - s4) * factorial(p1 - t) * factorial(p2 - t)
            * factorial(p3 - t)
        )
        total += Fraction((-1) ** t * factorial(t + 1), den)
    if total == 0:
        return (1, Fraction(0))
    sign = 1 if total > 0 else -1
    return (sign, pre * total * total)


def wigner_6j(j1, j2, j3, j4, j5, j6):
    """Wigner 6-j symbol {j1 j2 j3; j4 j5 j6}; zero when a triad fails."""
    args = tuple(two(x) for x in (j1, j2, j3, j4, j5, j6))
    return _signed_sqrt(_sixj_exact(*args))
