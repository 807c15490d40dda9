"""Exact counts, partition functions and peeling transition laws.

Everything here is computed with :class:`fractions.Fraction`, so identities
such as total mass one hold with zero tolerance.  A log-space mirror backed
by mpmath covers indices where exact rationals become too large to be useful.

Conventions
-----------
``m`` is the boundary parameter: the polygon has ``m + 2`` vertices.
``n`` is a number of internal vertices.  ``ALPHA = 27/2`` is the exponential
growth rate of type II triangulation counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import mpmath

ALPHA = Fraction(27, 2)
NINE_FOURTHS = Fraction(9, 4)

# Independent context so callers' mpmath precision settings are never touched.
_MP = mpmath.MPContext()
_MP.dps = 40


def _F(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def descending_factorial(x, k: int) -> Fraction:
    """``(x)_k = x (x-1) ... (x-k+1)`` for rational ``x``."""
    x = _F(x)
    out = Fraction(1)
    for i in range(k):
        out *= x - i
    return out


def catalan(m: int) -> int:
    return comb(2 * m, m) // (m + 1)


# --------------------------------------------------------------------------
# counts and partition functions


@lru_cache(maxsize=4096)
def phi(n: int, m: int) -> Fraction:
    """Number of rooted type II triangulations of an (m+2)-gon with n internal vertices.

    ``phi(0, 0) == 1`` is kept on purpose: a 2-gon may be closed by gluing its
    two edges together.
    """
    if n < 0 or m < 0:
        raise ValueError("n and m must be non-negative")
    num = 2 ** (n + 1) * factorial(2 * m + 1) * factorial(2 * m + 3 * n)
    den = factorial(m) ** 2 * factorial(n) * factorial(2 * m + 2 * n + 2)
    return Fraction(num, den)


@lru_cache(maxsize=4096)
def Z(m: int) -> Fraction:
    """Partition function of the (m+2)-gon at the critical point ``t = 1/ALPHA``."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return Fraction(factorial(2 * m), factorial(m) * factorial(m + 2)) * NINE_FOURTHS ** (m + 1)


def Z_of_theta(m: int, theta) -> Fraction:
    """Partition function at ``t = theta (1 - 2 theta)^2`` for ``0 <= theta <= 1/6``."""
    theta = _F(theta)
    if m < 0:
        raise ValueError("m must be non-negative")
    if not 0 <= theta <= Fraction(1, 6):
        raise ValueError("theta must lie in [0, 1/6]")
    lead = Fraction(factorial(2 * m), factorial(m) * factorial(m + 2))
    return lead * ((1 - 6 * theta) * m + 2 - 6 * theta) / (1 - 2 * theta) ** (2 * m + 2)


@lru_cache(maxsize=4096)
def Ztilde(m: int) -> Fraction:
    """Partition function of triangulations with one marked internal vertex."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return Fraction(comb(2 * m + 2, m), 6) * NINE_FOURTHS ** (m + 1)


def free_size_mean(m: int) -> Fraction:
    """Mean number of internal vertices of a free triangulation of the (m+2)-gon."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return Fraction((m + 1) * (2 * m + 1), 3)


def boundary_constant_ratio(m: int) -> float:
    """``C_m / Z_m``, the limit of ``n^{5/2} P(|T| = n)`` under the free law.

    This is the only place the irrational constant ``sqrt(3/pi)`` shows up; it
    is used for the tail envelope of the size sampler.
    """
    return math.sqrt(3.0) * (2 * m + 1) * (m + 1) * (m + 2) / (9.0 * math.sqrt(math.pi))


# --------------------------------------------------------------------------
# transition laws


@dataclass(frozen=True)
class StepLaw:
    """Law of the boundary increment ``X`` of UIPT peeling at parameter ``m``.

    ``p_down[k-1]`` is ``P(X = -k)`` and already includes both sides of the
    peeled edge.
    """

    m: int
    p_up: Fraction
    p_down: tuple[Fraction, ...]

    def mass(self) -> Fraction:
        return self.p_up + sum(self.p_down, Fraction(0))

    def mean(self) -> Fraction:
        return self.p_up - sum((k * p for k, p in enumerate(self.p_down, 1)), Fraction(0))

    def rows(self):
        yield 1, self.p_up
        for k, p in enumerate(self.p_down, 1):
            yield -k, p


@dataclass(frozen=True)
class MarkedStepLaw:
    """Peeling law of the free triangulation with a marked internal vertex.

    ``p_split[k-1]`` is the probability that the boundary drops by ``k`` with
    the mark on the remaining side; both sides of the edge are included.
    """

    m: int
    p_new_unmarked: Fraction
    p_new_marked: Fraction
    p_split: tuple[Fraction, ...]

    def mass(self) -> Fraction:
        return self.p_new_unmarked + self.p_new_marked + sum(self.p_split, Fraction(0))

    def rows(self):
        yield "new_unmarked", self.p_new_unmarked
        yield "new_marked", self.p_new_marked
        for k, p in enumerate(self.p_split, 1):
            yield f"split_{k}", p


@dataclass(frozen=True)
class FreePeelLaw:
    """Peeling law of a free triangulation of the (m+2)-gon.

    ``p_split[i-1]`` is the probability that the third vertex is ``x_i``;
    ``p_glue`` is non-zero only for ``m == 0``.
    """

    m: int
    p_new: Fraction
    p_split: tuple[Fraction, ...]
    p_glue: Fraction

    def mass(self) -> Fraction:
        return self.p_new + self.p_glue + sum(self.p_split, Fraction(0))

    def rows(self):
        yield "new", self.p_new
        for i, p in enumerate(self.p_split, 1):
            yield f"split_{i}", p
        if self.m == 0:
            yield "glue", self.p_glue


@dataclass(frozen=True)
class FreeSizeLaw:
    m: int
    probs: tuple[Fraction, ...]
    tail_mass: Fraction

    def rows(self):
        yield from enumerate(self.probs)


def limit_step_prob(k: int) -> Fraction:
    """``lim_{m -> inf} P(X = -k)``."""
    if k < 1:
        raise ValueError("k must be positive")
    return Fraction(2 * factorial(2 * k - 2), factorial(k - 1) * factorial(k + 1) * 4 ** k)


def step_down_prob(k: int, m: int) -> Fraction:
    """``P(X = -k | M = m)`` straight from the factorial formula."""
    if not 1 <= k <= m:
        return Fraction(0)
    a = Fraction(2 * factorial(2 * k - 2), factorial(k - 1) * factorial(k + 1))
    b = Fraction(factorial(m) ** 2 * factorial(2 * m - 2 * k + 1),
                 factorial(m - k) ** 2 * factorial(2 * m + 1))
    return a * b


@lru_cache(maxsize=512)
def step_law(m: int) -> StepLaw:
    if m < 1:
        raise ValueError("step_law needs m >= 1")
    p_up = Fraction(2 * m + 3, 3 * m + 3)
    down = []
    p = Fraction(m, 2 * (2 * m + 1))
    for k in range(1, m + 1):
        down.append(p)
        p = p * Fraction((2 * k - 1) * (m - k), (k + 2) * (2 * m - 2 * k + 1))
    return StepLaw(m, p_up, tuple(down))


def expected_step(m: int) -> Fraction:
    if m < 1:
        raise ValueError("m must be positive")
    return Fraction(4 ** m * factorial(m) ** 2, factorial(2 * m + 1))


def hitting_prob(n: int, m: int) -> Fraction:
    """Probability that the boundary chain started at ``n`` ever visits ``m``."""
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    return 1 - descending_factorial(n, m + 1) / descending_factorial(Fraction(2 * n + 1, 2), m + 1)


def expected_visits(n: int) -> Fraction:
    """Mean (geometric) number of visits of the boundary chain to ``n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return (Fraction(3 * n + 3, 2 * n + 3)
            * descending_factorial(Fraction(2 * n + 3, 2), n + 1) / factorial(n + 1))


@lru_cache(maxsize=512)
def free_peel_law(m: int) -> FreePeelLaw:
    if m < 0:
        raise ValueError("m must be non-negative")
    zm = Z(m)
    p_new = Z(m + 1) / (ALPHA * zm)
    split = tuple(Z(i - 1) * Z(m - i) / zm for i in range(1, m + 1))
    # only a 2-gon can be closed without a triangle: the glued-edge case
    p_glue = phi(0, 0) / zm if m == 0 else Fraction(0)
    return FreePeelLaw(m, p_new, split, p_glue)


@lru_cache(maxsize=512)
def marked_step_law(m: int) -> MarkedStepLaw:
    if m < 0:
        raise ValueError("m must be non-negative")
    zt = Ztilde(m)
    unmarked = Ztilde(m + 1) / (ALPHA * zt)
    marked = Z(m + 1) / (ALPHA * zt)
    # factor 2: the hole may sit on either side of the peeled edge
    split = tuple(2 * Ztilde(m - k) * Z(k - 1) / zt for k in range(1, m + 1))
    return MarkedStepLaw(m, unmarked, marked, split)


def free_size_ratio(n: int, m: int) -> Fraction:
    """``P(|T| = n+1) / P(|T| = n)`` under the free law of the (m+2)-gon."""
    a = 2 * m
    return Fraction(4 * (a + 3 * n + 3) * (a + 3 * n + 2) * (a + 3 * n + 1),
                    27 * (n + 1) * (a + 2 * n + 4) * (a + 2 * n + 3))


def free_size_law(m: int, n_max: int) -> FreeSizeLaw:
    if m < 0:
        raise ValueError("m must be non-negative")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    p = phi(0, m) / Z(m)
    probs = []
    for n in range(n_max + 1):
        probs.append(p)
        p = p * free_size_ratio(n, m)
    return FreeSizeLaw(m, tuple(probs), 1 - sum(probs, Fraction(0)))


def stable_half_tail(t: float) -> float:
    """``lim_m P(|T| > t m^2)`` under the marked free law.

    The defining integral ``(3 pi)^{-1/2} int_t^inf x^{-3/2} exp(-1/(3x)) dx``
    reduces to ``erf(1/sqrt(3t))`` after substituting ``u = 1/(3x)``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if math.isinf(t):
        return 0.0
    return math.erf(1.0 / math.sqrt(3.0 * t))


def stable_half_cdf(t: float) -> float:
    if t <= 0:
        return 0.0
    return math.erfc(1.0 / math.sqrt(3.0 * t))


# --------------------------------------------------------------------------
# log-space mirror


def _lfac(x):
    return _MP.loggamma(_MP.mpf(x) + 1)


def log_phi(n: int, m: int) -> float:
    v = ((n + 1) * _MP.log(2) + _lfac(2 * m + 1) + _lfac(2 * m + 3 * n)
         - 2 * _lfac(m) - _lfac(n) - _lfac(2 * m + 2 * n + 2))
    return float(v)


def log_Z(m: int) -> float:
    return float(_lfac(2 * m) - _lfac(m) - _lfac(m + 2) + (m + 1) * _MP.log(_MP.mpf(9) / 4))


def log_Ztilde(m: int) -> float:
    return float(_lfac(2 * m + 2) - _lfac(m) - _lfac(m + 2) - _MP.log(6)
                 + (m + 1) * _MP.log(_MP.mpf(9) / 4))


def log_free_size_prob(n: int, m: int) -> float:
    """``log P(|T| = n)`` under the free law, accurate for huge ``n`` and ``m``."""
    v = ((n + 1) * _MP.log(2) + _lfac(2 * m + 1) + _lfac(2 * m + 3 * n)
         - 2 * _lfac(m) - _lfac(n) - _lfac(2 * m + 2 * n + 2)
         - n * _MP.log(_MP.mpf(27) / 2)
         - (_lfac(2 * m) - _lfac(m) - _lfac(m + 2) + (m + 1) * _MP.log(_MP.mpf(9) / 4)))
    return float(v)


def log_step_down_prob(k: int, m: int) -> float:
    if not 1 <= k <= m:
        return -math.inf
    v = (_MP.log(2) + _lfac(2 * k - 2) - _lfac(k - 1) - _lfac(k + 1)
         + 2 * _lfac(m) + _lfac(2 * m - 2 * k + 1) - 2 * _lfac(m - k) - _lfac(2 * m + 1))
    return float(v)


def to_float(x: Fraction) -> float:
    """Float value of a rational that may be far outside the double range."""
    try:
        return x.numerator / x.denominator
    except OverflowError:
        return float(_MP.mpf(x.numerator) / x.denominator)
