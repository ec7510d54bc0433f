"""Wigner 3-j and 6-j symbols.

Angular momenta are accepted as ints, floats or Fractions and converted to
doubled integers, so half-integers are handled without rounding.  Values are
evaluated with the Racah sums using a table of log-factorials.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

_LOGFACT = [0.0]
for _k in range(1, 400):
    _LOGFACT.append(_LOGFACT[-1] + math.log(_k))


def _logfact(n: int) -> float:
    if n < 0:
        raise ValueError("negative factorial argument")
    while n >= len(_LOGFACT):
        _LOGFACT.append(_LOGFACT[-1] + math.log(len(_LOGFACT)))
    return _LOGFACT[n]


def doubled(x) -> int:
    """Return ``2*x`` as an int, rejecting anything that is not a half-integer."""
    two_x = Fraction(x) * 2 if not isinstance(x, float) else Fraction(x).limit_denominator(4) * 2
    if two_x.denominator != 1:
        raise ValueError(f"{x!r} is not an integer or half-integer")
    return int(two_x)


def _triangle(a2: int, b2: int, c2: int) -> bool:
    return (
        (a2 + b2 + c2) % 2 == 0
        and abs(a2 - b2) <= c2 <= a2 + b2
    )


def _log_delta(a2: int, b2: int, c2: int) -> float:
    return 0.5 * (
        _logfact((a2 + b2 - c2) // 2)
        + _logfact((a2 - b2 + c2) // 2)
        + _logfact((-a2 + b2 + c2) // 2)
        - _logfact((a2 + b2 + c2) // 2 + 1)
    )


@lru_cache(maxsize=None)
def wigner3j_doubled(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """3-j symbol with every argument given as twice its value."""
    for j, m in ((j1, m1), (j2, m2), (j3, m3)):
        if j < 0 or (j - m) % 2:
            raise ValueError("inconsistent half-integer j/m combination")
    if any(abs(m) > j for j, m in ((j1, m1), (j2, m2), (j3, m3))):
        return 0.0
    if m1 + m2 + m3 != 0 or not _triangle(j1, j2, j3):
        return 0.0

    # integer quantities entering the Racah formula
    a = (j1 + j2 - j3) // 2
    b = (j1 - m1) // 2
    c = (j2 + m2) // 2
    d = (j3 - j2 + m1) // 2
    e = (j3 - j1 - m2) // 2
    kmin = max(0, -d, -e)
    kmax = min(a, b, c)
    if kmin > kmax:
        return 0.0

    log_pref = _log_delta(j1, j2, j3) + 0.5 * sum(
        _logfact((j + m) // 2) + _logfact((j - m) // 2)
        for j, m in ((j1, m1), (j2, m2), (j3, m3))
    )
    total = 0.0
    for k in range(kmin, kmax + 1):
        log_t = (
            _logfact(k) + _logfact(a - k) + _logfact(b - k)
            + _logfact(c - k) + _logfact(d + k) + _logfact(e + k)
        )
        total += (-1) ** k * math.exp(log_pref - log_t)
    phase = (j1 - j2 - m3) // 2
    return -total if phase % 2 else total


@lru_cache(maxsize=None)
def wigner6j_doubled(j1: int, j2: int, j3: int, j4: int, j5: int, j6: int) -> float:
    """6-j symbol {j1 j2 j3; j4 j5 j6} with doubled arguments."""
    if min(j1, j2, j3, j4, j5, j6) < 0:
        raise ValueError("negative angular momentum")
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle(*t) for t in triads):
        return 0.0

    log_pref = sum(_log_delta(*t) for t in triads)
    sums = [sum(t) // 2 for t in triads]
    tops = [(j1 + j2 + j4 + j5) // 2, (j2 + j3 + j5 + j6) // 2, (j3 + j1 + j6 + j4) // 2]
    kmin = max(sums)
    kmax = min(tops)
    total = 0.0
    for k in range(kmin, kmax + 1):
        log_t = _logfact(k + 1) - sum(_logfact(k - s) for s in sums) - sum(
            _logfact(t - k) for t in tops
        )
        total += (-1) ** k * math.exp(log_pref + log_t)
    return total


def wigner3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3-j symbol ``(j1 j2 j3; m1 m2 m3)``."""
    return wigner3j_doubled(*(doubled(x) for x in (j1, j2, j3, m1, m2, m3)))


def wigner6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6-j symbol ``{j1 j2 j3; j4 j5 j6}``."""
    return wigner6j_doubled(*(doubled(x) for x in (j1, j2, j3, j4, j5, j6)))
