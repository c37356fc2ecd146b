"""Hurwitz zeta function ``zeta(s, a) = sum_{n>=0} (n + a)^(-s)`` for real s > 1.

Evaluated by direct summation of the leading terms followed by an
Euler-Maclaurin tail (integral term, half-term and Bernoulli corrections).
The number of directly summed terms is chosen so that the first omitted
correction, which bounds the remainder for real s, is below ``TAIL_RTOL``
relative to the tail ``zeta(s, M) ~ M^(1-s) / (s - 1)``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

EPS_MIN = 1e-6
TAIL_RTOL = 1e-16

# B_2k / (2k)! for k = 1..8
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510)
_COEFFS = tuple(b / math.factorial(2 * k + 2) for k, b in enumerate(_BERNOULLI))
_N_CORR = len(_COEFFS) - 1  # last coefficient only bounds the remainder


def _check(alpha, xmin):
    if not alpha > 1 + EPS_MIN:
        raise ValueError(f"zeta series diverges for alpha={alpha!r} (need alpha > 1 + {EPS_MIN})")
    if isinstance(xmin, (int, float)):
        if xmin < 1:
            raise ValueError(f"xmin must be >= 1, got {xmin!r}")
    elif np.any(np.asarray(xmin) < 1):
        raise ValueError(f"xmin must be >= 1, got {xmin!r}")


def _rising(s, n):
    out = 1.0
    for j in range(n):
        out *= s + j
    return out


def _required_shift(s: float) -> float:
    """Smallest M with the first omitted Euler-Maclaurin term below TAIL_RTOL
    relative to the tail it corrects."""
    k = _N_CORR
    c = abs(_COEFFS[k]) * _rising(s, 2 * k + 1) * (s - 1.0)
    # c * M^(-s-2k-1) < TAIL_RTOL * M^(1-s)
    m = (c / TAIL_RTOL) ** (1.0 / (2 * k + 2))
    return max(m, 4.0)


def _bracket(s: float, a: float, m_req: float) -> tuple[float, float]:
    """Return (M, B) with zeta(s, a) = M^(-s) * B."""
    n = max(0, math.ceil(m_req - a))
    big_m = a + n
    total = 0.0
    for j in range(n):
        total += (big_m / (a + j)) ** s
    total += big_m / (s - 1.0) + 0.5
    rise = s
    inv = 1.0 / big_m
    powm = inv
    for k in range(_N_CORR):
        total += _COEFFS[k] * rise * powm
        rise *= (s + 2 * k + 1) * (s + 2 * k + 2)
        powm *= inv * inv
    return big_m, total


@lru_cache(maxsize=8192)
def _log_zeta_cached(s: float, a: int) -> float:
    big_m, b = _bracket(s, float(a), _required_shift(s))
    return -s * math.log(big_m) + math.log(b)


def log_hurwitz_zeta(alpha: float, xmin: int = 1) -> float:
    """Natural log of ``hurwitz_zeta(alpha, xmin)``; stable when the value underflows."""
    _check(alpha, xmin)
    return _log_zeta_cached(float(alpha), int(xmin))


def hurwitz_zeta(alpha: float, xmin: int = 1) -> float:
    """Generalised zeta function ``sum_{n>=0} (n + xmin)^(-alpha)``.

    Parameters
    ----------
    alpha : float
        Exponent, must exceed ``1 + EPS_MIN``.
    xmin : int
        Offset (lower bound of the power-law support), at least 1.
    """
    _check(alpha, xmin)
    big_m, b = _bracket(float(alpha), float(int(xmin)), _required_shift(float(alpha)))
    return big_m ** (-float(alpha)) * b


def log_hurwitz_zeta_array(alpha: float, xmin) -> np.ndarray:
    """Vectorised ``log_hurwitz_zeta`` over an array of offsets ``xmin``.

    Offsets may be any reals >= 1 (floats are accepted so that very large
    integer offsets do not overflow int64).
    """
    a = np.asarray(xmin, dtype=float)
    _check(alpha, a)
    s = float(alpha)
    m_req = _required_shift(s)
    n = np.maximum(0.0, np.ceil(m_req - a))
    big_m = a + n
    total = np.zeros_like(a)
    for j in range(int(n.max(initial=0))):
        live = n > j
        total = total + np.where(live, (big_m / (a + j)) ** s, 0.0)
    total += big_m / (s - 1.0) + 0.5
    rise = s
    inv = 1.0 / big_m
    powm = inv.copy()
    for k in range(_N_CORR):
        total += _COEFFS[k] * rise * powm
        rise *= (s + 2 * k + 1) * (s + 2 * k + 2)
        powm = powm * inv * inv
    return -s * np.log(big_m) + np.log(total)


def hurwitz_zeta_array(alpha: float, xmin) -> np.ndarray:
    return np.exp(log_hurwitz_zeta_array(alpha, xmin))
