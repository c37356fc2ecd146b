"""Observation errors layered on top of the true severities.

A true count ``w`` is recorded with probability ``obs_probability(w)``; a
recorded count is perturbed by zero-truncated Poisson noise, and the noisy
count is then heaped onto the nearest multiple of five with probability
``p`` (counts of 1 and 2 are never heaped).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr

from .distributions import (
    DiscreteLogNormalParams,
    PowerLawParams,
    _dln_log_pmf,
    _tp_log_pmf,
    _tp_sample,
)
from .special import log_hurwitz_zeta

EXP_LINEAR = "exponential-linear"
EXP_QUADRATIC = "exponential-quadratic"
LOGISTIC = "logistic"
VARIANTS = (EXP_LINEAR, EXP_QUADRATIC, LOGISTIC)

HEAP_GRID = 5
HEAP_EXEMPT = (1, 2)

NORMALIZER_TOL = 1e-13
_BLOCK = 1024
_MAX_BLOCK = 2**22


@dataclass(frozen=True)
class ObservationModel:
    """Probability that an event of true size ``w`` enters the record.

    ``lam`` is unused by the logistic variant and ``eta`` only matters for
    the exponential-quadratic one.
    """

    variant: str = EXP_LINEAR
    lam: float = 0.1
    mu: float = 0.05
    eta: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown observation variant {self.variant!r}")
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError("lambda and mu must be positive")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")


@dataclass(frozen=True)
class HeapingModel:
    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("heaping probability must be in [0, 1]")


# --- observation probability ------------------------------------------------


def _log_miss(w, variant, lam, mu, eta):
    """log(1 - obs_probability(w)), unchecked."""
    if variant == LOGISTIC:
        return -np.logaddexp(0.0, mu * w)
    expo = -lam - mu * (w - 1.0)
    if variant == EXP_QUADRATIC:
        expo = expo - eta * (w - 1.0) ** 2
    return expo


def _log_obs(w, variant, lam, mu, eta):
    """log obs_probability(w), unchecked."""
    if variant == LOGISTIC:
        return -np.logaddexp(0.0, -mu * w)
    return np.log(-np.expm1(_log_miss(w, variant, lam, mu, eta)))


def obs_probability(w, model: ObservationModel):
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr < 1):
        raise ValueError("w must be >= 1")
    out = np.exp(_log_obs(w_arr, model.variant, model.lam, model.mu, model.eta))
    return out if out.ndim else float(out)


def log_obs_probability(w, model: ObservationModel):
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr < 1):
        raise ValueError("w must be >= 1")
    out = _log_obs(w_arr, model.variant, model.lam, model.mu, model.eta)
    return out if out.ndim else float(out)


# --- heaping ----------------------------------------------------------------


def heap_target(y):
    """Multiple of five a count y > 2 is rounded to: 5 * (int((y - 2.5) / 5) + 1)."""
    y_arr = np.asarray(y)
    out = HEAP_GRID * (np.trunc((y_arr - 2.5) / HEAP_GRID).astype(np.int64) + 1)
    out = np.where(y_arr <= 2, y_arr, out)
    return out if out.ndim else int(out)


def heap(y, p: float, rng_seed=None):
    """Round ``y`` (scalar or array) to the heaping grid with probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError("heaping probability must be in [0, 1]")
    y_arr = np.asarray(y, dtype=np.int64)
    if np.any(y_arr < 1):
        raise ValueError("counts must be >= 1")
    rng = np.random.default_rng(rng_seed)
    rounded = rng.random(y_arr.shape) < p
    out = np.where(rounded & (y_arr > 2), heap_target(y_arr), y_arr)
    return out if out.ndim else int(out)


def is_heap_point(z):
    z_arr = np.asarray(z)
    return (z_arr >= HEAP_GRID) & (z_arr % HEAP_GRID == 0)


_HEAP_OFFSETS = np.arange(-2, 3)


def _heaped_lse(z, x):
    """log sum_{k=-2..2} f(z - k | x), terms with z - k < 1 dropped."""
    y = np.asarray(z)[..., None] - _HEAP_OFFSETS
    terms = np.where(y >= 1, _tp_log_pmf(np.maximum(y, 1), np.asarray(x, dtype=float)[..., None]), -np.inf)
    return np.logaddexp.reduce(terms, axis=-1)


def marginal_z_given_x_log(z, x, p: float):
    """log Pr(Z = z | X = x) with the noisy count Y summed out."""
    z_arr = np.asarray(z, dtype=np.int64)
    x_arr = np.asarray(x, dtype=float)
    if np.any(z_arr < 1) or np.any(x_arr < 1):
        raise ValueError("z and x must be >= 1")
    if not 0 <= p <= 1:
        raise ValueError("heaping probability must be in [0, 1]")
    z_arr, x_arr = np.broadcast_arrays(z_arr, x_arr)
    lf = _tp_log_pmf(z_arr, x_arr)
    with np.errstate(divide="ignore"):
        log_keep = np.log1p(-p)
        log_p = np.log(p)
    heaped = np.logaddexp(log_keep + lf, log_p + _heaped_lse(z_arr, x_arr))
    out = np.where(z_arr <= 2, lf, np.where(is_heap_point(z_arr), heaped, lf + log_keep))
    return out if out.ndim else float(out)


def marginal_x_unnormalized_log(x, alpha: float, model: ObservationModel):
    """log of obs_probability(x) * x^-alpha / zeta(alpha); not normalised over x."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 1):
        raise ValueError("x must be >= 1")
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    out = (
        _log_obs(x_arr, model.variant, model.lam, model.mu, model.eta)
        - alpha * np.log(x_arr)
        - log_hurwitz_zeta(alpha, 1)
    )
    return out if out.ndim else float(out)


# --- observation normaliser -------------------------------------------------


def _body_log_pmf(body, w):
    if isinstance(body, PowerLawParams):
        return -body.alpha * np.log(w) - log_hurwitz_zeta(body.alpha, body.xmin)
    return _dln_log_pmf(w, body.mu_ln, body.sigma_ln)


def _body_log_sf(body, w: float) -> float:
    """log Pr(W > w) for a scalar w."""
    if isinstance(body, PowerLawParams):
        return log_hurwitz_zeta(body.alpha, int(w) + 1) - log_hurwitz_zeta(body.alpha, body.xmin)
    return float(log_ndtr(-(np.log(w + 0.5) - body.mu_ln) / body.sigma_ln))


def _body_density(body, t):
    # continuous stand-in for the pmf, used only beyond the summation cap
    if isinstance(body, PowerLawParams):
        return np.exp(-body.alpha * np.log(t) - log_hurwitz_zeta(body.alpha, body.xmin))
    z = (np.log(t) - body.mu_ln) / body.sigma_ln
    return np.exp(-0.5 * z * z) / (t * body.sigma_ln * np.sqrt(2 * np.pi))


_W_FIRST = np.arange(1, _BLOCK + 1, dtype=float)
_LOGW_FIRST = np.log(_W_FIRST)


def _grid(xmin, n):
    if xmin == 1 and n == _BLOCK:
        return _W_FIRST, _LOGW_FIRST
    w = np.arange(xmin, xmin + n, dtype=float)
    return w, np.log(w)


def normalizer_and_miss(body, model: ObservationModel, tol: float = NORMALIZER_TOL):
    """Return ``(q, 1 - q)`` where q = sum_w Pr(W = w) obs_probability(w).

    The unobserved mass ``1 - q`` is summed over w = 1..W, doubling W until
    the remaining tail ``miss(W) * Pr(W > W)`` drops below ``tol``; past
    ``_MAX_BLOCK`` terms the remaining tail is integrated numerically. q is
    taken as the complement, so its absolute error is of order 1e-16.
    """
    if isinstance(body, PowerLawParams):
        miss = _miss_powerlaw(body.alpha, body.xmin, model.variant, model.lam, model.mu, model.eta, tol)
    else:
        miss = _miss_lognormal(body.mu_ln, body.sigma_ln, model.variant, model.lam, model.mu, model.eta, tol)
    return 1.0 - miss, miss


def _miss_powerlaw(alpha, xmin, v, lam, mu, eta, tol=NORMALIZER_TOL) -> float:
    log_z = log_hurwitz_zeta(alpha, xmin)
    n = _BLOCK
    while True:
        w, logw = _grid(xmin, n)
        log_miss = _log_miss(w, v, lam, mu, eta)
        w_last = float(xmin + n - 1)
        # sum_{k > W} k^-a <= integral from W + 1/2 (convexity)
        log_sf = (1.0 - alpha) * np.log(w_last + 0.5) - np.log(alpha - 1.0) - log_z
        if log_miss[-1] + log_sf < np.log(tol) or n >= _MAX_BLOCK:
            break
        n *= 2
    miss = float(np.exp(log_miss - alpha * logw - log_z).sum())
    if log_miss[-1] + log_sf >= np.log(tol):
        body = PowerLawParams(alpha, xmin)
        miss += _tail_integral(body, w_last, v, lam, mu, eta)
    return min(miss, 1.0)


def _miss_lognormal(mu_ln, sigma_ln, v, lam, mu, eta, tol=NORMALIZER_TOL) -> float:
    n = _BLOCK
    while True:
        w, _ = _grid(1, n)
        log_miss = _log_miss(w, v, lam, mu, eta)
        w_last = float(n)
        log_sf = float(log_ndtr(-(np.log(w_last + 0.5) - mu_ln) / sigma_ln))
        if log_miss[-1] + log_sf < np.log(tol) or n >= _MAX_BLOCK:
            break
        n *= 2
    miss = float(np.exp(log_miss + _dln_log_pmf(w, mu_ln, sigma_ln)).sum())
    if log_miss[-1] + log_sf >= np.log(tol):
        body = DiscreteLogNormalParams(mu_ln, sigma_ln)
        miss += _tail_integral(body, w_last, v, lam, mu, eta)
    return min(miss, 1.0)


def _tail_integral(body, w_last, v, lam, mu, eta) -> float:
    warnings.warn("observation normaliser: integrating slowly decaying tail", RuntimeWarning)
    # in log t the integrand decays exponentially, which quad handles well
    def f(u):
        t = np.exp(u)
        return _body_density(body, t) * t * np.exp(_log_miss(t, v, lam, mu, eta))

    lo = np.log(w_last + 0.5)
    hi = np.log(w_last + 0.5 + 750.0 / mu)  # exp(-mu t) underflows past here
    total = integrate.quad(f, lo, hi, limit=400, epsabs=0.0, epsrel=1e-10)[0]
    return min(total, np.exp(_body_log_sf(body, w_last)))


def observation_normalizer(alpha, model: ObservationModel) -> float:
    """Marginal probability q(alpha, lambda, mu) that a random event is recorded.

    ``alpha`` may also be a body-parameter object (``PowerLawParams`` or
    ``DiscreteLogNormalParams``).
    """
    body = alpha if isinstance(alpha, (PowerLawParams, DiscreteLogNormalParams)) else PowerLawParams(alpha)
    return normalizer_and_miss(body, model)[0]


# --- forward simulation -----------------------------------------------------


@dataclass
class Corruption:
    """Output of ``corrupt_dataset``; arrays over the retained events are aligned."""

    observed: np.ndarray  # bool mask over the true counts
    pre_heap: np.ndarray  # y for retained events
    z: np.ndarray  # recorded values for retained events
    total_true: int
    total_observed: int


def corrupt_dataset(
    true_counts, model: ObservationModel, p: float, rng_seed=None, counting_noise: bool = True
) -> Corruption:
    """Pass true counts through missingness, counting noise and heaping.

    ``counting_noise=False`` skips the Poisson stage (y = w), a hook for
    checking the no-error limit.
    """
    w = np.asarray(true_counts, dtype=np.int64)
    if w.size == 0:
        raise ValueError("true_counts is empty")
    rng = np.random.default_rng(rng_seed)
    observed = rng.random(w.size) < obs_probability(w, model)
    kept = w[observed]
    y = _tp_sample(kept.astype(float), rng) if counting_noise else kept.copy()
    z = heap(y, p, rng) if y.size else y
    z = np.asarray(z, dtype=np.int64)
    return Corruption(
        observed=observed,
        pre_heap=np.asarray(y, dtype=np.int64),
        z=z,
        total_true=int(w.sum()),
        total_observed=int(z.sum()),
    )
