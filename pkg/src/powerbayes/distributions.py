"""Discrete severity distributions, the truncated Poisson counting-noise
kernel, and the log-normal prior density used for observation rates."""

from __future__ import annotations

import math

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtri

from .special import log_hurwitz_zeta, log_hurwitz_zeta_array

# draws beyond this are clipped: larger integers are not exact in float64
SAMPLE_CAP = float(2**53)


@dataclass(frozen=True)
class PowerLawParams:
    alpha: float
    xmin: int = 1

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"power law needs alpha > 1, got {self.alpha}")
        if self.xmin < 1:
            raise ValueError(f"xmin must be >= 1, got {self.xmin}")


@dataclass(frozen=True)
class DiscreteLogNormalParams:
    mu_ln: float
    sigma_ln: float

    def __post_init__(self):
        if not self.sigma_ln > 0:
            raise ValueError(f"sigma_ln must be positive, got {self.sigma_ln}")


@dataclass(frozen=True)
class TruncatedPoissonParams:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class BivariateLogNormalPrior:
    """Log-normal prior on a vector of positive quantities.

    ``log(values) ~ N(mean_log, cov_log)``. Works for any dimension although
    the model only uses the bivariate and univariate cases.
    """

    mean_log: tuple = (0.0, -3.0)
    cov_log: tuple = ((1.0, 0.6), (0.6, 2.0))

    def __post_init__(self):
        cov = np.asarray(self.cov_log, dtype=float)
        mean = np.asarray(self.mean_log, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("cov_log shape does not match mean_log")
        if not np.allclose(cov, cov.T):
            raise ValueError("cov_log must be symmetric")
        np.linalg.cholesky(cov)  # raises LinAlgError if not PD

    @cached_property
    def mean(self) -> np.ndarray:
        return np.asarray(self.mean_log, dtype=float)

    @cached_property
    def precision(self) -> np.ndarray:
        return np.linalg.inv(np.asarray(self.cov_log, dtype=float))

    @cached_property
    def log_norm(self) -> float:
        cov = np.asarray(self.cov_log, dtype=float)
        _, logdet = np.linalg.slogdet(cov)
        return -0.5 * (cov.shape[0] * np.log(2 * np.pi) + logdet)

    def marginal(self, index: int) -> "BivariateLogNormalPrior":
        return BivariateLogNormalPrior(
            mean_log=(self.mean_log[index],), cov_log=((self.cov_log[index][index],),)
        )


DEFAULT_PRIOR = BivariateLogNormalPrior()


# --- discrete power law -----------------------------------------------------


def powerlaw_log_pmf(w, params: PowerLawParams):
    """log Pr(W = w) = -alpha log w - log zeta(alpha, xmin)."""
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr < params.xmin):
        raise ValueError(f"w must be >= xmin={params.xmin}")
    out = -params.alpha * np.log(w_arr) - log_hurwitz_zeta(params.alpha, params.xmin)
    return out if out.ndim else float(out)


def powerlaw_sf(w, params: PowerLawParams):
    """Pr(W > w) = zeta(alpha, w + 1) / zeta(alpha, xmin), for w >= xmin - 1."""
    w_arr = np.asarray(w, dtype=float)
    log_sf = log_hurwitz_zeta_array(params.alpha, w_arr + 1) - log_hurwitz_zeta(
        params.alpha, params.xmin
    )
    out = np.exp(np.minimum(log_sf, 0.0))
    return out if out.ndim else float(out)


def powerlaw_cdf(w, params: PowerLawParams):
    """Pr(W <= w); evaluated as one minus the zeta-ratio survival function."""
    if np.any(np.asarray(w) < params.xmin):
        raise ValueError(f"w must be >= xmin={params.xmin}")
    return 1.0 - powerlaw_sf(w, params)


def powerlaw_sample(params: PowerLawParams, n: int, rng_seed=None) -> np.ndarray:
    """Exact inverse-transform draws from the discrete power law.

    For each uniform ``u`` the smallest ``w`` with ``Pr(W > w) <= 1 - u`` is
    found by bracketing then integer bisection on the zeta-ratio survival
    function. Returns an int64 array; draws are capped at ``SAMPLE_CAP``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    target = 1.0 - rng.random(n)  # in (0, 1]
    a, xmin = params.alpha, params.xmin
    # continuous approximation as a starting guess
    guess = np.floor((xmin - 0.5) * target ** (-1.0 / (a - 1.0)) - 0.5)
    guess = np.clip(guess, xmin, SAMPLE_CAP)
    lo = np.full(n, xmin - 1.0)  # sf(xmin - 1) = 1
    hi = guess.copy()
    sf_hi = powerlaw_sf(hi, params)
    while True:
        low = (sf_hi > target) & (hi < SAMPLE_CAP)
        if not low.any():
            break
        lo[low] = hi[low]
        hi[low] = np.minimum(2 * hi[low] + 1, SAMPLE_CAP)
        sf_hi[low] = powerlaw_sf(hi[low], params)
    clipped = sf_hi > target
    lo[clipped] = hi[clipped] - 1
    # invariant: sf(lo) > target >= sf(hi)
    gap = hi - lo > 1
    while np.any(gap):
        mid = np.floor((lo[gap] + hi[gap]) / 2)
        ok = powerlaw_sf(mid, params) <= target[gap]
        idx = np.flatnonzero(gap)
        hi[idx[ok]] = mid[ok]
        lo[idx[~ok]] = mid[~ok]
        gap = hi - lo > 1
    return hi.astype(np.int64)


# --- truncated Poisson ------------------------------------------------------


def truncated_poisson_log_pmf(y, x):
    """log Pr(Y = y | x) for the zero-truncated Poisson with rate ``x``."""
    y_arr = np.asarray(y)
    x_arr = np.asarray(x, dtype=float)
    if np.any(y_arr < 1):
        raise ValueError("truncated Poisson support starts at 1")
    if np.any(x_arr <= 0):
        raise ValueError("rate must be positive")
    out = _tp_log_pmf(y_arr, x_arr)
    return out if np.ndim(out) else float(out)


def _tp_log_pmf(y, x):
    # unchecked; y >= 1 and x > 0 assumed
    return y * np.log(x) - x - gammaln(y + 1.0) - np.log(-np.expm1(-x))


def truncated_poisson_sample(x, rng_seed=None):
    """Zero-truncated Poisson draw(s) by rejection from the ordinary Poisson."""
    rng = np.random.default_rng(rng_seed)
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise ValueError("rate must be positive")
    out = _tp_sample(np.atleast_1d(x_arr), rng)
    return out.reshape(x_arr.shape) if x_arr.ndim else int(out[0])


def _tp_sample(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # exact, no rejection: the first arrival of a rate-x Poisson process on
    # [0, 1], conditioned to occur, is followed by Poisson(x (1 - tau)) more
    u = rng.random(x.shape)
    tau = -np.log1p(u * np.expm1(-x)) / x
    return 1 + rng.poisson(np.maximum(x * (1.0 - tau), 0.0))


def _tp_log_pmf_scalar(y: float, x: float) -> float:
    return y * math.log(x) - x - math.lgamma(y + 1.0) - math.log(-math.expm1(-x))


# --- discrete log-normal ----------------------------------------------------


def _log_diff_ndtr(hi, lo):
    """log(Phi(hi) - Phi(lo)) for hi > lo, accurate in both tails."""
    upper = lo > 0
    # in the upper tail use Phi(-lo) - Phi(-hi)
    a = np.where(upper, -lo, hi)
    b = np.where(upper, -hi, lo)
    la = log_ndtr(a)
    lb = log_ndtr(b)
    with np.errstate(divide="ignore"):
        return la + np.log(-np.expm1(lb - la))


def discrete_lognormal_log_pmf(w, params: DiscreteLogNormalParams):
    """Half-integer binning of a continuous log-normal; mass below 1.5 goes to w = 1."""
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr < 1):
        raise ValueError("discrete log-normal support starts at 1")
    out = _dln_log_pmf(w_arr, params.mu_ln, params.sigma_ln)
    return out if out.ndim else float(out)


def _dln_log_pmf(w, mu_ln, sigma_ln):
    hi = (np.log(w + 0.5) - mu_ln) / sigma_ln
    lo = np.where(w > 1, (np.log(np.maximum(w - 0.5, 0.5)) - mu_ln) / sigma_ln, -np.inf)
    return _log_diff_ndtr(hi, lo)


def discrete_lognormal_sf(w, params: DiscreteLogNormalParams):
    """Pr(W > w) = 1 - Phi((log(w + 0.5) - mu) / sigma)."""
    z = (np.log(np.asarray(w, dtype=float) + 0.5) - params.mu_ln) / params.sigma_ln
    return np.exp(log_ndtr(-z))


def discrete_lognormal_sample(params: DiscreteLogNormalParams, n: int, rng_seed=None) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    y = np.exp(params.mu_ln + params.sigma_ln * ndtri(rng.random(n)))
    return np.maximum(1, np.floor(np.minimum(y, SAMPLE_CAP) + 0.5)).astype(np.int64)


# --- log-normal prior density -------------------------------------------------


def bivariate_lognormal_log_density(pair, prior: BivariateLogNormalPrior = DEFAULT_PRIOR) -> float:
    """Log density of a (multivariate) log-normal at ``pair``.

    Normal log density of the logged components minus the log Jacobian
    ``sum(log(pair))``.
    """
    v = np.asarray(pair, dtype=float)
    if np.any(v <= 0):
        raise ValueError("log-normal density needs positive components")
    return _lognormal_log_density(np.log(v), prior)


def _lognormal_log_density(logs: np.ndarray, prior: BivariateLogNormalPrior) -> float:
    d = logs - prior.mean
    return float(prior.log_norm - 0.5 * (d @ prior.precision @ d) - logs.sum())
