"""Frequentist power-law fit: approximate MLE for alpha, KS-minimising choice
of xmin, bootstrap uncertainty and the semi-parametric goodness-of-fit test.

Every bootstrap or synthetic round draws from its own child of a
``numpy.random.SeedSequence``, so results do not depend on execution order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .distributions import PowerLawParams, powerlaw_sample, powerlaw_sf

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KSFit:
    xmin_hat: int
    alpha_hat: float
    ks_distance: float
    n_tail: int

    def params(self) -> PowerLawParams:
        return PowerLawParams(self.alpha_hat, self.xmin_hat)


@dataclass
class BootstrapResult:
    """Per-round refits; failed rounds hold ``(nan, nan)`` and are flagged."""

    replicates: list
    b: int
    failed: list = field(default_factory=list)

    def __post_init__(self):
        if not self.failed:
            self.failed = [False] * len(self.replicates)

    @property
    def xmin(self) -> np.ndarray:
        return np.array([r[0] for r in self.replicates], dtype=float)

    @property
    def alpha(self) -> np.ndarray:
        return np.array([r[1] for r in self.replicates], dtype=float)

    def ok(self) -> np.ndarray:
        return ~np.asarray(self.failed, dtype=bool)


def _as_counts(data) -> np.ndarray:
    x = np.asarray(data)
    if x.ndim != 1:
        raise ValueError("data must be one-dimensional")
    if x.size and (np.any(x < 1) or np.any(x != np.floor(x))):
        raise ValueError("data must be positive integers")
    return x.astype(np.int64)


def mle_alpha(data, xmin: int, discrete: bool = True) -> float:
    """Approximate MLE ``1 + n / sum(log(x / (xmin - 0.5)))`` over x >= xmin.

    With ``discrete=False`` the continuous estimator (no 0.5 shift) is used.
    Values below ``xmin`` are ignored.
    """
    x = _as_counts(data)
    tail = x[x >= xmin]
    if tail.size < 2:
        raise ValueError(f"need at least 2 points >= xmin={xmin}, got {tail.size}")
    shift = xmin - 0.5 if discrete else float(xmin)
    denom = float(np.log(tail / shift).sum())
    if not denom > 0:
        raise ValueError("all tail points sit at xmin; the continuous estimator is undefined")
    return 1.0 + tail.size / denom


def ks_distance(data, params: PowerLawParams) -> float:
    """max |F(x) - Fhat(x)| over the distinct observed x >= xmin."""
    x = _as_counts(data)
    tail = x[x >= params.xmin]
    if tail.size == 0:
        raise ValueError(f"no data >= xmin={params.xmin}")
    values, counts = np.unique(tail, return_counts=True)
    return _ks(values, counts, params)


def _ks(values: np.ndarray, counts: np.ndarray, params: PowerLawParams) -> float:
    emp = np.cumsum(counts) / counts.sum()
    model = 1.0 - powerlaw_sf(values.astype(float), params)
    return float(np.max(np.abs(np.atleast_1d(model) - emp)))


def _default_candidates(values: np.ndarray) -> np.ndarray:
    return values[:-2]


def estimate_xmin(data, xmin_candidates=None) -> KSFit:
    """Scan candidate xmin values and keep the one with the smallest KS distance.

    Candidates default to the distinct data values other than the largest
    two; any candidate leaving fewer than 2 tail points is skipped. Ties
    go to the smallest xmin.
    """
    x = _as_counts(data)
    if x.size == 0:
        raise ValueError("data is empty")
    values, counts = np.unique(x, return_counts=True)
    if xmin_candidates is None:
        cands = _default_candidates(values)
    else:
        cands = np.unique(np.asarray(list(xmin_candidates), dtype=np.int64))
        if np.any(cands < 1):
            raise ValueError("xmin candidates must be >= 1")
    # suffix sums over the distinct values
    n_ge = np.cumsum(counts[::-1])[::-1]
    logsum_ge = np.cumsum((counts * np.log(values))[::-1])[::-1]
    best = None
    for xm in cands.tolist():
        j = int(np.searchsorted(values, xm))
        if j >= values.size or n_ge[j] < 2:
            continue
        n = int(n_ge[j])
        alpha = 1.0 + n / (logsum_ge[j] - n * np.log(xm - 0.5))
        try:
            d = _ks(values[j:], counts[j:], PowerLawParams(alpha, xm))
        except ValueError:
            continue
        if best is None or d < best.ks_distance:
            best = KSFit(int(xm), float(alpha), d, n)
    if best is None:
        raise ValueError("no xmin candidate leaves at least 2 tail points")
    return best


def _child_rngs(rng_seed, n: int) -> list:
    seq = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    return [np.random.default_rng(s) for s in seq.spawn(n)]


def resample(data, rng: np.random.Generator) -> np.ndarray:
    """Draw len(data) values with replacement."""
    x = _as_counts(data)
    return x[rng.integers(0, x.size, x.size)]


def bootstrap_uncertainty(data, b: int, rng_seed=None) -> BootstrapResult:
    """Refit ``estimate_xmin`` on ``b`` resamples drawn with replacement."""
    if b < 1:
        raise ValueError("b must be >= 1")
    x = _as_counts(data)
    reps, failed = [], []
    for rng in _child_rngs(rng_seed, b):
        try:
            fit = estimate_xmin(resample(x, rng))
            reps.append((fit.xmin_hat, fit.alpha_hat))
            failed.append(False)
        except ValueError as exc:
            log.info("bootstrap replicate failed: %s", exc)
            reps.append((float("nan"), float("nan")))
            failed.append(True)
    return BootstrapResult(reps, b, failed)


def synthetic_dataset(data, fit: KSFit, rng: np.random.Generator) -> np.ndarray:
    """Semi-parametric synthetic data: body values resampled from the data
    below ``xmin_hat``, tail values drawn from the fitted power law."""
    x = _as_counts(data)
    body = x[x < fit.xmin_hat]
    n = x.size
    n_body = rng.binomial(n, body.size / n) if body.size else 0
    out = np.empty(n, dtype=np.int64)
    if n_body:
        out[:n_body] = body[rng.integers(0, body.size, n_body)]
    if n - n_body:
        out[n_body:] = powerlaw_sample(fit.params(), n - n_body, rng)
    return out


def gof_pvalue(data, fit: KSFit, m: int, rng_seed=None) -> float:
    """Fraction of ``m`` synthetic refits whose KS distance is at least the observed one.

    Rounds whose refit fails (no usable candidate) are dropped and logged.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if fit.n_tail < 1:
        raise ValueError("fit has an empty tail")
    x = _as_counts(data)
    hits, used = 0, 0
    for rng in _child_rngs(rng_seed, m):
        try:
            d = estimate_xmin(synthetic_dataset(x, fit, rng)).ks_distance
        except ValueError as exc:
            log.warning("goodness-of-fit round failed: %s", exc)
            continue
        used += 1
        hits += d >= fit.ks_distance
    if used == 0:
        raise RuntimeError("every goodness-of-fit round failed")
    return hits / used
