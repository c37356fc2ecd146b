"""Post-MCMC prediction: the number of true events, total severities and the
quasi-threshold x_level above which events are almost surely recorded.

Given q, the probability that a random event is recorded, the recorded
count satisfies n_obs ~ Binomial(n_true, q). Under a flat prior on n_true
the number of unrecorded events is negative binomial with n_obs successes
and success probability q. Every quantity is computed per posterior draw
with that draw's parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .distributions import PowerLawParams
from .error_model import (
    ObservationModel,
    _body_log_pmf,
    _log_miss,
    _log_obs,
    normalizer_and_miss,
    observation_normalizer,
)
from .inference.sampler import PosteriorSample

__all__ = [
    "PredictiveDraw",
    "observation_normalizer",
    "predictive_summary",
    "predictive_totals",
    "sample_missing_battles",
    "sample_n_true",
    "x_threshold",
]

SEVERITY_CAP = 10**8
TAIL_WARN = 1e-6
_CHUNK = 1024
_MAX_CHUNK = 2**20


@dataclass(frozen=True)
class PredictiveDraw:
    """One posterior-predictive draw, broken down by force."""

    draw: int
    n_obs: dict
    n_true: dict
    latent_total: dict  # sum of latent true counts of the recorded events
    total_true: dict
    total_observed: dict

    @property
    def n_true_all(self) -> int:
        return sum(self.n_true.values())

    @property
    def total_true_all(self) -> int:
        return sum(self.total_true.values())

    @property
    def total_observed_all(self) -> int:
        return sum(self.total_observed.values())


def sample_n_true(n_obs: int, q: float, rng=None) -> int:
    """n_obs plus a negative-binomial number of unrecorded events."""
    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    if not 0 < q <= 1:
        raise ValueError(f"q must lie in (0, 1], got {q!r}")
    if q == 1:
        return int(n_obs)
    rng = np.random.default_rng(rng)
    return int(n_obs + rng.negative_binomial(n_obs, q))


def _as_body(alpha_or_body):
    if isinstance(alpha_or_body, (int, float, np.floating)):
        return PowerLawParams(float(alpha_or_body))
    return alpha_or_body


def missing_log_pmf(w, alpha_or_body, model: ObservationModel):
    """log Pr(W = w | not recorded)."""
    body = _as_body(alpha_or_body)
    _, miss = normalizer_and_miss(body, model)
    w = np.asarray(w, dtype=float)
    return _body_log_pmf(body, w) + _log_miss(w, model.variant, model.lam, model.mu, model.eta) - np.log(miss)


def sample_missing_battles(count: int, alpha_or_body, model: ObservationModel, rng=None) -> np.ndarray:
    """Severities of ``count`` unrecorded events by inversion of the
    conditional pmf ``Pr(W = w) (1 - obs(w)) / (1 - q)``.

    The CDF is accumulated in doubling chunks; draws past ``SEVERITY_CAP``
    are set to the cap and a warning is raised if the mass there exceeds
    ``TAIL_WARN``.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    body = _as_body(alpha_or_body)
    _, miss = normalizer_and_miss(body, model)
    if not miss > 0:
        raise ValueError("every event is recorded under this model; nothing is missing")
    rng = np.random.default_rng(rng)
    targets = rng.random(count) * miss
    order = np.argsort(targets)
    u = targets[order]
    out_sorted = np.full(count, SEVERITY_CAP, dtype=np.int64)
    v, lam, mu, eta = model.variant, model.lam, model.mu, model.eta
    start, size, cum, pos = 1, _CHUNK, 0.0, 0
    while pos < count and start <= SEVERITY_CAP:
        w = np.arange(start, min(start + size, SEVERITY_CAP + 1), dtype=float)
        c = cum + np.cumsum(np.exp(_body_log_pmf(body, w) + _log_miss(w, v, lam, mu, eta)))
        k = np.searchsorted(c, u[pos:], side="left")
        done = int(np.searchsorted(k, w.size))  # k is sorted
        out_sorted[pos : pos + done] = w[k[:done]].astype(np.int64)
        pos += done
        cum = float(c[-1])
        if cum >= miss and pos < count:
            # rounding left a few targets above the accumulated mass
            out_sorted[pos:] = int(w[-1])
            pos = count
        start += w.size
        size = min(2 * size, _MAX_CHUNK)
    if pos < count and miss - cum > TAIL_WARN:
        warnings.warn(f"missing-event severities: tail mass {miss - cum:.2e} beyond the cap", RuntimeWarning)
    out = np.empty(count, dtype=np.int64)
    out[order] = out_sorted
    return out


def _draw_seeds(rng_seed, n: int) -> list:
    seq = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    return seq.spawn(n)


def predictive_totals(posterior: PosteriorSample, data=None, rng_seed=None) -> list:
    """Per draw and per force: q, n_true, and total true severity
    (latents of recorded events plus simulated unrecorded events)."""
    if len(posterior) == 0:
        raise ValueError("posterior sample is empty")
    model = posterior.model
    if data is not None:
        counts = {s: np.asarray(data.counts(s) if hasattr(data, "counts") else data[s]) for s in model.sides}
        for s in model.sides:
            if counts[s].size != posterior.n_obs[s]:
                raise ValueError(f"data for {s} do not match the posterior ({counts[s].size} vs {posterior.n_obs[s]})")
    out = []
    for i, seed in enumerate(_draw_seeds(rng_seed, len(posterior))):
        rng = np.random.default_rng(seed)
        params = posterior.params(i)
        n_true, totals, latent = {}, {}, {}
        for s in model.sides:
            fp = params[s]
            body = fp.body(model.body)
            obs = fp.observation(model.variant)
            q, _ = normalizer_and_miss(body, obs)
            n_obs = posterior.n_obs[s]
            n = sample_n_true(n_obs, min(q, 1.0), rng)
            extra = sample_missing_battles(n - n_obs, body, obs, rng)
            latent[s] = int(posterior.latent_sums[s][i])
            n_true[s] = n
            totals[s] = latent[s] + int(extra.sum())
        out.append(
            PredictiveDraw(
                draw=i,
                n_obs=dict(posterior.n_obs),
                n_true=n_true,
                latent_total=latent,
                total_true=totals,
                total_observed=dict(posterior.observed_totals),
            )
        )
    return out


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    lo, med, hi = np.quantile(v, [0.025, 0.5, 0.975])
    return {"mean": float(v.mean()), "median": float(med), "lower95": float(lo), "upper95": float(hi)}


def predictive_summary(draws: list) -> dict:
    """Mean, median and central 95% interval of n_true and total severity."""
    if not draws:
        raise ValueError("no predictive draws")
    sides = list(draws[0].n_true)
    out = {}
    for s in sides:
        out[s] = {
            "n_obs": draws[0].n_obs[s],
            "total_observed": draws[0].total_observed[s],
            "n_true": _summary([d.n_true[s] for d in draws]),
            "total_true": _summary([d.total_true[s] for d in draws]),
        }
    if len(sides) > 1:
        out["all"] = {
            "n_obs": sum(draws[0].n_obs.values()),
            "total_observed": draws[0].total_observed_all,
            "n_true": _summary([d.n_true_all for d in draws]),
            "total_true": _summary([d.total_true_all for d in draws]),
        }
    return out


def x_threshold(posterior: PosteriorSample, side: str | None = None, level: float = 0.95, cap: int = 10**6) -> int:
    """Smallest x whose posterior-mean recording probability exceeds ``level``."""
    if len(posterior) == 0:
        raise ValueError("posterior sample is empty")
    if not 0 <= level < 1:
        raise ValueError("level must lie in [0, 1)")
    model = posterior.model
    side = side or model.sides[0]
    lam = posterior.column(f"lam_{side}")
    mu = posterior.column(f"mu_{side}")
    eta = posterior.column(f"eta_{side}") if f"eta_{side}" in posterior.names else np.zeros_like(lam)

    def mean_obs(x: float) -> float:
        return float(np.exp(_log_obs(float(x), model.variant, lam, mu, eta)).mean())

    if mean_obs(cap) <= level:
        raise ValueError(f"recording probability never exceeds {level} for x <= {cap}")
    if mean_obs(1) > level:
        return 1
    lo, hi = 1, int(cap)  # mean_obs(lo) <= level < mean_obs(hi); increasing in x
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mean_obs(mid) > level:
            hi = mid
        else:
            lo = mid
    return hi
