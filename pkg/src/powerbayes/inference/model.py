"""Joint posterior over model parameters and the latent true counts of the
recorded events.

Per force the likelihood of a recorded event with latent true count x and
recorded value z is

    Pr(X = x | recorded) * Pr(Z = z | x, p)
      = obs(x) Pr(W = x) / q  *  Pr(Z = z | x, p)

with the counting noise integrated out of Pr(Z | x) and the unrecorded
events integrated out through the normaliser q.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ..distributions import (
    DEFAULT_PRIOR,
    BivariateLogNormalPrior,
    DiscreteLogNormalParams,
    PowerLawParams,
    _dln_log_pmf,
    _tp_log_pmf,
    _tp_log_pmf_scalar,
)
from ..error_model import (
    EXP_LINEAR,
    EXP_QUADRATIC,
    VARIANTS,
    ObservationModel,
    _heaped_lse,
    _log_obs,
    is_heap_point,
    _miss_lognormal,
    _miss_powerlaw,
)
from ..special import log_hurwitz_zeta

SIDES = ("US", "Native")
POWERLAW = "powerlaw"
LOGNORMAL = "lognormal"
BODIES = (POWERLAW, LOGNORMAL)

# transform applied to each base parameter before the Gaussian random walk
_TRANSFORMS = {
    "alpha": "identity",
    "mu_ln": "identity",
    "sigma_ln": "log",
    "lam": "log",
    "mu": "log",
    "eta": "log",
    "p": "logit",
}


@dataclass(frozen=True)
class ForceParams:
    alpha: float = 2.0
    lam: float = 0.05
    mu: float = 0.05
    p: float = 0.1
    eta: float = 0.0
    mu_ln: float = 1.0
    sigma_ln: float = 1.0

    def body(self, kind: str = POWERLAW):
        if kind == POWERLAW:
            return PowerLawParams(self.alpha)
        return DiscreteLogNormalParams(self.mu_ln, self.sigma_ln)

    def observation(self, variant: str = EXP_LINEAR) -> ObservationModel:
        return ObservationModel(variant, self.lam, self.mu, self.eta)


@dataclass(frozen=True)
class ModelParams:
    """Parameter values for every force plus the model flags they belong to."""

    forces: Mapping[str, ForceParams]
    variant: str = EXP_LINEAR
    body: str = POWERLAW

    def __getitem__(self, side: str) -> ForceParams:
        return self.forces[side]


@dataclass
class Model:
    """Structure of the Bayesian model: which forces, body family, observation
    variant, priors and any parameters held fixed.

    With both forces present the observation rates ``(lam_US, lam_Native)``
    get the bivariate log-normal ``prior`` and ``(mu_US, mu_Native)`` an
    independent copy of it; with a single force the matching marginal is used.
    """

    sides: tuple = ("Native",)
    body: str = POWERLAW
    variant: str = EXP_LINEAR
    prior: BivariateLogNormalPrior = DEFAULT_PRIOR
    alpha_bounds: tuple = (1.5, 3.0)
    mu_ln_bounds: tuple = (-10.0, 10.0)
    sigma_ln_bounds: tuple = (0.01, 10.0)
    eta_prior: BivariateLogNormalPrior = BivariateLogNormalPrior((-6.0,), ((4.0,),))
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sides = tuple(self.sides)
        if not self.sides or any(s not in SIDES for s in self.sides):
            raise ValueError(f"sides must be drawn from {SIDES}")
        if len(set(self.sides)) != len(self.sides):
            raise ValueError("duplicate side")
        if self.body not in BODIES:
            raise ValueError(f"body must be one of {BODIES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        unknown = set(self.fixed) - set(self.names)
        if unknown:
            raise ValueError(f"cannot fix unknown parameters {sorted(unknown)}")
        idx = [SIDES.index(s) for s in self.sides]
        if len(idx) == 1:
            self._rate_prior = self.prior.marginal(idx[0])
        else:
            mean = tuple(self.prior.mean_log[i] for i in idx)
            cov = tuple(tuple(self.prior.cov_log[i][j] for j in idx) for i in idx)
            self._rate_prior = BivariateLogNormalPrior(mean, cov)
        self._index = {n: i for i, n in enumerate(self.names)}
        self.free = [n for n in self.names if n not in self.fixed]
        self._free_idx = np.array([self._index[n] for n in self.free], dtype=int)
        kinds = [_TRANSFORMS[n.rsplit("_", 1)[0]] for n in self.free]
        self._log_idx = np.array([i for i, k in enumerate(kinds) if k == "log"], dtype=int)
        self._logit_idx = np.array([i for i, k in enumerate(kinds) if k == "logit"], dtype=int)
        # plain-python layout for the per-step hot path
        nb = len(self.base_names)
        self._slots = [{b: k * nb + j for j, b in enumerate(self.base_names)} for k in range(len(self.sides))]
        self._free_kinds = [(int(self._free_idx[i]), k) for i, k in enumerate(kinds)]
        self._log_theta = [int(self._free_idx[i]) for i in self._log_idx]
        self._logit_theta = [int(self._free_idx[i]) for i in self._logit_idx]
        self._rate_py = _py_gaussian(self._rate_prior)
        self._eta_py = _py_gaussian(self.eta_prior)

    @property
    def base_names(self) -> list[str]:
        body = ["alpha"] if self.body == POWERLAW else ["mu_ln", "sigma_ln"]
        obs = ["lam", "mu"] + (["eta"] if self.variant == EXP_QUADRATIC else [])
        return body + obs + ["p"]

    @property
    def names(self) -> list[str]:
        return [f"{b}_{s}" for s in self.sides for b in self.base_names]

    def index(self, name: str) -> int:
        return self._index[name]

    def to_dict(self) -> dict:
        return {
            "sides": list(self.sides),
            "body": self.body,
            "variant": self.variant,
            "prior": {"mean_log": list(self.prior.mean_log), "cov_log": [list(r) for r in self.prior.cov_log]},
            "eta_prior": {"mean_log": list(self.eta_prior.mean_log), "cov_log": [list(r) for r in self.eta_prior.cov_log]},
            "alpha_bounds": list(self.alpha_bounds),
            "mu_ln_bounds": list(self.mu_ln_bounds),
            "sigma_ln_bounds": list(self.sigma_ln_bounds),
            "fixed": dict(self.fixed),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Model":
        def prior(p):
            return BivariateLogNormalPrior(tuple(p["mean_log"]), tuple(tuple(r) for r in p["cov_log"]))

        kw = dict(d)
        for key in ("prior", "eta_prior"):
            if key in kw:
                kw[key] = prior(kw[key])
        for key in ("sides", "alpha_bounds", "mu_ln_bounds", "sigma_ln_bounds"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    # --- conversions ----------------------------------------------------------

    def vector(self, params: ModelParams) -> np.ndarray:
        out = np.empty(len(self.names))
        for i, name in enumerate(self.names):
            base, side = name.rsplit("_", 1)
            out[i] = getattr(params[side], base)
        for name, val in self.fixed.items():
            out[self._index[name]] = val
        return out

    def params(self, theta) -> ModelParams:
        values = {s: {} for s in self.sides}
        for name, val in zip(self.names, np.asarray(theta, dtype=float)):
            base, side = name.rsplit("_", 1)
            values[side][base] = float(val)
        forces = {s: ForceParams(**v) for s, v in values.items()}
        return ModelParams(forces, self.variant, self.body)

    def default_params(self, data: Mapping[str, np.ndarray] | None = None) -> ModelParams:
        """Starting values: mid-support alpha, prior-median rates, p = 0.1."""
        forces = {}
        mean_log = np.asarray(self._rate_prior.mean_log, dtype=float)
        for k, side in enumerate(self.sides):
            rate = float(np.exp(mean_log[k]))
            fp = ForceParams(alpha=2.0, lam=rate, mu=rate, p=0.1, eta=float(np.exp(self.eta_prior.mean_log[0])))
            if data is not None and self.body == LOGNORMAL:
                logz = np.log(np.asarray(data[side], dtype=float))
                fp = replace(fp, mu_ln=float(logz.mean()), sigma_ln=float(max(logz.std(), 0.1)))
            forces[side] = fp
        return ModelParams(forces, self.variant, self.body)

    def unconstrained(self, theta: np.ndarray) -> np.ndarray:
        """Free parameters mapped to the random-walk scale (log / logit / identity)."""
        phi = theta[self._free_idx].copy()
        phi[self._log_idx] = np.log(phi[self._log_idx])
        pl = phi[self._logit_idx]
        phi[self._logit_idx] = np.log(pl) - np.log1p(-pl)
        return phi

    def constrained(self, phi: np.ndarray, template: np.ndarray) -> np.ndarray:
        theta = template.copy()
        vals = np.array(phi, dtype=float)
        vals[self._log_idx] = np.exp(vals[self._log_idx])
        vals[self._logit_idx] = 1.0 / (1.0 + np.exp(-vals[self._logit_idx]))
        theta[self._free_idx] = vals
        return theta

    def log_jacobian(self, theta) -> float:
        """log |d theta / d phi| summed over the free parameters."""
        t = theta.tolist() if isinstance(theta, np.ndarray) else list(theta)
        lj = 0.0
        for i in self._log_theta:
            if not t[i] > 0:
                return -math.inf
            lj += math.log(t[i])
        for i in self._logit_theta:
            if not 0 < t[i] < 1:
                return -math.inf
            lj += math.log(t[i]) + math.log1p(-t[i])
        return lj

    # --- prior ------------------------------------------------------------------

    def log_prior(self, theta) -> float:
        t = theta.tolist() if isinstance(theta, np.ndarray) else list(theta)
        return self._log_prior_list(t)

    def _log_prior_list(self, t: list) -> float:
        out = 0.0
        log_lams, log_mus = [], []
        quad = self.variant == EXP_QUADRATIC
        for sl in self._slots:
            if self.body == POWERLAW:
                lo, hi = self.alpha_bounds
                if not lo <= t[sl["alpha"]] <= hi:
                    return -math.inf
                out -= math.log(hi - lo)
            else:
                lo, hi = self.mu_ln_bounds
                slo, shi = self.sigma_ln_bounds
                if not (lo <= t[sl["mu_ln"]] <= hi and slo <= t[sl["sigma_ln"]] <= shi):
                    return -math.inf
                out -= math.log(hi - lo) + math.log(shi - slo)
            lam, mu, p = t[sl["lam"]], t[sl["mu"]], t[sl["p"]]
            if not (0.0 <= p <= 1.0 and lam > 0 and mu > 0):
                return -math.inf
            log_lams.append(math.log(lam))
            log_mus.append(math.log(mu))
            if quad:
                eta = t[sl["eta"]]
                if not eta > 0:
                    return -math.inf
                out += _py_lognormal([math.log(eta)], self._eta_py)
        out += _py_lognormal(log_lams, self._rate_py)
        out += _py_lognormal(log_mus, self._rate_py)
        return out


def _py_gaussian(prior: BivariateLogNormalPrior):
    return list(prior.mean.tolist()), prior.precision.tolist(), float(prior.log_norm)


def _py_lognormal(logs: list, gauss) -> float:
    mean, prec, log_norm = gauss
    d = [x - m for x, m in zip(logs, mean)]
    quad = 0.0
    for i, di in enumerate(d):
        for j, dj in enumerate(d):
            quad += di * prec[i][j] * dj
    return log_norm - 0.5 * quad - sum(logs)


def log_prior(params: ModelParams, model: Model | None = None) -> float:
    """Log prior density of ``params``; -inf outside the support."""
    if model is None:
        model = Model(sides=tuple(params.forces), body=params.body, variant=params.variant)
    return model.log_prior(model.vector(params))


# --- likelihood -----------------------------------------------------------------


@dataclass
class ForceData:
    """Recorded values of one force, split by heaping category."""

    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int64)
        if self.z.size == 0:
            raise ValueError("force has no recorded events")
        if np.any(self.z < 1):
            raise ValueError("recorded counts must be >= 1")
        self.heap_idx = np.flatnonzero(is_heap_point(self.z))
        self.heap_pos = np.full(self.z.size, -1)
        self.heap_pos[self.heap_idx] = np.arange(self.heap_idx.size)
        self.z_heap = self.z[self.heap_idx]
        self.n_other = int(np.sum((self.z > 2) & ~is_heap_point(self.z)))
        self.free_mask = np.ones(self.z.size, dtype=bool)
        self.free_mask[self.heap_idx] = False

    @property
    def n(self) -> int:
        return self.z.size


@dataclass
class LatentCache:
    """Per-force quantities that depend only on the latents."""

    x: np.ndarray
    xf: np.ndarray  # x as float
    lf0: np.ndarray  # log f(z_i | x_i)
    lse: np.ndarray  # log sum_k f(z_i - k | x_i) at heap points
    sum_log_x: float

    @classmethod
    def build(cls, fd: ForceData, x) -> "LatentCache":
        x = np.asarray(x, dtype=np.int64)
        xf = x.astype(float)
        return cls(
            x=x,
            xf=xf,
            lf0=_tp_log_pmf(fd.z, xf),
            lse=_heaped_lse(fd.z_heap, xf[fd.heap_idx]),
            sum_log_x=float(np.log(xf).sum()),
        )

    def updated(self, fd: ForceData, idx: np.ndarray, new: np.ndarray) -> "LatentCache":
        x = self.x.copy()
        x[idx] = new
        newf = new.astype(float)
        xf = self.xf.copy()
        xf[idx] = newf
        lf0 = self.lf0.copy()
        if idx.size <= 16:
            lf0[idx] = [_tp_log_pmf_scalar(a, b) for a, b in zip(fd.z[idx].tolist(), newf.tolist())]
        else:
            lf0[idx] = _tp_log_pmf(fd.z[idx], newf)
        lse = self.lse
        pos = fd.heap_pos[idx]
        hit = pos >= 0
        if hit.any():
            lse = lse.copy()
            lse[pos[hit]] = _heaped_lse(fd.z[idx[hit]], newf[hit])
        # incremental; run_chain rebuilds caches at every audit
        slx = self.sum_log_x + float(np.log(newf / self.xf[idx]).sum())
        return LatentCache(x, xf, lf0, lse, slx)


def force_log_likelihood(fp: ForceParams, fd: ForceData, cache: LatentCache, model: Model) -> float:
    """Sum over recorded events of log[Pr(X = x | recorded) Pr(Z = z | x, p)]."""
    return _force_ll(
        fp.alpha, fp.lam, fp.mu, fp.eta, fp.p, fp.mu_ln, fp.sigma_ln, fd, cache, model.body, model.variant
    )


def _force_ll(alpha, lam, mu, eta, p, mu_ln, sigma_ln, fd, cache, body, variant) -> float:
    xf = cache.xf
    n = fd.n
    if body == POWERLAW:
        body_term = -alpha * cache.sum_log_x - n * log_hurwitz_zeta(alpha, 1)
        miss = _miss_powerlaw(alpha, 1, variant, lam, mu, eta)
    else:
        body_term = float(_dln_log_pmf(xf, mu_ln, sigma_ln).sum())
        miss = _miss_lognormal(mu_ln, sigma_ln, variant, lam, mu, eta)
    if not miss < 1.0:
        return -math.inf
    obs_term = float(_log_obs(xf, variant, lam, mu, eta).sum())
    log_keep = math.log1p(-p) if p < 1 else -math.inf
    log_p = math.log(p) if p > 0 else -math.inf
    z_term = float(cache.lf0[fd.free_mask].sum())
    if fd.n_other:
        z_term += fd.n_other * log_keep
    if fd.heap_idx.size:
        z_term += float(np.logaddexp(log_keep + cache.lf0[fd.heap_idx], log_p + cache.lse).sum())
    return body_term + obs_term - n * math.log1p(-miss) + z_term


def _as_arrays(data) -> dict:
    if hasattr(data, "counts"):
        return {s: data.counts(s) for s in data.sides}
    return {s: np.asarray(v, dtype=np.int64) for s, v in data.items()}


class Posterior:
    """Data bound to a model; evaluates the unnormalised log posterior."""

    def __init__(self, data, model: Model):
        arrays = _as_arrays(data)
        missing = [s for s in model.sides if s not in arrays]
        if missing:
            raise ValueError(f"no data for sides {missing}")
        self.model = model
        self.forces = {s: ForceData(arrays[s]) for s in model.sides}

    def caches(self, latents: Mapping[str, np.ndarray]) -> dict:
        out = {}
        for s, fd in self.forces.items():
            x = np.asarray(latents[s])
            if x.shape != fd.z.shape:
                raise ValueError(f"latents for {s} do not align with the data")
            if np.any(x < 1):
                raise ValueError("latent counts must be >= 1")
            out[s] = LatentCache.build(fd, x)
        return out

    def evaluate(self, theta, caches: Mapping[str, LatentCache]) -> float:
        model = self.model
        t = np.asarray(theta, dtype=float).tolist()
        total = model._log_prior_list(t)
        if total == -math.inf:
            return total
        pl = model.body == POWERLAW
        quad = model.variant == EXP_QUADRATIC
        for sl, (s, fd) in zip(model._slots, self.forces.items()):
            total += _force_ll(
                t[sl["alpha"]] if pl else 0.0,
                t[sl["lam"]],
                t[sl["mu"]],
                t[sl["eta"]] if quad else 0.0,
                t[sl["p"]],
                0.0 if pl else t[sl["mu_ln"]],
                1.0 if pl else t[sl["sigma_ln"]],
                fd,
                caches[s],
                model.body,
                model.variant,
            )
            if not total > -math.inf:
                return -math.inf
        return float(total)

    def log_posterior(self, params: ModelParams, latents: Mapping[str, np.ndarray]) -> float:
        return self.evaluate(self.model.vector(params), self.caches(latents))


def log_posterior(state, data, model: Model | None = None) -> float:
    """Fresh (uncached) evaluation of the log posterior at a chain state."""
    if model is None:
        p = state.params
        model = Model(sides=tuple(p.forces), body=p.body, variant=p.variant)
    post = data if isinstance(data, Posterior) else Posterior(data, model)
    return post.log_posterior(state.params, state.latents)
