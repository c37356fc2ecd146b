"""Metropolis-Hastings sampler over (parameters, latent true counts).

Each iteration proposes a Gaussian random-walk step for the free parameters
(on the log / logit / identity scale) together with truncated-Poisson moves
for a random block of latents of one force, and accepts or rejects the pair
with a single Metropolis-Hastings ratio.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from ..distributions import _tp_log_pmf, _tp_log_pmf_scalar, _tp_sample
from .diagnostics import effective_sample_size
from .model import LatentCache, Model, ModelParams, Posterior

log = logging.getLogger(__name__)

# conservative random-walk scales on the transformed axes, used by the pilot run
_SCALAR_BLOCK = 16  # below this, plain floats beat numpy call overhead

PILOT_SCALES = {"alpha": 0.01, "mu_ln": 0.02, "sigma_ln": 0.02, "lam": 0.03, "mu": 0.03, "eta": 0.05, "p": 0.05}


@dataclass
class McmcConfig:
    iterations: int = 1_100_000
    burn_in: int = 100_000
    thin: int = 100
    latent_block_size: int = 10
    proposal_cov: np.ndarray | None = None
    rng_seed: int = 0
    latent_stride: int = 100  # snapshot latents every this many kept draws
    audit_every: int = 10_000
    progress_every: int = 0

    def validate(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be non-negative and below iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.latent_block_size < 0:
            raise ValueError("latent_block_size must be non-negative")
        if self.latent_stride < 1:
            raise ValueError("latent_stride must be >= 1")

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ChainState:
    """Current parameter vector, latents and cached posterior pieces."""

    model: Model = field(repr=False)
    theta: np.ndarray
    latents: dict
    log_posterior: float
    iteration: int = 0
    accepted: bool = False
    caches: dict | None = field(default=None, repr=False)
    log_jacobian: float = field(default=0.0, repr=False)

    @property
    def params(self) -> ModelParams:
        return self.model.params(self.theta)


def initial_state(posterior: Posterior, params: ModelParams | None = None, latents=None) -> ChainState:
    """Start at ``params`` (model defaults if None) with latents equal to the data."""
    model = posterior.model
    if params is None:
        params = model.default_params({s: fd.z for s, fd in posterior.forces.items()})
    if latents is None:
        latents = {s: fd.z.copy() for s, fd in posterior.forces.items()}
    theta = model.vector(params)
    caches = posterior.caches(latents)
    lp = posterior.evaluate(theta, caches)
    if not np.isfinite(lp):
        raise ValueError("initial state has zero posterior density")
    latents = {s: c.x for s, c in caches.items()}
    return ChainState(model, theta, latents, lp, caches=caches, log_jacobian=model.log_jacobian(theta))


# --- proposals ------------------------------------------------------------------


def _cholesky(cov) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.size == 0:
        return np.zeros((0, 0))
    if not np.any(cov):
        return np.zeros_like(cov)
    return np.linalg.cholesky(cov)


def propose_params(current: ModelParams, proposal_cov, rng, model: Model | None = None, chol=None):
    """Gaussian random-walk proposal on the transformed free parameters.

    Returns ``(proposal, log_ratio)`` where ``log_ratio`` is
    log q(current | proposal) - log q(proposal | current) on the original
    scale, i.e. the Jacobian correction log|J(proposal)| - log|J(current)|.
    """
    if model is None:
        model = Model(sides=tuple(current.forces), body=current.body, variant=current.variant)
    theta = model.vector(current)
    chol = chol if chol is not None else _cholesky(proposal_cov)
    new_theta, new_jac = _propose_theta(model, theta, chol, rng)
    return model.params(new_theta), new_jac - model.log_jacobian(theta)


def _propose_theta(model: Model, theta: np.ndarray, chol: np.ndarray, rng):
    """Return the proposed vector and its log Jacobian."""
    stream = _as_stream(rng)
    d = chol.shape[0]
    if d == 0:
        return theta.copy(), model.log_jacobian(theta)
    step = (chol @ stream.normals(d)).tolist()
    t = theta.tolist()
    jac = 0.0
    # random walk on log / logit / identity scale, written out on floats
    for (i, kind), s in zip(model._free_kinds, step):
        v = t[i]
        if kind == "log":
            v = v * math.exp(s) if s < 700 else math.inf
            if not 0 < v < math.inf:
                return np.asarray(t), -math.inf
            jac += math.log(v)
        elif kind == "logit":
            e = math.exp(min(-s, 700.0)) * (1.0 - v) / v
            v = 1.0 / (1.0 + e)
            if not 0 < v < 1:
                return np.asarray(t), -math.inf
            jac += math.log(v) + math.log1p(-v)
        else:
            v += s
        t[i] = v
    return np.asarray(t), jac


def proposal_log_density(to: np.ndarray, frm: np.ndarray, proposal_cov) -> float:
    """Gaussian random-walk density of a step between transformed vectors."""
    cov = np.atleast_2d(np.asarray(proposal_cov, dtype=float))
    d = np.asarray(to, dtype=float) - np.asarray(frm, dtype=float)
    _, logdet = np.linalg.slogdet(cov)
    return float(-0.5 * (d @ np.linalg.solve(cov, d) + logdet + d.size * np.log(2 * np.pi)))


def propose_latents(latents, block_size: int = 10, rng=None):
    """Perturb ``block_size`` randomly chosen latents with x* | x ~ TP(x).

    Returns ``(proposal, log_q_forward, log_q_backward)``; the proposal is a
    new array and the input is left untouched.
    """
    stream = _as_stream(rng if isinstance(rng, RandomStream) else np.random.default_rng(rng))
    x = np.asarray(latents, dtype=np.int64)
    idx, new, fwd, bwd = _propose_block(x, block_size, stream)
    out = x.copy()
    out[idx] = new
    return out, fwd, bwd


def _propose_block(x: np.ndarray, block_size: int, rng):
    stream = _as_stream(rng)
    n = x.size
    if block_size > n:
        raise ValueError("latent block larger than the number of recorded events")
    if 2 * block_size <= n:
        while True:
            idx = [int(u * n) for u in stream.uniforms(block_size)]
            if len(set(idx)) == block_size:
                break
        idx = np.asarray(idx)
    else:
        idx = stream.rng.permutation(n)[:block_size]
    old = x[idx]
    if block_size <= _SCALAR_BLOCK:
        old_l = old.tolist()
        new_l = stream.truncated_poisson(old_l)
        fwd = bwd = 0.0
        for a, b in zip(old_l, new_l):
            fwd += _tp_log_pmf_scalar(b, a)
            bwd += _tp_log_pmf_scalar(a, b)
        return idx, np.asarray(new_l, dtype=np.int64), fwd, bwd
    oldf = old.astype(float)
    new = _tp_sample(oldf, stream.rng)
    newf = new.astype(float)
    both = _tp_log_pmf(np.concatenate((newf, oldf)), np.concatenate((oldf, newf)))
    k = oldf.size
    return idx, new, float(both[:k].sum()), float(both[k:].sum())


# --- buffered randomness --------------------------------------------------------


class RandomStream:
    """Buffered draws from a numpy Generator.

    Single small draws from a Generator carry ~10 us of call overhead; the
    sampler needs a handful per step, so they are drawn in bulk here.
    """

    _INVERSION_MAX = 30.0  # truncated Poisson by inversion below this rate

    def __init__(self, rng: np.random.Generator, size: int = 4096):
        self.rng = rng
        self._size = size
        self._u: list = []
        self._ui = 0
        self._z: dict = {}

    def uniform(self) -> float:
        if self._ui >= len(self._u):
            self._u = self.rng.random(self._size).tolist()
            self._ui = 0
        self._ui += 1
        return self._u[self._ui - 1]

    def uniforms(self, k: int) -> list:
        return [self.uniform() for _ in range(k)]

    def normals(self, d: int) -> np.ndarray:
        buf, i = self._z.get(d, (None, self._size))
        if i >= self._size:
            buf, i = self.rng.standard_normal((self._size, d)), 0
        self._z[d] = (buf, i + 1)
        return buf[i]

    def truncated_poisson(self, rates: list) -> list:
        """Zero-truncated Poisson draws for rates >= 1."""
        out = []
        for x in rates:
            if x >= self._INVERSION_MAX:
                out.append(int(_tp_sample(np.array([float(x)]), self.rng)[0]))
                continue
            # invert the CDF restricted to k >= 1
            e = math.exp(-x)
            v = e - self.uniform() * math.expm1(-x)
            k, p = 1, x * e
            cdf = e + p
            while cdf < v and p > 0:
                k += 1
                p *= x / k
                cdf += p
            out.append(k)
        return out


def _as_stream(rng) -> RandomStream:
    # one-off callers get a small private buffer; Sampler keeps its own
    return rng if isinstance(rng, RandomStream) else RandomStream(rng, size=64)


# --- one step -------------------------------------------------------------------


class Sampler:
    """Holds the posterior and the Cholesky factor of the proposal covariance."""

    def __init__(self, posterior: Posterior, proposal_cov, latent_block_size: int = 10):
        self.posterior = posterior
        self.model = posterior.model
        d = len(self.model.free)
        cov = np.zeros((d, d)) if proposal_cov is None else np.atleast_2d(np.asarray(proposal_cov, dtype=float))
        if cov.shape != (d, d):
            raise ValueError(f"proposal covariance must be {d}x{d}, got {cov.shape}")
        self.chol = _cholesky(cov) if d else np.zeros((0, 0))
        self.block = latent_block_size
        self.sides = self.model.sides
        self._owned = None
        for s, fd in posterior.forces.items():
            if self.block > fd.n:
                raise ValueError(f"latent block {self.block} exceeds n_obs={fd.n} for {s}")

    def _stream(self, rng) -> RandomStream:
        if isinstance(rng, RandomStream):
            return rng
        if self._owned is None or self._owned.rng is not rng:
            self._owned = RandomStream(rng)
        return self._owned

    def step(self, state: ChainState, rng) -> ChainState:
        rng = self._stream(rng)
        post, model = self.posterior, self.model
        if state.caches is None:
            state = initial_state(post, state.params, state.latents)
        theta = state.theta
        new_theta, new_jac = _propose_theta(model, theta, self.chol, rng)
        log_ratio = new_jac - state.log_jacobian
        side = self.sides[state.iteration % len(self.sides)]
        caches = state.caches
        new_caches = caches
        if self.block:
            fd = post.forces[side]
            idx, new, fwd, bwd = _propose_block(caches[side].x, self.block, rng)
            log_ratio += bwd - fwd
            new_caches = dict(caches)
            new_caches[side] = caches[side].updated(fd, idx, new)
        log_u = math.log(rng.uniform())
        accepted = False
        if log_ratio > -math.inf:
            lp_new = post.evaluate(new_theta, new_caches)
            accepted = lp_new > -math.inf and log_u < lp_new - state.log_posterior + log_ratio
        if accepted:
            latents = {s: c.x for s, c in new_caches.items()}
            return ChainState(model, new_theta, latents, lp_new, state.iteration + 1, True, new_caches, new_jac)
        return ChainState(
            model, theta, state.latents, state.log_posterior, state.iteration + 1, False, caches, state.log_jacobian
        )


def mh_step(state: ChainState, data, config: McmcConfig, rng, model: Model | None = None) -> ChainState:
    """One joint parameter + latent-block Metropolis-Hastings update."""
    if isinstance(data, Sampler):
        return data.step(state, rng)
    post = data if isinstance(data, Posterior) else Posterior(data, model)
    return Sampler(post, config.proposal_cov, config.latent_block_size).step(state, rng)


# --- chains ---------------------------------------------------------------------


@dataclass
class PosteriorSample:
    """Thinned draws from one chain, stored column-wise."""

    model: Model
    names: list
    draws: np.ndarray  # (n_draws, n_params) on the natural scale
    log_posterior: np.ndarray
    iterations: np.ndarray
    latent_sums: dict  # side -> (n_draws,) sums of latents
    snapshot_draws: np.ndarray  # kept-draw indices with a latent snapshot
    latent_snapshots: dict  # side -> (n_snapshots, n_obs)
    acceptance_rate: float
    n_obs: dict
    observed_totals: dict
    ess: dict = field(default_factory=dict)
    final_state: ChainState | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.draws.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def params(self, i: int) -> ModelParams:
        return self.model.params(self.draws[i])


def run_chain(
    data,
    config: McmcConfig,
    model: Model | None = None,
    initial: ChainState | ModelParams | None = None,
    progress=None,
) -> PosteriorSample:
    """Run ``config.iterations`` MH steps, discard burn-in and thin."""
    config.validate()
    post = data if isinstance(data, Posterior) else Posterior(data, model or Model())
    model = post.model
    sampler = Sampler(post, config.proposal_cov, config.latent_block_size)
    rng = np.random.default_rng(config.rng_seed)
    if isinstance(initial, ChainState):
        state = initial_state(post, initial.params, initial.latents)
    else:
        state = initial_state(post, initial)
    state.iteration = 0

    n_keep = config.n_draws
    draws = np.empty((n_keep, len(model.names)))
    lps = np.empty(n_keep)
    iters = np.empty(n_keep, dtype=np.int64)
    sums = {s: np.empty(n_keep, dtype=np.int64) for s in model.sides}
    snap_idx = []
    snaps = {s: [] for s in model.sides}
    n_acc = 0
    k = 0
    stream = progress if progress is not None else (sys.stderr if config.progress_every else None)
    for t in range(1, config.iterations + 1):
        state = sampler.step(state, rng)
        n_acc += state.accepted
        if config.audit_every and t % config.audit_every == 0:
            state.caches = post.caches(state.latents)
            fresh = post.evaluate(state.theta, state.caches)
            if abs(fresh - state.log_posterior) > 1e-6:
                raise RuntimeError(
                    f"cached log posterior drifted at iteration {t}: {state.log_posterior} vs {fresh}"
                )
            state.log_posterior = fresh
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0 and k < n_keep:
            draws[k] = state.theta
            lps[k] = state.log_posterior
            iters[k] = t
            for s in model.sides:
                sums[s][k] = int(state.latents[s].sum())
            if k % config.latent_stride == 0:
                snap_idx.append(k)
                for s in model.sides:
                    snaps[s].append(state.latents[s].copy())
            k += 1
        if stream is not None and config.progress_every and t % config.progress_every == 0:
            print(f"iteration {t}/{config.iterations} acceptance {n_acc / t:.3f}", file=stream, flush=True)

    sample = PosteriorSample(
        model=model,
        names=list(model.names),
        draws=draws,
        log_posterior=lps,
        iterations=iters,
        latent_sums=sums,
        snapshot_draws=np.asarray(snap_idx, dtype=np.int64),
        latent_snapshots={s: np.asarray(v, dtype=np.int64).reshape(len(snap_idx), -1) for s, v in snaps.items()},
        acceptance_rate=n_acc / config.iterations,
        n_obs={s: fd.n for s, fd in post.forces.items()},
        observed_totals={s: int(fd.z.sum()) for s, fd in post.forces.items()},
    )
    sample.ess = chain_ess(sample)
    sample.final_state = state
    return sample


def chain_ess(sample: PosteriorSample) -> dict:
    out = {}
    for name in sample.model.free:
        series = sample.column(name)
        if len(series) >= 10 and np.ptp(series) > 0:
            out[name] = effective_sample_size(series)
        else:
            out[name] = float("nan")
    return out


# --- pilot tuning ---------------------------------------------------------------


@dataclass
class TuneResult:
    proposal_cov: np.ndarray
    fallback: bool
    acceptance_rate: float
    state: ChainState
    reason: str = ""


def conservative_cov(model: Model) -> np.ndarray:
    scales = [PILOT_SCALES[n.rsplit("_", 1)[0]] for n in model.free]
    return np.diag(np.square(scales))


def pilot_tune(
    data,
    pilot_iterations: int,
    rng=None,
    model: Model | None = None,
    latent_block_size: int = 10,
    initial=None,
) -> TuneResult:
    """Estimate a proposal covariance from a pilot chain.

    The pilot runs with a small diagonal proposal; the covariance of the
    transformed free parameters over its second half, scaled by 2.38^2 / d,
    becomes the tuned proposal. The diagonal is returned instead (and
    flagged) when that estimate is not positive definite, when the pilot
    barely moved, or when a force has a single distinct recorded value.
    """
    if pilot_iterations < 10_000:
        raise ValueError("pilot run needs at least 10,000 iterations")
    post = data if isinstance(data, Posterior) else Posterior(data, model or Model())
    model = post.model
    rng = np.random.default_rng(rng)
    base = conservative_cov(model)
    sampler = Sampler(post, base, latent_block_size)
    if isinstance(initial, ChainState):
        state = initial_state(post, initial.params, initial.latents)
    else:
        state = initial_state(post, initial)
    d = len(model.free)
    keep_from = pilot_iterations // 2
    phis = np.empty((pilot_iterations - keep_from, d))
    n_acc = 0
    for t in range(pilot_iterations):
        state = sampler.step(state, rng)
        n_acc += state.accepted
        if t >= keep_from:
            phis[t - keep_from] = model.unconstrained(state.theta)
    acc = n_acc / pilot_iterations
    reason = ""
    if any(np.unique(fd.z).size < 2 for fd in post.forces.values()):
        reason = "degenerate data: a force has a single distinct recorded value"
    elif acc < 0.01:
        reason = f"pilot acceptance {acc:.4f} too low"
    cov = None
    if not reason and d:
        cov = np.atleast_2d(np.cov(phis, rowvar=False)) * (2.38**2 / d)
        cov = 0.5 * (cov + cov.T)
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            reason = "pilot covariance not positive definite"
    if reason or cov is None:
        log.warning("pilot tuning fell back to the diagonal proposal: %s", reason or "no free parameters")
        return TuneResult(base, True, acc, state, reason or "no free parameters")
    return TuneResult(cov, False, acc, state)
