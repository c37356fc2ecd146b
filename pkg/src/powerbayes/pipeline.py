"""End-to-end simulation-study run: generate data, tune, sample, predict and
score against the sealed ground truth."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data_io import SimulationConfig, SimulationStudy, generate_simulation_study
from .inference import POWERLAW, McmcConfig, Model, PosteriorSample, pilot_tune, run_chain
from .predictive import predictive_summary, predictive_totals


@dataclass
class PipelineConfig:
    study: SimulationConfig = field(default_factory=SimulationConfig)
    body: str = POWERLAW
    iterations: int = 1_100_000
    burn_in: int = 100_000
    thin: int = 100
    pilot_iterations: int = 20_000
    latent_block_size: int = 10
    data_seed: int = 2013
    chain_seed: int = 1
    progress_every: int = 0


@dataclass
class PipelineResult:
    study: SimulationStudy
    sample: PosteriorSample
    summary: dict
    truth: dict
    intervals: dict
    covered: dict
    pilot_acceptance: float
    pilot_fallback: bool
    seconds: float
    n_true_draws: np.ndarray = field(repr=False, default=None)
    total_true_draws: np.ndarray = field(repr=False, default=None)


def run_simulation_pipeline(cfg: PipelineConfig | None = None, progress=None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    t0 = time.perf_counter()
    study = generate_simulation_study(cfg.study, cfg.data_seed)
    side = cfg.study.side
    data = {side: study.dataset.counts(side)}
    model = Model(sides=(side,), body=cfg.body)
    pilot_seed, run_seed = np.random.SeedSequence(cfg.chain_seed).spawn(2)
    tune = pilot_tune(data, cfg.pilot_iterations, np.random.default_rng(pilot_seed), model, cfg.latent_block_size)
    mcmc = McmcConfig(
        iterations=cfg.iterations,
        burn_in=cfg.burn_in,
        thin=cfg.thin,
        latent_block_size=cfg.latent_block_size,
        proposal_cov=tune.proposal_cov,
        rng_seed=int(run_seed.generate_state(1)[0]),
        progress_every=cfg.progress_every,
    )
    sample = run_chain(data, mcmc, model, initial=tune.state, progress=progress)
    draws = predictive_totals(sample, rng_seed=cfg.chain_seed)
    summary = predictive_summary(draws)
    s = cfg.study
    truth = {
        f"alpha_{side}": s.alpha,
        f"lam_{side}": s.lam,
        f"mu_{side}": s.mu,
        f"p_{side}": s.p,
        "total_true": study.ground_truth.total_true,
        "n_true": study.ground_truth.n_true,
    }
    intervals, covered = {}, {}
    names = [n for n in truth if n in sample.names]
    for n in names:
        lo, hi = np.quantile(sample.column(n), [0.025, 0.975])
        intervals[n] = (float(lo), float(hi))
    tt = summary[side]["total_true"]
    intervals["total_true"] = (tt["lower95"], tt["upper95"])
    for n, (lo, hi) in intervals.items():
        covered[n] = bool(lo <= truth[n] <= hi)
    return PipelineResult(
        study=study,
        sample=sample,
        summary=summary,
        truth=truth,
        intervals=intervals,
        covered=covered,
        pilot_acceptance=tune.acceptance_rate,
        pilot_fallback=tune.fallback,
        seconds=time.perf_counter() - t0,
        n_true_draws=np.array([d.n_true[side] for d in draws]),
        total_true_draws=np.array([d.total_true[side] for d in draws]),
    )
