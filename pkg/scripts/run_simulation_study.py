"""Run the simulation study end to end and print coverage of the truth.

usage: python3 scripts/run_simulation_study.py [--iterations N] [--burn-in N] [--seed S] [--body powerlaw|lognormal]
"""

import argparse
import json
import sys

from powerbayes.pipeline import PipelineConfig, run_simulation_pipeline


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=1_100_000)
    ap.add_argument("--burn-in", type=int, default=100_000)
    ap.add_argument("--thin", type=int, default=100)
    ap.add_argument("--data-seed", type=int, default=2013)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--body", default="powerlaw")
    ap.add_argument("--progress-every", type=int, default=100_000)
    a = ap.parse_args()
    cfg = PipelineConfig(
        iterations=a.iterations,
        burn_in=a.burn_in,
        thin=a.thin,
        data_seed=a.data_seed,
        chain_seed=a.seed,
        body=a.body,
        progress_every=a.progress_every,
    )
    r = run_simulation_pipeline(cfg, progress=sys.stderr)
    s = r.sample
    out = {
        "seconds": round(r.seconds, 1),
        "n_obs": s.n_obs,
        "acceptance_rate": s.acceptance_rate,
        "pilot_acceptance": r.pilot_acceptance,
        "pilot_fallback": r.pilot_fallback,
        "means": {n: float(s.column(n).mean()) for n in s.names},
        "ess": s.ess,
        "truth": r.truth,
        "intervals": r.intervals,
        "covered": r.covered,
        "n_true_mean": float(r.n_true_draws.mean()),
        "summary": r.summary,
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
