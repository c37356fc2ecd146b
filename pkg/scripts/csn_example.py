"""Frequentist power-law fit on a synthetic mixture with a known xmin.

usage: python3 scripts/csn_example.py [--n N] [--seed S] [--bootstrap B] [--gof M]
"""

import argparse
import json

import numpy as np

from powerbayes.csn import bootstrap_uncertainty, estimate_xmin, gof_pvalue
from powerbayes.distributions import PowerLawParams, powerlaw_sample


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--alpha", type=float, default=2.5)
    ap.add_argument("--xmin", type=int, default=10)
    ap.add_argument("--body-fraction", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bootstrap", type=int, default=100)
    ap.add_argument("--gof", type=int, default=100)
    a = ap.parse_args()
    rng = np.random.default_rng(a.seed)
    n_body = rng.binomial(a.n, a.body_fraction)
    x = np.concatenate(
        [rng.integers(1, a.xmin, n_body), powerlaw_sample(PowerLawParams(a.alpha, a.xmin), a.n - n_body, rng)]
    )
    fit = estimate_xmin(x)
    out = {"xmin_hat": fit.xmin_hat, "alpha_hat": fit.alpha_hat, "ks_distance": fit.ks_distance, "n_tail": fit.n_tail}
    if a.bootstrap:
        b = bootstrap_uncertainty(x, a.bootstrap, a.seed + 1)
        ok = b.ok()
        out |= {"xmin_sd": float(np.std(b.xmin[ok])), "alpha_sd": float(np.std(b.alpha[ok]))}
    if a.gof:
        out["p_value"] = gof_pvalue(x, fit, a.gof, a.seed + 2)
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
