"""Columnar text files for posterior draws and latent snapshots.

A chain with prefix ``P`` is stored as ``P_draws.csv`` (one row per kept
draw), ``P_latents.csv`` (long format, one row per latent per snapshot)
and ``P.json`` (model, data sizes, acceptance rate and ESS).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import Model
from .sampler import PosteriorSample


def _paths(prefix) -> tuple[Path, Path, Path]:
    prefix = Path(prefix)
    return (
        prefix.with_name(prefix.name + "_draws.csv"),
        prefix.with_name(prefix.name + "_latents.csv"),
        prefix.with_name(prefix.name + ".json"),
    )


def write_sample(sample: PosteriorSample, prefix, extra: dict | None = None) -> list[Path]:
    draws_p, lat_p, meta_p = _paths(prefix)
    sides = sample.model.sides
    with draws_p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", *sample.names, "log_posterior", *(f"latent_sum_{s}" for s in sides)])
        for i in range(len(sample)):
            w.writerow(
                [
                    int(sample.iterations[i]),
                    *(repr(float(v)) for v in sample.draws[i]),
                    repr(float(sample.log_posterior[i])),
                    *(int(sample.latent_sums[s][i]) for s in sides),
                ]
            )
    with lat_p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["draw", "side", "event", "x"])
        for k, d in enumerate(sample.snapshot_draws.tolist()):
            for s in sides:
                for j, x in enumerate(sample.latent_snapshots[s][k].tolist()):
                    w.writerow([d, s, j, x])
    meta = {
        "model": sample.model.to_dict(),
        "n_draws": len(sample),
        "n_obs": sample.n_obs,
        "observed_totals": sample.observed_totals,
        "acceptance_rate": sample.acceptance_rate,
        "ess": sample.ess,
    }
    if extra:
        meta.update(extra)
    meta_p.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return [draws_p, lat_p, meta_p]


def read_sample(prefix) -> PosteriorSample:
    """Inverse of ``write_sample``; raises ``ValueError`` on missing or truncated files."""
    draws_p, lat_p, meta_p = _paths(prefix)
    for p in (draws_p, meta_p):
        if not p.exists():
            raise ValueError(f"missing chain file {p}")
    meta = json.loads(meta_p.read_text())
    model = Model.from_dict(meta["model"])
    sides = model.sides
    with draws_p.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = ["iteration", *model.names, "log_posterior", *(f"latent_sum_{s}" for s in sides)]
    if not rows or rows[0] != header:
        raise ValueError(f"{draws_p}: unexpected header")
    body = rows[1:]
    if len(body) != meta["n_draws"] or any(len(r) != len(header) for r in body):
        raise ValueError(f"{draws_p}: truncated ({len(body)} rows, expected {meta['n_draws']})")
    k = len(model.names)
    arr = np.array([[float(v) for v in r[1 : 2 + k]] for r in body]).reshape(len(body), k + 1)
    sums = {s: np.array([int(r[2 + k + j]) for r in body], dtype=np.int64) for j, s in enumerate(sides)}
    snap_idx, snaps = [], {s: [] for s in sides}
    if lat_p.exists():
        grouped: dict = {}
        with lat_p.open(newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for d, s, _, x in reader:
                grouped.setdefault(int(d), {}).setdefault(s, []).append(int(x))
        for d in sorted(grouped):
            snap_idx.append(d)
            for s in sides:
                snaps[s].append(grouped[d][s])
    return PosteriorSample(
        model=model,
        names=list(model.names),
        draws=arr[:, :k],
        log_posterior=arr[:, k],
        iterations=np.array([int(r[0]) for r in body], dtype=np.int64),
        latent_sums=sums,
        snapshot_draws=np.asarray(snap_idx, dtype=np.int64),
        latent_snapshots={s: np.asarray(v, dtype=np.int64).reshape(len(snap_idx), -1) for s, v in snaps.items()},
        acceptance_rate=float(meta["acceptance_rate"]),
        n_obs={s: int(v) for s, v in meta["n_obs"].items()},
        observed_totals={s: int(v) for s, v in meta["observed_totals"].items()},
        ess={k_: float(v) for k_, v in meta["ess"].items()},
    )
