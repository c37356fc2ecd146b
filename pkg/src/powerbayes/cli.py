"""Command-line entry point.

Every subcommand takes an optional JSON ``--config`` file whose keys are the
fields of the matching ``*Config`` dataclass; command-line flags override the
file. Each run writes ``manifest.json`` echoing the resolved configuration,
and that manifest is itself accepted by ``--config`` to replay the run.
Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .csn import bootstrap_uncertainty, estimate_xmin, gof_pvalue
from .data_io import (
    DataError,
    SimulationConfig,
    ccdf_points,
    frequency_table,
    generate_simulation_study,
    load_csv,
    write_ccdf,
    write_csv,
    write_frequency_table,
    write_ground_truth,
)
from .error_model import EXP_LINEAR, VARIANTS
from .inference import (
    BODIES,
    POWERLAW,
    McmcConfig,
    Model,
    PosteriorSample,
    effective_sample_size,
    pilot_tune,
    read_sample,
    run_chain,
    write_sample,
)
from .predictive import predictive_summary, predictive_totals, x_threshold

log = logging.getLogger("powerbayes")


class UsageError(ValueError):
    pass


# --- configs --------------------------------------------------------------------


@dataclass
class SimulateConfig:
    out: str = "sim"
    alpha: float = 2.2
    lam: float = 0.007
    mu: float = 0.05
    p: float = 0.19
    n_true: int = 20_000
    side: str = "Native"
    seed: int = 0

    def validate(self):
        try:
            self.study().validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    def study(self) -> SimulationConfig:
        return SimulationConfig(self.alpha, self.lam, self.mu, self.p, self.n_true, self.side)


@dataclass
class FitCsnConfig:
    data: str = ""
    out: str = "csn"
    sides: list = field(default_factory=list)
    bootstrap: int = 1000
    gof: int = 1000
    seed: int = 0

    def validate(self):
        if not self.data:
            raise UsageError("--data is required")
        if self.bootstrap < 0 or self.gof < 0:
            raise UsageError("--bootstrap and --gof must be >= 0")


@dataclass
class InferConfig:
    data: str = ""
    out: str = "run"
    sides: list = field(default_factory=list)
    body: str = POWERLAW
    variant: str = EXP_LINEAR
    iterations: int = 1_100_000
    burn_in: int = 100_000
    thin: int = 100
    pilot_iterations: int = 20_000
    latent_block_size: int = 10
    latent_stride: int = 100
    chains: int = 1
    fixed: dict = field(default_factory=dict)
    progress_every: int = 0
    seed: int = 0

    def validate(self):
        if not self.data:
            raise UsageError("--data is required")
        if self.body not in BODIES:
            raise UsageError(f"--body must be one of {BODIES}")
        if self.variant not in VARIANTS:
            raise UsageError(f"--variant must be one of {VARIANTS}")
        if self.chains < 1:
            raise UsageError("--chains must be >= 1")
        if self.pilot_iterations < 10_000:
            raise UsageError("--pilot-iterations must be >= 10000")
        try:
            self.mcmc(0).validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    def mcmc(self, seed) -> McmcConfig:
        return McmcConfig(
            iterations=self.iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            latent_block_size=self.latent_block_size,
            rng_seed=seed,
            latent_stride=self.latent_stride,
            progress_every=self.progress_every,
        )


@dataclass
class PredictConfig:
    run: str = "run"
    out: str = ""
    level: float = 0.95
    threshold_cap: int = 10**6
    seed: int = 0

    def validate(self):
        if not 0 <= self.level < 1:
            raise UsageError("--level must lie in [0, 1)")


@dataclass
class DiagnoseConfig:
    run: str = "run"
    out: str = ""

    def validate(self):
        pass


CONFIGS = {
    "simulate": SimulateConfig,
    "fit-csn": FitCsnConfig,
    "infer": InferConfig,
    "predict": PredictConfig,
    "diagnose": DiagnoseConfig,
}


def resolve_config(command: str, args: argparse.Namespace):
    """Dataclass defaults, then the JSON file, then explicit flags."""
    cls = CONFIGS[command]
    names = {f.name for f in dataclasses.fields(cls)}
    values = {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        if "command" in loaded and isinstance(loaded.get("config"), dict):
            # a manifest from an earlier run
            if loaded["command"] != command:
                raise UsageError(f"manifest is for {loaded['command']!r}, not {command!r}")
            loaded = loaded["config"]
        unknown = set(loaded) - names
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        values.update(loaded)
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        cfg = cls(**values)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc
    cfg.validate()
    return cfg


# --- helpers --------------------------------------------------------------------


def _outdir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_manifest(out: Path, command: str, cfg, outputs: list, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "config": dataclasses.asdict(cfg),
        "seed": getattr(cfg, "seed", None),
        "version": __version__,
        "outputs": sorted(str(Path(o).relative_to(out)) for o in outputs),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _load_data(path: str):
    if not Path(path).exists():
        raise UsageError(f"data file {path} does not exist")
    return load_csv(path)


def _chain_seeds(seed: int, n: int) -> list:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# --- commands -------------------------------------------------------------------


def cmd_simulate(cfg: SimulateConfig) -> list:
    out = _outdir(cfg.out)
    study = generate_simulation_study(cfg.study(), cfg.seed)
    sealed = _outdir(out / "sealed")
    files = [
        write_csv(study.dataset, out / "data.csv"),
        write_ground_truth(study.ground_truth, sealed / "ground_truth.csv"),
        write_frequency_table(frequency_table(study.dataset), out / "frequency.csv"),
        write_ccdf(ccdf_points(study.dataset, cfg.side), out / "ccdf.csv"),
    ]
    summary = {
        "n_obs": len(study.dataset.records),
        "total_observed": int(sum(r.casualties for r in study.dataset.records)),
    }
    files.append(_write_manifest(out, "simulate", cfg, files + [out / "manifest.json"], {"summary": summary}))
    return files


def cmd_fit_csn(cfg: FitCsnConfig) -> list:
    data = _load_data(cfg.data)
    out = _outdir(cfg.out)
    sides = cfg.sides or list(data.sides)
    seeds = dict(zip(sides, _chain_seeds(cfg.seed, len(sides))))
    rows, files, notes = [], [], {}
    for side in sides:
        x = data.counts(side)
        if x.size == 0:
            raise UsageError(f"no records for side {side}")
        fit = estimate_xmin(x)
        boot_seed, gof_seed = np.random.SeedSequence(seeds[side]).spawn(2)
        row = [side, fit.xmin_hat, repr(fit.alpha_hat), repr(fit.ks_distance), fit.n_tail, x.size]
        if cfg.bootstrap:
            boot = bootstrap_uncertainty(x, cfg.bootstrap, boot_seed)
            ok = boot.ok()
            files.append(
                _write_rows(
                    out / f"bootstrap_{side}.csv",
                    ("replicate", "xmin_hat", "alpha_hat", "failed"),
                    [(i, r[0], repr(r[1]), int(f)) for i, (r, f) in enumerate(zip(boot.replicates, boot.failed))],
                )
            )
            sd_x = float(np.std(boot.xmin[ok], ddof=1)) if ok.sum() > 1 else float("nan")
            sd_a = float(np.std(boot.alpha[ok], ddof=1)) if ok.sum() > 1 else float("nan")
            row += [repr(sd_x), repr(sd_a), int((~ok).sum())]
        else:
            notes[side] = "bootstrap omitted (--bootstrap 0)"
            row += ["", "", ""]
        row.append(repr(gof_pvalue(x, fit, cfg.gof, gof_seed)) if cfg.gof else "")
        rows.append(row)
    header = ("side", "xmin_hat", "alpha_hat", "ks_distance", "n_tail", "n", "xmin_sd", "alpha_sd", "bootstrap_failures", "p_value")
    files.insert(0, _write_rows(out / "csn_summary.csv", header, rows))
    extra = {"bootstrap": "omitted" if not cfg.bootstrap else cfg.bootstrap, "notes": notes}
    files.append(_write_manifest(out, "fit-csn", cfg, files + [out / "manifest.json"], extra))
    return files


def _model(cfg: InferConfig, data) -> Model:
    sides = tuple(cfg.sides or data.sides)
    try:
        return Model(sides=sides, body=cfg.body, variant=cfg.variant, fixed=dict(cfg.fixed))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_infer(cfg: InferConfig) -> list:
    data = _load_data(cfg.data)
    model = _model(cfg, data)
    for s in model.sides:
        if data.n_obs(s) < cfg.latent_block_size:
            raise UsageError(f"side {s} has fewer records than --latent-block-size")
    out = _outdir(cfg.out)
    counts = {s: data.counts(s) for s in model.sides}
    files, chains = [], []
    for k, seed in enumerate(_chain_seeds(cfg.seed, cfg.chains)):
        pilot_seed, run_seed = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(2))
        print(f"chain {k}: pilot ({cfg.pilot_iterations} iterations)", file=sys.stderr, flush=True)
        tune = pilot_tune(counts, cfg.pilot_iterations, pilot_seed, model, cfg.latent_block_size)
        mcmc = cfg.mcmc(run_seed)
        mcmc.proposal_cov = tune.proposal_cov
        print(f"chain {k}: main run ({mcmc.iterations} iterations)", file=sys.stderr, flush=True)
        sample = run_chain(counts, mcmc, model, initial=tune.state, progress=sys.stderr)
        info = {
            "chain": k,
            "pilot_seed": pilot_seed,
            "run_seed": run_seed,
            "pilot_acceptance": tune.acceptance_rate,
            "pilot_fallback": tune.fallback,
            "pilot_reason": tune.reason,
            "proposal_cov": tune.proposal_cov.tolist(),
        }
        files += write_sample(sample, out / f"chain_{k}", info)
        chains.append({"prefix": f"chain_{k}", "acceptance_rate": sample.acceptance_rate, "ess": sample.ess, **info})
    files.append(_write_manifest(out, "infer", cfg, files + [out / "manifest.json"], {"model": model.to_dict(), "chains": chains}))
    return files


def _run_chains(run: str) -> list[PosteriorSample]:
    run_dir = Path(run)
    mpath = run_dir / "manifest.json"
    if not mpath.exists():
        raise UsageError(f"{mpath} not found; run `infer` first")
    manifest = json.loads(mpath.read_text())
    chains = manifest.get("chains") or []
    if not chains:
        raise UsageError(f"{mpath} lists no chains")
    return [read_sample(run_dir / c["prefix"]) for c in chains]


def merge_samples(samples: list[PosteriorSample]) -> PosteriorSample:
    if len(samples) == 1:
        return samples[0]
    first = samples[0]
    total = sum(len(s) for s in samples)
    return dataclasses.replace(
        first,
        draws=np.vstack([s.draws for s in samples]),
        log_posterior=np.concatenate([s.log_posterior for s in samples]),
        iterations=np.concatenate([s.iterations for s in samples]),
        latent_sums={k: np.concatenate([s.latent_sums[k] for s in samples]) for k in first.latent_sums},
        snapshot_draws=np.zeros(0, dtype=np.int64),
        latent_snapshots={k: np.zeros((0, v.shape[1]), dtype=np.int64) for k, v in first.latent_snapshots.items()},
        acceptance_rate=sum(s.acceptance_rate * len(s) for s in samples) / total,
        ess={},
    )


def cmd_predict(cfg: PredictConfig) -> list:
    try:
        sample = merge_samples(_run_chains(cfg.run))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _outdir(cfg.out or cfg.run)
    draws = predictive_totals(sample, rng_seed=cfg.seed)
    sides = sample.model.sides
    rows = [
        (d.draw, s, d.n_obs[s], d.n_true[s], d.latent_total[s], d.total_true[s], d.total_observed[s])
        for d in draws
        for s in sides
    ]
    files = [
        _write_rows(
            out / "predictive_draws.csv",
            ("draw", "side", "n_obs", "n_true", "latent_total", "total_true", "total_observed"),
            rows,
        )
    ]
    summary = predictive_summary(draws)
    srows = []
    for side, rec in summary.items():
        for q in ("n_true", "total_true"):
            st = rec[q]
            srows.append((side, q, repr(st["mean"]), repr(st["median"]), repr(st["lower95"]), repr(st["upper95"])))
        srows.append((side, "total_observed", rec["total_observed"], "", "", ""))
        srows.append((side, "n_obs", rec["n_obs"], "", "", ""))
    files.append(_write_rows(out / "predictive_summary.csv", ("side", "quantity", "mean", "median", "lower95", "upper95"), srows))
    trows = [(s, cfg.level, x_threshold(sample, s, cfg.level, cfg.threshold_cap)) for s in sides]
    files.append(_write_rows(out / "thresholds.csv", ("side", "level", "x_threshold"), trows))
    mpath = out / ("predict_manifest.json" if out == Path(cfg.run) else "manifest.json")
    payload = {
        "command": "predict",
        "config": dataclasses.asdict(cfg),
        "seed": cfg.seed,
        "version": __version__,
        "summary": summary,
        "thresholds": {s: int(x) for s, _, x in trows},
    }
    mpath.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    files.append(mpath)
    return files


def cmd_diagnose(cfg: DiagnoseConfig) -> list:
    try:
        samples = _run_chains(cfg.run)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _outdir(cfg.out or cfg.run)
    rows, trace = [], []
    for k, s in enumerate(samples):
        for name in s.model.free:
            v = s.column(name)
            try:
                ess = effective_sample_size(v)
            except ValueError:
                ess = float("nan")
            lo, hi = np.quantile(v, [0.025, 0.975])
            rows.append((k, name, repr(float(v.mean())), repr(float(v.std(ddof=1))), repr(float(lo)), repr(float(hi)), repr(ess), repr(s.acceptance_rate)))
        for i in range(len(s)):
            trace.append((k, int(s.iterations[i]), *(repr(float(x)) for x in s.draws[i]), repr(float(s.log_posterior[i]))))
    names = samples[0].names
    files = [
        _write_rows(out / "diagnostics.csv", ("chain", "parameter", "mean", "sd", "lower95", "upper95", "ess", "acceptance_rate"), rows),
        _write_rows(out / "trace.csv", ("chain", "iteration", *names, "log_posterior"), trace),
    ]
    return files


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-csn": cmd_fit_csn,
    "infer": cmd_infer,
    "predict": cmd_predict,
    "diagnose": cmd_diagnose,
}


# --- parser ---------------------------------------------------------------------


def _fixed(text: str) -> dict:
    out = {}
    for item in text.split(","):
        name, _, value = item.partition("=")
        try:
            out[name.strip()] = float(value)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"expected name=value pairs, got {item!r}") from exc
    return out


def _sides(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="powerbayes", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log to stderr at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with settings; flags override it")
        return p

    p = add("simulate", "generate a simulation-study dataset with sealed ground truth")
    p.add_argument("--out")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--n-true", dest="n_true", type=int)
    p.add_argument("--side", choices=("US", "Native"))
    p.add_argument("--seed", type=int)

    p = add("fit-csn", "power-law fit with KS-selected xmin, bootstrap and goodness of fit")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--sides", type=_sides, help="comma-separated, default: all in the data")
    p.add_argument("--bootstrap", type=int, help="bootstrap rounds (default 1000, 0 to skip)")
    p.add_argument("--gof", type=int, help="synthetic datasets for the p-value (default 1000, 0 to skip)")
    p.add_argument("--seed", type=int)

    p = add("infer", "pilot-tuned Metropolis-Hastings over parameters and latent counts")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--sides", type=_sides)
    p.add_argument("--body", choices=BODIES)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--pilot-iterations", dest="pilot_iterations", type=int)
    p.add_argument("--latent-block-size", dest="latent_block_size", type=int)
    p.add_argument("--latent-stride", dest="latent_stride", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--fix", dest="fixed", type=_fixed, help="hold parameters fixed, e.g. p_Native=0")
    p.add_argument("--progress-every", dest="progress_every", type=int)
    p.add_argument("--seed", type=int)

    p = add("predict", "posterior predictive n_true, totals and x threshold")
    p.add_argument("--run")
    p.add_argument("--out")
    p.add_argument("--level", type=float)
    p.add_argument("--threshold-cap", dest="threshold_cap", type=int)
    p.add_argument("--seed", type=int)

    p = add("diagnose", "ESS, acceptance and trace export for kept draws")
    p.add_argument("--run")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        cfg = resolve_config(args.command, args)
        files = COMMANDS[args.command](cfg)
    except (UsageError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
