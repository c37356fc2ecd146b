"""Reading, writing and summarising per-event severity records, plus the
synthetic simulation-study generator with its sealed ground-truth file."""

from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .distributions import PowerLawParams, powerlaw_sample
from .error_model import EXP_LINEAR, ObservationModel, corrupt_dataset

SIDES = ("US", "Native")
HEADER = ("battle_id", "side", "casualties")
GROUND_TRUTH_HEADER = ("battle_id", "true_count", "observed", "pre_heap_count")


class DataError(ValueError):
    """Invalid input file; ``problems`` lists every offending row."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Record:
    battle_id: str
    side: str
    casualties: int


@dataclass(frozen=True)
class ObservedDataset:
    records: tuple
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        problems = _validate(self.records)
        if problems:
            raise DataError(problems)

    @property
    def sides(self) -> tuple:
        present = {r.side for r in self.records}
        return tuple(s for s in SIDES if s in present)

    def counts(self, side: str) -> np.ndarray:
        return np.array([r.casualties for r in self.records if r.side == side], dtype=np.int64)

    def n_obs(self, side: str) -> int:
        return sum(r.side == side for r in self.records)

    def as_dict(self) -> dict:
        return {s: self.counts(s) for s in self.sides}


def _validate(records) -> list:
    problems = []
    seen = set()
    for i, r in enumerate(records):
        if r.side not in SIDES:
            problems.append(f"record {i}: unknown side {r.side!r}")
        if not isinstance(r.casualties, (int, np.integer)) or r.casualties < 1:
            problems.append(f"record {i}: casualties must be a positive integer, got {r.casualties!r}")
        key = (r.side, r.battle_id)
        if key in seen:
            problems.append(f"record {i}: duplicate battle_id {r.battle_id!r} for side {r.side}")
        seen.add(key)
    return problems


def load_csv(path, provenance: str | None = None) -> ObservedDataset:
    """Parse a ``battle_id,side,casualties`` file; every bad row is reported
    with its line number (the header is line 1)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError([f"{path}: file is empty"])
    header = tuple(c.strip() for c in rows[0])
    if header != HEADER:
        raise DataError([f"{path}: line 1: expected header {','.join(HEADER)}, got {','.join(header)}"])
    if len(rows) == 1:
        raise DataError([f"{path}: no records after the header"])
    problems, records, seen = [], [], {}
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            problems.append(f"line {line}: expected 3 fields, got {len(row)}")
            continue
        bid, side, raw = (c.strip() for c in row)
        ok = True
        if not bid:
            problems.append(f"line {line}: empty battle_id")
            ok = False
        if side not in SIDES:
            problems.append(f"line {line}: unknown side {side!r} (expected one of {', '.join(SIDES)})")
            ok = False
        try:
            value = int(raw)
        except ValueError:
            problems.append(f"line {line}: casualties {raw!r} is not an integer")
            continue
        if value < 1:
            problems.append(f"line {line}: casualties must be >= 1, got {value}")
            ok = False
        if (side, bid) in seen:
            problems.append(f"line {line}: duplicate battle_id {bid!r} for side {side} (first on line {seen[side, bid]})")
            ok = False
        seen.setdefault((side, bid), line)
        if ok:
            records.append(Record(bid, side, value))
    if problems:
        raise DataError([f"{path}: {p}" for p in problems])
    return ObservedDataset(tuple(records), provenance if provenance is not None else str(path))


def write_csv(dataset: ObservedDataset, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in dataset.records:
            w.writerow((r.battle_id, r.side, r.casualties))
    return path


# --- summaries ------------------------------------------------------------------


def frequency_table(data: ObservedDataset, max_count: int = 10) -> dict:
    """Number of events at each recorded count 1..max_count, per side."""
    if max_count < 1:
        raise ValueError("max_count must be >= 1")
    out = {}
    for s in SIDES:
        c = data.counts(s)
        out[s] = np.bincount(c[c <= max_count], minlength=max_count + 1)[1:]
    return out


def write_frequency_table(table: dict, path) -> Path:
    path = Path(path)
    us, native = table["US"], table["Native"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("count", "us", "native"))
        for k, (a, b) in enumerate(zip(us, native), start=1):
            w.writerow((k, int(a), int(b)))
    return path


def ccdf_points(data, side: str | None = None) -> list:
    """(x, fraction of events >= x) at each distinct recorded value."""
    if isinstance(data, ObservedDataset):
        if side is None:
            raise ValueError("side is required for a dataset")
        values = data.counts(side)
    else:
        values = np.asarray(data, dtype=np.int64)
    if values.size == 0:
        raise ValueError(f"no events for side {side!r}")
    xs, counts = np.unique(values, return_counts=True)
    at_least = np.cumsum(counts[::-1])[::-1] / values.size
    return [(int(x), float(f)) for x, f in zip(xs, at_least)]


def write_ccdf(points: list, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "ccdf"))
        for x, f in points:
            w.writerow((x, repr(f)))
    return path


# --- simulation study -----------------------------------------------------------


@dataclass
class SimulationConfig:
    alpha: float = 2.2
    lam: float = 0.007
    mu: float = 0.05
    p: float = 0.19
    n_true: int = 20_000
    side: str = "Native"
    variant: str = EXP_LINEAR
    eta: float = 0.0
    counting_noise: bool = True

    def validate(self):
        if self.n_true < 1:
            raise ValueError("n_true must be >= 1")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")
        PowerLawParams(self.alpha)
        ObservationModel(self.variant, self.lam, self.mu, self.eta)


@dataclass
class GroundTruth:
    battle_ids: list
    true_count: np.ndarray
    observed: np.ndarray
    pre_heap_count: np.ndarray  # -1 where the event was not recorded
    config: dict = field(default_factory=dict)

    @property
    def total_true(self) -> int:
        return int(self.true_count.sum())

    @property
    def n_true(self) -> int:
        return int(self.true_count.size)


@dataclass
class SimulationStudy:
    true_counts: np.ndarray
    dataset: ObservedDataset
    ground_truth: GroundTruth


def generate_simulation_study(config: SimulationConfig | None = None, rng_seed=None) -> SimulationStudy:
    """Draw ``n_true`` power-law severities and pass them through the
    observation model; only recorded events enter the dataset."""
    config = config or SimulationConfig()
    config.validate()
    seq = np.random.SeedSequence(rng_seed)
    s_draw, s_corrupt = seq.spawn(2)
    w = powerlaw_sample(PowerLawParams(config.alpha), config.n_true, np.random.default_rng(s_draw))
    obs = ObservationModel(config.variant, config.lam, config.mu, config.eta)
    c = corrupt_dataset(w, obs, config.p, np.random.default_rng(s_corrupt), counting_noise=config.counting_noise)
    width = len(str(config.n_true))
    ids = [f"sim{i:0{width}d}" for i in range(config.n_true)]
    kept = np.flatnonzero(c.observed)
    records = tuple(Record(ids[i], config.side, int(z)) for i, z in zip(kept, c.z))
    pre = np.full(config.n_true, -1, dtype=np.int64)
    pre[kept] = c.pre_heap
    meta = asdict(config) | {"rng_seed": rng_seed}
    dataset = ObservedDataset(records, f"simulation study seed={rng_seed}")
    return SimulationStudy(w, dataset, GroundTruth(ids, w, c.observed.copy(), pre, meta))


def write_ground_truth(gt: GroundTruth, path, seal: bool = True) -> Path:
    """Write the ground truth; with ``seal`` the file is made read-only."""
    path = Path(path)
    if path.exists():
        os.chmod(path, 0o644)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GROUND_TRUTH_HEADER)
        for bid, t, o, y in zip(gt.battle_ids, gt.true_count.tolist(), gt.observed.tolist(), gt.pre_heap_count.tolist()):
            w.writerow((bid, t, int(o), y if o else ""))
    if seal:
        os.chmod(path, 0o444)
    return path


def load_ground_truth(path) -> GroundTruth:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != GROUND_TRUTH_HEADER:
            raise DataError([f"{path}: line 1: expected header {','.join(GROUND_TRUTH_HEADER)}"])
        ids, t, o, y = [], [], [], []
        for row in reader:
            ids.append(row[0])
            t.append(int(row[1]))
            o.append(row[2] == "1")
            y.append(int(row[3]) if row[3] else -1)
    return GroundTruth(ids, np.array(t, dtype=np.int64), np.array(o, dtype=bool), np.array(y, dtype=np.int64))
