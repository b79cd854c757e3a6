"""Fixed-target recording of runs and expected runtime aggregation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bench import Reference, normalised_precision, target_ladder

UNREACHED = math.inf
CONSISTENCY_EVERY = 100


@dataclass
class RunRecord:
    problem: str
    algorithm: str
    seed: int
    targets: tuple = tuple(target_ladder())
    events: list = field(default_factory=list)  # (eval_index, precision)
    target_hits: dict = field(default_factory=dict)
    spent: int = 0

    @property
    def last_index(self) -> int:
        return self.events[-1][0] if self.events else 0

    def hit(self, target: float) -> int | None:
        return self.target_hits.get(_target_key(self.targets, target))


def _target_key(targets, target: float) -> float:
    for t in targets:
        if math.isclose(t, target, rel_tol=1e-9):
            return t
    raise KeyError(f"target {target} is not on the ladder")


def record_event(rec: RunRecord, eval_index: int, archive_precision: float) -> RunRecord:
    """Append ``(eval_index, precision)`` and note every target crossed for
    the first time."""
    if eval_index <= rec.last_index:
        raise ValueError(f"evaluation index {eval_index} does not follow {rec.last_index}")
    rec.events.append((int(eval_index), float(archive_precision)))
    rec.spent = max(rec.spent, int(eval_index))
    for t in rec.targets:
        if t not in rec.target_hits and archive_precision <= t:
            rec.target_hits[t] = int(eval_index)
    return rec


class ParetoArchive:
    """Non-dominated set of normalised points, kept sorted by the first objective."""

    def __init__(self):
        self.points = np.empty((0, 2))

    def add(self, p) -> bool:
        """Insert ``p``; returns whether the set changed."""
        p = np.asarray(p, dtype=float)
        pts = self.points
        if len(pts) and np.any(np.all(pts <= p, axis=1)):
            return False
        keep = ~np.all(p <= pts, axis=1)
        pts = pts[keep]
        pos = np.searchsorted(pts[:, 0], p[0])
        self.points = np.insert(pts, pos, p, axis=0)
        return True


class FixedTargetRecorder:
    """Recorder that turns evaluation and recommendation events into a
    precision trace over the archive of everything seen so far.

    Recommended genomes are valued with an uncharged call to ``true_fn``
    and credited to the evaluation count at which they were recommended.
    """

    def __init__(self, true_fn: Callable, reference: Reference, record: RunRecord):
        self.true_fn = true_fn
        self.reference = reference
        self.record = record
        self.archive = ParetoArchive()
        self.rows: list[tuple] = []  # (eval_index, f1, f2, precision, recommended)
        self._seen: list[np.ndarray] = []
        self._count = 0
        self._pending: float | None = None
        self._current = math.inf

    @property
    def precision(self) -> float:
        """Precision of everything seen so far (``inf`` before the first event)."""
        return self._current

    def _absorb(self, values: np.ndarray) -> float:
        self._seen.append(values)
        if self.archive.add(self.reference.normalise(values)):
            self._current = normalised_precision(self.reference.reference_hv, self.archive.points)
        return self._current

    def _check(self) -> None:
        full = normalised_precision(self.reference.reference_hv, self.reference.normalise(np.array(self._seen)))
        if not math.isclose(full, self._current, rel_tol=1e-9, abs_tol=1e-12):
            raise RuntimeError(f"incremental precision {self._current} drifted from {full}")

    def _flush(self) -> None:
        if self._pending is not None:
            record_event(self.record, self._count, self._pending)
            self._pending = None

    def on_evaluation(self, x, values) -> None:
        self._flush()
        self._count += 1
        values = np.asarray(values, dtype=float)
        prec = self._absorb(values)
        self._pending = prec
        self.rows.append((self._count, values[0], values[1], prec, 0))
        if self._count % CONSISTENCY_EVERY == 0:
            self._check()

    def on_recommend(self, x) -> None:
        if self._count == 0:
            return
        values = np.asarray(self.true_fn(np.asarray(x, dtype=float)), dtype=float)
        prec = self._absorb(values)
        self._pending = prec
        self.rows.append((self._count, values[0], values[1], prec, 1))

    def close(self, spent: int | None = None) -> RunRecord:
        self._flush()
        if self._seen:
            self._check()
        self.record.spent = self._count if spent is None else spent
        return self.record


def ert(runs: Sequence[RunRecord], target: float) -> float:
    """Restart expected runtime: all evaluations spent over the number of
    successes; ``UNREACHED`` when nothing succeeded."""
    if not runs:
        raise ValueError("ERT needs at least one run")
    hits = [r.hit(target) for r in runs]
    successes = sum(h is not None for h in hits)
    if successes == 0:
        return UNREACHED
    total = sum(h if h is not None else r.spent for h, r in zip(hits, runs))
    return total / successes


@dataclass(frozen=True)
class BootstrapSummary:
    median: float
    p10: float
    p90: float
    mean: float
    samples: int


def bootstrap_ert(
    runs: Sequence[RunRecord],
    target: float,
    samples: int = 1000,
    rng: np.random.Generator | None = None,
) -> BootstrapSummary:
    """Simulated restarts: draw runs with replacement, adding up their cost
    until a successful one comes up; each total is one sample."""
    if not runs:
        raise ValueError("bootstrap needs at least one run")
    rng = np.random.default_rng() if rng is None else rng
    hits = [r.hit(target) for r in runs]
    ok = np.array([h for h in hits if h is not None], dtype=float)
    fail = np.array([r.spent for h, r in zip(hits, runs) if h is None], dtype=float)
    if len(ok) == 0:
        return BootstrapSummary(UNREACHED, UNREACHED, UNREACHED, UNREACHED, samples)
    # the number of failed draws before the first success is geometric
    restarts = rng.geometric(len(ok) / len(runs), samples) - 1
    totals = rng.choice(ok, samples)
    if len(fail) and restarts.sum():
        costs = rng.choice(fail, int(restarts.sum()))
        owner = np.repeat(np.arange(samples), restarts)
        totals += np.bincount(owner, weights=costs, minlength=samples)
    p10, med, p90 = np.percentile(totals, [10, 50, 90])
    return BootstrapSummary(float(med), float(p10), float(p90), float(totals.mean()), samples)


RUN_COLUMNS = ("eval_index", "f1", "f2", "precision", "recommended_flag")


def write_run(folder, stem: str, recorder: FixedTargetRecorder, meta: dict) -> tuple[Path, Path]:
    """Persist the event rows as CSV and the summary as JSON next to it."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    rows_path = folder / f"{stem}.csv"
    with rows_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for idx, f1, f2, prec, flag in recorder.rows:
            w.writerow((idx, repr(float(f1)), repr(float(f2)), repr(float(prec)), flag))
    rec = recorder.record
    summary = dict(meta)
    summary.update(
        problem=rec.problem,
        algorithm=rec.algorithm,
        seed=rec.seed,
        spent=rec.spent,
        targets=[float(t) for t in rec.targets],
        target_hits={repr(float(t)): i for t, i in rec.target_hits.items()},
        final_precision=rec.events[-1][1] if rec.events else None,
    )
    json_path = folder / f"{stem}.json"
    tmp = json_path.with_suffix(".tmp")
    tmp.write_text(json.dumps(summary, indent=2, sort_keys=True))
    tmp.replace(json_path)
    return rows_path, json_path


def load_record(json_path) -> tuple[RunRecord, dict]:
    """Rebuild a ``RunRecord`` (hits and spent) from a JSON summary."""
    data = json.loads(Path(json_path).read_text())
    targets = tuple(data["targets"])
    hits = {_target_key(targets, float(t)): int(i) for t, i in data["target_hits"].items()}
    rec = RunRecord(data["problem"], data["algorithm"], data["seed"], targets, [], hits, data["spent"])
    return rec, data


def replay_precision(rows_path, reference: Reference) -> list[tuple[int, float]]:
    """Per-index precision recomputed from scratch from a persisted run."""
    data = np.loadtxt(rows_path, delimiter=",", skiprows=1, ndmin=2)
    out = []
    for idx in np.unique(data[:, 0]):
        seen = data[data[:, 0] <= idx, 1:3]
        out.append((int(idx), normalised_precision(reference.reference_hv, reference.normalise(seen))))
    return out
