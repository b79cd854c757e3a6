"""Experiment grids: algorithm x problem x dimension x instance x seed cells,
each run in isolation with its own RNG, ledger and recorder."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .bench import (
    DEFAULT_DIMS,
    DEFAULT_INSTANCES,
    SUITE,
    SUITE_VERSION,
    get_reference,
    make_problem,
    make_reference,
    reference_path,
    save_reference,
    segment_points,
    target_ladder,
)
from .metrics import FixedTargetRecorder, RunRecord, write_run
from .moea import run_sms_emoa
from .ordering import Relation
from .presel import PreselConfig, run_sa_sms
from .sapeo import run_sapeo

log = logging.getLogger(__name__)

ALGORITHMS = ("sms-emoa", "sa-sms-p", "sa-sms-o", "sapeo-uf-ho", "sapeo-ucp-ho", "sapeo-uc-hc")
OUT_ENV = "SAPEO_OUT"

COMPLETED, SKIPPED, FAILED = "completed", "skipped", "failed"


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "sapeo-out"))


@dataclass(frozen=True)
class ExperimentConfig:
    algorithms: tuple = ALGORITHMS
    problems: tuple = SUITE
    dims: tuple = DEFAULT_DIMS
    instances: tuple = DEFAULT_INSTANCES
    seeds: int = 1
    budget_mult: int = 1000
    mu: int = 100
    alpha: float = 0.05
    local_size: int = 15
    candidates: int = 15
    out: str | None = None
    references: str | None = None
    workers: int = 1
    force: bool = False
    master_seed: int = 0
    # end a run once this precision is reached (saves time for single-target studies)
    stop_target: float | None = None

    def __post_init__(self):
        for name in ("algorithms", "problems", "dims", "instances"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, value)
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms: {', '.join(bad)}")
        for p in self.problems:
            make_problem(p, 2)
        for name in ("seeds", "budget_mult", "mu", "local_size", "candidates", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if any(d < 2 for d in self.dims):
            raise ValueError("dimensions must be at least 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def out_dir(self) -> Path:
        return Path(self.out) if self.out else default_out()

    @property
    def reference_dir(self) -> Path:
        return Path(self.references) if self.references else self.out_dir / "references"

    def run_settings(self) -> dict:
        """Settings that change the outcome of a cell."""
        return {
            "budget_mult": self.budget_mult,
            "mu": self.mu,
            "alpha": self.alpha,
            "local_size": self.local_size,
            "candidates": self.candidates,
            "master_seed": self.master_seed,
            "stop_target": self.stop_target,
            "suite_version": SUITE_VERSION,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.run_settings(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path, **overrides) -> ExperimentConfig:
    """Config from a JSON document; ``None`` overrides are ignored."""
    data = json.loads(Path(path).read_text()) if path else {}
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)


@dataclass(frozen=True)
class Cell:
    algorithm: str
    problem: str
    dim: int
    instance: int
    seed: int

    @property
    def stem(self) -> str:
        return f"d{self.dim}_i{self.instance}_s{self.seed}"

    def folder(self, out: Path) -> Path:
        return Path(out) / "runs" / self.algorithm / self.problem

    def seed_sequence(self, master_seed: int) -> np.random.SeedSequence:
        # shared by all algorithms on the same problem cell: common random numbers
        key = zlib.crc32(self.problem.encode())
        return np.random.SeedSequence([master_seed, key, self.dim, self.instance, self.seed])


def cells(cfg: ExperimentConfig) -> list[Cell]:
    return [
        Cell(a, p, d, i, s)
        for a in cfg.algorithms
        for p in cfg.problems
        for d in cfg.dims
        for i in cfg.instances
        for s in range(cfg.seeds)
    ]


@dataclass
class CellResult:
    cell: Cell
    status: str
    reason: str = ""
    spent: int = 0
    seconds: float = 0.0
    cached: bool = False


class _StopAtTarget:
    """Recorder proxy that closes the budget once a precision is reached."""

    def __init__(self, inner: FixedTargetRecorder, target: float):
        self.inner = inner
        self.target = target
        self.ledger = None

    def attach(self, evaluator):
        self.ledger = evaluator.ledger

    def _maybe_stop(self):
        if self.inner.precision <= self.target and self.ledger is not None:
            self.ledger.cap = self.ledger.spent

    def on_evaluation(self, x, values):
        self.inner.on_evaluation(x, values)
        self._maybe_stop()

    def on_recommend(self, x):
        self.inner.on_recommend(x)
        self._maybe_stop()


def execute(cell: Cell, cfg: ExperimentConfig, recorder, rng):
    """Run one algorithm on one problem and return its ``RunResult``."""
    problem = make_problem(cell.problem, cell.dim, cell.instance)
    budget = cfg.budget_mult * cell.dim
    common = dict(mu=cfg.mu, budget=budget, rng=rng, recorder=recorder)
    if cell.algorithm == "sms-emoa":
        return run_sms_emoa(problem, cell.dim, **common)
    if cell.algorithm.startswith("sa-sms-"):
        relation = Relation.P if cell.algorithm.endswith("-p") else Relation.O
        return run_sa_sms(
            problem, cell.dim, PreselConfig(cfg.candidates, relation),
            alpha=cfg.alpha, local_size=cfg.local_size, **common,
        )
    strategy = cell.algorithm.removeprefix("sapeo-")
    return run_sapeo(problem, cell.dim, strategy, alpha=cfg.alpha, local_size=cfg.local_size, **common)


def run_cell(cell: Cell, cfg: ExperimentConfig) -> CellResult:
    """Execute one cell and persist its run record; never raises."""
    start = time.perf_counter()
    folder = cell.folder(cfg.out_dir)
    summary = folder / f"{cell.stem}.json"
    if not cfg.force and summary.exists():
        try:
            data = json.loads(summary.read_text())
            if data.get("status") == COMPLETED and data.get("config_hash") == cfg.config_hash():
                return CellResult(cell, COMPLETED, spent=data["spent"], cached=True)
        except (json.JSONDecodeError, KeyError):
            pass
    problem = make_problem(cell.problem, cell.dim, cell.instance)
    try:
        reference = get_reference(problem, cfg.reference_dir)
    except FileNotFoundError as exc:
        return CellResult(cell, SKIPPED, reason=str(exc))
    try:
        rng = np.random.default_rng(cell.seed_sequence(cfg.master_seed))
        record = RunRecord(cell.problem, cell.algorithm, cell.seed, tuple(target_ladder()))
        recorder = FixedTargetRecorder(problem, reference, record)
        hook = recorder
        if cfg.stop_target is not None:
            hook = _StopAtTarget(recorder, cfg.stop_target)
        result = execute(cell, cfg, hook, rng)
        record = recorder.close(result.spent)
        check_run(result, cfg.budget_mult * cell.dim, record)
        meta = {
            "status": COMPLETED,
            "config_hash": cfg.config_hash(),
            "settings": cfg.run_settings(),
            "dim": cell.dim,
            "instance": cell.instance,
            "budget": cfg.budget_mult * cell.dim,
            "generations": result.generations,
            "reference_hv": reference.reference_hv,
        }
        write_run(folder, cell.stem, recorder, meta)
        return CellResult(cell, COMPLETED, spent=record.spent, seconds=time.perf_counter() - start)
    except Exception as exc:  # a broken cell must not take the grid down
        log.error("cell %s failed: %s", cell, exc)
        return CellResult(cell, FAILED, reason="".join(traceback.format_exception_only(exc)).strip())


def check_run(result, budget: int, record: RunRecord) -> None:
    """Run-level invariants: ledger cap, monotone tolerance and precision,
    and no genome evaluated twice."""
    if result.spent > budget:
        raise AssertionError(f"spent {result.spent} exceeds the budget {budget}")
    archive = result.evaluator.archive_x
    if len(archive) != result.spent:
        raise AssertionError("archive size and ledger disagree")
    if len({row.tobytes() for row in archive}) != len(archive):
        raise AssertionError("a genome was evaluated twice")
    precisions = [p for _, p in record.events]
    if any(b > a for a, b in zip(precisions, precisions[1:])):
        raise AssertionError("precision trace increased")
    eps = [h[1] for h in (result.history or []) if isinstance(h, tuple) and len(h) == 3]
    for a, b in zip(eps, eps[1:]):
        if np.any(b > a):
            raise AssertionError("tolerance schedule increased")


def _run_cell_star(args):
    return run_cell(*args)


def run_grid(cfg: ExperimentConfig, progress=None) -> tuple[int, list[CellResult]]:
    """Execute every cell; returns (exit status, results).

    Status is 0 when every cell completed and 2 when any was skipped or failed.
    """
    todo = cells(cfg)
    results: list[CellResult] = []
    if cfg.workers == 1:
        for c in todo:
            results.append(run_cell(c, cfg))
            if progress:
                progress(results[-1])
    else:
        with ProcessPoolExecutor(cfg.workers) as pool:
            futures = [pool.submit(run_cell, c, cfg) for c in todo]
            for fut in as_completed(futures):
                results.append(fut.result())
                if progress:
                    progress(results[-1])
    order = {c: k for k, c in enumerate(todo)}
    results.sort(key=lambda r: order[r.cell])
    write_grid_summary(cfg, results)
    ok = all(r.status == COMPLETED for r in results)
    return (0 if ok else 2), results


def write_grid_summary(cfg: ExperimentConfig, results: list[CellResult]) -> Path:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "config_hash": cfg.config_hash(),
        "cells": [
            {**asdict(r.cell), "status": r.status, "reason": r.reason, "spent": r.spent, "cached": r.cached}
            for r in results
        ],
    }
    path = out / "grid_summary.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def build_reference(problem_id: str, dim: int, instance: int, root, runs: int = 20,
                    budget_mult: int = 10_000, mu: int = 100, seed: int = 0, force: bool = False):
    """Empirical reference front: the non-dominated union of several long
    SMS-EMOA runs plus points on the segment between the two optima."""
    problem = make_problem(problem_id, dim, instance)
    if problem.is_analytic:
        return None
    path = reference_path(root, problem)
    if path.exists() and not force:
        return path
    points = [segment_points(problem, 1000)]
    for r in range(runs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(problem.key.encode()), r]))
        result = run_sms_emoa(problem, dim, mu=mu, budget=budget_mult * dim, rng=rng)
        points.append(np.asarray(result.evaluator.archive_f))
    ref = make_reference(problem, np.vstack(points))
    return save_reference(root, problem, ref)
