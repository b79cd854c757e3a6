"""Bi-objective test problems built from pairs of shifted single-objective
functions, with ideal/nadir normalisation and reference fronts.

Each base function has its optimum value 0 at its shift. Apart from the
sphere, functions are evaluated in rescaled coordinates
``z = 0.05 * (x - shift)`` so that the search box maps onto the usual
``[-5, 5]`` benchmark range.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .hypervolume import hv2d

SUITE_VERSION = "mini-1"
SHIFT_RANGE = 50.0
BBOB_SCALE = 0.05

GROUPS = ("separable", "moderate", "ill-conditioned", "multimodal", "weakly-structured")


def _ellipsoid_weights(n):
    return 10.0 ** (6.0 * np.arange(n) / max(n - 1, 1))


def sphere(z, ctx):
    return np.sum(z**2, axis=-1)


def ellipsoid_separable(z, ctx):
    return np.sum(_ellipsoid_weights(z.shape[-1]) * z**2, axis=-1)


def attractive_sector(z, ctx):
    s = np.where(z * ctx["sign"] > 0, 100.0, 1.0)
    return np.sum((s * z) ** 2, axis=-1) ** 0.9


def rosenbrock(z, ctx):
    n = z.shape[-1]
    w = max(1.0, math.sqrt(n) / 8.0) * z + 1.0
    a, b = w[..., :-1], w[..., 1:]
    return np.sum(100.0 * (a**2 - b) ** 2 + (a - 1.0) ** 2, axis=-1)


def sharp_ridge(z, ctx):
    return z[..., 0] ** 2 + 100.0 * np.sqrt(np.sum(z[..., 1:] ** 2, axis=-1))


def sum_of_different_powers(z, ctx):
    n = z.shape[-1]
    p = 2.0 + 4.0 * np.arange(n) / max(n - 1, 1)
    return np.sqrt(np.sum(np.abs(z) ** p, axis=-1))


def rastrigin(z, ctx):
    n = z.shape[-1]
    return 10.0 * (n - np.sum(np.cos(2 * np.pi * z), axis=-1)) + np.sum(z**2, axis=-1)


def schaffer_f7(z, ctx):
    n = z.shape[-1]
    s = np.sqrt(z[..., :-1] ** 2 + z[..., 1:] ** 2)
    inner = np.sqrt(s) + np.sqrt(s) * np.sin(50.0 * s**0.2) ** 2
    return (np.sum(inner, axis=-1) / (n - 1)) ** 2


_SCHWEFEL_OPT = 420.968746


def _schwefel_raw(z):
    w = _SCHWEFEL_OPT + 80.0 * z
    penalty = np.sum(np.maximum(np.abs(w) - 500.0, 0.0) ** 2, axis=-1)
    return 418.9828872724339 * z.shape[-1] - np.sum(w * np.sin(np.sqrt(np.abs(w))), axis=-1) + penalty


def schwefel(z, ctx):
    return _schwefel_raw(z) - _schwefel_raw(np.zeros(z.shape[-1]))


def gallagher_101(z, ctx):
    centers, weights, conds = ctx["peaks"]
    n = z.shape[-1]
    diff = z[..., None, :] - centers
    vals = weights * np.exp(-np.sum(conds * diff**2, axis=-1) / (2.0 * n))
    return (10.0 - np.max(vals, axis=-1)) ** 2


def _gallagher_peaks(rng, n):
    centers = rng.uniform(-4.0, 4.0, (101, n))
    centers[0] = 0.0
    weights = np.empty(101)
    weights[0] = 10.0
    weights[1:] = 1.1 + 8.0 * np.arange(100) / 99.0
    exps = rng.permutation(np.linspace(0, 1, 100))
    ramp = 0.5 * np.arange(n) / max(n - 1, 1)
    conds = np.empty((101, n))
    conds[0] = 1000.0**ramp / 1000.0**0.25
    for k in range(1, 101):
        cond = 1000.0 ** (2.0 * exps[k - 1])
        conds[k] = rng.permutation(cond**ramp) / cond**0.25
    return centers, weights, conds


@dataclass(frozen=True)
class BaseFunction:
    name: str
    group: str
    fn: object
    scale: float = BBOB_SCALE
    index: int = 0


BASE_FUNCTIONS = {
    f.name: f
    for f in [
        BaseFunction("sphere", "separable", sphere, 1.0, 1),
        BaseFunction("ellipsoid-separable", "separable", ellipsoid_separable, BBOB_SCALE, 2),
        BaseFunction("attractive-sector", "moderate", attractive_sector, BBOB_SCALE, 6),
        BaseFunction("rosenbrock", "moderate", rosenbrock, BBOB_SCALE, 8),
        BaseFunction("sharp-ridge", "ill-conditioned", sharp_ridge, BBOB_SCALE, 13),
        BaseFunction("sum-of-different-powers", "ill-conditioned", sum_of_different_powers, BBOB_SCALE, 14),
        BaseFunction("rastrigin", "multimodal", rastrigin, BBOB_SCALE, 15),
        BaseFunction("schaffer-f7", "multimodal", schaffer_f7, BBOB_SCALE, 17),
        BaseFunction("schwefel", "weakly-structured", schwefel, BBOB_SCALE, 20),
        BaseFunction("gallagher-101", "weakly-structured", gallagher_101, BBOB_SCALE, 21),
    ]
}


@dataclass(frozen=True)
class ShiftedFunction:
    """A base function with an instance-specific optimum location."""

    base: BaseFunction
    shift: np.ndarray
    ctx: dict = field(default_factory=dict, compare=False)

    @classmethod
    def create(cls, name: str, dim: int, seed_key: tuple) -> ShiftedFunction:
        base = BASE_FUNCTIONS[name]
        rng = np.random.default_rng(np.random.SeedSequence(list(seed_key)))
        shift = rng.uniform(-SHIFT_RANGE, SHIFT_RANGE, dim)
        ctx = {"sign": np.where(rng.random(dim) < 0.5, -1.0, 1.0)}
        if name == "gallagher-101":
            ctx["peaks"] = _gallagher_peaks(rng, dim)
        return cls(base, shift, ctx)

    def __call__(self, x) -> np.ndarray:
        z = self.base.scale * (np.asarray(x, dtype=float) - self.shift)
        return self.base.fn(z, self.ctx)


@dataclass(frozen=True)
class BiObjectiveProblem:
    """``x -> (first(x), second(x))`` on ``[-100, 100]^n``.

    The ideal point is built from each objective's own optimum and the nadir
    from each objective evaluated at the other objective's optimum.
    """

    first_name: str
    second_name: str
    dim: int
    instance: int

    @property
    def id(self) -> str:
        return problem_id(self.first_name, self.second_name)

    @property
    def key(self) -> str:
        return f"{self.id}_i{self.instance}_d{self.dim}"

    @cached_property
    def first(self) -> ShiftedFunction:
        return ShiftedFunction.create(self.first_name, self.dim, self._seed(0))

    @cached_property
    def second(self) -> ShiftedFunction:
        return ShiftedFunction.create(self.second_name, self.dim, self._seed(1))

    def _seed(self, slot: int) -> tuple:
        name = self.first_name if slot == 0 else self.second_name
        return (BASE_FUNCTIONS[name].index, self.instance, self.dim, slot, 20170410)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {x.shape[-1]}")
        if np.any(np.abs(x) > 100.0):
            raise ValueError("point outside the search box")
        return np.stack([self.first(x), self.second(x)], axis=-1)

    @cached_property
    def ideal(self) -> np.ndarray:
        return np.array([self.first(self.first.shift), self.second(self.second.shift)])

    @cached_property
    def nadir(self) -> np.ndarray:
        return np.array([self.first(self.second.shift), self.second(self.first.shift)])

    @property
    def is_analytic(self) -> bool:
        return self.first_name == "sphere" and self.second_name == "sphere"

    def normalise(self, f) -> np.ndarray:
        return (np.asarray(f, dtype=float) - self.ideal) / (self.nadir - self.ideal)


def problem_id(first: str, second: str) -> str:
    return f"{first}+{second}"


def parse_problem_id(pid: str) -> tuple[str, str]:
    if pid == "double-sphere":
        return "sphere", "sphere"
    first, _, second = pid.partition("+")
    if first not in BASE_FUNCTIONS or second not in BASE_FUNCTIONS:
        raise ValueError(f"unknown problem {pid!r}")
    return first, second


def make_problem(pid: str, dim: int, instance: int = 1) -> BiObjectiveProblem:
    first, second = parse_problem_id(pid)
    return BiObjectiveProblem(first, second, dim, instance)


_CORE5 = ("sphere", "rosenbrock", "sharp-ridge", "rastrigin", "schwefel")
SAME_GROUP = (
    ("sphere", "ellipsoid-separable"),
    ("attractive-sector", "rosenbrock"),
    ("sharp-ridge", "sum-of-different-powers"),
    ("rastrigin", "schaffer-f7"),
    ("schwefel", "gallagher-101"),
)
CROSS_GROUP = tuple((a, b) for i, a in enumerate(_CORE5) for b in _CORE5[i + 1:])
SUITE = tuple(problem_id(a, b) for a, b in CROSS_GROUP + SAME_GROUP)
SAME_GROUP_SUITE = tuple(problem_id(a, b) for a, b in SAME_GROUP)
DEFAULT_DIMS = (2, 3, 5, 10)
DEFAULT_INSTANCES = (1, 2, 3, 4, 5)


def target_ladder(count: int = 25, high: float = 1e1, low: float = 1e-3) -> np.ndarray:
    return np.logspace(math.log10(high), math.log10(low), count)


@dataclass(frozen=True)
class Reference:
    front: np.ndarray  # raw objective values
    ideal: np.ndarray
    nadir: np.ndarray
    reference_hv: float

    def normalise(self, f) -> np.ndarray:
        return (np.asarray(f, dtype=float) - self.ideal) / (self.nadir - self.ideal)


def _nondominated(points: np.ndarray) -> np.ndarray:
    pts = points[np.lexsort((points[:, 1], points[:, 0]))]
    keep = []
    best = np.inf
    for p in pts:
        if p[1] < best:
            keep.append(p)
            best = p[1]
    return np.array(keep).reshape(-1, 2)


def make_reference(problem: BiObjectiveProblem, points) -> Reference:
    front = _nondominated(np.asarray(points, dtype=float).reshape(-1, 2))
    norm = (front - problem.ideal) / (problem.nadir - problem.ideal)
    return Reference(front, problem.ideal, problem.nadir, hv2d(norm, (1.0, 1.0)))


def segment_points(problem: BiObjectiveProblem, count: int = 10_000) -> np.ndarray:
    """Objective values along the straight line between both optima."""
    t = np.linspace(0.0, 1.0, count)[:, None]
    xs = problem.first.shift + t * (problem.second.shift - problem.first.shift)
    return problem.evaluate(xs)


def analytic_reference(problem: BiObjectiveProblem, count: int = 10_000) -> Reference:
    """Reference for the double sphere, whose Pareto set is the segment
    between the two optima."""
    if not problem.is_analytic:
        raise ValueError(f"{problem.id} has no analytic Pareto front")
    return make_reference(problem, segment_points(problem, count))


def reference_path(root, problem: BiObjectiveProblem) -> Path:
    return Path(root) / SUITE_VERSION / f"{problem.key}.csv"


def save_reference(root, problem: BiObjectiveProblem, ref: Reference) -> Path:
    path = reference_path(root, problem)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f1", "f2"])
        w.writerows((repr(float(a)), repr(float(b))) for a, b in ref.front)
    _update_manifest(Path(root) / SUITE_VERSION, problem, ref)
    return path


def _update_manifest(folder: Path, problem: BiObjectiveProblem, ref: Reference) -> None:
    path = folder / "manifest.json"
    data = json.loads(path.read_text()) if path.exists() else {"suite_version": SUITE_VERSION, "problems": {}}
    data["problems"][problem.key] = {
        "problem": problem.id,
        "dim": problem.dim,
        "instance": problem.instance,
        "ideal": problem.ideal.tolist(),
        "nadir": problem.nadir.tolist(),
        "reference_hv": ref.reference_hv,
        "front_size": len(ref.front),
    }
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True))
    tmp.replace(path)


def load_reference(root, problem: BiObjectiveProblem) -> Reference:
    path = reference_path(root, problem)
    if not path.exists():
        raise FileNotFoundError(f"no reference front for {problem.key} under {root}")
    front = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return make_reference(problem, front)


def get_reference(problem: BiObjectiveProblem, root=None) -> Reference:
    """Analytic reference for the double sphere, persisted one otherwise."""
    if problem.is_analytic:
        return analytic_reference(problem)
    if root is None:
        raise FileNotFoundError(f"{problem.key} needs a persisted reference front")
    return load_reference(root, problem)


def distance_to_region(norm_points: np.ndarray) -> float:
    """Euclidean distance of the closest normalised point to ``[-inf, 1]^2``."""
    excess = np.maximum(np.asarray(norm_points, dtype=float) - 1.0, 0.0)
    return float(np.sqrt(np.sum(excess**2, axis=1)).min())


def normalised_precision(reference_hv: float, norm_points) -> float:
    """Precision of points already in normalised objective space."""
    pts = np.asarray(norm_points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("precision needs at least one point")
    inside = np.all(pts <= 1.0, axis=1)
    if not inside.any():
        return reference_hv + distance_to_region(pts)
    return reference_hv - hv2d(pts[inside], (1.0, 1.0))


def precision(ref: Reference, archive) -> float:
    """Reference hypervolume minus the hypervolume of the normalised archive.

    When no archive point weakly dominates the nadir, the distance of the
    closest point to that region is added on top of the reference value.
    """
    return normalised_precision(ref.reference_hv, ref.normalise(np.asarray(archive, dtype=float).reshape(-1, 2)))
