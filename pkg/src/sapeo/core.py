"""Shared domain types: confidence boxes, individuals, the budget ledger and
the evaluation gateway every algorithm goes through."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

LOWER_BOUND = -100.0
UPPER_BOUND = 100.0


class BudgetExhausted(Exception):
    """Raised when an exact evaluation would exceed the evaluation cap."""


def default_budget(dim: int, multiplier: int = 1000) -> int:
    return multiplier * dim


def check_genome(x, dim: int | None = None) -> np.ndarray:
    """Validate a decision vector and return it as a read-only float array."""
    x = np.array(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"genome must be 1-D, got shape {x.shape}")
    if dim is not None and x.size != dim:
        raise ValueError(f"genome has length {x.size}, expected {dim}")
    if np.any(x < LOWER_BOUND) or np.any(x > UPPER_BOUND) or not np.all(np.isfinite(x)):
        raise ValueError("genome lies outside the search box [-100, 100]^n")
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class ConfidenceBox:
    """Per-objective interval ``[center - radius, center + radius]``."""

    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        radius = np.asarray(self.radius, dtype=float)
        if center.shape != radius.shape or center.ndim != 1:
            raise ValueError("center and radius must be 1-D vectors of equal length")
        if not np.all(np.isfinite(center)):
            raise ValueError("box center must be finite")
        if np.any(radius < 0) or not np.all(np.isfinite(radius)):
            raise ValueError("box radius must be finite and non-negative")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", radius)

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius

    @property
    def is_point(self) -> bool:
        return bool(np.all(self.radius == 0))

    @classmethod
    def point(cls, values) -> ConfidenceBox:
        values = np.asarray(values, dtype=float)
        return cls(values, np.zeros_like(values))


@dataclass(frozen=True, eq=False)
class Individual:
    """A genome together with its fitness state.

    ``box`` is ``None`` until the individual has been predicted or evaluated.
    Exact individuals carry a zero-radius box at their true objective values.
    """

    genome: np.ndarray
    box: ConfidenceBox | None = None
    exact: bool = False
    birth: int = 0

    def __post_init__(self):
        object.__setattr__(self, "genome", check_genome(self.genome))

    def evaluated(self, values) -> Individual:
        return Individual(self.genome, ConfidenceBox.point(values), True, self.birth)

    def predicted(self, box: ConfidenceBox) -> Individual:
        if self.exact:
            raise ValueError("an exact individual cannot go back to a prediction")
        return Individual(self.genome, box, False, self.birth)

    @property
    def values(self) -> np.ndarray:
        if not self.exact:
            raise ValueError("individual has not been evaluated exactly")
        return self.box.center


def as_box(ind: Individual) -> ConfidenceBox:
    if ind.box is None:
        raise ValueError("individual has no fitness yet")
    return ind.box


def population_arrays(pop: list[Individual]) -> tuple[np.ndarray, np.ndarray]:
    """Stack centers and radii of a population into ``(m, d)`` arrays."""
    boxes = [as_box(ind) for ind in pop]
    return np.array([b.center for b in boxes]), np.array([b.radius for b in boxes])


@dataclass
class BudgetLedger:
    cap: int
    spent: int = 0

    @property
    def remaining(self) -> int:
        return self.cap - self.spent

    def charge(self, k: int = 1) -> BudgetLedger:
        if k < 0:
            raise ValueError("cannot charge a negative number of evaluations")
        if self.spent + k > self.cap:
            raise BudgetExhausted(f"{self.spent} + {k} exceeds cap {self.cap}")
        self.spent += k
        return self


class Recorder(Protocol):
    def on_evaluation(self, x: np.ndarray, values: np.ndarray) -> None: ...

    def on_recommend(self, x: np.ndarray) -> None: ...


@dataclass
class Evaluator:
    """Gateway to the true objective function.

    Charges the ledger once per distinct genome, keeps the archive of exact
    evaluations in insertion order and forwards events to the recorder.
    Genomes already in the archive are answered from it without a charge.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    ledger: BudgetLedger
    recorder: Recorder | None = None
    cache_hits: int = 0
    _X: np.ndarray | None = None
    _F: np.ndarray | None = None
    _size: int = 0
    _index: dict = field(default_factory=dict)

    def __post_init__(self):
        # recorders may want the run's ledger, e.g. to end a run early
        attach = getattr(self.recorder, "attach", None)
        if attach is not None:
            attach(self)

    def lookup(self, x) -> np.ndarray | None:
        i = self._index.get(np.asarray(x, dtype=float).tobytes())
        return None if i is None else self._F[i].copy()

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if key in self._index:
            self.cache_hits += 1
            return self._F[self._index[key]].copy()
        self.ledger.charge(1)
        values = np.asarray(self.fn(x), dtype=float)
        self._append(x, values)
        self._index[key] = self._size - 1
        if self.recorder is not None:
            self.recorder.on_evaluation(x, values)
        return values.copy()

    def _append(self, x: np.ndarray, values: np.ndarray) -> None:
        if self._X is None:
            self._X = np.empty((64, x.size))
            self._F = np.empty((64, values.size))
        elif self._size == len(self._X):
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._F = np.concatenate([self._F, np.empty_like(self._F)])
        self._X[self._size] = x
        self._F[self._size] = values
        self._size += 1

    def recommend(self, x) -> None:
        if self.recorder is not None:
            self.recorder.on_recommend(np.asarray(x, dtype=float))

    def evaluate(self, ind: Individual) -> Individual:
        if ind.exact:
            return ind
        return ind.evaluated(self(ind.genome))

    @property
    def archive_x(self) -> np.ndarray:
        """Read-only view of all exactly evaluated genomes, in evaluation order."""
        if self._X is None:
            return np.empty((0, 0))
        view = self._X[: self._size]
        view.flags.writeable = False
        return view

    @property
    def archive_f(self) -> np.ndarray:
        if self._F is None:
            return np.empty((0, 0))
        view = self._F[: self._size]
        view.flags.writeable = False
        return view

    def __len__(self) -> int:
        return self._size
