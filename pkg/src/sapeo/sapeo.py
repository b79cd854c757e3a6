"""The SAPEO control loop on top of the steady-state SMS-EMOA.

Offspring and not yet evaluated survivors get fresh local surrogate
predictions every generation. Individuals whose confidence radius exceeds
the tolerance schedule in any objective are evaluated exactly; the rest
take part in survival selection through a chain of dominance relations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from numpy.linalg import LinAlgError

from .core import (
    BudgetExhausted,
    BudgetLedger,
    ConfidenceBox,
    Evaluator,
    Individual,
    Recorder,
    population_arrays,
)
from .moea import RunResult, VariationConfig, random_population, variation
from .ordering import EVALUATE, Relation, Secondary, critical_rank_select
from .surrogate import FitError, LocalSurrogate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Strategy:
    name: str
    chain: tuple
    secondary: Secondary


STRATEGIES = {
    "uf-ho": Strategy("uf-ho", (Relation.U, EVALUATE, Relation.F), Secondary.HO),
    "ucp-ho": Strategy("ucp-ho", (Relation.U, Relation.C, Relation.P), Secondary.HO),
    "uc-hc": Strategy("uc-hc", (Relation.U, Relation.C), Secondary.HC),
}


class Surrogate(Protocol):
    def predict_box(self, x, archive_x, archive_f) -> ConfidenceBox: ...


@dataclass(frozen=True)
class EpsilonSchedule:
    current: np.ndarray
    alpha: float = 0.05

    @classmethod
    def start(cls, d: int, alpha: float = 0.05) -> EpsilonSchedule:
        return cls(np.full(d, np.inf), alpha)


def pairwise_quantile(values: np.ndarray, q: float) -> float:
    """``q``-quantile (linear interpolation) of all pairwise absolute differences."""
    v = np.asarray(values, dtype=float)
    i, j = np.triu_indices(len(v), k=1)
    return float(np.quantile(np.abs(v[i] - v[j]), q))


def update_epsilon(sched: EpsilonSchedule, centers) -> EpsilonSchedule:
    c = np.asarray(centers, dtype=float)
    if len(c) < 2:
        raise ValueError("the tolerance update needs at least two individuals")
    spread = np.array([pairwise_quantile(c[:, k], sched.alpha) for k in range(c.shape[1])])
    return EpsilonSchedule(np.minimum(sched.current, spread), sched.alpha)


@dataclass
class SapeoState:
    population: list[Individual]
    epsilon: EpsilonSchedule
    generation: int = 0
    # per generation: (generation, epsilon, exact evaluations spent in it)
    history: list = field(default_factory=list)
    deferred_relations: dict = field(default_factory=dict)


class _Generation:
    """Book-keeping for one generation: the working set and its evaluations."""

    def __init__(self, members: list[Individual], evaluator: Evaluator):
        self.members = members
        self.evaluator = evaluator
        self.spent = 0

    def evaluate(self, i: int) -> None:
        before = self.evaluator.ledger.spent
        self.members[i] = self.evaluator.evaluate(self.members[i])
        if self.evaluator.ledger.spent > before:
            self.spent += 1
            self.evaluator.recommend(self._recommendation(i))

    def _recommendation(self, fallback: int) -> np.ndarray:
        pending = [k for k, m in enumerate(self.members) if not m.exact and m.box is not None]
        if not pending:
            return self.members[fallback].genome
        newest = max(pending, key=lambda k: (self.members[k].birth, k))
        return self.members[newest].genome


def sapeo_generation(
    state: SapeoState,
    strategy: Strategy,
    evaluator: Evaluator,
    surrogate: Surrogate,
    rng: np.random.Generator,
    mu: int,
    cfg: VariationConfig | None = None,
) -> SapeoState:
    """Advance SAPEO by one generation.

    Raises ``BudgetExhausted`` if an evaluation is needed once the budget is
    gone; ``state`` is left untouched in that case.
    """
    cfg = cfg or VariationConfig()
    g = state.generation + 1
    genome = variation(state.population, cfg, rng)
    child = Individual(genome, birth=g)
    known = evaluator.lookup(child.genome)
    if known is not None:
        child = child.evaluated(known)
    work = _Generation(list(state.population) + [child], evaluator)

    for i, ind in enumerate(work.members):
        if ind.exact:
            continue
        try:
            box = surrogate.predict_box(ind.genome, evaluator.archive_x, evaluator.archive_f)
        except (FitError, LinAlgError, ValueError) as exc:
            log.debug("surrogate unavailable (%s); evaluating exactly", exc)
            work.evaluate(i)
            continue
        work.members[i] = ind.predicted(box)

    centers, _ = population_arrays(work.members)
    eps = update_epsilon(state.epsilon, centers)

    for i, ind in enumerate(work.members):
        if not ind.exact and np.any(ind.box.radius > eps.current):
            work.evaluate(i)

    deferred = dict(state.deferred_relations)
    while True:
        centers, radii = population_arrays(work.members)
        exact = np.array([m.exact for m in work.members])
        sel = critical_rank_select(centers, radii, mu, strategy.chain, strategy.secondary, rng, exact)
        if len(sel.needs_exact) == 0:
            break
        for i in sel.needs_exact:
            work.evaluate(int(i))
    for rel in sel.deferred:
        deferred[rel] = deferred.get(rel, 0) + 1

    survivors = [work.members[i] for i in sel.selected]
    history = state.history + [(g, eps.current.copy(), work.spent)]
    return SapeoState(survivors, eps, g, history, deferred)


def run_sapeo(
    problem: Callable[[np.ndarray], np.ndarray],
    dim: int,
    strategy: Strategy | str = "uf-ho",
    mu: int = 100,
    budget: int | None = None,
    alpha: float = 0.05,
    rng: np.random.Generator | None = None,
    recorder: Recorder | None = None,
    surrogate: Surrogate | None = None,
    local_size: int = 15,
    cfg: VariationConfig | None = None,
    max_generations: int | None = None,
    generation_limit: int | None = None,
    patience: int | None = None,
    callback=None,
) -> RunResult:
    """Run SAPEO until the budget is spent.

    The optimiser counts as stopped once the budget is gone or
    ``max_generations`` is reached, but the loop keeps going while the
    tolerance is still positive and budget is left. ``generation_limit``
    (default 50 x budget) is a hard guard against runs that never need an
    evaluation again. The loop also ends after ``patience`` consecutive
    generations (default 10 x mu) without a single exact evaluation: the
    archive and hence the surrogate no longer change, and a spread out
    population keeps the tolerance from ever tightening. Predicted survivors
    are evaluated at the end while budget remains.
    """
    if isinstance(strategy, str):
        strategy = STRATEGIES[strategy]
    budget = 1000 * dim if budget is None else budget
    if budget < mu:
        raise ValueError(f"budget {budget} is smaller than the population size {mu}")
    rng = np.random.default_rng() if rng is None else rng
    cfg = cfg or VariationConfig()
    surrogate = surrogate or LocalSurrogate(local_size, alpha)
    generation_limit = 50 * budget if generation_limit is None else generation_limit
    patience = 10 * mu if patience is None else patience
    ledger = BudgetLedger(budget)
    evaluator = Evaluator(problem, ledger, recorder)
    pop = random_population(evaluator, dim, mu, rng, cfg)
    if len(pop) < mu:
        return RunResult(pop, ledger, evaluator, 0, [], None)
    state = SapeoState(pop, EpsilonSchedule.start(len(pop[0].values), alpha))

    def stopped() -> bool:
        return ledger.remaining <= 0 or (max_generations is not None and state.generation >= max_generations)

    quiet = 0
    while (not stopped() or (np.max(state.epsilon.current) > 0 and ledger.remaining > 0)) \
            and state.generation < generation_limit and quiet < patience:
        try:
            state = sapeo_generation(state, strategy, evaluator, surrogate, rng, mu, cfg)
        except BudgetExhausted:
            break
        if state.history[-1][2] == 0:
            quiet += 1
        else:
            quiet = 0
        if callback is not None:
            callback(state)

    final = []
    for ind in state.population:
        if not ind.exact and ledger.remaining > 0:
            ind = evaluator.evaluate(ind)
        final.append(ind)
    return RunResult(final, ledger, evaluator, state.generation, state.history, state)
