"""SMS-EMOA: steady-state (mu + 1) selection by non-dominated rank and
hypervolume contribution, with SBX crossover and polynomial mutation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    LOWER_BOUND,
    UPPER_BOUND,
    BudgetExhausted,
    BudgetLedger,
    Evaluator,
    Individual,
    Recorder,
    population_arrays,
)
from .hypervolume import hv2d, hv_contribution, margin_reference  # noqa: F401  (re-exported)
from .ordering import Relation, drop_least, rank


@dataclass(frozen=True)
class VariationConfig:
    sbx_eta: float = 15.0
    sbx_prob: float = 0.9
    mut_eta: float = 20.0
    mut_prob: float | None = None  # None means 1/n
    lower: float = LOWER_BOUND
    upper: float = UPPER_BOUND

    def __post_init__(self):
        if self.sbx_eta <= 0 or self.mut_eta <= 0:
            raise ValueError("distribution indices must be positive")
        for p in (self.sbx_prob, self.mut_prob):
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")


def front_contributions(points: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    """Hypervolume contribution of each point within its own front."""
    contrib = np.zeros(len(points))
    for r in np.unique(ranks):
        members = np.flatnonzero(ranks == r)
        front = points[members]
        contrib[members] = hv_contribution(front, margin_reference(front))
    return contrib


def _tournament(ranks, contrib, rng) -> int:
    a, b = rng.integers(len(ranks), size=2)
    if ranks[a] != ranks[b]:
        return a if ranks[a] < ranks[b] else b
    return a if contrib[a] >= contrib[b] else b


def sbx(p1: np.ndarray, p2: np.ndarray, cfg: VariationConfig, rng) -> np.ndarray:
    """Bounded simulated binary crossover; returns the first child."""
    child = p1.copy()
    if rng.random() >= cfg.sbx_prob:
        return child
    n = len(p1)
    lo, hi = cfg.lower, cfg.upper
    eta = cfg.sbx_eta
    active = rng.random(n) < 0.5
    u = rng.random(n)
    swap = rng.random(n) < 0.5
    for i in np.flatnonzero(active):
        y1, y2 = min(p1[i], p2[i]), max(p1[i], p2[i])
        if y2 - y1 < 1e-14:
            continue
        beta = 1.0 + 2.0 * (y1 - lo) / (y2 - y1)
        a = 2.0 - beta ** -(eta + 1.0)
        bq = (u[i] * a) ** (1.0 / (eta + 1.0)) if u[i] <= 1.0 / a else (1.0 / (2.0 - u[i] * a)) ** (1.0 / (eta + 1.0))
        c1 = 0.5 * (y1 + y2 - bq * (y2 - y1))
        beta = 1.0 + 2.0 * (hi - y2) / (y2 - y1)
        a = 2.0 - beta ** -(eta + 1.0)
        bq = (u[i] * a) ** (1.0 / (eta + 1.0)) if u[i] <= 1.0 / a else (1.0 / (2.0 - u[i] * a)) ** (1.0 / (eta + 1.0))
        c2 = 0.5 * (y1 + y2 + bq * (y2 - y1))
        # rounding can step a hair outside the box
        child[i] = min(max(c2 if swap[i] else c1, lo), hi)
    return child


def polynomial_mutation(x: np.ndarray, cfg: VariationConfig, rng) -> np.ndarray:
    n = len(x)
    prob = 1.0 / n if cfg.mut_prob is None else cfg.mut_prob
    lo, hi = cfg.lower, cfg.upper
    eta = cfg.mut_eta
    mask = rng.random(n) < prob
    u = rng.random(n)
    y = x.copy()
    for i in np.flatnonzero(mask):
        d1 = (y[i] - lo) / (hi - lo)
        d2 = (hi - y[i]) / (hi - lo)
        power = 1.0 / (eta + 1.0)
        if u[i] < 0.5:
            val = 2.0 * u[i] + (1.0 - 2.0 * u[i]) * (1.0 - d1) ** (eta + 1.0)
            dq = val**power - 1.0
        else:
            val = 2.0 * (1.0 - u[i]) + 2.0 * (u[i] - 0.5) * (1.0 - d2) ** (eta + 1.0)
            dq = 1.0 - val**power
        y[i] = min(max(y[i] + dq * (hi - lo), lo), hi)
    return y


def variation(parents: list[Individual], cfg: VariationConfig, rng: np.random.Generator) -> np.ndarray:
    """One offspring genome from two binary-tournament parents.

    Tournaments compare Pareto rank of the representative points first and
    hypervolume contribution within the front second.
    """
    if len(parents) < 2:
        raise ValueError("variation needs at least two parents")
    centers, _ = population_arrays(parents)
    ranks = rank(centers, np.zeros_like(centers), Relation.P)
    contrib = front_contributions(centers, ranks)
    p1 = parents[_tournament(ranks, contrib, rng)].genome
    p2 = parents[_tournament(ranks, contrib, rng)].genome
    child = polynomial_mutation(sbx(p1, p2, cfg, rng), cfg, rng)
    return np.clip(child, cfg.lower, cfg.upper)


def sms_survival(pop: list[Individual], mu: int, rng: np.random.Generator) -> list[Individual]:
    """Drop members of the worst front by least hypervolume contribution
    until ``mu`` remain."""
    if any(not ind.exact for ind in pop):
        raise ValueError("SMS-EMOA survival needs exactly evaluated individuals")
    pop = list(pop)
    while len(pop) > mu:
        values, _ = population_arrays(pop)
        ranks = rank(values, np.zeros_like(values), Relation.F)
        worst = np.flatnonzero(ranks == ranks.max())
        if len(worst) == 1:
            del pop[worst[0]]
            continue
        keep = drop_least(
            lambda idx: hv_contribution(values[idx], margin_reference(values[idx])),
            worst, len(worst) - 1, rng,
        )
        (gone,) = np.setdiff1d(worst, keep)
        del pop[gone]
    return pop


@dataclass
class RunResult:
    population: list[Individual]
    ledger: BudgetLedger
    evaluator: Evaluator
    generations: int = 0
    history: list = field(default_factory=list)
    state: object = None

    @property
    def spent(self) -> int:
        return self.ledger.spent


def random_population(evaluator: Evaluator, dim: int, mu: int, rng, cfg: VariationConfig | None = None) -> list[Individual]:
    """Uniform initial sample in the search box, evaluated exactly.

    If the budget closes early, the members evaluated so far are returned.
    """
    cfg = cfg or VariationConfig()
    genomes = rng.uniform(cfg.lower, cfg.upper, (mu, dim))
    pop = []
    for g in genomes:
        try:
            pop.append(Individual(g).evaluated(evaluator(g)))
        except BudgetExhausted:
            break
    return pop


def sms_generation(pop, evaluator: Evaluator, mu: int, generation: int, rng, cfg: VariationConfig, make_offspring=None):
    """One steady-state step: vary, evaluate the offspring, select ``mu``."""
    genome = make_offspring(pop, evaluator, rng) if make_offspring else variation(pop, cfg, rng)
    child = Individual(genome, birth=generation).evaluated(evaluator(genome))
    return sms_survival(pop + [child], mu, rng)


def run_sms_emoa(
    problem: Callable[[np.ndarray], np.ndarray],
    dim: int,
    mu: int = 100,
    budget: int | None = None,
    rng: np.random.Generator | None = None,
    recorder: Recorder | None = None,
    cfg: VariationConfig | None = None,
    callback=None,
    make_offspring=None,
) -> RunResult:
    """Run SMS-EMOA until the evaluation budget is exhausted.

    ``callback(generation, population)`` is invoked after every survival
    selection. ``make_offspring(population, evaluator, rng)`` replaces plain variation
    (used by pre-selection).
    """
    budget = 1000 * dim if budget is None else budget
    if budget < mu:
        raise ValueError(f"budget {budget} is smaller than the population size {mu}")
    rng = np.random.default_rng() if rng is None else rng
    cfg = cfg or VariationConfig()
    ledger = BudgetLedger(budget)
    evaluator = Evaluator(problem, ledger, recorder)
    pop = random_population(evaluator, dim, mu, rng, cfg)
    g = 0
    while ledger.remaining > 0 and len(pop) == mu:
        g += 1
        try:
            pop = sms_generation(pop, evaluator, mu, g, rng, cfg, make_offspring)
        except BudgetExhausted:
            break
        if callback is not None:
            callback(g, pop)
    return RunResult(pop, ledger, evaluator, g)
