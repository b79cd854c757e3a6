"""Pre-selection baselines (SA-SMS): several candidate offspring are
predicted by the local surrogate and only the most promising one is
evaluated before regular SMS-EMOA survival."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.linalg import LinAlgError

from .core import ConfidenceBox, Evaluator, Individual, Recorder
from .moea import RunResult, VariationConfig, run_sms_emoa, variation
from .ordering import Relation, Secondary, rank, secondary_keys
from .surrogate import FitError, LocalSurrogate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreselConfig:
    candidates: int = 15
    relation: Relation = Relation.P
    secondary: Secondary = Secondary.HO

    def __post_init__(self):
        if self.candidates < 1:
            raise ValueError("at least one candidate offspring is required")
        if self.relation not in (Relation.P, Relation.O):
            raise ValueError("pre-selection ranks with relation P or O")


def best_candidate(centers, radii, cfg: PreselConfig, rng: np.random.Generator) -> int:
    """Index of the rank-0 candidate with the largest secondary key;
    ``rng`` only breaks exact ties."""
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    front = np.flatnonzero(rank(centers, radii, cfg.relation) == 0)
    if len(front) == 1:
        return int(front[0])
    keys = secondary_keys(cfg.secondary, centers[front], radii[front])
    top = front[keys == keys.max()]
    return int(top[0] if len(top) == 1 else top[rng.integers(len(top))])


def preselect(
    parents: list[Individual],
    cfg: PreselConfig,
    surrogate,
    evaluator: Evaluator,
    rng: np.random.Generator,
    var_cfg: VariationConfig | None = None,
) -> np.ndarray:
    """Genome of the candidate offspring chosen for exact evaluation."""
    var_cfg = var_cfg or VariationConfig()
    if any(not p.exact for p in parents):
        raise ValueError("pre-selection needs exactly evaluated parents")
    if cfg.candidates == 1:
        return variation(parents, var_cfg, rng)
    genomes = [variation(parents, var_cfg, rng) for _ in range(cfg.candidates)]
    boxes = []
    for g in genomes:
        known = evaluator.lookup(g)
        if known is not None:
            boxes.append(ConfidenceBox.point(known))
            continue
        try:
            boxes.append(surrogate.predict_box(g, evaluator.archive_x, evaluator.archive_f))
        except (FitError, LinAlgError, ValueError) as exc:
            log.debug("surrogate unavailable (%s); taking the first candidate", exc)
            return genomes[0]
    centers = np.array([b.center for b in boxes])
    radii = np.array([b.radius for b in boxes])
    return genomes[best_candidate(centers, radii, cfg, rng)]


def run_sa_sms(
    problem,
    dim: int,
    cfg: PreselConfig | None = None,
    mu: int = 100,
    budget: int | None = None,
    rng: np.random.Generator | None = None,
    recorder: Recorder | None = None,
    alpha: float = 0.05,
    local_size: int = 15,
    surrogate=None,
    var_cfg: VariationConfig | None = None,
    callback=None,
) -> RunResult:
    """SMS-EMOA whose single offspring per generation is picked by
    pre-selection on the surrogate."""
    cfg = cfg or PreselConfig()
    var_cfg = var_cfg or VariationConfig()
    surrogate = surrogate or LocalSurrogate(local_size, alpha)

    def offspring(pop, evaluator, rng):
        return preselect(pop, cfg, surrogate, evaluator, rng, var_cfg)

    return run_sms_emoa(problem, dim, mu, budget, rng, recorder, var_cfg, callback, offspring)
