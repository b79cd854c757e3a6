"""Dominance relations over confidence boxes and selection under a partial order.

Every relation works on the uniform box view of an individual: exact
individuals are boxes of radius zero. Relations are evaluated pairwise in
vectorised form, ``D[i, j]`` meaning "``i`` relates before ``j``".
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Sequence

import numpy as np

from .core import ConfidenceBox
from .hypervolume import hv_contribution, margin_reference
from .surrogate import confidence_radius


class Relation(enum.Enum):
    F = "f"  # Pareto dominance on exact values
    U = "u"  # confidence interval dominance
    C = "c"  # interval bounds as objectives
    P = "p"  # Pareto dominance on predicted values
    O = "o"  # Pareto dominance on lower bounds


class Secondary(enum.Enum):
    HO = "ho"
    HC = "hc"


# Chain marker: undistinguished critical individuals must be evaluated exactly.
EVALUATE = "evaluate"


def pareto_dominates(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("objective vectors differ in length")
    return bool(np.all(a <= b) and np.any(a < b))


def _pareto_matrix(v: np.ndarray) -> np.ndarray:
    if v.shape[1] == 2:
        a, b = v[:, :1], v[:, 1:2]
        return ((a <= a.T) & (b <= b.T)) & ((a < a.T) | (b < b.T))
    le = np.all(v[:, None, :] <= v[None, :, :], axis=2)
    lt = np.any(v[:, None, :] < v[None, :, :], axis=2)
    return le & lt


def dominance_matrix(kind: Relation, centers, radii) -> np.ndarray:
    """Boolean matrix ``D`` with ``D[i, j]`` true iff box ``i`` relates before box ``j``."""
    c = np.asarray(centers, dtype=float)
    r = np.asarray(radii, dtype=float)
    if c.shape != r.shape or c.ndim != 2:
        raise ValueError("centers and radii must be (m, d) arrays of equal shape")
    lo, hi = c - r, c + r
    if kind is Relation.F:
        if np.any(r != 0):
            raise ValueError("relation F needs exact values (zero radius)")
        return _pareto_matrix(c)
    if kind is Relation.P:
        return _pareto_matrix(c)
    if kind is Relation.O:
        return _pareto_matrix(lo)
    if kind is Relation.U:
        return np.all(hi[:, None, :] < lo[None, :, :], axis=2)
    if kind is Relation.C:
        # (lower_k, upper_k) per objective compared as 2-vectors: weakly
        # better in every objective and strictly better in at least one,
        # i.e. Pareto dominance on the stacked bound vector
        return _pareto_matrix(np.concatenate([lo, hi], axis=1))
    raise ValueError(f"unknown relation {kind!r}")


def dominates(kind: Relation, a: ConfidenceBox, b: ConfidenceBox) -> bool:
    if a.center.shape != b.center.shape:
        raise ValueError("boxes differ in dimension")
    d = dominance_matrix(kind, np.array([a.center, b.center]), np.array([a.radius, b.radius]))
    return bool(d[0, 1])


def rank_matrix(dom: np.ndarray) -> np.ndarray:
    """Non-dominated sorting for an arbitrary relation given as a matrix."""
    m = len(dom)
    ranks = np.full(m, -1, dtype=int)
    count = dom.sum(axis=0).astype(int)
    current = np.flatnonzero(count == 0)
    r = 0
    while len(current):
        ranks[current] = r
        count = count - dom[current].sum(axis=0)
        count[ranks >= 0] = -1
        current = np.flatnonzero(count == 0)
        r += 1
    if np.any(ranks < 0):
        # only reachable for cyclic relations; park the rest in one last front
        ranks[ranks < 0] = r
    return ranks


def rank(centers, radii, kind: Relation) -> np.ndarray:
    """Rank of every box under ``kind``; rank 0 is the non-dominated front."""
    c = np.asarray(centers, dtype=float)
    if len(c) == 0:
        raise ValueError("cannot rank an empty population")
    return rank_matrix(dominance_matrix(kind, c, radii))


def secondary_keys(kind: Secondary, centers, radii, ref=None) -> np.ndarray:
    """Secondary criterion of every member of a set; larger is better.

    HO is the hypervolume contribution of the representative point (exact
    value or predicted center). HC multiplies, over objectives, the
    contribution of the point ``(lower_k, upper_k)`` among the set's bound
    pairs for that objective.
    """
    c = np.asarray(centers, dtype=float)
    r = np.asarray(radii, dtype=float)
    if kind is Secondary.HO:
        ref = margin_reference(c) if ref is None else np.asarray(ref, dtype=float)
        return hv_contribution(c, ref)
    if kind is Secondary.HC:
        keys = np.ones(len(c))
        for k in range(c.shape[1]):
            pairs = np.column_stack([c[:, k] - r[:, k], c[:, k] + r[:, k]])
            ref_k = margin_reference(pairs) if ref is None else np.asarray(ref, dtype=float)[k]
            keys *= hv_contribution(pairs, ref_k)
        return keys
    raise ValueError(f"unknown secondary criterion {kind!r}")


def secondary_key(kind: Secondary, centers, radii, target: int, ref=None) -> float:
    return float(secondary_keys(kind, centers, radii, ref)[target])


def drop_least(keys_fn, members: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Keep ``k`` of ``members`` by repeatedly removing the smallest key.

    ``keys_fn(members)`` recomputes the keys of the remaining set after each
    removal; exact ties are broken by ``rng``, which is only consulted when
    a tie actually occurs.
    """
    members = np.asarray(members, dtype=int)
    while len(members) > k:
        keys = keys_fn(members)
        worst = np.flatnonzero(keys == keys.min())
        drop = worst[0] if len(worst) == 1 else worst[rng.integers(len(worst))]
        members = np.delete(members, drop)
    return members


class Selection(NamedTuple):
    selected: np.ndarray
    needs_exact: np.ndarray
    # relations after the first one that had to split a critical set
    deferred: tuple = ()


def critical_rank_select(
    centers,
    radii,
    mu: int,
    chain: Sequence,
    secondary: Secondary,
    rng: np.random.Generator,
    exact=None,
) -> Selection:
    """Select ``mu`` individuals under a chain of relations.

    Everything ranked before the critical rank of the first relation is
    kept. The critical set is re-ranked with the next relation in the chain
    until the required count is met; leftover ties go to the secondary
    criterion and then to ``rng``. When the chain hits ``EVALUATE`` while
    non-exact critical individuals remain, nothing is guessed: their
    indices come back in ``needs_exact`` and ``selected`` is empty.
    """
    c = np.asarray(centers, dtype=float)
    r = np.asarray(radii, dtype=float)
    m = len(c)
    if not 0 <= mu <= m:
        raise ValueError(f"cannot select {mu} of {m} individuals")
    if not chain:
        raise ValueError("the relation chain must not be empty")
    exact = np.all(r == 0, axis=1) if exact is None else np.asarray(exact, dtype=bool)

    chosen: list[int] = []
    pool = np.arange(m)
    need = mu
    links = list(chain)
    deferred = []
    while need < len(pool) and need > 0 and links:
        link = links.pop(0)
        if link == EVALUATE:
            pending = pool[~exact[pool]]
            if len(pending):
                return Selection(np.array([], dtype=int), pending, tuple(deferred))
            continue
        if len(links) < len(chain) - 1:
            deferred.append(link)
        ranks = rank(c[pool], r[pool], link)
        critical = np.sort(ranks)[need - 1]
        better = pool[ranks < critical]
        chosen.extend(better.tolist())
        need -= len(better)
        pool = pool[ranks == critical]
    if need <= 0:
        pool = pool[:0]
    elif need < len(pool):
        pool = drop_least(lambda idx: secondary_keys(secondary, c[idx], r[idx]), pool, need, rng)
    chosen.extend(pool.tolist())
    return Selection(np.sort(np.array(chosen, dtype=int)), np.array([], dtype=int), tuple(deferred))


class ErrorStats(NamedTuple):
    error_rate: float
    max_magnitude: float
    asserted: int
    errors: int


def uniform_pairs(rng: np.random.Generator, size: int, d: int = 2):
    """Independent true objective vectors for both members of each pair."""
    return rng.uniform(0.0, 1.0, (size, d)), rng.uniform(0.0, 1.0, (size, d))


def sorting_error_stats(
    kind: Relation,
    true_fn=uniform_pairs,
    noise_sigma: float = 0.1,
    alpha: float = 0.05,
    trials: int = 10_000,
    rng: np.random.Generator | None = None,
    d: int = 2,
) -> ErrorStats:
    """Monte-Carlo estimate of how often ``kind`` asserts a wrong dominance.

    Both members of each pair get independent Gaussian prediction noise of
    scale ``noise_sigma`` and correctly calibrated radii. The error rate is
    the share of asserted dominances that do not hold as Pareto dominance of
    the true values; the magnitude is the max-norm of the true difference
    vector over all erroneous pairs.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    fi, fj = true_fn(rng, trials)
    d = fi.shape[1]
    pi = fi + rng.normal(0.0, noise_sigma, fi.shape) if noise_sigma > 0 else fi.copy()
    pj = fj + rng.normal(0.0, noise_sigma, fj.shape) if noise_sigma > 0 else fj.copy()
    u = confidence_radius(noise_sigma, alpha)
    ri = np.full_like(pi, u)
    rj = np.full_like(pj, u)
    asserted = pairwise_relation(kind, pi, ri, pj, rj)
    truth = np.all(fi <= fj, axis=1) & np.any(fi < fj, axis=1)
    wrong = asserted & ~truth
    n_asserted = int(asserted.sum())
    n_wrong = int(wrong.sum())
    mags = np.abs(fi - fj).max(axis=1)[wrong]
    return ErrorStats(
        n_wrong / n_asserted if n_asserted else 0.0,
        float(mags.max()) if n_wrong else 0.0,
        n_asserted,
        n_wrong,
    )


def pairwise_relation(kind: Relation, ci, ri, cj, rj) -> np.ndarray:
    """Row-wise ``box_i relates-before box_j`` for stacked pairs of boxes."""
    ci, ri, cj, rj = (np.asarray(a, dtype=float) for a in (ci, ri, cj, rj))
    li, ui, lj, uj = ci - ri, ci + ri, cj - rj, cj + rj

    def pareto(a, b):
        return np.all(a <= b, axis=1) & np.any(a < b, axis=1)

    if kind is Relation.F:
        if np.any(ri != 0) or np.any(rj != 0):
            raise ValueError("relation F needs exact values (zero radius)")
        return pareto(ci, cj)
    if kind is Relation.P:
        return pareto(ci, cj)
    if kind is Relation.O:
        return pareto(li, lj)
    if kind is Relation.U:
        return np.all(ui < lj, axis=1)
    if kind is Relation.C:
        return pareto(np.hstack([li, ui]), np.hstack([lj, uj]))
    raise ValueError(f"unknown relation {kind!r}")
