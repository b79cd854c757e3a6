"""Exact two-dimensional hypervolume and hypervolume contributions."""

from __future__ import annotations

import numpy as np


def hv2d(points, ref) -> float:
    """Area of the union of boxes ``[p, ref]`` over ``points`` (minimisation).

    Points that do not strictly dominate ``ref`` add nothing.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ref = np.asarray(ref, dtype=float)
    pts = pts[np.all(pts < ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    area = 0.0
    best_y = ref[1]
    for x, y in pts:
        if y < best_y:
            area += (ref[0] - x) * (best_y - y)
            best_y = y
    return float(area)


def _front_order(pts: np.ndarray) -> np.ndarray:
    """Indices of the non-dominated subset, sorted by the first objective.

    Of several identical points only the first in sort order is kept.
    """
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    keep = []
    best_y = np.inf
    for i in order:
        if pts[i, 1] < best_y:
            keep.append(i)
            best_y = pts[i, 1]
    return np.array(keep, dtype=int)


def hv_contribution(points, ref) -> np.ndarray:
    """Exclusive hypervolume of every point: ``hv(all) - hv(all without it)``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ref = np.asarray(ref, dtype=float)
    m = len(pts)
    contrib = np.zeros(m)
    inside = np.flatnonzero(np.all(pts < ref, axis=1))
    if len(inside) == 0:
        return contrib
    sub = pts[inside]
    front = _front_order(sub)
    xs = sub[front, 0]
    ys = sub[front, 1]
    right = np.append(xs[1:], ref[0])
    top = np.insert(ys[:-1], 0, ref[1])
    area = (right - xs) * (top - ys)
    # points that sit inside a front point's exclusive rectangle (duplicates,
    # weakly dominated points) eat into that rectangle
    local_refs = np.column_stack([right, top])
    blocked = np.all(sub[None, :, :] < local_refs[:, None, :], axis=2)
    blocked[np.arange(len(front)), front] = False
    for k in np.flatnonzero(blocked.any(axis=1)):
        area[k] -= hv2d(sub[blocked[k]], local_refs[k])
    contrib[inside[front]] = np.maximum(area, 0.0)
    return contrib


def margin_reference(points, margin: float = 0.1) -> np.ndarray:
    """Component-wise maximum plus ``margin`` times the range.

    Dimensions without spread get ``margin * max(|max|, 1)`` so the
    reference still strictly exceeds every point.
    """
    pts = np.asarray(points, dtype=float)
    hi = pts.max(axis=0)
    span = hi - pts.min(axis=0)
    pad = np.where(span > 0, margin * span, margin * np.maximum(np.abs(hi), 1.0))
    return hi + pad
