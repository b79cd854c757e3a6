"""Aggregation of persisted run records into CSV tables and SVG heatmaps."""

from __future__ import annotations

import csv
import io
import math
import zlib
from collections import defaultdict
from dataclasses import dataclass
from html import escape
from pathlib import Path

import numpy as np

from .bench import BASE_FUNCTIONS, GROUPS, parse_problem_id
from .metrics import RunRecord, UNREACHED, bootstrap_ert, ert, load_record

GROUP_COLOURS = {
    "separable": "#1f77b4",
    "moderate": "#2ca02c",
    "ill-conditioned": "#d62728",
    "multimodal": "#9467bd",
    "weakly-structured": "#ff7f0e",
}
# a few stops of the viridis map, interpolated linearly
_SCALE = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=float)


@dataclass(frozen=True)
class RunEntry:
    algorithm: str
    problem: str
    dim: int
    instance: int
    seed: int
    budget: int
    record: RunRecord
    stop_target: float | None = None

    def valid_for(self, target: float) -> bool:
        """Runs ended at a stop target say nothing about finer targets."""
        return self.stop_target is None or target >= self.stop_target * (1 - 1e-12)


def load_summary(out) -> list[RunEntry]:
    """All completed run records below ``out/runs``."""
    entries = []
    for path in sorted(Path(out, "runs").glob("*/*/*.json")):
        rec, data = load_record(path)
        if data.get("status") != "completed":
            continue
        entries.append(RunEntry(
            data["algorithm"], data["problem"], data["dim"], data["instance"], data["seed"],
            data["budget"], rec, data.get("settings", {}).get("stop_target"),
        ))
    return entries


def _on_ladder(entries, target: float) -> float:
    for e in entries:
        for t in e.record.targets:
            if math.isclose(t, target, rel_tol=1e-6):
                return t
    raise KeyError(f"target {target} is not recorded in the summary")


def check_target(entries, target: float) -> None:
    if entries:
        _on_ladder(entries, target)


def compare_table(entries: list[RunEntry], targets, samples: int = 1000) -> str:
    """One row per (problem, dimension, algorithm, target) with ERT, success
    counts and bootstrap percentiles. Rows are sorted by problem, dimension,
    algorithm and then by target from coarse to fine."""
    groups = defaultdict(list)
    for e in entries:
        groups[(e.problem, e.dim, e.algorithm)].append(e)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["problem", "dim", "algorithm", "target", "ert", "successes", "runs",
                "success_rate", "ert_p10", "ert_median", "ert_p90"])
    for key in sorted(groups):
        runs = groups[key]
        for target in sorted(targets, reverse=True):
            usable = [e for e in runs if e.valid_for(target)]
            if not usable:
                continue
            recs = [e.record for e in usable]
            value = ert(recs, target)
            hits = sum(r.hit(target) is not None for r in recs)
            rng = np.random.default_rng(zlib.crc32(repr((key, target)).encode()))
            boot = bootstrap_ert(recs, target, samples, rng)
            w.writerow([
                key[0], key[1], key[2], f"{target:.6g}",
                "" if value == UNREACHED else f"{value:.6g}",
                hits, len(recs), f"{hits / len(recs):.6g}",
                *("" if v == UNREACHED else f"{v:.6g}" for v in (boot.p10, boot.median, boot.p90)),
            ])
    return buf.getvalue()


def colour(value: float) -> str:
    """Hex colour for ``value`` in [0, 1] on the sequential scale."""
    v = min(max(value, 0.0), 1.0) * (len(_SCALE) - 1)
    i = min(int(v), len(_SCALE) - 2)
    rgb = _SCALE[i] + (v - i) * (_SCALE[i + 1] - _SCALE[i])
    return "#%02x%02x%02x" % tuple(int(round(c)) for c in rgb)


def _cell_value_instance(runs: list[RunEntry], target: float):
    """Median over seeds of the fraction of the budget used; None if unreached."""
    fracs = []
    for e in runs:
        h = e.record.hit(target)
        fracs.append(math.inf if h is None else h / e.budget)
    med = float(np.median(fracs)) if fracs else math.inf
    return None if not math.isfinite(med) else med


def _group_marks(problem: str, x: float, y: float, size: float) -> str:
    try:
        names = parse_problem_id(problem)
    except ValueError:
        return ""
    out = []
    for k, name in enumerate(names):
        group = BASE_FUNCTIONS[name].group
        out.append(
            f'<rect x="{x + k * (size + 2):.1f}" y="{y:.1f}" width="{size}" height="{size}" '
            f'fill="{GROUP_COLOURS[group]}"><title>{escape(name)} ({group})</title></rect>'
        )
    return "".join(out)


def _legend(x: float, y: float, label_lo: str, label_hi: str, title: str) -> str:
    parts = [f'<g class="legend"><text x="{x}" y="{y - 6}" font-size="11">{escape(title)}</text>']
    steps = 20
    for k in range(steps):
        parts.append(
            f'<rect x="{x + k * 8}" y="{y}" width="8" height="12" fill="{colour(k / (steps - 1))}"/>'
        )
    parts.append(f'<text x="{x}" y="{y + 26}" font-size="10">{escape(label_lo)}</text>')
    parts.append(f'<text x="{x + steps * 8}" y="{y + 26}" font-size="10" text-anchor="end">{escape(label_hi)}</text>')
    parts.append('<rect x="{0}" y="{1}" width="12" height="12" fill="#ffffff" stroke="#999"/>'
                 '<text x="{2}" y="{3}" font-size="10">not reached</text>'.format(x, y + 34, x + 16, y + 44))
    gy = y + 62
    for k, group in enumerate(GROUPS):
        parts.append(
            f'<rect x="{x}" y="{gy + 14 * k}" width="10" height="10" fill="{GROUP_COLOURS[group]}"/>'
            f'<text x="{x + 14}" y="{gy + 14 * k + 9}" font-size="10">{group}</text>'
        )
    parts.append("</g>")
    return "".join(parts)


def emit_heatmap(entries: list[RunEntry], target: float, style: str = "per-instance",
                 algorithm: str | None = None) -> str:
    """SVG heatmap for one target.

    ``per-instance``: rows are (problem, instance), columns dimensions,
    colour the fraction of the budget used to reach the target.
    ``ert-aggregate``: rows are problems, columns (dimension, algorithm),
    colour log10(ERT / dimension) scaled to the largest budget.
    Unreached cells stay white.
    """
    if style not in ("per-instance", "ert-aggregate"):
        raise ValueError(f"unknown heatmap style {style!r}")
    check_target(entries, target)
    if algorithm is not None:
        entries = [e for e in entries if e.algorithm == algorithm]
    entries = [e for e in entries if e.valid_for(target)]
    target_key = _on_ladder(entries, target) if entries else target

    cw, ch, left, top = 36, 16, 230, 40
    dims = sorted({e.dim for e in entries})
    cells: list[str] = []
    rows: list[str] = []
    if style == "per-instance":
        grouped = defaultdict(list)
        for e in entries:
            grouped[(e.problem, e.instance, e.dim)].append(e)
        row_keys = sorted({(e.problem, e.instance) for e in entries})
        cols = [(d, None) for d in dims]
        for r, (prob, inst) in enumerate(row_keys):
            y = top + r * ch
            rows.append(_group_marks(prob, 4, y + 3, 10))
            rows.append(f'<text x="{left - 6}" y="{y + 12}" font-size="10" text-anchor="end">'
                        f'{escape(prob)} i{inst}</text>')
            for c, (d, _) in enumerate(cols):
                v = _cell_value_instance(grouped.get((prob, inst, d), []), target_key)
                fill = "#ffffff" if v is None else colour(v)
                label = "not reached" if v is None else f"{100 * v:.1f}% of budget"
                cells.append(f'<rect x="{left + c * cw}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" '
                             f'stroke="#ddd"><title>{escape(prob)} i{inst} d{d}: {label}</title></rect>')
        legend = ("0% of budget", "100% of budget", "budget used to reach target")
    else:
        algos = sorted({e.algorithm for e in entries})
        cols = [(d, a) for d in dims for a in algos]
        grouped = defaultdict(list)
        for e in entries:
            grouped[(e.problem, e.dim, e.algorithm)].append(e)
        row_keys = sorted({e.problem for e in entries})
        top_budget = max((e.budget / e.dim for e in entries), default=1.0)
        hi = math.log10(max(top_budget * 10, 10.0))
        for r, prob in enumerate(row_keys):
            y = top + r * ch
            rows.append(_group_marks(prob, 4, y + 3, 10))
            rows.append(f'<text x="{left - 6}" y="{y + 12}" font-size="10" text-anchor="end">{escape(prob)}</text>')
            for c, (d, a) in enumerate(cols):
                runs = grouped.get((prob, d, a), [])
                value = ert([e.record for e in runs], target_key) if runs else UNREACHED
                if value == UNREACHED:
                    fill, label = "#ffffff", "not reached"
                else:
                    fill = colour(math.log10(max(value / d, 1.0)) / hi)
                    label = f"ERT {value:.4g}"
                cells.append(f'<rect x="{left + c * cw}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" '
                             f'stroke="#ddd"><title>{escape(prob)} d{d} {escape(a)}: {label}</title></rect>')
        legend = ("10^0", f"10^{hi:.1f}", "log10(ERT / dimension)")

    headers = []
    for c, (d, a) in enumerate(cols):
        x = left + c * cw + cw / 2
        headers.append(f'<text x="{x}" y="{top - 20}" font-size="10" text-anchor="middle">{d}-D</text>')
        if a is not None:
            headers.append(f'<text x="{x}" y="{top - 6}" font-size="7" text-anchor="middle">{escape(a)}</text>')
    grid_w = left + max(len(cols), 1) * cw
    n_rows = len(rows) // 2
    width = grid_w + 220
    height = max(top + n_rows * ch + 20, 200)
    title = f"target {target:g}" + (f" ({algorithm})" if algorithm else "")
    return "".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<text x="4" y="14" font-size="12">{escape(title)}</text>',
        *headers, *rows, *cells,
        _legend(grid_w + 20, top + 10, *legend),
        "</svg>\n",
    ])


def median_instance_ert(entries: list[RunEntry], target: float) -> dict:
    """Median over instances of the per-instance ERT, keyed by
    (problem, dimension, algorithm)."""
    per = defaultdict(list)
    for e in entries:
        if e.valid_for(target):
            per[(e.problem, e.dim, e.algorithm, e.instance)].append(e.record)
    by_cell = defaultdict(list)
    for (prob, dim, algo, _), recs in per.items():
        by_cell[(prob, dim, algo)].append(ert(recs, target))
    return {k: float(np.median(v)) for k, v in by_cell.items()}

