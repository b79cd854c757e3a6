"""Command line: ``run`` grids, ``report`` tables and heatmaps, ``refs build``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import SUITE, make_problem
from .grid import ALGORITHMS, ExperimentConfig, build_reference, default_out, load_config, run_grid
from .report import compare_table, emit_heatmap, load_summary

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2


def _csv(kind):
    def parse(text):
        return tuple(kind(v) for v in text.split(",") if v.strip())
    return parse


def _grid_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON document with ExperimentConfig fields")
    p.add_argument("--algos", type=_csv(str), help=f"comma list from {', '.join(ALGORITHMS)}")
    p.add_argument("--problems", type=_csv(str), help="comma list of problem ids, e.g. sphere+rastrigin")
    p.add_argument("--dims", type=_csv(int))
    p.add_argument("--instances", type=_csv(int))
    p.add_argument("--seeds", type=int, help="runs per cell")
    p.add_argument("--budget-mult", type=int, help="evaluation budget per dimension")
    p.add_argument("--mu", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", help="output root (default $SAPEO_OUT or ./sapeo-out)")
    p.add_argument("--references", help="reference front folder (default <out>/references)")
    p.add_argument("--workers", type=int)
    p.add_argument("--force", action="store_true", default=None, help="rerun completed cells")
    p.add_argument("--master-seed", type=int)
    p.add_argument("--stop-target", type=float, help="end each run once this precision is reached")


def _config(args) -> ExperimentConfig:
    return load_config(
        args.config,
        algorithms=args.algos, problems=args.problems, dims=args.dims, instances=args.instances,
        seeds=args.seeds, budget_mult=args.budget_mult, mu=args.mu, alpha=args.alpha, out=args.out,
        references=args.references, workers=args.workers, force=args.force,
        master_seed=args.master_seed, stop_target=args.stop_target,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sapeo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment grid")
    _grid_args(run)

    report = sub.add_parser("report", help="tables and heatmaps from finished runs")
    rsub = report.add_subparsers(dest="report_kind", required=True)
    heat = rsub.add_parser("heatmap", help="SVG heatmap for one target")
    heat.add_argument("--out", help="output root holding runs/")
    heat.add_argument("--target", type=float, default=1.0)
    heat.add_argument("--style", choices=("per-instance", "ert-aggregate"), default="per-instance")
    heat.add_argument("--algorithm", help="restrict to one algorithm")
    heat.add_argument("-o", "--output", help="file to write (default stdout)")
    table = rsub.add_parser("table", help="ERT comparison table as CSV")
    table.add_argument("--out", help="output root holding runs/")
    table.add_argument("--targets", type=_csv(float), default=(10.0, 1.0, 0.1, 0.01, 0.001))
    table.add_argument("-o", "--output", help="file to write (default stdout)")

    refs = sub.add_parser("refs", help="reference fronts")
    rfs = refs.add_subparsers(dest="refs_kind", required=True)
    build = rfs.add_parser("build", help="compute empirical reference fronts")
    build.add_argument("--problems", type=_csv(str), default=SUITE)
    build.add_argument("--dims", type=_csv(int), default=(2, 3, 5, 10))
    build.add_argument("--instances", type=_csv(int), default=(1, 2, 3, 4, 5))
    build.add_argument("--runs", type=int, default=20, help="SMS-EMOA runs per problem")
    build.add_argument("--budget-mult", type=int, default=10_000)
    build.add_argument("--mu", type=int, default=100)
    build.add_argument("--out", help="reference folder (default <output root>/references)")
    build.add_argument("--force", action="store_true")
    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = _config(args)

            def progress(r):
                tag = " (cached)" if r.cached else ""
                print(f"{r.status:9s} {r.cell.algorithm} {r.cell.problem} d{r.cell.dim} "
                      f"i{r.cell.instance} s{r.cell.seed} spent={r.spent}{tag} {r.reason}", file=sys.stderr)

            status, _ = run_grid(cfg, progress)
            return status
        if args.command == "report":
            out = Path(args.out) if args.out else default_out()
            entries = load_summary(out)
            if args.report_kind == "heatmap":
                _emit(emit_heatmap(entries, args.target, args.style, args.algorithm), args.output)
            else:
                _emit(compare_table(entries, args.targets), args.output)
            return EXIT_OK
        if args.command == "refs":
            root = Path(args.out) if args.out else default_out() / "references"
            for pid in args.problems:
                for d in args.dims:
                    for i in args.instances:
                        if make_problem(pid, d, i).is_analytic:
                            continue
                        path = build_reference(pid, d, i, root, args.runs, args.budget_mult, args.mu, force=args.force)
                        print(path, file=sys.stderr)
            return EXIT_OK
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
