import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sapeo import grid
from sapeo.bench import target_ladder
from sapeo.cli import main
from sapeo.grid import Cell, ExperimentConfig, load_config, run_cell, run_grid
from sapeo.metrics import RunRecord
from sapeo.report import RunEntry, colour, compare_table, emit_heatmap, load_summary, median_instance_ert

LADDER = tuple(target_ladder())
SVG = "{http://www.w3.org/2000/svg}"


def small(tmp_path, **kw):
    base = dict(algorithms=("sms-emoa",), problems=("double-sphere",), dims=(2,), instances=(1,),
                budget_mult=30, mu=10, out=str(tmp_path))
    base.update(kw)
    return ExperimentConfig(**base)


def files(out):
    return {p.relative_to(out): p.read_bytes() for p in sorted((out / "runs").rglob("*.*"))}


def test_single_cell_writes_one_record(tmp_path):
    status, results = run_grid(small(tmp_path))
    assert status == 0 and len(results) == 1
    assert len(list((tmp_path / "runs").rglob("*.json"))) == 1
    assert (tmp_path / "grid_summary.json").exists()


def test_rerun_is_idempotent(tmp_path, monkeypatch):
    cfg = small(tmp_path)
    run_grid(cfg)
    before = files(tmp_path)
    monkeypatch.setattr(grid, "execute", lambda *a: pytest.fail("a cached cell was executed"))
    status, results = run_grid(cfg)
    assert status == 0 and all(r.cached for r in results)
    assert files(tmp_path) == before


def test_default_budget_in_two_dimensions(tmp_path):
    run_grid(ExperimentConfig(algorithms=("sms-emoa",), problems=("double-sphere",), dims=(2,),
                              instances=(1,), out=str(tmp_path)))
    (summary,) = (tmp_path / "runs").rglob("*.json")
    data = json.loads(summary.read_text())
    assert data["budget"] == 2000 and data["spent"] <= 2000


def test_missing_reference_is_skipped(tmp_path):
    status, results = run_grid(small(tmp_path, problems=("sphere+rastrigin", "double-sphere")))
    assert status == 2
    assert [r.status for r in results] == ["skipped", "completed"]
    assert "reference" in results[0].reason


def test_failing_cell_does_not_stop_the_grid(tmp_path, monkeypatch):
    real = grid.execute

    def flaky(cell, cfg, recorder, rng):
        if cell.seed == 0:
            raise RuntimeError("boom")
        return real(cell, cfg, recorder, rng)

    monkeypatch.setattr(grid, "execute", flaky)
    status, results = run_grid(small(tmp_path, seeds=2))
    assert status == 2 and [r.status for r in results] == ["failed", "completed"]
    assert "boom" in results[0].reason


def test_grid_determinism_and_cell_independence(tmp_path):
    algos = ("sms-emoa", "sapeo-uf-ho", "sa-sms-p")
    a, b = tmp_path / "a", tmp_path / "b"
    run_grid(small(a, algorithms=algos, seeds=2))
    run_grid(small(b, algorithms=algos, seeds=2, workers=2))
    assert files(a) == files(b)
    victim = Cell("sapeo-uf-ho", "double-sphere", 2, 1, 1)
    for p in victim.folder(a).glob(victim.stem + ".*"):
        p.unlink()
    run_grid(small(a, algorithms=algos, seeds=2))
    assert files(a) == files(b)


def test_common_random_numbers_share_the_initial_sample(tmp_path):
    run_grid(small(tmp_path, algorithms=("sms-emoa", "sapeo-uf-ho")))
    rows = [np.loadtxt(p, delimiter=",", skiprows=1)[:10, 1:3] for p in sorted((tmp_path / "runs").rglob("*.csv"))]
    assert np.array_equal(rows[0], rows[1])


def test_stop_target_ends_runs_early(tmp_path):
    cfg = small(tmp_path, budget_mult=200, stop_target=1.0)
    result = run_cell(Cell("sms-emoa", "double-sphere", 2, 1, 0), cfg)
    assert result.status == "completed" and result.spent < 400


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(algorithms=("nope",))
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=0)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"mu": 7, "dims": [2]}))
    cfg = load_config(path, mu=None, seeds=3)
    assert cfg.mu == 7 and cfg.seeds == 3 and cfg.dims == (2,)
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ValueError):
        load_config(path)


def entry(algorithm="a", problem="sphere+rastrigin", dim=2, instance=1, seed=0, hit=None, spent=100, budget=100):
    rec = RunRecord(problem, algorithm, seed, LADDER, spent=spent)
    if hit is not None:
        rec.target_hits[LADDER[6]] = hit  # 10^0
    return RunEntry(algorithm, problem, dim, instance, seed, budget, rec)


def test_table_examples():
    table = compare_table([entry(hit=10)], [1.0]).splitlines()
    assert table[0].startswith("problem,dim,algorithm,target,ert,successes,runs,success_rate")
    row = table[1].split(",")
    assert row[4] == "10" and row[5:7] == ["1", "1"]
    row = compare_table([entry(), entry(seed=1)], [1.0]).splitlines()[1].split(",")
    assert row[4] == "" and row[5:7] == ["0", "2"]


def test_table_ordering_and_determinism():
    entries = [entry("b", hit=5), entry("a", hit=7)]
    text = compare_table(entries, [10.0, 1.0])
    rows = [r.split(",")[2:4] for r in text.splitlines()[1:]]
    assert rows == [["a", "10"], ["a", "1"], ["b", "10"], ["b", "1"]]
    assert compare_table(entries[::-1], [1.0, 10.0]) == text


def _cells(svg):
    root = ET.fromstring(svg)
    return [r for r in root.iter(SVG + "rect") if r.find(SVG + "title") is not None and " d" in r.find(SVG + "title").text]


def test_heatmap_white_and_full_budget_cells():
    svg = emit_heatmap([entry(hit=None), entry(dim=5, hit=100)], 1.0)
    fills = {r.find(SVG + "title").text.split(":")[0]: r.get("fill") for r in _cells(svg)}
    assert fills["sphere+rastrigin i1 d2"] == "#ffffff"
    assert fills["sphere+rastrigin i1 d5"] == colour(1.0)
    agg = emit_heatmap([entry(hit=None), entry("b", hit=10)], 1.0, "ert-aggregate")
    fills = {r.find(SVG + "title").text.split(":")[0]: r.get("fill") for r in _cells(agg)}
    assert fills["sphere+rastrigin d2 a"] == "#ffffff" and fills["sphere+rastrigin d2 b"] != "#ffffff"


def test_heatmap_empty_and_errors():
    root = ET.fromstring(emit_heatmap([], 1.0))
    assert root.find(f".//{SVG}g[@class='legend']") is not None
    with pytest.raises(KeyError):
        emit_heatmap([entry(hit=10)], 0.5)
    with pytest.raises(ValueError):
        emit_heatmap([], 1.0, "pie")


def test_median_instance_ert():
    entries = [entry(instance=i, hit=h) for i, h in ((1, 10), (2, 30), (3, 20))]
    assert median_instance_ert(entries, 1.0) == {("sphere+rastrigin", 2, "a"): 20.0}


def test_cli_end_to_end(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SAPEO_OUT", str(tmp_path))
    args = ["run", "--algos", "sms-emoa,sapeo-uf-ho", "--problems", "double-sphere", "--dims", "2",
            "--instances", "1", "--budget-mult", "30", "--mu", "10"]
    assert main(args) == 0
    assert len(load_summary(tmp_path)) == 2
    assert main(["report", "table", "--targets", "10,1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("problem,dim,algorithm") and "sapeo-uf-ho" in out
    assert main(["report", "heatmap", "--style", "ert-aggregate", "-o", str(tmp_path / "h.svg")]) == 0
    ET.parse(tmp_path / "h.svg")
    assert main(["report", "heatmap", "--target", "0.5"]) == 1
    assert main(["run", "--algos", "nope"]) == 1
    assert main(["bogus"]) == 1
    assert main(args[:-4] + ["--problems", "sphere+rastrigin", "--budget-mult", "30", "--mu", "10"]) == 2


def test_cli_refs_build(tmp_path):
    out = tmp_path / "refs"
    assert main(["refs", "build", "--problems", "sphere+rastrigin,double-sphere", "--dims", "2",
                 "--instances", "1", "--runs", "1", "--budget-mult", "30", "--mu", "10", "--out", str(out)]) == 0
    assert len(list(out.rglob("*.csv"))) == 1
    assert (out / "mini-1" / "manifest.json").exists()
