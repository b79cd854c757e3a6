import numpy as np
import pytest

from sapeo.bench import analytic_reference, make_problem, target_ladder
from sapeo.metrics import (
    UNREACHED,
    FixedTargetRecorder,
    RunRecord,
    bootstrap_ert,
    ert,
    load_record,
    record_event,
    replay_precision,
    write_run,
)
from sapeo.moea import run_sms_emoa

LADDER = tuple(target_ladder())


def run(hit_at=None, spent=100, target=1.0):
    rec = RunRecord("p", "a", 0, LADDER, spent=spent)
    if hit_at is not None:
        rec.target_hits[[t for t in LADDER if np.isclose(t, target)][0]] = hit_at
    return rec


def test_first_crossing():
    rec = RunRecord("p", "a", 0, LADDER)
    record_event(rec, 100, 5.0)
    record_event(rec, 137, 0.9)
    assert rec.hit(1.0) == 137
    record_event(rec, 150, 0.85)
    assert rec.hit(1.0) == 137


def test_improvement_without_crossing():
    rec = RunRecord("p", "a", 0, LADDER)
    record_event(rec, 1, 0.95)
    hits = dict(rec.target_hits)
    record_event(rec, 2, 0.94)
    assert rec.target_hits == hits


def test_simultaneous_crossings():
    rec = RunRecord("p", "a", 0, LADDER)
    record_event(rec, 5, 20.0)
    record_event(rec, 9, 0.5)
    assert {rec.hit(t) for t in LADDER if 0.5 <= t <= 10.0} == {9}
    assert sum(rec.hit(t) == 9 for t in LADDER) >= 3


def test_index_must_increase():
    rec = RunRecord("p", "a", 0, LADDER)
    record_event(rec, 5, 1.0)
    with pytest.raises(ValueError):
        record_event(rec, 5, 0.5)


def test_ert_examples():
    assert ert([run(10), run(20)], 1.0) == 15
    assert ert([run(10), run(None, spent=100)], 1.0) == 110
    assert ert([run(None), run(None)], 1.0) == UNREACHED


def test_ert_bounds():
    runs = [run(30), run(None, spent=200), run(50)]
    value = ert(runs, 1.0)
    assert value >= 30


def test_bootstrap_degenerate_and_default():
    summary = bootstrap_ert([run(50), run(50)], 1.0, rng=np.random.default_rng(0))
    assert summary.median == summary.p10 == summary.p90 == 50 and summary.samples == 1000
    assert bootstrap_ert([run(None)], 1.0).median == UNREACHED


def test_bootstrap_restart_expectation():
    runs = [run(10), run(None, spent=100)]
    summary = bootstrap_ert(runs, 1.0, samples=100_000, rng=np.random.default_rng(1))
    # geometric restarts: (1 - p) / p failures of cost 100 plus one success of cost 10
    assert summary.mean == pytest.approx(110, rel=0.05)
    assert summary.mean == pytest.approx(ert(runs, 1.0), rel=0.05)


def test_recorder_replay_consistency(tmp_path):
    problem = make_problem("double-sphere", 2)
    ref = analytic_reference(problem)
    recorder = FixedTargetRecorder(problem, ref, RunRecord(problem.id, "sms-emoa", 0, LADDER))
    res = run_sms_emoa(problem, 2, mu=10, budget=300, rng=np.random.default_rng(0), recorder=recorder)
    record = recorder.close(res.spent)
    precisions = [p for _, p in record.events]
    assert all(b <= a for a, b in zip(precisions, precisions[1:]))
    rows, summary = write_run(tmp_path, "run", recorder, {"status": "completed"})
    replay = dict(replay_precision(rows, ref))
    for idx, prec in record.events:
        assert replay[idx] == pytest.approx(prec, rel=1e-12, abs=1e-12)
    back, data = load_record(summary)
    assert back.target_hits == record.target_hits and back.spent == 300


def test_recommendations_are_credited_to_the_current_count():
    problem = make_problem("double-sphere", 2)
    ref = analytic_reference(problem)
    recorder = FixedTargetRecorder(problem, ref, RunRecord(problem.id, "x", 0, LADDER))
    recorder.on_recommend(np.zeros(2))  # nothing evaluated yet: ignored
    recorder.on_evaluation(np.full(2, 90.0), problem(np.full(2, 90.0)))
    recorder.on_recommend(problem.first.shift)
    record = recorder.close()
    assert record.events == [(1, pytest.approx(recorder.precision))]
    assert record.spent == 1 and [r[4] for r in recorder.rows] == [0, 1]
