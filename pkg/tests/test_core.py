import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CountingFn
from sapeo.core import (
    BudgetExhausted,
    BudgetLedger,
    ConfidenceBox,
    Evaluator,
    Individual,
    as_box,
    check_genome,
    default_budget,
)


def test_exact_individual_is_point_box():
    ind = Individual(np.zeros(2)).evaluated([1.0, 2.0])
    box = as_box(ind)
    assert np.array_equal(box.center, [1.0, 2.0])
    assert np.array_equal(box.radius, [0.0, 0.0])


def test_predicted_box_is_identity():
    box = ConfidenceBox([1.0, 1.0], [0.5, 0.5])
    assert as_box(Individual(np.zeros(2)).predicted(box)) is box


def test_degenerate_interval():
    box = as_box(Individual(np.zeros(2)).evaluated([0.0, 0.0]))
    assert np.array_equal(box.lower, box.upper)
    assert box.is_point


def test_box_rejects_negative_radius():
    with pytest.raises(ValueError):
        ConfidenceBox([0.0, 0.0], [-1.0, 0.0])


def test_genome_bounds():
    with pytest.raises(ValueError):
        check_genome([0.0, 100.5])
    with pytest.raises(ValueError):
        check_genome([0.0, 1.0], dim=3)
    assert check_genome([-100.0, 100.0]).flags.writeable is False


def test_exact_never_goes_back_to_prediction():
    ind = Individual(np.zeros(2)).evaluated([1.0, 1.0])
    with pytest.raises(ValueError):
        ind.predicted(ConfidenceBox([1.0, 1.0], [0.1, 0.1]))


def test_ledger_charge_and_boundary():
    ledger = BudgetLedger(2000)
    assert ledger.charge(1).spent == 1
    full = BudgetLedger(2000, 2000)
    with pytest.raises(BudgetExhausted):
        full.charge(1)
    assert full.spent == 2000


def test_default_budget_for_two_dimensions():
    assert default_budget(2) == 2000


def test_evaluator_caches_duplicates():
    fn = CountingFn(lambda x: np.array([x.sum(), -x.sum()]))
    ev = Evaluator(fn, BudgetLedger(10))
    ev(np.array([1.0, 2.0]))
    ev(np.array([1.0, 2.0]))
    assert fn.calls == 1 and ev.ledger.spent == 1 and ev.cache_hits == 1
    assert ev.lookup([1.0, 2.0]) is not None and ev.lookup([2.0, 2.0]) is None


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=40), st.integers(1, 30))
def test_ledger_conservation(keys, cap):
    fn = CountingFn(lambda x: np.array([x[0], x[1]]))
    ev = Evaluator(fn, BudgetLedger(cap))
    for k in keys:
        try:
            ev(np.array([float(k), 0.0]))
        except BudgetExhausted:
            pass
        assert fn.calls == ev.ledger.spent <= cap
        assert len(ev.archive_x) == ev.ledger.spent
