import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import raster_contributions, raster_hv
from sapeo.hypervolume import hv2d, hv_contribution, margin_reference


def test_empty_and_unit_box():
    assert hv2d(np.empty((0, 2)), (1, 1)) == 0.0
    assert hv2d([(0, 0)], (1, 1)) == 1.0


def test_two_points_against_raster():
    pts = [(1, 2), (2, 1)]
    assert hv2d(pts, (3, 3)) == 3.0
    assert abs(raster_hv(pts, (3, 3)) - 3.0) < 1e-2


def test_contributions_of_two_points():
    pts = np.array([(1.0, 2.0), (2.0, 1.0)])
    assert np.allclose(hv_contribution(pts, (3, 3)), [1.0, 1.0])
    assert np.allclose(raster_contributions(pts, (3, 3)), [1.0, 1.0], atol=1e-2)


def test_single_point_contribution_is_its_box():
    assert hv_contribution([(1.0, 1.0)], (3, 3))[0] == 4.0


def test_duplicates_contribute_nothing():
    c = hv_contribution([(1.0, 1.0), (1.0, 1.0), (0.5, 2.0)], (3, 3))
    assert c[0] == c[1] == 0.0 and c[2] > 0


def test_random_sets_match_raster():
    rng = np.random.default_rng(5)
    for _ in range(10):
        pts = rng.uniform(0, 3, (20, 2))
        assert abs(hv2d(pts, (3, 3)) - raster_hv(pts, (3, 3), lower=(0, 0))) < 1e-2


def test_margin_reference_strictly_above():
    pts = np.array([[1.0, 5.0], [1.0, 7.0]])
    ref = margin_reference(pts)
    assert np.all(ref > pts.max(axis=0))
    assert ref[1] == pytest.approx(7.2)


points = arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)),
                elements=st.floats(0, 3, allow_nan=False))


@settings(max_examples=200, deadline=None)
@given(points, st.tuples(st.floats(0, 3), st.floats(0, 3)))
def test_adding_a_point_never_decreases(pts, extra):
    grown = np.vstack([pts, extra])
    assert hv2d(grown, (3, 3)) >= hv2d(pts, (3, 3)) - 1e-12


@settings(max_examples=200, deadline=None)
@given(points)
def test_contribution_is_leave_one_out_difference(pts):
    total = hv2d(pts, (3, 3))
    expect = [total - hv2d(np.delete(pts, i, axis=0), (3, 3)) for i in range(len(pts))]
    assert np.allclose(hv_contribution(pts, (3, 3)), expect, atol=1e-9)
