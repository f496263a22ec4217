from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simpoplocal.emoa import contributions, hv_contribution, hypervolume

UNIT = (1.0, 1.0, 1.0)
TWO_POINT = [(0.0, 0.5, 0.5), (0.5, 0.0, 0.5)]


def inclusion_exclusion(points, ref):
    """Union of the boxes [p, ref] by alternating sums over every subset."""
    pts = [np.minimum(np.asarray(p, float), ref) for p in points]
    total = 0.0
    for k in range(1, len(pts) + 1):
        for subset in combinations(pts, k):
            corner = np.max(subset, axis=0)
            total += (-1) ** (k + 1) * np.prod(np.maximum(np.asarray(ref) - corner, 0.0))
    return total


def test_unit_box():
    assert hypervolume([(0, 0, 0)], UNIT) == 1.0


def test_point_on_reference():
    assert hypervolume([UNIT], UNIT) == 0.0


def test_empty_front():
    assert hypervolume([], UNIT) == 0.0
    assert contributions([], UNIT).shape == (0,)


def test_two_point_front():
    assert hypervolume(TWO_POINT, UNIT) == pytest.approx(0.375, abs=1e-15)
    assert contributions(TWO_POINT, UNIT) == pytest.approx([0.125, 0.125], abs=1e-15)
    assert hv_contribution(TWO_POINT, UNIT, 1) == pytest.approx(0.125, abs=1e-15)


def test_duplicate_point_contributes_nothing():
    front = TWO_POINT + [TWO_POINT[0]]
    assert hv_contribution(front, UNIT, 2) == 0.0
    assert contributions(front, UNIT)[[0, 2]] == pytest.approx([0.0, 0.0], abs=1e-15)


def test_single_point_contribution_is_its_volume():
    front = [(0.2, 0.3, 0.4)]
    assert contributions(front, UNIT)[0] == pytest.approx(hypervolume(front, UNIT), abs=1e-15)


def test_points_beyond_reference_ignored():
    assert hypervolume([(2.0, 0.0, 0.0), (0.5, 0.5, 0.5)], UNIT) == pytest.approx(0.125)


def test_index_out_of_range():
    with pytest.raises(IndexError):
        hv_contribution(TWO_POINT, UNIT, 2)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        hypervolume([(np.nan, 0, 0)], UNIT)


point = st.tuples(*[st.floats(0, 1, allow_nan=False)] * 3)


@settings(max_examples=80, deadline=None)
@given(st.lists(point, min_size=1, max_size=8))
def test_matches_inclusion_exclusion(front):
    assert hypervolume(front, UNIT) == pytest.approx(inclusion_exclusion(front, UNIT), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(point, min_size=1, max_size=10))
def test_contributions_are_removal_losses(front):
    contrib = contributions(front, UNIT)
    total = hypervolume(front, UNIT)
    for i in range(len(front)):
        rest = front[:i] + front[i + 1 :]
        assert contrib[i] == pytest.approx(total - hypervolume(rest, UNIT), abs=1e-12)
    assert contrib.sum() <= total + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(point, min_size=1, max_size=10), point)
def test_adding_a_point_never_loses_volume(front, extra):
    assert hypervolume(front + [extra], UNIT) >= hypervolume(front, UNIT) - 1e-12


def test_random_fronts_against_monte_carlo():
    rng = np.random.default_rng(11)
    samples = 10**6
    for _ in range(20):
        front = rng.uniform(0, 1, size=(10, 3))
        ref = np.ones(3)
        probe = rng.uniform(0, 1, size=(samples, 3))
        covered = np.zeros(samples, dtype=bool)
        for p in front:
            covered |= np.all(probe >= p, axis=1)
        frac = covered.mean()
        se = np.sqrt(frac * (1 - frac) / samples)
        assert abs(hypervolume(front, ref) - frac) <= 3 * se
