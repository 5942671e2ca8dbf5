import numpy as np
import pytest

from src.core.errors import InvalidArgumentError
from src.evaluation.survival import (
    discretize_survival,
    parse_stage,
    risk_scores,
    survival_cut_points,
    survival_groups,
)


def test_quartile_bins():
    times = [1, 2, 3, 4, 5, 6, 7, 8]
    assert discretize_survival(times, [True] * 8) == [0, 0, 1, 1, 2, 2, 3, 3]


def test_censored_subjects_binned_by_their_time():
    times = [1, 2, 3, 4, 100, 2.5]
    events = [True, True, True, True, False, False]
    groups = discretize_survival(times, events)
    assert groups[4] == 3
    assert groups[5] == 1  # edges 1.75, 2.5, 3.25: one edge strictly below 2.5


def test_equal_edges_collapse():
    groups = discretize_survival([5, 5, 5, 5, 9], [True] * 5)
    assert groups == [0, 0, 0, 0, 3]


def test_edges_apply_to_other_subjects():
    edges = survival_cut_points([1, 2, 3, 4], [True] * 4)
    np.testing.assert_allclose(edges, [1.75, 2.5, 3.25])
    assert survival_groups([0.5, 2.5, 2.6, 99], edges) == [0, 1, 2, 3]


def test_not_enough_events():
    with pytest.raises(InvalidArgumentError):
        discretize_survival([1, 2, 3], [True, True, False])
    with pytest.raises(InvalidArgumentError):
        discretize_survival([1, 2], [True])


def test_risk_is_negated_expected_group():
    probs = np.array([[1.0, 0, 0, 0], [0, 0, 0, 1.0], [0.25, 0.25, 0.25, 0.25]])
    np.testing.assert_allclose(risk_scores(probs), [0.0, -3.0, -1.5])


@pytest.mark.parametrize(
    "text,expected",
    [("I", 0), ("ii", 1), ("Stage IIIA", 2), ("stage ivb", 3), ("IIC", 1), (" 3 ", 3), ("0", 0)],
)
def test_parse_stage(text, expected):
    assert parse_stage(text) == expected


@pytest.mark.parametrize("text", ["V", "4", "", "Stage X"])
def test_parse_stage_rejects(text):
    with pytest.raises(InvalidArgumentError):
        parse_stage(text)
