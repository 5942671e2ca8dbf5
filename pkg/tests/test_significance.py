import numpy as np
import pytest
from scipy import stats

from src.core.errors import DegenerateInputError, InvalidArgumentError
from src.evaluation.significance import compare_runs, format_table, summarize, t_test


def test_t_test_matches_pooled_formula():
    a = [80.0, 82.0, 85.0, 79.0, 81.0]
    b = [75.0, 77.0, 76.0, 79.0, 74.0]
    na, nb = len(a), len(b)
    pooled = ((na - 1) * np.var(a, ddof=1) + (nb - 1) * np.var(b, ddof=1)) / (na + nb - 2)
    t = (np.mean(a) - np.mean(b)) / np.sqrt(pooled * (1 / na + 1 / nb))
    expected = 2 * stats.t.sf(abs(t), na + nb - 2)
    assert t_test(a, b) == pytest.approx(expected)
    assert compare_runs(a, b).significant
    assert compare_runs(a, b).marker() == "*"


def test_constant_sets():
    assert t_test([70.0, 70.0], [70.0, 70.0]) == 1.0
    with pytest.raises(DegenerateInputError):
        t_test([70.0, 70.0], [60.0, 60.0])
    with pytest.raises(InvalidArgumentError):
        t_test([1.0], [1.0, 2.0])


def test_summarize_uses_population_std():
    summary = summarize({"auc": [60.0, 80.0], "empty": []})
    assert summary == {"auc": {"mean": 70.0, "std": 10.0}}


def test_format_table():
    text = format_table([{"tau": 0.9, "nodes": 12, "auc": None}], ["tau", "nodes", "auc"])
    lines = text.splitlines()
    assert lines[0].split() == ["tau", "nodes", "auc"]
    assert lines[2].split() == ["0.90", "12", "-"]
