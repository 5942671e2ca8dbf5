import logging

import numpy as np
import pytest
import torch

from src.core.errors import InvalidArgumentError
from src.explain.attribution import (
    explain_features,
    integrated_gradients,
    integrated_gradients_fn,
    region_importance,
)
from src.features.stats import DatasetStats
from src.model.gat import GraphBatch, GraphSample


def test_linear_function_is_exact():
    w = torch.tensor([[1.5, -2.0], [0.5, 3.0]], dtype=torch.float64)
    x = torch.tensor([[2.0, 1.0], [-1.0, 4.0]], dtype=torch.float64)
    scores = integrated_gradients_fn(lambda z: (w * z).sum(), x, steps=7)
    np.testing.assert_allclose(scores, (w * x).numpy(), rtol=1e-12)


def test_right_riemann_sum_on_quadratic():
    x = torch.tensor([3.0, -2.0], dtype=torch.float64)
    m = 10
    scores = integrated_gradients_fn(lambda z: (z ** 2).sum(), x, steps=m)
    np.testing.assert_allclose(scores, x.numpy() ** 2 * (m + 1) / m, rtol=1e-12)


def test_steps_must_be_positive():
    with pytest.raises(InvalidArgumentError):
        integrated_gradients_fn(lambda z: z.sum(), torch.ones(2, dtype=torch.float64), steps=0)


def graph_batch(rng):
    x = rng.normal(size=(4, 3))
    return GraphBatch.collate([GraphSample("slide_a", x, np.array([[0, 1, 2], [1, 2, 3]]))]), x


def test_report_covers_graph_and_completeness_improves(tiny_model, rng):
    batch, x = graph_batch(rng)
    coarse = integrated_gradients(tiny_model, batch, target=1, steps=4)
    fine = integrated_gradients(tiny_model, batch, target=1, steps=256, node_ids=[10, 11, 12, 13])
    assert fine.scores.shape == (4, 3)
    assert fine.node_ids == [10, 11, 12, 13]
    assert fine.slide_id == "slide_a"
    assert fine.completeness_gap <= coarse.completeness_gap + 1e-12
    assert fine.completeness_gap < 0.05 * max(1.0, abs(fine.output - fine.baseline_output))
    assert sum(fine.probabilities) == pytest.approx(1.0)


def test_default_target_is_predicted_class(tiny_model, rng):
    batch, _ = graph_batch(rng)
    report = integrated_gradients(tiny_model, batch, steps=2)
    assert report.target == int(np.argmax(report.probabilities))
    with pytest.raises(InvalidArgumentError):
        integrated_gradients(tiny_model, batch, target=9, steps=2)


def test_second_graph_of_batch(tiny_model, rng):
    a = GraphSample("a", rng.normal(size=(2, 3)), np.array([[0], [1]]))
    b = GraphSample("b", rng.normal(size=(3, 3)), np.array([[0, 1], [1, 2]]))
    batch = GraphBatch.collate([a, b])
    report = integrated_gradients(tiny_model, batch, target=0, steps=8, graph_index=1)
    alone = integrated_gradients(tiny_model, GraphBatch.collate([b]), target=0, steps=8)
    assert report.slide_id == "b"
    np.testing.assert_allclose(report.scores, alone.scores, rtol=1e-10, atol=1e-14)


def test_region_importance_is_row_l1(tiny_model, rng):
    batch, _ = graph_batch(rng)
    report = integrated_gradients(tiny_model, batch, target=2, steps=4)
    np.testing.assert_allclose(region_importance(report), np.abs(report.scores).sum(axis=1))


def test_top_features_ranked_with_context(tiny_model, rng, caplog):
    batch, x = graph_batch(rng)
    names = ["f0", "f1", "f2"]
    report = integrated_gradients(
        tiny_model, batch, target=0, steps=8, node_ids=[5, 6, 7, 8], feature_names=names, values=x
    )
    stats = DatasetStats.from_matrix(rng.normal(size=(50, 3)), names)
    with caplog.at_level(logging.WARNING):
        top = explain_features(report, stats, k=5)
    assert len(top) == 3
    assert "truncating" in caplog.text
    totals = np.abs(report.scores.sum(axis=0))
    assert [t.name for t in top] == [names[i] for i in np.argsort(-totals, kind="stable")]
    first = top[0]
    column = names.index(first.name)
    row = int(np.argmax(np.abs(report.scores[:, column])))
    assert first.node_id == [5, 6, 7, 8][row]
    assert first.value == pytest.approx(x[row, column])
    assert 0.0 <= first.percentile <= 100.0
    assert first.train_std == pytest.approx(stats.std[column])


def test_report_json(tiny_model, rng, tmp_path):
    batch, _ = graph_batch(rng)
    report = integrated_gradients(tiny_model, batch, target=0, steps=2)
    path = tmp_path / "explanation.json"
    report.save(str(path), explain_features(report, None, 2))
    text = path.read_text()
    assert '"node_importance"' in text and '"top_features"' in text
