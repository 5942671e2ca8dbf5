from dataclasses import replace

import numpy as np
import pytest
import torch

from src.core.config import TrainConfig
from src.core.errors import InvalidArgumentError, TrainingDivergedError
from src.model.gat import GraphBatch, GraphSample, predict
from src.model.training import TrainHistory, class_weights, train

SMALL = TrainConfig(
    lr=1e-2, weight_decay=0.0, epochs=60, batch_size=4, seed=3,
    hidden_dim=8, layers=2, heads=2, dropout=0.0, mlp_hidden=8, num_classes=2,
)


def separable_set(rng, n=16):
    """Class decides the sign of the first feature on every node"""
    samples = []
    for i in range(n):
        label = i % 2
        nodes = int(rng.integers(3, 7))
        x = rng.normal(scale=0.3, size=(nodes, 3))
        x[:, 0] += 1.5 if label else -1.5
        edges = np.array([np.arange(nodes - 1), np.arange(1, nodes)])
        samples.append(GraphSample(f"g{i}", x, edges, label))
    return samples


def test_separable_data_is_learned(rng):
    data = separable_set(rng)
    model, history = train(data, SMALL)
    probs = predict(model, GraphBatch.collate(data))
    assert (probs.argmax(axis=1) == [s.label for s in data]).all()
    assert history.epochs[-1].train_loss < history.epochs[0].train_loss
    assert len(history.epochs) == SMALL.epochs


def test_training_is_deterministic(rng):
    data = separable_set(rng)
    config = replace(SMALL, epochs=5, dropout=0.3)
    m1, h1 = train(data, config)
    m2, h2 = train(data, config)
    assert h1.to_json_list() == h2.to_json_list()
    for (_, a), (_, b) in zip(m1.named_parameters(), m2.named_parameters()):
        assert torch.equal(a, b)


def test_validation_metric_recorded(rng):
    data = separable_set(rng)
    _, history = train(data[:12], replace(SMALL, epochs=3), val_set=data[12:], metric_fn=lambda p, s: 42.0)
    assert all(r.val_metric == 42.0 and r.val_loss is not None for r in history.epochs)


def test_nan_features_diverge(rng):
    data = separable_set(rng, n=4)
    data[0].features[0, 0] = np.nan
    with pytest.raises(TrainingDivergedError) as info:
        train(data, replace(SMALL, epochs=2))
    assert info.value.epoch == 1


def test_invalid_training_inputs(rng):
    with pytest.raises(InvalidArgumentError):
        train([], SMALL)
    unlabelled = separable_set(rng, n=2)
    unlabelled[0].label = None
    with pytest.raises(InvalidArgumentError):
        train(unlabelled, SMALL)
    with pytest.raises(InvalidArgumentError):
        train(separable_set(rng, n=2), replace(SMALL, optimizer="rmsprop"))


def test_class_weights():
    assert class_weights([0, 1], 3).tolist() == [1.0, 1.0, 1.0]
    weights = class_weights([0, 0, 0, 1], 3, "balanced").tolist()
    assert weights == pytest.approx([4 / 6, 2.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        class_weights([0], 2, "inverse")


def test_history_round_trip(tmp_path, rng):
    _, history = train(separable_set(rng, n=4), replace(SMALL, epochs=2))
    back = TrainHistory.from_json_list(history.to_json_list())
    assert back == history
    history.save(str(tmp_path / "history.json"))
    assert (tmp_path / "history.json").read_text().startswith("[")
