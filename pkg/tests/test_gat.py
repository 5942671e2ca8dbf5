import numpy as np
import pytest
import torch

from src.core.errors import InvalidArgumentError
from src.model.gat import (
    GatLayer,
    GatModel,
    GraphBatch,
    GraphSample,
    ModelConfig,
    backward,
    gat_forward,
    loss,
    predict,
)


def sample(features, edges, label=None, slide_id="s"):
    return GraphSample(slide_id, np.asarray(features, dtype=float), np.asarray(edges, dtype=int).reshape(2, -1), label)


def triangle(rng, label=0, slide_id="s"):
    return sample(rng.normal(size=(3, 3)), [[0, 1], [1, 2]], label, slide_id)


def test_collate_adds_one_self_loop_and_offsets(rng):
    a = sample(rng.normal(size=(2, 3)), [[0, 1, 0], [1, 0, 0]])  # duplicate and self-loop given
    b = sample(rng.normal(size=(3, 3)), [[0], [2]])
    batch = GraphBatch.collate([a, b])
    pairs = sorted(map(tuple, batch.edge_index.T.tolist()))
    assert pairs == sorted([(0, 1), (1, 0), (0, 0), (1, 1), (2, 4), (4, 2), (2, 2), (3, 3), (4, 4)])
    assert batch.graph_ids.tolist() == [0, 0, 1, 1, 1]
    assert batch.labels is None
    assert batch.num_nodes == 5


def test_collate_rejects_bad_inputs(rng):
    with pytest.raises(InvalidArgumentError):
        GraphBatch.collate([])
    with pytest.raises(InvalidArgumentError):
        GraphBatch.collate([sample(rng.normal(size=(2, 3)), [[0], [5]])])
    with pytest.raises(InvalidArgumentError):
        GraphBatch.collate([sample(rng.normal(size=(2, 3)), []), sample(rng.normal(size=(2, 4)), [])])


def test_single_layer_matches_hand_computation(rng):
    layer = GatLayer(in_dim=2, out_dim=2, heads=1, concat=False)
    with torch.no_grad():
        layer.weight.copy_(torch.tensor(rng.normal(size=(2, 2))))
        layer.att_self.copy_(torch.tensor(rng.normal(size=(1, 2))))
        layer.att_neigh.copy_(torch.tensor(rng.normal(size=(1, 2))))
    x = rng.normal(size=(3, 2))
    batch = GraphBatch.collate([sample(x, [[0, 1], [1, 2]])])
    out, _ = layer(batch.x, batch.edge_index)

    w = layer.weight.detach().numpy()
    a_self = layer.att_self.detach().numpy()[0]
    a_neigh = layer.att_neigh.detach().numpy()[0]
    wh = x @ w
    neighbours = {0: [0, 1], 1: [0, 1, 2], 2: [1, 2]}
    for i, js in neighbours.items():
        e = np.array([a_self @ wh[i] + a_neigh @ wh[j] for j in js])
        e = np.where(e > 0, e, 0.2 * e)
        alpha = np.exp(e) / np.exp(e).sum()
        z = sum(a * wh[j] for a, j in zip(alpha, js))
        expected = np.where(z > 0, z, np.expm1(z))
        np.testing.assert_allclose(out[i].detach().numpy(), expected, rtol=1e-12)


def test_attention_sums_to_one_per_target(tiny_model, rng):
    batch = GraphBatch.collate([triangle(rng), triangle(rng)])
    _, attention = tiny_model(batch.x, batch.edge_index, batch.graph_ids, batch.num_graphs)
    for alpha in attention:
        totals = torch.zeros(batch.num_nodes, alpha.shape[1], dtype=alpha.dtype).index_add(
            0, batch.edge_index[1], alpha
        )
        np.testing.assert_allclose(totals.detach().numpy(), 1.0, rtol=1e-12)


def test_gradients_match_finite_differences(tiny_model, rng):
    batch = GraphBatch.collate([triangle(rng, 1, "a"), triangle(rng, 3, "b")])

    def value_at(x):
        logits, _ = tiny_model(x, batch.edge_index, batch.graph_ids, batch.num_graphs)
        return float(loss(logits, batch.labels))

    result = gat_forward(batch, tiny_model)
    grads = backward(loss(result.logits, batch.labels), tiny_model, result)
    h = 1e-6
    x = batch.x.clone()
    for node, feature in [(0, 0), (2, 1), (4, 2)]:
        up, down = x.clone(), x.clone()
        up[node, feature] += h
        down[node, feature] -= h
        numeric = (value_at(up) - value_at(down)) / (2 * h)
        assert float(grads.inputs[node, feature]) == pytest.approx(numeric, rel=1e-5, abs=1e-9)

    param = dict(tiny_model.named_parameters())["gat_layers.0.att_self"]
    with torch.no_grad():
        original = param[0, 1].item()
        param[0, 1] = original + h
        plus = value_at(x)
        param[0, 1] = original - h
        minus = value_at(x)
        param[0, 1] = original
    numeric = (plus - minus) / (2 * h)
    analytic = float(grads.parameters["gat_layers.0.att_self"][0, 1])
    assert analytic == pytest.approx(numeric, rel=1e-5, abs=1e-9)


def test_node_order_does_not_change_prediction(tiny_model, rng):
    x = rng.normal(size=(4, 3))
    edges = [[0, 1, 2], [1, 2, 3]]
    perm = np.array([2, 0, 3, 1])  # new position of old node k is perm[k]
    x_perm = np.empty_like(x)
    x_perm[perm] = x
    edges_perm = perm[np.asarray(edges)]
    p1 = predict(tiny_model, GraphBatch.collate([sample(x, edges)]))
    p2 = predict(tiny_model, GraphBatch.collate([sample(x_perm, edges_perm)]))
    np.testing.assert_allclose(p1, p2, rtol=1e-12)


@pytest.mark.parametrize("mode", ["mean", "sum", "max"])
def test_readout(mode):
    model = GatModel(ModelConfig(in_dim=2, hidden_dim=2, layers=1, heads=1, readout=mode))
    h = torch.tensor([[1.0, -2.0], [3.0, 0.0], [5.0, 1.0]], dtype=torch.float64)
    pooled = model.readout(h, torch.tensor([0, 0, 1]), 2)
    expected = {
        "mean": [[2.0, -1.0], [5.0, 1.0]],
        "sum": [[4.0, -2.0], [5.0, 1.0]],
        "max": [[3.0, 0.0], [5.0, 1.0]],
    }[mode]
    np.testing.assert_allclose(pooled.numpy(), expected)


def test_unknown_readout_rejected():
    with pytest.raises(InvalidArgumentError):
        GatModel(ModelConfig(in_dim=2, readout="median"))


def test_predict_rows_sum_to_one(tiny_model, rng):
    probs = predict(tiny_model, GraphBatch.collate([triangle(rng), triangle(rng)]))
    assert probs.shape == (2, 4)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_reset_parameters_is_seeded():
    config = ModelConfig(in_dim=3, hidden_dim=4, layers=2, heads=2, mlp_hidden=5)
    a, b = GatModel(config), GatModel(config)
    a.reset_parameters(11)
    b.reset_parameters(11)
    for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb)


def test_loss_label_range_checked():
    logits = torch.zeros(2, 4, dtype=torch.float64)
    with pytest.raises(InvalidArgumentError):
        loss(logits, torch.tensor([0, 4]))
    assert float(loss(logits, torch.tensor([0, 3]))) == pytest.approx(np.log(4))


def test_wrong_feature_dimension(tiny_model, rng):
    batch = GraphBatch.collate([sample(rng.normal(size=(2, 5)), [[0], [1]])])
    with pytest.raises(InvalidArgumentError):
        predict(tiny_model, batch)
