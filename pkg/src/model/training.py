"""
Training Loop: seeded mini-batch optimisation of a GatModel

Data order, initial weights and dropout masks all derive from the
configured seed, so two runs with the same inputs are bit-identical.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import json
import logging
import math

import numpy as np
import torch

from src.core.config import TrainConfig
from src.core.errors import InvalidArgumentError, TrainingDivergedError, UndefinedMetricError
from src.model.gat import (
    GatModel,
    GraphBatch,
    GraphSample,
    ModelConfig,
    backward,
    gat_forward,
    loss,
    predict,
)

logger = logging.getLogger(__name__)

MetricFn = Callable[[np.ndarray, Sequence[GraphSample]], float]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: Optional[float] = None
    val_metric: Optional[float] = None


@dataclass
class TrainHistory:
    epochs: List[EpochRecord] = field(default_factory=list)

    def to_json_list(self) -> List[Dict]:
        return [record.__dict__.copy() for record in self.epochs]

    @classmethod
    def from_json_list(cls, data: List[Dict]) -> "TrainHistory":
        return cls(epochs=[EpochRecord(**record) for record in data])

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_list(), handle, indent=1)
            handle.write("\n")


def class_weights(labels: Sequence[int], num_classes: int, mode: str = "none") -> torch.Tensor:
    """
    Per-class loss weights.

    "none" gives unit weights; "balanced" gives n / (classes present x count),
    with weight 0 for classes absent from the labels.
    """
    if mode == "none":
        return torch.ones(num_classes, dtype=torch.float64)
    if mode != "balanced":
        raise InvalidArgumentError(f"Unknown class weight mode: {mode}")
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes).astype(np.float64)
    present = int((counts > 0).sum())
    weights = np.where(counts > 0, len(labels) / (present * np.maximum(counts, 1)), 0.0)
    return torch.tensor(weights, dtype=torch.float64)


def model_config_from(train_config: TrainConfig, in_dim: int) -> ModelConfig:
    return ModelConfig(
        in_dim=in_dim,
        hidden_dim=train_config.hidden_dim,
        layers=train_config.layers,
        heads=train_config.heads,
        dropout=train_config.dropout,
        mlp_hidden=train_config.mlp_hidden,
        num_classes=train_config.num_classes,
        readout=train_config.readout,
    )


def _optimizer(model: GatModel, config: TrainConfig) -> torch.optim.Optimizer:
    if config.optimizer == "adamw":
        return torch.optim.AdamW(
            model.parameters(), lr=config.lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=config.weight_decay
        )
    if config.optimizer == "sgd":
        return torch.optim.SGD(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    raise InvalidArgumentError(f"Unknown optimizer: {config.optimizer}")


def evaluate_loss(model: GatModel, samples: Sequence[GraphSample], weights: torch.Tensor) -> float:
    batch = GraphBatch.collate(samples)
    with torch.no_grad():
        logits, _ = model(batch.x, batch.edge_index, batch.graph_ids, batch.num_graphs)
        return float(loss(logits, batch.labels, weights))


def train(
    train_set: Sequence[GraphSample],
    config: TrainConfig,
    val_set: Optional[Sequence[GraphSample]] = None,
    metric_fn: Optional[MetricFn] = None,
) -> Tuple[GatModel, TrainHistory]:
    """
    Train a fresh GatModel.

    Args:
        train_set: Labelled training graphs
        config: Architecture and optimisation settings
        val_set: Optional labelled validation graphs
        metric_fn: Validation metric over (probabilities, samples)

    Returns:
        (trained model, per-epoch history)
    """
    if not train_set:
        raise InvalidArgumentError("Training split is empty")
    if any(s.label is None for s in train_set):
        raise InvalidArgumentError("Every training graph needs a label")

    in_dim = int(np.asarray(train_set[0].features).shape[1])
    model = GatModel(model_config_from(config, in_dim))
    model.reset_parameters(config.seed)
    optimizer = _optimizer(model, config)
    weights = class_weights([int(s.label) for s in train_set], config.num_classes, config.class_weight)

    order_rng = np.random.default_rng(config.seed)
    dropout_generator = torch.Generator().manual_seed(config.seed + 1)
    history = TrainHistory()

    for epoch in range(1, config.epochs + 1):
        model.train()
        order = order_rng.permutation(len(train_set))
        total, seen = 0.0, 0
        for batch_index, start in enumerate(range(0, len(order), config.batch_size)):
            members = [train_set[i] for i in order[start:start + config.batch_size]]
            batch = GraphBatch.collate(members)
            result = gat_forward(batch, model, train_mode=True, generator=dropout_generator)
            value = loss(result.logits, batch.labels, weights)
            if not torch.isfinite(value):
                logger.error(f"Loss became non-finite at epoch {epoch}, batch {batch_index}")
                raise TrainingDivergedError(
                    f"Non-finite loss at epoch {epoch}, batch {batch_index}", epoch=epoch, batch=batch_index
                )

            gradients = backward(value, model, result)
            optimizer.zero_grad()
            for name, param in model.named_parameters():
                param.grad = gradients.parameters[name]
            optimizer.step()
            total += float(value) * len(members)
            seen += len(members)

        model.eval()
        record = EpochRecord(epoch=epoch, train_loss=total / seen)
        if val_set:
            record.val_loss = evaluate_loss(model, val_set, weights)
            if metric_fn is not None:
                try:
                    record.val_metric = float(metric_fn(predict(model, GraphBatch.collate(val_set)), val_set))
                except UndefinedMetricError as e:
                    logger.warning(f"Validation metric undefined at epoch {epoch}: {e}")
        history.epochs.append(record)

        if not math.isfinite(record.train_loss):
            raise TrainingDivergedError(f"Non-finite training loss at epoch {epoch}", epoch=epoch)
        if epoch == 1 or epoch == config.epochs or epoch % 10 == 0:
            logger.info(
                f"Epoch {epoch}/{config.epochs}: train_loss={record.train_loss:.4f}"
                + (f", val_loss={record.val_loss:.4f}" if record.val_loss is not None else "")
            )

    return model, history
