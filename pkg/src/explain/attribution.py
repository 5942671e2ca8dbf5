"""
Integrated Gradients: feature attributions for one slide prediction

- Baseline keeps the graph connectivity and zeroes every node feature
- Riemann sum over interpolants (k/m) x, k = 1..m, of the target logit gradient
- Completeness gap |sum IG - (F(x) - F(0))| is stored with the report
- Region importance and top-k named features with training-set context
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence
import json
import logging

import numpy as np
import torch

from src.core.errors import InvalidArgumentError
from src.features.stats import DatasetStats
from src.model.gat import DTYPE, GatModel, GraphBatch

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 64


@dataclass
class FeatureAttribution:
    name: str
    attribution: float
    node_id: int
    value: float
    percentile: Optional[float]
    train_mean: Optional[float]
    train_std: Optional[float]


@dataclass
class AttributionReport:
    """Per-node, per-feature attributions for one slide and target class"""
    slide_id: str
    node_ids: List[int]
    feature_names: List[str]
    scores: np.ndarray  # (nodes, features)
    target: int
    steps: int
    output: float
    baseline_output: float
    completeness_gap: float
    probabilities: List[float] = field(default_factory=list)
    values: Optional[np.ndarray] = None  # raw (unstandardized) feature values

    def to_json_dict(self, top: Sequence[FeatureAttribution] = ()) -> Dict:
        importance = region_importance(self)
        return {
            "slide_id": self.slide_id,
            "target_class": self.target,
            "probabilities": list(self.probabilities),
            "steps": self.steps,
            "completeness_gap": self.completeness_gap,
            "output": self.output,
            "baseline_output": self.baseline_output,
            "node_importance": [
                {"node_id": int(n), "importance": float(v)} for n, v in zip(self.node_ids, importance)
            ],
            "top_features": [f.__dict__ for f in top],
        }

    def save(self, path: str, top: Sequence[FeatureAttribution] = ()):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_dict(top), handle, indent=1)
            handle.write("\n")


def integrated_gradients_fn(
    fn: Callable[[torch.Tensor], torch.Tensor],
    x: torch.Tensor,
    steps: int = DEFAULT_STEPS,
) -> np.ndarray:
    """
    Integrated Gradients of a scalar function from a zero baseline.

    Args:
        fn: Maps an input shaped like x to a scalar tensor
        x: Input
        steps: m, number of interpolants

    Returns:
        Attributions shaped like x
    """
    if steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    x = x.detach().to(DTYPE)
    total = torch.zeros_like(x)
    for k in range(1, steps + 1):
        point = (x * (k / steps)).requires_grad_(True)
        (grad,) = torch.autograd.grad(fn(point), point)
        total += grad
    return (x * total / steps).numpy()


def integrated_gradients(
    model: GatModel,
    batch: GraphBatch,
    target: Optional[int] = None,
    steps: int = DEFAULT_STEPS,
    graph_index: int = 0,
    node_ids: Optional[Sequence[int]] = None,
    feature_names: Optional[Sequence[str]] = None,
    values: Optional[np.ndarray] = None,
) -> AttributionReport:
    """
    Attribute one graph's target logit to its node features.

    Args:
        model: Trained network (run without dropout)
        batch: Collated graphs; the interpolants reuse its edge list
        target: Class to explain, the predicted class when None
        steps: Number of interpolation steps
        graph_index: Which graph of the batch to explain
        node_ids: Node ids for the graph's rows, positional by default
        feature_names: Column names, positional by default
        values: Raw feature values for reporting

    Returns:
        AttributionReport restricted to the explained graph's nodes
    """
    if steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    model.eval()

    def logit_of(x: torch.Tensor) -> torch.Tensor:
        logits, _ = model(x, batch.edge_index, batch.graph_ids, batch.num_graphs, train_mode=False)
        return logits[graph_index]

    with torch.no_grad():
        logits = logit_of(batch.x)
        probabilities = torch.softmax(logits, dim=0)
        baseline_logits = logit_of(torch.zeros_like(batch.x))
    if target is None:
        target = int(torch.argmax(probabilities))
    if not 0 <= target < logits.shape[0]:
        raise InvalidArgumentError(f"Target class {target} outside 0..{logits.shape[0] - 1}")

    scores = integrated_gradients_fn(lambda x: logit_of(x)[target], batch.x, steps)
    rows = (batch.graph_ids == graph_index).numpy()
    scores = scores[rows]

    output = float(logits[target])
    baseline = float(baseline_logits[target])
    gap = abs(float(scores.sum()) - (output - baseline))
    n_rows, n_cols = scores.shape
    logger.debug(f"IG: target={target}, steps={steps}, completeness gap={gap:.3e}")

    return AttributionReport(
        slide_id=batch.slide_ids[graph_index] if batch.slide_ids else str(graph_index),
        node_ids=list(node_ids) if node_ids is not None else list(range(n_rows)),
        feature_names=list(feature_names) if feature_names is not None else [str(i) for i in range(n_cols)],
        scores=scores,
        target=target,
        steps=steps,
        output=output,
        baseline_output=baseline,
        completeness_gap=gap,
        probabilities=[float(p) for p in probabilities],
        values=None if values is None else np.asarray(values, dtype=np.float64),
    )


def region_importance(report: AttributionReport) -> np.ndarray:
    """L1 norm of each node's attribution row"""
    return np.abs(np.asarray(report.scores)).sum(axis=1)


def explain_features(
    report: AttributionReport,
    stats: Optional[DatasetStats],
    k: int,
) -> List[FeatureAttribution]:
    """
    Top-k features by |sum of attributions over nodes|.

    Each entry names the node with the largest |attribution| for that
    feature, its raw value and where that value falls in the training
    distribution.
    """
    scores = np.asarray(report.scores)
    n_features = scores.shape[1]
    if k > n_features:
        logger.warning(f"Requested top {k} features but only {n_features} are active; truncating")
        k = n_features

    totals = scores.sum(axis=0)
    # stable sort keeps catalog order on ties
    order = np.argsort(-np.abs(totals), kind="stable")[:k]

    ranked: List[FeatureAttribution] = []
    for column in order:
        row = int(np.argmax(np.abs(scores[:, column])))
        name = report.feature_names[column]
        value = float(report.values[row, column]) if report.values is not None else float("nan")
        percentile = mean = std = None
        if stats is not None and name in stats.names:
            index = stats.index(name)
            mean = float(stats.mean[index])
            std = float(stats.std[index])
            if report.values is not None:
                percentile = stats.percentile_of(index, value)
        ranked.append(
            FeatureAttribution(
                name=name,
                attribution=float(totals[column]),
                node_id=int(report.node_ids[row]),
                value=value,
                percentile=percentile,
                train_mean=mean,
                train_std=std,
            )
        )
    return ranked
