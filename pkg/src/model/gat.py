"""
Graph Attention Network: slide-level classifier over region graphs

- GraphBatch: several graphs concatenated, directed edges + one self-loop per node
- GatLayer: multi-head attention with softmax over each node's in-neighbours
- GatModel: stacked layers (concat heads, last layer averages) -> readout -> MLP
- loss / backward / predict helpers used by training and attribution

All tensors are float64.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from src.core.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DTYPE = torch.float64
NEGATIVE_SLOPE = 0.2


@dataclass
class GraphSample:
    """One slide graph ready for the model"""
    slide_id: str
    features: np.ndarray  # (N, F)
    edges: np.ndarray  # (2, E) undirected pairs, positional node indices
    label: Optional[int] = None


@dataclass
class GraphBatch:
    """Disjoint union of graphs"""
    x: torch.Tensor
    edge_index: torch.Tensor  # (2, E'): row 0 source j, row 1 target i
    graph_ids: torch.Tensor
    num_graphs: int
    slide_ids: List[str] = field(default_factory=list)
    labels: Optional[torch.Tensor] = None

    @property
    def num_nodes(self) -> int:
        return int(self.x.shape[0])

    @classmethod
    def collate(cls, graphs: Sequence[GraphSample]) -> "GraphBatch":
        """
        Concatenate graphs, offsetting edge indices.

        Undirected edges become two directed edges; existing self-loops and
        duplicates are dropped, then every node gets exactly one self-loop.
        """
        if not graphs:
            raise InvalidArgumentError("Cannot collate an empty list of graphs")
        dims = {np.asarray(g.features).shape[1] for g in graphs}
        if len(dims) != 1:
            raise InvalidArgumentError(f"Feature dimensions disagree across graphs: {sorted(dims)}")

        features, sources, targets, graph_ids = [], [], [], []
        offset = 0
        for index, graph in enumerate(graphs):
            x = np.asarray(graph.features, dtype=np.float64)
            n = x.shape[0]
            if n == 0:
                raise InvalidArgumentError(f"Graph {graph.slide_id} has no nodes")
            edges = np.asarray(graph.edges, dtype=np.int64).reshape(2, -1)
            if edges.size and (edges.min() < 0 or edges.max() >= n):
                raise InvalidArgumentError(f"Graph {graph.slide_id} has an edge endpoint outside 0..{n - 1}")
            pairs = {(int(a), int(b)) for a, b in edges.T if a != b}
            pairs |= {(b, a) for a, b in pairs}
            directed = sorted(pairs) + [(i, i) for i in range(n)]
            sources.extend(offset + a for a, _ in directed)
            targets.extend(offset + b for _, b in directed)
            features.append(x)
            graph_ids.extend([index] * n)
            offset += n

        labels = None
        if all(g.label is not None for g in graphs):
            labels = torch.tensor([int(g.label) for g in graphs], dtype=torch.long)
        return cls(
            x=torch.tensor(np.vstack(features), dtype=DTYPE),
            edge_index=torch.tensor([sources, targets], dtype=torch.long),
            graph_ids=torch.tensor(graph_ids, dtype=torch.long),
            num_graphs=len(graphs),
            slide_ids=[g.slide_id for g in graphs],
            labels=labels,
        )


@dataclass
class ModelConfig:
    """Architecture of a GatModel"""
    in_dim: int
    hidden_dim: int = 64
    layers: int = 3
    heads: int = 4
    dropout: float = 0.2
    mlp_hidden: int = 64
    num_classes: int = 4
    readout: str = "mean"

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def _dropout(x: torch.Tensor, p: float, generator: Optional[torch.Generator]) -> torch.Tensor:
    if p <= 0:
        return x
    keep = torch.bernoulli(torch.full_like(x, 1.0 - p), generator=generator)
    return x * keep / (1.0 - p)


class GatLayer(nn.Module):
    """
    One multi-head attention layer.

    e_ij = LeakyReLU(a_self . W h_i + a_neigh . W h_j), softmax over the
    in-neighbours j of i (self included), h'_i = ELU(sum_j alpha_ij W h_j).
    """

    def __init__(self, in_dim: int, out_dim: int, heads: int, concat: bool):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.heads = heads
        self.concat = concat
        self.weight = nn.Parameter(torch.zeros(in_dim, heads * out_dim, dtype=DTYPE))
        self.att_self = nn.Parameter(torch.zeros(heads, out_dim, dtype=DTYPE))
        self.att_neigh = nn.Parameter(torch.zeros(heads, out_dim, dtype=DTYPE))

    @property
    def output_dim(self) -> int:
        return self.heads * self.out_dim if self.concat else self.out_dim

    def forward(
        self,
        h: torch.Tensor,
        edge_index: torch.Tensor,
        dropout: float = 0.0,
        generator: Optional[torch.Generator] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        n = h.shape[0]
        source, target = edge_index[0], edge_index[1]
        wh = (h @ self.weight).view(n, self.heads, self.out_dim)

        score_self = (wh * self.att_self).sum(dim=-1)
        score_neigh = (wh * self.att_neigh).sum(dim=-1)
        e = F.leaky_relu(score_self[target] + score_neigh[source], NEGATIVE_SLOPE)

        # per-target max is a constant shift; it cancels in the softmax
        shift = torch.full((n, self.heads), -torch.inf, dtype=DTYPE)
        shift = shift.scatter_reduce(0, target[:, None].expand_as(e), e.detach(), reduce="amax")
        weights = torch.exp(e - shift[target])
        denominator = torch.zeros(n, self.heads, dtype=DTYPE).index_add(0, target, weights)
        alpha = weights / denominator[target]
        if dropout > 0:
            alpha = _dropout(alpha, dropout, generator)

        out = torch.zeros(n, self.heads, self.out_dim, dtype=DTYPE)
        out = out.index_add(0, target, alpha[..., None] * wh[source])
        out = out.reshape(n, self.heads * self.out_dim) if self.concat else out.mean(dim=1)
        return F.elu(out), alpha


class GatModel(nn.Module):
    """Stacked GAT layers, graph readout and a one-hidden-layer MLP head"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.readout not in ("mean", "sum", "max"):
            raise InvalidArgumentError(f"Unknown readout: {config.readout}")
        if config.in_dim < 1 or config.layers < 1 or config.heads < 1:
            raise InvalidArgumentError("in_dim, layers and heads must all be >= 1")
        self.config = config

        layers: List[GatLayer] = []
        dim = config.in_dim
        for index in range(config.layers):
            last = index == config.layers - 1
            layer = GatLayer(dim, config.hidden_dim, config.heads, concat=not last)
            layers.append(layer)
            dim = layer.output_dim
        self.gat_layers = nn.ModuleList(layers)
        self.mlp_hidden = nn.Linear(dim, config.mlp_hidden).to(DTYPE)
        self.mlp_out = nn.Linear(config.mlp_hidden, config.num_classes).to(DTYPE)

    def reset_parameters(self, seed: int):
        """Seeded Xavier-uniform weights, zero biases"""
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, param in self.named_parameters():
                if name.endswith("bias"):
                    param.zero_()
                    continue
                if param.dim() == 2 and name.endswith("weight") and "mlp" in name:
                    fan_out, fan_in = param.shape
                elif param.dim() == 2 and name.endswith("weight"):
                    fan_in, fan_out = param.shape
                else:
                    fan_in, fan_out = param.shape[-1], 1
                bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
                param.copy_((torch.rand(param.shape, generator=generator, dtype=DTYPE) * 2 - 1) * bound)

    def readout(self, h: torch.Tensor, graph_ids: torch.Tensor, num_graphs: int) -> torch.Tensor:
        index = graph_ids[:, None].expand_as(h)
        if self.config.readout == "max":
            pooled = torch.full((num_graphs, h.shape[1]), -torch.inf, dtype=DTYPE)
            return pooled.scatter_reduce(0, index, h, reduce="amax", include_self=False)
        pooled = torch.zeros(num_graphs, h.shape[1], dtype=DTYPE).index_add(0, graph_ids, h)
        if self.config.readout == "sum":
            return pooled
        counts = torch.bincount(graph_ids, minlength=num_graphs).to(DTYPE)
        return pooled / counts[:, None]

    def forward(
        self,
        x: torch.Tensor,
        edge_index: torch.Tensor,
        graph_ids: torch.Tensor,
        num_graphs: int,
        train_mode: bool = False,
        generator: Optional[torch.Generator] = None,
    ) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        if x.shape[1] != self.config.in_dim:
            raise InvalidArgumentError(f"Model expects {self.config.in_dim} features, got {x.shape[1]}")
        p = self.config.dropout if train_mode else 0.0
        h = _dropout(x, p, generator) if p > 0 else x
        attention = []
        for layer in self.gat_layers:
            h, alpha = layer(h, edge_index, dropout=p, generator=generator)
            attention.append(alpha)
        pooled = self.readout(h, graph_ids, num_graphs)
        logits = self.mlp_out(F.relu(self.mlp_hidden(pooled)))
        return logits, attention


@dataclass
class ForwardResult:
    """Logits plus what backward and inspection need"""
    logits: torch.Tensor
    inputs: torch.Tensor
    attention: List[torch.Tensor]


def gat_forward(
    batch: GraphBatch,
    model: GatModel,
    train_mode: bool = False,
    generator: Optional[torch.Generator] = None,
    x: Optional[torch.Tensor] = None,
) -> ForwardResult:
    """
    Forward pass over a batch.

    Args:
        batch: Collated graphs
        model: Network
        train_mode: Apply input and attention dropout
        generator: Seeded source for dropout masks
        x: Replacement node features (same shape as batch.x)

    Returns:
        ForwardResult; inputs carries requires_grad for input gradients
    """
    inputs = (batch.x if x is None else x).detach().clone().requires_grad_(True)
    logits, attention = model(inputs, batch.edge_index, batch.graph_ids, batch.num_graphs, train_mode, generator)
    return ForwardResult(logits=logits, inputs=inputs, attention=attention)


def loss(logits: torch.Tensor, labels: torch.Tensor, class_weights: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Weighted softmax cross-entropy, averaged over graphs"""
    labels = torch.as_tensor(labels, dtype=torch.long)
    num_classes = logits.shape[1]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= num_classes):
        raise InvalidArgumentError(f"Labels must lie in 0..{num_classes - 1}")
    per_graph = F.cross_entropy(logits, labels, reduction="none")
    if class_weights is not None:
        per_graph = per_graph * torch.as_tensor(class_weights, dtype=DTYPE)[labels]
    return per_graph.mean()


@dataclass
class Gradients:
    parameters: Dict[str, torch.Tensor]
    inputs: torch.Tensor


def backward(value: torch.Tensor, model: GatModel, result: ForwardResult) -> Gradients:
    """Exact reverse-mode gradients of a scalar w.r.t. every parameter and the node features"""
    named = list(model.named_parameters())
    targets = [p for _, p in named] + [result.inputs]
    grads = torch.autograd.grad(value, targets, allow_unused=True)
    filled = [torch.zeros_like(t) if g is None else g for t, g in zip(targets, grads)]
    return Gradients(
        parameters={name: g for (name, _), g in zip(named, filled[:-1])},
        inputs=filled[-1],
    )


def predict(model: GatModel, batch: GraphBatch) -> np.ndarray:
    """Class probabilities per graph, rows sum to 1"""
    with torch.no_grad():
        logits, _ = model(batch.x, batch.edge_index, batch.graph_ids, batch.num_graphs, train_mode=False)
        return torch.softmax(logits, dim=1).numpy()
