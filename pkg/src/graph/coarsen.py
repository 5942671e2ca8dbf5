"""
Graph Coarsening: greedy agglomerative merging guided by embeddings

- Cosine similarity on every adjacent pair
- Repeatedly merge the most similar adjacent pair while its similarity
  exceeds tau (strict)
- Merged node: summed pixels, united members, pixel-weighted mean embedding
- MergeTrace records every step so labels can be flattened back to pixels
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple
import heapq
import json
import logging

import numpy as np

from src.core.errors import CorruptTraceError, FileFormatError, InvalidArgumentError
from src.graph.embeddings import check_coverage
from src.graph.region_graph import RegionGraph, RegionNode, edge_key, merge_bbox
from src.imaging.superpixel import BACKGROUND, LabelMap

logger = logging.getLogger(__name__)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """
    Cosine of the angle between two embeddings.

    Args:
        a: First vector
        b: Second vector, same dimension

    Returns:
        Similarity in [-1, 1]
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"Embedding dimensions differ: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise InvalidArgumentError("Cosine similarity is undefined for a zero vector")
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return min(1.0, max(-1.0, value))


@dataclass
class MergeStep:
    a: int
    b: int
    similarity: float
    new_id: int


@dataclass
class MergeTrace:
    """Ordered merges performed by one coarsening run"""
    tau: float
    merges: List[MergeStep] = field(default_factory=list)

    def to_json_dict(self) -> Dict:
        return {
            "schema": 1,
            "tau": self.tau,
            "merges": [[m.a, m.b, m.similarity, m.new_id] for m in self.merges],
        }

    @classmethod
    def from_json_dict(cls, data: Dict) -> "MergeTrace":
        if data.get("schema") != 1:
            raise FileFormatError(f"Unsupported merge trace schema: {data.get('schema')!r}")
        try:
            merges = [MergeStep(int(a), int(b), float(s), int(n)) for a, b, s, n in data["merges"]]
            return cls(tau=float(data["tau"]), merges=merges)
        except (KeyError, TypeError, ValueError) as e:
            raise FileFormatError(f"Malformed merge trace: {e}")

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_dict(), handle, indent=1)
            handle.write("\n")

    @classmethod
    def load(cls, path: str) -> "MergeTrace":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                return cls.from_json_dict(json.load(handle))
        except (OSError, json.JSONDecodeError) as e:
            raise FileFormatError(f"Cannot read merge trace {path}: {e}")


def coarsen(
    graph: RegionGraph,
    embeddings: Dict[int, np.ndarray],
    tau: float,
) -> Tuple[RegionGraph, MergeTrace]:
    """
    Merge adjacent regions greedily until no adjacent pair is more similar than tau.

    Ties in similarity go to the lexicographically smallest (min id, max id)
    pair. The merge order does not depend on tau; tau only sets where the
    sequence stops.

    Args:
        graph: Region graph, typically the initial superpixel graph
        embeddings: Vector per node id
        tau: Similarity threshold in [-1, 1]

    Returns:
        (coarsened graph carrying merged embeddings, merge trace)
    """
    if not -1.0 <= tau <= 1.0:
        raise InvalidArgumentError(f"tau must lie in [-1, 1], got {tau}")
    check_coverage(embeddings, graph.nodes)

    nodes: Dict[int, RegionNode] = dict(graph.nodes)
    vectors = {n: np.asarray(embeddings[n], dtype=np.float64) for n in nodes}
    adjacency = graph.adjacency()
    next_id = max(nodes) + 1 if nodes else 0

    heap: List[Tuple[float, int, int]] = []
    for a, b in graph.edges:
        heapq.heappush(heap, (-cosine_similarity(vectors[a], vectors[b]), a, b))

    trace = MergeTrace(tau=tau)
    while heap:
        negative, a, b = heapq.heappop(heap)
        if a not in nodes or b not in nodes:
            continue  # stale
        similarity = -negative
        if similarity <= tau:
            break

        node_a, node_b = nodes.pop(a), nodes.pop(b)
        new_id = next_id
        next_id += 1
        total = node_a.pixel_count + node_b.pixel_count
        nodes[new_id] = RegionNode(
            node_id=new_id,
            pixel_count=total,
            bbox=merge_bbox(node_a.bbox, node_b.bbox),
            members=tuple(sorted(node_a.members + node_b.members)),
        )
        vectors[new_id] = (node_a.pixel_count * vectors.pop(a) + node_b.pixel_count * vectors.pop(b)) / total

        neighbours = (adjacency.pop(a) | adjacency.pop(b)) - {a, b}
        adjacency[new_id] = neighbours
        for n in neighbours:
            adjacency[n].discard(a)
            adjacency[n].discard(b)
            adjacency[n].add(new_id)
            low, high = edge_key(n, new_id)
            heapq.heappush(heap, (-cosine_similarity(vectors[new_id], vectors[n]), low, high))

        trace.merges.append(MergeStep(a=a, b=b, similarity=similarity, new_id=new_id))

    result = RegionGraph(nodes=nodes, embeddings=vectors)
    for n, neighbours in adjacency.items():
        for m in neighbours:
            if n < m:
                result.add_edge(n, m)

    logger.info(
        f"Coarsened {len(graph.nodes)} -> {len(result.nodes)} nodes "
        f"({len(trace.merges)} merges, tau={tau})"
    )
    return result, trace


def resolve_trace(region_ids: List[int], trace: MergeTrace) -> Dict[int, int]:
    """
    Map each original region id to its final node id.

    Raises CorruptTraceError when a merge names an id that is not live at
    that point of the trace.
    """
    live = set(region_ids)
    parent: Dict[int, int] = {r: r for r in region_ids}
    for step in trace.merges:
        for node in (step.a, step.b):
            if node not in live:
                raise CorruptTraceError(f"Merge ({step.a}, {step.b}) -> {step.new_id} references unknown node {node}")
        if step.a == step.b or step.new_id in parent:
            raise CorruptTraceError(f"Merge ({step.a}, {step.b}) -> {step.new_id} is not a valid step")
        live -= {step.a, step.b}
        live.add(step.new_id)
        parent[step.new_id] = step.new_id
        parent[step.a] = step.new_id
        parent[step.b] = step.new_id

    def find(node: int) -> int:
        while parent[node] != node:
            node = parent[node]
        return node

    return {r: find(r) for r in region_ids}


def flatten_labels(original: LabelMap, trace: MergeTrace) -> LabelMap:
    """
    Relabel every pixel to the id of the coarsened node that owns it.

    Args:
        original: Superpixel label map the coarsened graph was built over
        trace: Merges performed by coarsen

    Returns:
        LabelMap whose labels are coarsened node ids
    """
    data = np.asarray(original.labels)
    region_ids = original.region_ids()
    mapping = resolve_trace(region_ids, trace)
    if not region_ids:
        return LabelMap(labels=data.copy())

    lookup = np.full(max(region_ids) + 1, BACKGROUND, dtype=np.int64)
    for region, final in mapping.items():
        lookup[region] = final
    out = np.full(data.shape, BACKGROUND, dtype=np.int64)
    inside = data != BACKGROUND
    out[inside] = lookup[data[inside]]
    return LabelMap(labels=out)
