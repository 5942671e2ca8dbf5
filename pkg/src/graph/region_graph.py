"""
Region Graph: nodes are tissue regions, edges mark 4-adjacency

Holds both the initial superpixel graph and the coarsened graph, plus
optional per-node embeddings and feature vectors. Serialized as the
documented JSON graph file (schema 1).
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple
import json
import logging

import numpy as np
from scipy import ndimage

from src.core.errors import FileFormatError, InvalidArgumentError
from src.imaging.superpixel import BACKGROUND, LabelMap

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

BoundingBox = Tuple[int, int, int, int]  # row0, col0, row1, col1 (end exclusive)


@dataclass
class RegionNode:
    """One graph node: a region (or union of regions) of the label map"""
    node_id: int
    pixel_count: int
    bbox: BoundingBox
    members: Tuple[int, ...]

    def to_dict(self) -> Dict:
        return {
            "id": self.node_id,
            "pixel_count": self.pixel_count,
            "bbox": list(self.bbox),
            "members": list(self.members),
        }


def merge_bbox(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def edge_key(a: int, b: int) -> Tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass
class RegionGraph:
    """
    Undirected region adjacency graph.

    Invariants:
    - no self-loops, edges stored once as (min id, max id)
    - member-region ids partition the original region ids
    """
    nodes: Dict[int, RegionNode] = field(default_factory=dict)
    edges: Set[Tuple[int, int]] = field(default_factory=set)
    embeddings: Optional[Dict[int, np.ndarray]] = None
    feature_names: Optional[List[str]] = None
    features: Optional[np.ndarray] = None  # rows follow node_ids()

    def node_ids(self) -> List[int]:
        return sorted(self.nodes)

    def edge_list(self) -> List[Tuple[int, int]]:
        return sorted(self.edges)

    def add_edge(self, a: int, b: int):
        if a == b:
            raise InvalidArgumentError(f"Self-loop on node {a} is not allowed")
        self.edges.add(edge_key(a, b))

    def neighbors(self, node_id: int) -> Set[int]:
        out = set()
        for a, b in self.edges:
            if a == node_id:
                out.add(b)
            elif b == node_id:
                out.add(a)
        return out

    def adjacency(self) -> Dict[int, Set[int]]:
        adj: Dict[int, Set[int]] = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def total_pixels(self) -> int:
        return sum(node.pixel_count for node in self.nodes.values())

    def member_map(self) -> Dict[int, int]:
        """Original region id -> node id"""
        return {m: node.node_id for node in self.nodes.values() for m in node.members}

    def copy(self) -> "RegionGraph":
        return RegionGraph(
            nodes={k: RegionNode(v.node_id, v.pixel_count, v.bbox, tuple(v.members)) for k, v in self.nodes.items()},
            edges=set(self.edges),
            embeddings=None if self.embeddings is None else {k: v.copy() for k, v in self.embeddings.items()},
            feature_names=None if self.feature_names is None else list(self.feature_names),
            features=None if self.features is None else self.features.copy(),
        )

    def edge_index(self) -> np.ndarray:
        """(2, E) array of positional indices into node_ids(), one column per edge"""
        position = {n: i for i, n in enumerate(self.node_ids())}
        edges = self.edge_list()
        if not edges:
            return np.zeros((2, 0), dtype=np.int64)
        return np.array([[position[a] for a, _ in edges], [position[b] for _, b in edges]], dtype=np.int64)

    # Serialization

    def to_json_dict(self) -> Dict:
        data: Dict = {
            "schema": SCHEMA_VERSION,
            "nodes": [self.nodes[n].to_dict() for n in self.node_ids()],
            "edges": [list(e) for e in self.edge_list()],
        }
        if self.embeddings is not None and self.embeddings:
            data["embedding_dim"] = int(next(iter(self.embeddings.values())).shape[0])
        if self.features is not None:
            data["feature_names"] = list(self.feature_names or [])
            data["features"] = [[float(v) for v in row] for row in self.features]
        return data

    @classmethod
    def from_json_dict(cls, data: Dict) -> "RegionGraph":
        if data.get("schema") != SCHEMA_VERSION:
            raise FileFormatError(f"Unsupported graph schema: {data.get('schema')!r}")
        try:
            nodes = {
                int(n["id"]): RegionNode(
                    node_id=int(n["id"]),
                    pixel_count=int(n["pixel_count"]),
                    bbox=tuple(int(v) for v in n["bbox"]),
                    members=tuple(int(m) for m in n["members"]),
                )
                for n in data["nodes"]
            }
            graph = cls(nodes=nodes)
            for a, b in data["edges"]:
                if int(a) not in nodes or int(b) not in nodes:
                    raise FileFormatError(f"Edge ({a}, {b}) references an unknown node")
                graph.add_edge(int(a), int(b))
            if "features" in data:
                graph.feature_names = [str(s) for s in data.get("feature_names", [])]
                graph.features = np.array(data["features"], dtype=np.float64).reshape(len(nodes), -1)
        except (KeyError, TypeError, ValueError) as e:
            raise FileFormatError(f"Malformed graph file: {e}")
        return graph

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_dict(), handle, indent=1, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path: str) -> "RegionGraph":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            raise FileFormatError(f"Cannot read graph file {path}: {e}")
        return cls.from_json_dict(data)


def adjacent_label_pairs(labels: np.ndarray) -> np.ndarray:
    """Unique (a, b), a < b, of labels that touch under 4-connectivity"""
    chunks: List[np.ndarray] = []
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        pairs = np.stack([a.ravel(), b.ravel()], axis=1)
        keep = (pairs[:, 0] != BACKGROUND) & (pairs[:, 1] != BACKGROUND) & (pairs[:, 0] != pairs[:, 1])
        chunks.append(np.sort(pairs[keep], axis=1))
    stacked = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 2), dtype=np.int64)
    if stacked.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(stacked, axis=0)


def build_rag(labels: LabelMap) -> RegionGraph:
    """
    Region adjacency graph of a label map.

    Args:
        labels: Superpixel label map

    Returns:
        RegionGraph with one node per region (members = {own id}) and an
        edge for every pair of 4-adjacent regions
    """
    data = np.asarray(labels.labels)
    graph = RegionGraph()
    shifted = np.where(data == BACKGROUND, 0, data + 1)
    counts = labels.pixel_counts()
    for index, slices in enumerate(ndimage.find_objects(shifted)):
        if slices is None:
            continue
        region = index
        graph.nodes[region] = RegionNode(
            node_id=region,
            pixel_count=counts[region],
            bbox=(slices[0].start, slices[1].start, slices[0].stop, slices[1].stop),
            members=(region,),
        )
    for a, b in adjacent_label_pairs(data):
        graph.add_edge(int(a), int(b))
    logger.debug(f"RAG built: {len(graph.nodes)} nodes, {len(graph.edges)} edges")
    return graph


def graphs_equal(a: RegionGraph, b: RegionGraph) -> bool:
    """Structural equality of nodes and edges"""
    return a.edges == b.edges and {k: v.to_dict() for k, v in a.nodes.items()} == {
        k: v.to_dict() for k, v in b.nodes.items()
    }


def relabel_nodes(graph: RegionGraph, mapping: Iterable[Tuple[int, int]]) -> RegionGraph:
    """Copy of graph with node ids renamed via (old, new) pairs"""
    table = dict(mapping)
    out = RegionGraph()
    for old, node in graph.nodes.items():
        new = table[old]
        out.nodes[new] = RegionNode(new, node.pixel_count, node.bbox, node.members)
    for a, b in graph.edges:
        out.add_edge(table[a], table[b])
    return out
