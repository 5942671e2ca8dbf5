"""
Slide Processing: image -> mask -> superpixels -> graph -> coarsened graph -> features

Every stage is content-addressed in the StageCache and recorded in the
run's AuditSystem. A stage's cache key chains the keys of the stages it
consumes, so a change anywhere upstream invalidates everything below.
"""

from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging
import os
import time

import numpy as np

from src.core.audit_system import AuditSystem, Stage, StageStatus
from src.core.cache import StageCache, digest_file, digest_json, stage_key
from src.core.config import RunConfig
from src.core.errors import InvalidArgumentError
from src.evaluation.manifest import SlideRecord
from src.features.catalog import FeatureCatalog
from src.features.extractor import extract_node_features
from src.features.nuclear import NucleiMap
from src.graph.coarsen import MergeTrace, coarsen, flatten_labels
from src.graph.embeddings import compute_builtin_embeddings, read_embeddings
from src.graph.region_graph import RegionGraph, build_rag
from src.imaging.io import read_nuclei_map, read_rgb
from src.imaging.raster import downsample
from src.imaging.superpixel import LabelMap, slic, target_region_count, upsample_labels
from src.imaging.tissue import TissueMask, segment_tissue

logger = logging.getLogger(__name__)


@dataclass
class SlideArtifacts:
    """Everything downstream stages need from one slide"""
    record: SlideRecord
    labels: LabelMap  # flattened: pixel -> coarsened node id
    graph: RegionGraph
    trace: MergeTrace
    initial_nodes: int
    node_ids: List[int]
    matrix: np.ndarray  # full-catalog features, rows follow node_ids

    @property
    def slide_id(self) -> str:
        return self.record.slide_id


def embedding_path_for(record: SlideRecord, source: str) -> Optional[str]:
    """None for the builtin source, else the slide's embedding file"""
    if source == "builtin":
        return None
    if record.embedding_path:
        return record.embedding_path
    return os.path.join(source, f"{record.slide_id}.bin")


class SlideProcessor:
    """Runs the per-slide stages with caching and audit"""

    def __init__(self, config: RunConfig, cache: StageCache, audit: AuditSystem, catalog: FeatureCatalog):
        self.config = config
        self.cache = cache
        self.audit = audit
        self.catalog = catalog

    def _run_stage(
        self,
        slide_id: str,
        stage: Stage,
        inputs: Sequence[str],
        params: Any,
        compute: Callable[[], Any],
        to_cache: Callable[[Any], Any],
        from_cache: Callable[[Any], Any],
        arrays: bool,
        details: Callable[[Any], Dict[str, Any]] = lambda _: {},
    ) -> Tuple[Any, str]:
        params_digest = digest_json(params)
        key = stage_key(stage.value, inputs, params_digest)
        started = time.perf_counter()
        stored = self.cache.get_arrays(key) if arrays else self.cache.get_json(key)
        hit = stored is not None
        try:
            value = from_cache(stored) if hit else compute()
        except Exception:
            self.audit.log_event(
                slide_id, stage, StageStatus.FAILURE, False, digest_json(list(inputs)), params_digest,
                time.perf_counter() - started,
            )
            raise
        if not hit:
            payload = to_cache(value)
            if arrays:
                self.cache.put_arrays(key, payload)
            else:
                self.cache.put_json(key, payload)
        self.audit.log_event(
            slide_id, stage, StageStatus.SUCCESS, hit, digest_json(list(inputs)), params_digest,
            time.perf_counter() - started, details(value),
        )
        return value, key

    def process(self, record: SlideRecord) -> SlideArtifacts:
        """
        Run all per-slide stages.

        Args:
            record: Manifest row of the slide

        Returns:
            SlideArtifacts with the coarsened graph and its full feature matrix
        """
        cfg = self.config
        slide_id = record.slide_id
        self.audit.create_trace(slide_id)

        if not os.path.exists(record.image_path):
            raise InvalidArgumentError(f"Image not found: {record.image_path}")
        image_digest = digest_file(record.image_path)
        img = read_rgb(record.image_path)
        factor = cfg.tissue.downsample
        seg_img = downsample(img, factor)

        mask, mask_key = self._run_stage(
            slide_id, Stage.MASK, [image_digest], asdict(cfg.tissue),
            compute=lambda: segment_tissue(
                seg_img, cfg.tissue.close_radius, cfg.tissue.open_radius, cfg.tissue.min_component_area
            ),
            to_cache=lambda m: {"bits": m.bits},
            from_cache=lambda d: TissueMask(bits=d["bits"].astype(bool)),
            arrays=True,
            details=lambda m: {"area": m.area},
        )

        def run_slic() -> LabelMap:
            sp = cfg.superpixel
            k = target_region_count(mask.area, sp.seg_mag, sp.ref_mag, sp.target_side)
            k = min(k, mask.area)
            seg_labels = slic(seg_img, mask, k, sp.compactness, sp.iterations, sp.color_space)
            return upsample_labels(seg_labels, factor, img.shape)

        labels, labels_key = self._run_stage(
            slide_id, Stage.SUPERPIXEL, [mask_key], asdict(cfg.superpixel),
            compute=run_slic,
            to_cache=lambda lm: {"labels": lm.labels},
            from_cache=lambda d: LabelMap(labels=d["labels"].astype(np.int64)),
            arrays=True,
            details=lambda lm: {"regions": lm.region_count},
        )

        graph, graph_key = self._run_stage(
            slide_id, Stage.GRAPH, [labels_key], {},
            compute=lambda: build_rag(labels),
            to_cache=lambda g: g.to_json_dict(),
            from_cache=RegionGraph.from_json_dict,
            arrays=False,
            details=lambda g: {"nodes": len(g.nodes), "edges": len(g.edges)},
        )

        embedding_file = embedding_path_for(record, cfg.coarsen.embeddings)
        embed_inputs = [image_digest, labels_key] + ([digest_file(embedding_file)] if embedding_file else [])

        def load_embeddings() -> Dict[int, np.ndarray]:
            if embedding_file is None:
                return compute_builtin_embeddings(img, labels)
            return read_embeddings(embedding_file)

        embeddings, embed_key = self._run_stage(
            slide_id, Stage.EMBED, embed_inputs, {"source": "builtin" if embedding_file is None else "file"},
            compute=load_embeddings,
            to_cache=lambda e: {
                "ids": np.array(sorted(e), dtype=np.int64),
                "vectors": np.vstack([e[i] for i in sorted(e)]) if e else np.zeros((0, 0)),
            },
            from_cache=lambda d: {int(i): v for i, v in zip(d["ids"], d["vectors"])},
            arrays=True,
        )

        def run_coarsen() -> Tuple[RegionGraph, MergeTrace]:
            return coarsen(graph, embeddings, cfg.coarsen.tau)

        (coarse, trace), coarse_key = self._run_stage(
            slide_id, Stage.COARSEN, [graph_key, embed_key], {"tau": cfg.coarsen.tau},
            compute=run_coarsen,
            to_cache=lambda pair: {"graph": pair[0].to_json_dict(), "trace": pair[1].to_json_dict()},
            from_cache=lambda d: (RegionGraph.from_json_dict(d["graph"]), MergeTrace.from_json_dict(d["trace"])),
            arrays=False,
            details=lambda pair: {"nodes": len(pair[0].nodes), "merges": len(pair[1].merges)},
        )
        flat = flatten_labels(labels, trace)

        nuclei_inputs = ["none"]
        nuclei: Optional[NucleiMap] = None
        if record.nuclei_path:
            if not record.nuclei_table_path:
                raise InvalidArgumentError(f"Slide {slide_id} has a nuclei map but no type table")
            nuclei_inputs = [digest_file(record.nuclei_path), digest_file(record.nuclei_table_path)]

        def run_features() -> Tuple[List[int], np.ndarray]:
            nuclei_map = nuclei
            if record.nuclei_path:
                nuclei_map = read_nuclei_map(record.nuclei_path, record.nuclei_table_path)
            node_ids = coarse.node_ids()
            f = cfg.features
            matrix = extract_node_features(
                img, flat, nuclei_map, node_ids, self.catalog,
                levels=f.levels, bright_cutoff=f.bright_cutoff, dark_cutoff=f.dark_cutoff,
            )
            return node_ids, matrix

        feature_params = {k: v for k, v in asdict(cfg.features).items() if k != "xi"}
        (node_ids, matrix), _ = self._run_stage(
            slide_id, Stage.FEATURES, [image_digest, coarse_key] + nuclei_inputs, feature_params,
            compute=run_features,
            to_cache=lambda pair: {"node_ids": np.asarray(pair[0], dtype=np.int64), "matrix": pair[1]},
            from_cache=lambda d: ([int(i) for i in d["node_ids"]], d["matrix"].astype(np.float64)),
            arrays=True,
        )

        self.audit.complete_trace(slide_id, "completed")
        return SlideArtifacts(
            record=record,
            labels=flat,
            graph=coarse,
            trace=trace,
            initial_nodes=len(graph.nodes),
            node_ids=node_ids,
            matrix=matrix,
        )
