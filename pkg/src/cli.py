"""
Command Line: tissue region-graph pipeline

Usage:
    python -m src.cli [--config FILE] [--seed N] [--workers N] [--out DIR] <command> ...

Commands:
    mask, graph build, graph coarsen, features extract, features prune,
    train, predict, explain, evaluate, sweep, synth, run

Exit codes: 0 success, 1 partial slide failures, 2 configuration error
"""

from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple
import argparse
import json
import logging
import os
import sys

import numpy as np
from dotenv import load_dotenv

from src.core.config import RunConfig, load_config
from src.core.errors import ConfigError, InvalidArgumentError, TissueGraphError
from src.evaluation.manifest import Split, assign_patient_splits, load_manifest
from src.explain.attribution import explain_features, integrated_gradients, region_importance
from src.explain.overlay import render_overlay
from src.features.catalog import FeatureCatalog
from src.features.extractor import extract_node_features, read_feature_matrix, write_feature_matrix
from src.features.pruning import prune_correlated
from src.features.stats import DatasetStats, standardize
from src.graph.coarsen import coarsen, flatten_labels
from src.graph.embeddings import compute_builtin_embeddings, read_embeddings
from src.graph.region_graph import RegionGraph, build_rag
from src.imaging.io import (
    read_label_map,
    read_mask,
    read_nuclei_map,
    read_rgb,
    write_label_map,
    write_mask,
    write_rgb,
)
from src.imaging.raster import downsample
from src.imaging.superpixel import slic, target_region_count, upsample_labels
from src.imaging.tissue import segment_tissue
from src.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.model.gat import GraphBatch, GraphSample, predict
from src.model.training import train
from src.pipeline.runner import EXIT_CONFIG, EXIT_OK, make_score_fn, run_pipeline, slide_targets, task_metrics
from src.pipeline.sweep import sweep
from src.pipeline.synth import write_synthetic_benchmark

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """CLI flag > config file > environment > built-in default"""
    config = load_config(args.config)
    overrides = {
        key: value
        for key, value in (("seed", args.seed), ("workers", args.workers), ("out_root", args.out))
        if value is not None
    }
    if overrides:
        config = replace(config, **overrides)
        config.validate()
    return config


def select_columns(names: Sequence[str], matrix: np.ndarray, wanted: Sequence[str]) -> np.ndarray:
    """Reorder a feature matrix to the wanted columns"""
    position = {n: i for i, n in enumerate(names)}
    missing = [n for n in wanted if n not in position]
    if missing:
        raise InvalidArgumentError(f"Feature file lacks {len(missing)} columns, first: {missing[0]}")
    return matrix[:, [position[n] for n in wanted]]


def load_graph_features(graph_path: str, features_path: str, wanted: Sequence[str]) -> Tuple[RegionGraph, np.ndarray]:
    """Graph plus its feature rows in graph node order, restricted to the wanted columns"""
    graph = RegionGraph.load(graph_path)
    node_ids, names, matrix = read_feature_matrix(features_path)
    if node_ids != graph.node_ids():
        raise InvalidArgumentError(f"{features_path} rows do not match the nodes of {graph_path}")
    return graph, select_columns(names, matrix, wanted)


# ==================== Commands ====================


def cmd_mask(args, config: RunConfig) -> int:
    overrides = {
        key: value
        for key, value in (
            ("close_radius", args.close_radius),
            ("open_radius", args.open_radius),
            ("min_component_area", args.min_area),
        )
        if value is not None
    }
    if overrides:
        config = replace(config, tissue=replace(config.tissue, **overrides))
        config.validate()
    img = downsample(read_rgb(args.image), config.tissue.downsample)
    t = config.tissue
    mask = segment_tissue(img, t.close_radius, t.open_radius, t.min_component_area)
    write_mask(args.output, mask)
    logger.info(f"Tissue mask: {mask.area} pixels -> {args.output}")
    return EXIT_OK


def cmd_graph_build(args, config: RunConfig) -> int:
    img = read_rgb(args.image)
    factor = config.tissue.downsample
    seg_img = downsample(img, factor)
    if args.mask:
        mask = read_mask(args.mask)
    else:
        t = config.tissue
        mask = segment_tissue(seg_img, t.close_radius, t.open_radius, t.min_component_area)
    sp = config.superpixel
    k = args.k or min(target_region_count(mask.area, sp.seg_mag, sp.ref_mag, sp.target_side), mask.area)
    labels = upsample_labels(slic(seg_img, mask, k, sp.compactness, sp.iterations, sp.color_space), factor, img.shape)
    graph = build_rag(labels)
    write_label_map(args.labels_out, labels)
    graph.save(args.graph_out)
    logger.info(f"Region graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges")
    return EXIT_OK


def cmd_graph_coarsen(args, config: RunConfig) -> int:
    tau = config.coarsen.tau if args.tau is None else args.tau
    labels = read_label_map(args.labels)
    graph = RegionGraph.load(args.graph)
    if args.embeddings == "builtin":
        embeddings = compute_builtin_embeddings(read_rgb(args.image), labels)
    else:
        embeddings = read_embeddings(args.embeddings)
    coarse, trace = coarsen(graph, embeddings, tau)
    coarse.save(args.graph_out)
    trace.save(args.trace_out)
    if args.labels_out:
        write_label_map(args.labels_out, flatten_labels(labels, trace))
    logger.info(f"Coarsened {len(graph.nodes)} -> {len(coarse.nodes)} nodes at tau={tau}")
    return EXIT_OK


def cmd_features_extract(args, config: RunConfig) -> int:
    f = config.features
    catalog = FeatureCatalog.full(include_lbp=f.include_lbp, levels=f.levels)
    graph = RegionGraph.load(args.graph)
    nuclei = read_nuclei_map(args.nuclei, args.nuclei_table) if args.nuclei else None
    node_ids = graph.node_ids()
    matrix = extract_node_features(
        read_rgb(args.image), read_label_map(args.labels), nuclei, node_ids, catalog,
        levels=f.levels, bright_cutoff=f.bright_cutoff, dark_cutoff=f.dark_cutoff, workers=config.workers,
    )
    write_feature_matrix(args.output, node_ids, catalog.names(), matrix)
    logger.info(f"Features: {matrix.shape[0]} nodes x {matrix.shape[1]} -> {args.output}")
    return EXIT_OK


def cmd_features_prune(args, config: RunConfig) -> int:
    xi = config.features.xi if args.xi is None else args.xi
    catalog = FeatureCatalog.full(include_lbp=config.features.include_lbp, levels=config.features.levels)
    rows = []
    for path in args.inputs:
        _, names, matrix = read_feature_matrix(path)
        rows.append(select_columns(names, matrix, catalog.names()))
    pruned = catalog.with_active(prune_correlated(np.vstack(rows), xi), xi)
    pruned.save(args.catalog_out)
    logger.info(f"Pruning at xi={xi}: {len(pruned.active_indices())} of {pruned.size} features kept")
    return EXIT_OK


def cmd_train(args, config: RunConfig) -> int:
    manifest = assign_patient_splits(load_manifest(args.manifest), seed=config.seed)
    catalog = FeatureCatalog.load(args.catalog)
    names = catalog.active_names()
    targets = slide_targets(manifest.slides, config.task)

    loaded: Dict[Split, List[Tuple[str, RegionGraph, np.ndarray]]] = {s: [] for s in Split}
    for record in manifest.slides:
        if record.slide_id not in targets:
            logger.warning(f"Slide {record.slide_id} has no {config.task} label; skipped")
            continue
        graph, matrix = load_graph_features(
            os.path.join(args.graphs, f"{record.slide_id}.json"),
            os.path.join(args.features, f"{record.slide_id}.csv"),
            names,
        )
        loaded[record.split].append((record.slide_id, graph, matrix))
    if not loaded[Split.TRAIN]:
        raise InvalidArgumentError("No labelled training slides")

    stats = DatasetStats.from_matrix(np.vstack([m for _, _, m in loaded[Split.TRAIN]]), names)

    def samples(split: Split) -> List[GraphSample]:
        return [
            GraphSample(slide_id=sid, features=standardize(m, stats), edges=g.edge_index(), label=targets[sid])
            for sid, g, m in loaded[split]
        ]

    records = {r.slide_id: r for r in manifest.slides}
    val = samples(Split.VAL)
    model, history = train(
        samples(Split.TRAIN), config.train, val_set=val or None, metric_fn=make_score_fn(config.task, records)
    )
    save_checkpoint(
        args.checkpoint,
        Checkpoint(model=model, feature_names=names, stats=stats, history=history, task=config.task,
                   meta={"seed": config.train.seed}),
    )
    logger.info(f"Checkpoint written to {args.checkpoint}")
    return EXIT_OK


def _checkpoint_sample(checkpoint: Checkpoint, graph_path: str, features_path: str, slide_id: str):
    graph, raw = load_graph_features(graph_path, features_path, checkpoint.feature_names)
    features = standardize(raw, checkpoint.stats) if checkpoint.stats is not None else raw
    return graph, raw, GraphSample(slide_id=slide_id, features=features, edges=graph.edge_index())


def cmd_predict(args, config: RunConfig) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    slide_id = args.slide_id or os.path.splitext(os.path.basename(args.graph))[0]
    _, _, sample = _checkpoint_sample(checkpoint, args.graph, args.features, slide_id)
    probabilities = predict(checkpoint.model, GraphBatch.collate([sample]))[0]
    print(json.dumps({"slide_id": slide_id, "probabilities": [float(p) for p in probabilities]}, sort_keys=True))
    return EXIT_OK


def cmd_explain(args, config: RunConfig) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    slide_id = args.slide_id or os.path.splitext(os.path.basename(args.graph))[0]
    graph, raw, sample = _checkpoint_sample(checkpoint, args.graph, args.features, slide_id)
    report = integrated_gradients(
        checkpoint.model,
        GraphBatch.collate([sample]),
        target=args.target,
        steps=args.steps or config.explain.steps,
        node_ids=graph.node_ids(),
        feature_names=checkpoint.feature_names,
        values=raw,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    report.save(os.path.join(args.out_dir, "explanation.json"), explain_features(report, checkpoint.stats,
                                                                                 args.top_k or config.explain.top_k))
    importance = dict(zip(graph.node_ids(), region_importance(report).tolist()))
    overlay = render_overlay(read_label_map(args.labels), importance, read_rgb(args.image), config.explain.alpha)
    write_rgb(os.path.join(args.out_dir, "overlay.png"), overlay)
    logger.info(f"Explanation for class {report.target} written to {args.out_dir} (gap {report.completeness_gap:.2e})")
    return EXIT_OK


def cmd_evaluate(args, config: RunConfig) -> int:
    task = args.task or config.task
    entries = []
    with open(args.predictions, "r", encoding="utf-8") as handle:
        entries = [json.loads(line) for line in handle if line.strip()]
    if not entries:
        raise InvalidArgumentError(f"No predictions in {args.predictions}")
    metrics = task_metrics(
        task,
        np.array([e["probabilities"] for e in entries]),
        [e.get("label") for e in entries],
        [e.get("time") for e in entries],
        [e.get("event") for e in entries],
        config.train.num_classes,
    )
    print(json.dumps(metrics, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args, config: RunConfig) -> int:
    result = sweep(load_manifest(args.manifest), config, args.param, args.values)
    table = result.table()
    print(table, end="")
    if args.table_out:
        with open(args.table_out, "w", encoding="utf-8") as handle:
            handle.write(table)
    return 1 if result.failed else EXIT_OK


def cmd_synth(args, config: RunConfig) -> int:
    path = write_synthetic_benchmark(args.out_dir, args.slides, config.seed, args.size)
    print(path)
    return EXIT_OK


def cmd_run(args, config: RunConfig) -> int:
    result = run_pipeline(load_manifest(args.manifest), config)
    print(result.run_dir)
    return result.exit_code


# ==================== Parser ====================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tissuegraph", description="Tissue region-graph pipeline")
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", help="Output root for runs and the stage cache")
    parser.add_argument("--log-level", default=os.getenv("LOG_LEVEL", "INFO"))
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("mask", help="Tissue mask of one image")
    p.add_argument("--image", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--close-radius", type=int)
    p.add_argument("--open-radius", type=int)
    p.add_argument("--min-area", type=int, help="Smallest tissue component kept, in pixels")
    p.set_defaults(handler=cmd_mask)

    graph = commands.add_parser("graph", help="Build or coarsen region graphs").add_subparsers(
        dest="graph_command", required=True
    )
    p = graph.add_parser("build", help="SLIC superpixels and their adjacency graph")
    p.add_argument("--image", required=True)
    p.add_argument("--mask")
    p.add_argument("--k", type=int, help="Region count; derived from the tissue area when omitted")
    p.add_argument("--labels-out", required=True)
    p.add_argument("--graph-out", required=True)
    p.set_defaults(handler=cmd_graph_build)

    p = graph.add_parser("coarsen", help="Merge similar adjacent regions")
    p.add_argument("--image", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", default="builtin", help="Embedding file or 'builtin'")
    p.add_argument("--tau", type=float)
    p.add_argument("--graph-out", required=True)
    p.add_argument("--trace-out", required=True)
    p.add_argument("--labels-out")
    p.set_defaults(handler=cmd_graph_coarsen)

    features = commands.add_parser("features", help="Extract or prune node features").add_subparsers(
        dest="features_command", required=True
    )
    p = features.add_parser("extract", help="Full-catalog features per node")
    p.add_argument("--image", required=True)
    p.add_argument("--labels", required=True, help="Label map whose ids are the graph's node ids")
    p.add_argument("--graph", required=True)
    p.add_argument("--nuclei")
    p.add_argument("--nuclei-table")
    p.add_argument("--output", required=True)
    p.set_defaults(handler=cmd_features_extract)

    p = features.add_parser("prune", help="Correlation pruning over training feature files")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--xi", type=float)
    p.add_argument("--catalog-out", required=True)
    p.set_defaults(handler=cmd_features_prune)

    p = commands.add_parser("train", help="Train one model from graph and feature files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--graphs", required=True, help="Directory of <slide>.json graphs")
    p.add_argument("--features", required=True, help="Directory of <slide>.csv feature files")
    p.add_argument("--catalog", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(handler=cmd_train)

    for name, handler, help_text in (
        ("predict", cmd_predict, "Class probabilities for one slide"),
        ("explain", cmd_explain, "Integrated Gradients report and overlay for one slide"),
    ):
        p = commands.add_parser(name, help=help_text)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--graph", required=True)
        p.add_argument("--features", required=True)
        p.add_argument("--slide", "--slide-id", dest="slide_id")
        p.set_defaults(handler=handler)
        if name == "explain":
            p.add_argument("--image", required=True)
            p.add_argument("--labels", required=True)
            p.add_argument("--class", "--target", dest="target", type=int, help="Class to explain; default predicted")
            p.add_argument("--steps", type=int)
            p.add_argument("--top-k", type=int)
            p.add_argument("--out-dir", required=True)

    p = commands.add_parser("evaluate", help="Metrics from a predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--task", choices=("stage", "survival"))
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser("sweep", help="Rerun the pipeline across tau or xi values")
    p.add_argument("--manifest", required=True)
    p.add_argument("--param", required=True, choices=("tau", "xi"))
    p.add_argument("--values", required=True, type=float, nargs="+")
    p.add_argument("--table-out")
    p.set_defaults(handler=cmd_sweep)

    p = commands.add_parser("synth", help="Write the synthetic benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--slides", type=int, default=200)
    p.add_argument("--size", type=int, default=128)
    p.set_defaults(handler=cmd_synth)

    p = commands.add_parser("run", help="Full pipeline over a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(handler=cmd_run)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO), format=LOG_FORMAT)
    try:
        config = resolve_config(args)
        return args.handler(args, config)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (TissueGraphError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
