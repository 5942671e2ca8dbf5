"""
Pipeline Runner: manifest -> reproducible run directory

Flow:
1. Snapshot the resolved config into <out>/runs/<digest[:12]>-<seed>/config.json
2. Process slides in parallel (cached per-slide stages, failures isolated)
3. Prune correlated features on training nodes, standardize with training stats
4. Random search over (lr, weight decay), evaluate the best trial on test
5. Write predictions, metrics, explanations, audit trail and run summary
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple
import json
import logging
import os

import numpy as np

from src.core.audit_system import AuditSystem
from src.core.cache import StageCache
from src.core.config import RunConfig, dump_config
from src.core.errors import InvalidArgumentError, TissueGraphError, UndefinedMetricError
from src.evaluation.manifest import Manifest, SlideRecord, Split, assign_patient_splits
from src.evaluation.metrics import auc_macro, balanced_accuracy, c_index, f1_macro
from src.evaluation.search import SearchRun, random_search
from src.evaluation.significance import summarize
from src.evaluation.survival import risk_scores, survival_cut_points, survival_groups
from src.explain.attribution import explain_features, integrated_gradients, region_importance
from src.explain.overlay import render_overlay
from src.features.catalog import FeatureCatalog
from src.features.extractor import write_feature_matrix
from src.features.pruning import prune_correlated
from src.features.stats import DatasetStats, standardize
from src.imaging.io import read_rgb, write_label_map, write_rgb
from src.model.checkpoint import Checkpoint, save_checkpoint
from src.model.gat import GatModel, GraphBatch, GraphSample
from src.pipeline.slide import SlideArtifacts, SlideProcessor

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


@dataclass
class RunResult:
    run_dir: str
    summary: Dict[str, Any]
    failures: List[Dict[str, str]] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.failures else EXIT_OK


def run_directory(config: RunConfig) -> str:
    return os.path.join(config.out_root, "runs", f"{config.digest()[:12]}-{config.seed}")


def _write_json(path: str, value: Any):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(value, handle, indent=1, sort_keys=True)
        handle.write("\n")


def slide_targets(slides: Sequence[SlideRecord], task: str) -> Dict[str, int]:
    """
    Class label per slide for the task; unlabelled slides are absent.

    Survival groups are cut at the quartiles of uncensored times of the
    timed training slides, then every timed slide is binned with those
    edges. When no slide carries a split tag, all timed slides set the edges.
    """
    if task == "stage":
        return {s.slide_id: s.stage for s in slides if s.stage is not None}
    timed = [s for s in slides if s.time is not None and s.event is not None]
    if not timed:
        return {}
    tagged = any(s.split is not None for s in timed)
    cohort = [s for s in timed if s.split == Split.TRAIN] if tagged else timed
    edges = survival_cut_points([s.time for s in cohort], [bool(s.event) for s in cohort])
    groups = survival_groups([s.time for s in timed], edges)
    return {s.slide_id: g for s, g in zip(timed, groups)}


def make_score_fn(task: str, records: Dict[str, SlideRecord]):
    """Higher-is-better selection metric: macro AUC for staging, c-index for survival"""

    def stage_score(probabilities: np.ndarray, samples: Sequence[GraphSample]) -> float:
        return auc_macro(probabilities, [s.label for s in samples])

    def survival_score(probabilities: np.ndarray, samples: Sequence[GraphSample]) -> float:
        rows = [records[s.slide_id] for s in samples]
        return c_index(risk_scores(probabilities), [r.time for r in rows], [bool(r.event) for r in rows])

    return stage_score if task == "stage" else survival_score


def task_metrics(
    task: str,
    probabilities: np.ndarray,
    labels: Sequence[Optional[int]],
    times: Sequence[Optional[float]] = (),
    events: Sequence[Optional[bool]] = (),
    num_classes: int = 4,
) -> Dict[str, Optional[float]]:
    """
    Held-out metrics for one set of predictions.

    Returns:
        auc/f1/balanced_accuracy for staging, c_index for survival; a
        metric that is undefined on this data is None
    """
    metrics: Dict[str, Optional[float]] = {}
    p = np.asarray(probabilities, dtype=np.float64)
    if task == "stage":
        predicted = np.argmax(p, axis=1).tolist()
        for name, fn in (
            ("auc", lambda: auc_macro(p, labels)),
            ("f1", lambda: f1_macro(predicted, labels, num_classes)),
            ("balanced_accuracy", lambda: balanced_accuracy(predicted, labels)),
        ):
            try:
                metrics[name] = float(fn())
            except (UndefinedMetricError, InvalidArgumentError) as e:
                logger.warning(f"Metric {name} undefined: {e}")
                metrics[name] = None
    else:
        try:
            metrics["c_index"] = float(c_index(risk_scores(p), times, [bool(e) for e in events]))
        except (UndefinedMetricError, InvalidArgumentError) as e:
            logger.warning(f"Metric c_index undefined: {e}")
            metrics["c_index"] = None
    return metrics


def build_sample(artifacts: SlideArtifacts, catalog: FeatureCatalog, stats: DatasetStats,
                 label: Optional[int]) -> GraphSample:
    """Standardized active features plus positional edges of one slide graph"""
    features = standardize(catalog.select(artifacts.matrix), stats)
    return GraphSample(
        slide_id=artifacts.slide_id,
        features=features,
        edges=artifacts.graph.edge_index(),
        label=label,
    )


def explain_slide(
    model: GatModel,
    sample: GraphSample,
    artifacts: SlideArtifacts,
    catalog: FeatureCatalog,
    stats: DatasetStats,
    config: RunConfig,
    out_dir: str,
    target: Optional[int] = None,
):
    """Integrated Gradients report and importance overlay for one slide"""
    os.makedirs(out_dir, exist_ok=True)
    report = integrated_gradients(
        model,
        GraphBatch.collate([sample]),
        target=target,
        steps=config.explain.steps,
        node_ids=artifacts.node_ids,
        feature_names=catalog.active_names(),
        values=catalog.select(artifacts.matrix),
    )
    top = explain_features(report, stats, config.explain.top_k)
    report.save(os.path.join(out_dir, "explanation.json"), top)
    importance = dict(zip(artifacts.node_ids, region_importance(report).tolist()))
    overlay = render_overlay(artifacts.labels, importance, read_rgb(artifacts.record.image_path), config.explain.alpha)
    write_rgb(os.path.join(out_dir, "overlay.png"), overlay)
    return report


def _process_all(processor: SlideProcessor, slides: Sequence[SlideRecord], workers: int,
                 audit: AuditSystem) -> Tuple[List[SlideArtifacts], List[Dict[str, str]]]:
    def attempt(record: SlideRecord):
        try:
            return processor.process(record), None
        except TissueGraphError as e:
            error = f"{type(e).__name__}: {e}"
        except Exception as e:
            logger.exception(f"Unexpected error on slide {record.slide_id}")
            error = f"{type(e).__name__}: {e}"
        logger.error(f"Slide {record.slide_id} failed: {error}")
        audit.complete_trace(record.slide_id, "failed", error)
        return None, {"slide_id": record.slide_id, "error": error}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(attempt, slides))
    else:
        outcomes = [attempt(s) for s in slides]
    done = [a for a, _ in outcomes if a is not None]
    failures = [f for _, f in outcomes if f is not None]
    return done, failures


def _write_predictions(path: str, samples: Sequence[GraphSample], records: Dict[str, SlideRecord],
                       probabilities: List[np.ndarray], task: str):
    """One JSON line per test slide: instance-mean probabilities and ground truth"""
    mean = np.mean(np.stack(probabilities), axis=0) if probabilities else np.zeros((0, 0))
    with open(path, "w", encoding="utf-8") as handle:
        for row, sample in enumerate(samples):
            record = records[sample.slide_id]
            entry = {
                "slide_id": sample.slide_id,
                "label": sample.label,
                "probabilities": [float(v) for v in mean[row]],
                "instance_probabilities": [[float(v) for v in p[row]] for p in probabilities],
            }
            if task == "survival":
                entry["time"] = record.time
                entry["event"] = record.event
                entry["risk"] = float(risk_scores(mean[row:row + 1])[0])
            handle.write(json.dumps(entry, sort_keys=True) + "\n")


def run_pipeline(manifest: Manifest, config: RunConfig) -> RunResult:
    """
    Execute the full chain for every slide of the manifest.

    Args:
        manifest: Slides to process; missing split tags are filled by patient
        config: Resolved run configuration

    Returns:
        RunResult with the run directory, the summary and any slide failures
    """
    config.validate()
    run_dir = run_directory(config)
    for sub in ("graphs", "labels", "features", "checkpoints", "explanations"):
        os.makedirs(os.path.join(run_dir, sub), exist_ok=True)
    dump_config(config, os.path.join(run_dir, "config.json"))
    logger.info(f"Run directory: {run_dir} ({len(manifest)} slides)")

    manifest = assign_patient_splits(manifest, seed=config.seed)
    records = {s.slide_id: s for s in manifest.slides}
    catalog = FeatureCatalog.full(include_lbp=config.features.include_lbp, levels=config.features.levels)
    audit = AuditSystem()
    cache = StageCache(os.path.join(config.out_root, "cache"))
    processor = SlideProcessor(config, cache, audit, catalog)

    artifacts, failures = _process_all(processor, manifest.slides, config.workers, audit)
    for a in artifacts:
        write_label_map(os.path.join(run_dir, "labels", f"{a.slide_id}.png"), a.labels)

    summary: Dict[str, Any] = {
        "config_digest": config.digest(),
        "seed": config.seed,
        "task": config.task,
        "slides": [
            {
                "slide_id": a.slide_id,
                "split": records[a.slide_id].split.value,
                "initial_nodes": a.initial_nodes,
                "nodes": len(a.graph.nodes),
                "edges": len(a.graph.edges),
                "merges": len(a.trace.merges),
            }
            for a in artifacts
        ],
        "failures": failures,
        "training": None,
        "metrics": None,
    }

    if artifacts:
        _fit_and_report(artifacts, records, catalog, config, run_dir, summary)

    _write_json(os.path.join(run_dir, "cache_report.json"), audit.cache_report())
    audit.write_jsonl(os.path.join(run_dir, "audit.jsonl"))
    _write_json(os.path.join(run_dir, "summary.json"), summary)
    if failures:
        logger.warning(f"{len(failures)} of {len(manifest)} slides failed")
    logger.info(f"Run complete: {run_dir}")
    return RunResult(run_dir=run_dir, summary=summary, failures=failures)


def _fit_and_report(
    artifacts: List[SlideArtifacts],
    records: Dict[str, SlideRecord],
    catalog: FeatureCatalog,
    config: RunConfig,
    run_dir: str,
    summary: Dict[str, Any],
):
    by_split = {
        split: [a for a in artifacts if records[a.slide_id].split == split] for split in Split
    }
    train_rows = [a.matrix for a in by_split[Split.TRAIN] if len(a.matrix)]
    pooled = np.vstack(train_rows) if train_rows else np.zeros((0, catalog.size))

    if pooled.shape[0] >= 2:
        catalog = catalog.with_active(prune_correlated(pooled, config.features.xi), config.features.xi)
    else:
        logger.warning("Fewer than 2 training nodes; correlation pruning skipped")
    catalog.save(os.path.join(run_dir, "catalog.json"))
    summary["active_features"] = len(catalog.active_indices())
    logger.info(f"Active features: {summary['active_features']} of {catalog.size} (xi={config.features.xi})")

    names = catalog.active_names()
    stats_source = catalog.select(pooled) if pooled.shape[0] else catalog.select(np.vstack([a.matrix for a in artifacts]))
    stats = DatasetStats.from_matrix(stats_source, names)

    for a in artifacts:
        a.graph.feature_names = names
        a.graph.features = catalog.select(a.matrix)
        a.graph.save(os.path.join(run_dir, "graphs", f"{a.slide_id}.json"))
        write_feature_matrix(os.path.join(run_dir, "features", f"{a.slide_id}.csv"), a.node_ids, names, a.graph.features)

    targets = slide_targets([records[a.slide_id] for a in artifacts], config.task)
    samples = {
        split: [build_sample(a, catalog, stats, targets.get(a.slide_id)) for a in by_split[split]]
        for split in Split
    }
    labelled = {split: [s for s in samples[split] if s.label is not None] for split in Split}
    skipped = sum(len(samples[s]) - len(labelled[s]) for s in Split)
    if skipped:
        logger.warning(f"{skipped} slides carry no {config.task} label and are left out of training")

    if not labelled[Split.TRAIN] or not labelled[Split.VAL]:
        logger.warning("Training skipped: train and val splits both need labelled slides")
        summary["training"] = {"skipped": True}
        return

    score_fn = make_score_fn(config.task, records)
    search: SearchRun = random_search(
        labelled[Split.TRAIN],
        labelled[Split.VAL],
        labelled[Split.TEST],
        config.train,
        config.search,
        score_fn,
        seed=config.seed,
        workers=config.workers,
    )
    search.write_trials(os.path.join(run_dir, "trials.jsonl"))
    for instance, (model, history) in enumerate(zip(search.models, search.histories)):
        save_checkpoint(
            os.path.join(run_dir, "checkpoints", f"trial{search.best.trial_id}_inst{instance}.ckpt"),
            Checkpoint(
                model=model,
                feature_names=names,
                stats=stats,
                history=history,
                task=config.task,
                meta={"trial": search.best.trial_id, "instance": instance, "seed": search.best.seeds[instance]},
            ),
        )
    _write_json(os.path.join(run_dir, "history.json"), [h.to_json_list() for h in search.histories])
    summary["training"] = search.summary()
    test = labelled[Split.TEST]
    _write_predictions(os.path.join(run_dir, "predictions.jsonl"), test, records, search.test_probabilities,
                       config.task)
    instance_metrics = [
        task_metrics(
            config.task,
            probabilities,
            [s.label for s in test],
            [records[s.slide_id].time for s in test],
            [records[s.slide_id].event for s in test],
            config.train.num_classes,
        )
        for probabilities in search.test_probabilities
    ]
    per_metric: Dict[str, List[float]] = {}
    for m in instance_metrics:
        for name, value in m.items():
            if value is not None:
                per_metric.setdefault(name, []).append(value)
    metrics = {
        "auc_kind": "macro one-vs-rest",
        "instances": instance_metrics,
        "summary": summarize(per_metric),
    }
    _write_json(os.path.join(run_dir, "metrics.json"), metrics)
    summary["metrics"] = metrics["summary"]

    if config.explain.enabled and test and search.models:
        by_id = {a.slide_id: a for a in artifacts}
        for sample in test:
            explain_slide(
                search.models[0], sample, by_id[sample.slide_id], catalog, stats, config,
                os.path.join(run_dir, "explanations", sample.slide_id),
            )
        logger.info(f"Explanations written for {len(test)} test slides")
