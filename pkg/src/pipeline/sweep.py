"""
Threshold Sweep: rerun the pipeline across merge (tau) or pruning (xi) thresholds

Upstream stages share the run cache, so a tau sweep recomputes only
coarsening and features and a xi sweep recomputes nothing per slide.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence
import json
import logging
import os

import numpy as np

from src.core.config import RunConfig
from src.core.errors import ConfigError, DegenerateInputError, InvalidArgumentError
from src.evaluation.manifest import Manifest
from src.evaluation.significance import compare_runs, format_table
from src.pipeline.runner import RunResult, run_pipeline

logger = logging.getLogger(__name__)

SWEEP_PARAMS = ("tau", "xi")


def check_sweep_values(param: str, values: Sequence[float]):
    """Reject the whole sweep before anything runs"""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"Sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}")
    if not values:
        raise ConfigError("Sweep needs at least one value")
    for value in values:
        if param == "tau" and not -1.0 <= value <= 1.0:
            raise ConfigError(f"tau must lie in [-1, 1], got {value}")
        if param == "xi" and not 0.0 < value <= 1.0:
            raise ConfigError(f"xi must lie in (0, 1], got {value}")


def with_param(config: RunConfig, param: str, value: float) -> RunConfig:
    if param == "tau":
        return replace(config, coarsen=replace(config.coarsen, tau=float(value)))
    return replace(config, features=replace(config.features, xi=float(value)))


def instance_scores(run_dir: str) -> Dict[str, List[float]]:
    """Per-instance test metrics of a finished run, by metric name"""
    path = os.path.join(run_dir, "metrics.json")
    if not os.path.exists(path):
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        instances = json.load(handle).get("instances", [])
    scores: Dict[str, List[float]] = {}
    for metrics in instances:
        for name, value in metrics.items():
            if value is not None:
                scores.setdefault(name, []).append(float(value))
    return scores


def p_value_cell(reference: Sequence[float], scores: Sequence[float]) -> Optional[str]:
    """t-test p-value against the reference row, "*" when significant"""
    try:
        comparison = compare_runs(reference, scores)
    except (DegenerateInputError, InvalidArgumentError) as e:
        logger.debug(f"No t-test: {e}")
        return None
    return f"{comparison.p_value:.3g}{comparison.marker()}"


@dataclass
class SweepResult:
    param: str
    rows: List[Dict[str, Any]] = field(default_factory=list)
    runs: List[RunResult] = field(default_factory=list)

    @property
    def columns(self) -> List[str]:
        metric_names = sorted({k for row in self.rows for k in row} - {self.param, "nodes", "features", "run"})
        return [self.param, "nodes", "features"] + metric_names

    def table(self) -> str:
        return format_table(self.rows, self.columns)

    @property
    def failed(self) -> bool:
        return any(run.failures for run in self.runs)


def sweep(manifest: Manifest, config: RunConfig, param: str, values: Sequence[float]) -> SweepResult:
    """
    Run the pipeline once per threshold value.

    Args:
        manifest: Slides to process
        config: Base configuration; only the swept parameter changes
        param: "tau" or "xi"
        values: Threshold values in the order they appear in the table

    Returns:
        SweepResult with one row per value: mean node count, active
        feature count, "mean ± std" test metrics and, from the second row
        on, t-test p-values of each metric against the first row
    """
    check_sweep_values(param, values)
    result = SweepResult(param=param)
    reference: Dict[str, List[float]] = {}
    for value in values:
        logger.info(f"Sweep {param}={value}")
        run = run_pipeline(manifest, with_param(config, param, value))
        result.runs.append(run)
        summary = run.summary
        nodes = [s["nodes"] for s in summary["slides"]]
        row: Dict[str, Any] = {
            param: float(value),
            "nodes": float(np.mean(nodes)) if nodes else None,
            "features": summary.get("active_features"),
            "run": run.run_dir,
        }
        for name, stat in (summary.get("metrics") or {}).items():
            row[name] = f"{stat['mean']:.2f} ± {stat['std']:.2f}"
        scores = instance_scores(run.run_dir)
        if not result.rows:
            reference = scores
        else:
            for name, instance_values in scores.items():
                if name in reference:
                    row[f"p_{name}"] = p_value_cell(reference[name], instance_values)
        result.rows.append(row)
    return result
