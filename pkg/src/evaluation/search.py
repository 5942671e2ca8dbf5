"""
Random Search: learning-rate / weight-decay search with repeated instances

Protocol:
- sample (lr, weight decay) log-uniformly per trial
- train several model instances per trial, each with its own derived seed
- pick the trial with the best mean validation score
- evaluate that trial's instances on the held-out test split
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import hashlib
import json
import logging
import math

import numpy as np

from src.core.config import SearchConfig, TrainConfig
from src.core.errors import InvalidArgumentError, UndefinedMetricError
from src.model.gat import GatModel, GraphBatch, GraphSample, predict
from src.model.training import TrainHistory, train

logger = logging.getLogger(__name__)

ScoreFn = Callable[[np.ndarray, Sequence[GraphSample]], float]


def instance_seed(seed: int, trial: int, instance: int) -> int:
    """seed XOR the first four bytes of sha256("trial:instance")"""
    digest = hashlib.sha256(f"{trial}:{instance}".encode()).digest()
    return (seed ^ int.from_bytes(digest[:4], "little")) & 0x7FFFFFFF


def sample_hyperparameters(search: SearchConfig, seed: int) -> List[Tuple[float, float]]:
    """Log-uniform (lr, weight decay) pairs, one per trial"""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(search.trials):
        lr = math.exp(rng.uniform(math.log(search.lr_range[0]), math.log(search.lr_range[1])))
        wd = math.exp(rng.uniform(math.log(search.wd_range[0]), math.log(search.wd_range[1])))
        pairs.append((lr, wd))
    return pairs


@dataclass
class TrialResult:
    """One sampled configuration and its instance scores"""
    trial_id: int
    lr: float
    weight_decay: float
    seeds: List[int]
    val_scores: List[float]
    test_scores: List[float] = field(default_factory=list)

    @property
    def mean_val(self) -> float:
        finite = [s for s in self.val_scores if math.isfinite(s)]
        return float(np.mean(finite)) if finite else float("-inf")

    def to_dict(self) -> Dict:
        return {
            "trial_id": self.trial_id,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "seeds": self.seeds,
            "val_scores": [None if not math.isfinite(s) else s for s in self.val_scores],
            "test_scores": self.test_scores,
        }


@dataclass
class SearchRun:
    """Complete search: every trial plus the selected trial's models"""
    trials: List[TrialResult]
    best: TrialResult
    models: List[GatModel]
    histories: List[TrainHistory]
    test_probabilities: List[np.ndarray] = field(default_factory=list)

    def summary(self) -> Dict:
        return {
            "best_trial": self.best.trial_id,
            "lr": self.best.lr,
            "weight_decay": self.best.weight_decay,
            "val_mean": self.best.mean_val,
            "test_mean": float(np.mean(self.best.test_scores)) if self.best.test_scores else None,
            "test_std": float(np.std(self.best.test_scores)) if self.best.test_scores else None,
        }

    def write_trials(self, path: str):
        with open(path, "w", encoding="utf-8") as handle:
            for trial in self.trials:
                handle.write(json.dumps(trial.to_dict(), sort_keys=True) + "\n")


def _score(score_fn: ScoreFn, model: GatModel, samples: Sequence[GraphSample]) -> float:
    try:
        return float(score_fn(predict(model, GraphBatch.collate(samples)), samples))
    except UndefinedMetricError as e:
        logger.warning(f"Score undefined: {e}")
        return float("nan")


def random_search(
    train_set: Sequence[GraphSample],
    val_set: Sequence[GraphSample],
    test_set: Sequence[GraphSample],
    base: TrainConfig,
    search: SearchConfig,
    score_fn: ScoreFn,
    seed: int = 0,
    workers: int = 1,
) -> SearchRun:
    """
    Run the search and evaluate the winning trial.

    Args:
        train_set: Training graphs
        val_set: Validation graphs for model selection
        test_set: Held-out graphs for the final report (may be empty)
        base: Architecture and all non-searched settings
        search: Trial/instance counts and sampling ranges
        score_fn: Higher-is-better metric over (probabilities, samples)
        seed: Search seed
        workers: Instances trained concurrently within a trial

    Returns:
        SearchRun; ties in mean validation score go to the lowest trial id
    """
    if not train_set:
        raise InvalidArgumentError("Random search needs a non-empty training split")
    if not val_set:
        raise InvalidArgumentError("Random search needs a non-empty validation split")

    trials: List[TrialResult] = []
    best_index = -1
    best_models: List[GatModel] = []
    best_histories: List[TrainHistory] = []

    for trial_id, (lr, wd) in enumerate(sample_hyperparameters(search, seed)):
        seeds = [instance_seed(seed, trial_id, i) for i in range(search.instances)]

        def run_instance(instance_seed_value: int):
            config = replace(base, lr=lr, weight_decay=wd, seed=instance_seed_value)
            model, history = train(train_set, config, val_set=val_set, metric_fn=score_fn)
            return model, history, _score(score_fn, model, val_set)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(run_instance, seeds))
        else:
            outcomes = [run_instance(s) for s in seeds]

        result = TrialResult(
            trial_id=trial_id, lr=lr, weight_decay=wd, seeds=seeds, val_scores=[o[2] for o in outcomes]
        )
        trials.append(result)
        logger.info(f"Trial {trial_id}: lr={lr:.2e}, wd={wd:.2e}, mean val={result.mean_val:.2f}")

        if best_index < 0 or result.mean_val > trials[best_index].mean_val:
            best_index = trial_id
            best_models = [o[0] for o in outcomes]
            best_histories = [o[1] for o in outcomes]

    best = trials[best_index]
    run = SearchRun(trials=trials, best=best, models=best_models, histories=best_histories)
    if test_set:
        batch = GraphBatch.collate(test_set)
        for model in best_models:
            probabilities = predict(model, batch)
            run.test_probabilities.append(probabilities)
            try:
                best.test_scores.append(float(score_fn(probabilities, test_set)))
            except UndefinedMetricError as e:
                logger.warning(f"Test score undefined: {e}")
    logger.info(f"Best trial {best.trial_id}: {run.summary()}")
    return run
