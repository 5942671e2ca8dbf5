"""
Dataset Statistics: training-split feature statistics

Used to z-score model inputs and to put attributed feature values into
context (mean, standard deviation, percentile).
"""

from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np

from src.core.errors import InvalidArgumentError

PERCENTILE_LEVELS = np.arange(1, 100)


@dataclass
class DatasetStats:
    names: List[str]
    mean: np.ndarray
    std: np.ndarray
    percentiles: np.ndarray  # (99, n_features), rows = 1st..99th percentile

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, names: List[str]) -> "DatasetStats":
        x = np.asarray(matrix, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise InvalidArgumentError("Statistics need a non-empty 2-D matrix")
        if x.shape[1] != len(names):
            raise InvalidArgumentError(f"{x.shape[1]} columns but {len(names)} names")
        return cls(
            names=list(names),
            mean=x.mean(axis=0),
            std=x.std(axis=0),
            percentiles=np.percentile(x, PERCENTILE_LEVELS, axis=0),
        )

    def index(self, name: str) -> int:
        return self.names.index(name)

    def percentile_of(self, column: int, value: float) -> float:
        """Percentile rank of value from the training table, linear between table rows"""
        table = self.percentiles[:, column]
        if value < table[0]:
            return 0.0
        if value > table[-1]:
            return 100.0
        return float(np.interp(value, table, PERCENTILE_LEVELS))

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "names": self.names,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "percentiles": self.percentiles.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: Dict[str, Any]) -> "DatasetStats":
        return cls(
            names=list(data["names"]),
            mean=np.asarray(data["mean"], dtype=np.float64),
            std=np.asarray(data["std"], dtype=np.float64),
            percentiles=np.asarray(data["percentiles"], dtype=np.float64).reshape(len(PERCENTILE_LEVELS), -1),
        )


def standardize(matrix: np.ndarray, stats: DatasetStats) -> np.ndarray:
    """Z-score with training statistics; zero spread divides by 1"""
    x = np.asarray(matrix, dtype=np.float64)
    if x.shape[-1] != len(stats.names):
        raise InvalidArgumentError(f"Matrix has {x.shape[-1]} columns, statistics cover {len(stats.names)}")
    divisor = np.where(stats.std > 0, stats.std, 1.0)
    return (x - stats.mean) / divisor
