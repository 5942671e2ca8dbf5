"""
Significance and Reporting: t-tests over instance scores, result tables
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np
from scipy import stats

from src.core.errors import DegenerateInputError, InvalidArgumentError

SIGNIFICANCE_LEVEL = 0.05


def t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """
    Two-sided, equal-variance two-sample Student t-test.

    Returns:
        p-value
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InvalidArgumentError("Each score set needs at least 2 values")
    if np.var(a) == 0 and np.var(b) == 0:
        if a[0] == b[0]:
            return 1.0
        raise DegenerateInputError("Both score sets have zero variance")
    return float(stats.ttest_ind(a, b, equal_var=True).pvalue)


@dataclass
class Comparison:
    mean_a: float
    mean_b: float
    p_value: float

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL

    def marker(self) -> str:
        return "*" if self.significant else ""


def compare_runs(scores_a: Sequence[float], scores_b: Sequence[float]) -> Comparison:
    return Comparison(
        mean_a=float(np.mean(scores_a)),
        mean_b=float(np.mean(scores_b)),
        p_value=t_test(scores_a, scores_b),
    )


def summarize(scores: Dict[str, Sequence[float]]) -> Dict[str, Dict[str, float]]:
    """Mean and population standard deviation per metric"""
    return {
        name: {"mean": float(np.mean(values)), "std": float(np.std(values))}
        for name, values in scores.items()
        if len(values)
    }


def format_table(rows: List[Dict[str, object]], columns: Sequence[str]) -> str:
    """Aligned plain-text table; floats shown with two decimals"""

    def cell(value: object) -> str:
        if value is None:
            return "-"
        if isinstance(value, float):
            return f"{value:.2f}"
        return str(value)

    body = [[cell(row.get(c)) for c in columns] for row in rows]
    widths = [max([len(c)] + [len(r[i]) for r in body]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in body)
    return "\n".join(lines) + "\n"
