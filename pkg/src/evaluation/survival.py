"""
Survival Framing: risk groups as classification targets
"""

from typing import List, Sequence

import numpy as np

from src.core.errors import InvalidArgumentError

STAGE_NAMES = ("I", "II", "III", "IV")


def survival_cut_points(times: Sequence[float], events: Sequence[bool], bins: int = 4) -> np.ndarray:
    """
    Group edges at the quantiles of uncensored event times.

    Args:
        times: Survival or censoring time per subject
        events: True when the event was observed
        bins: Number of groups

    Returns:
        bins - 1 non-decreasing edges
    """
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    if t.shape != e.shape:
        raise InvalidArgumentError("times and events must have equal length")
    if bins < 2:
        raise InvalidArgumentError(f"bins must be >= 2, got {bins}")
    uncensored = t[e]
    if uncensored.size < bins:
        raise InvalidArgumentError(f"Need at least {bins} uncensored subjects, got {uncensored.size}")

    return np.percentile(uncensored, np.arange(1, bins) * 100.0 / bins)


def survival_groups(times: Sequence[float], edges: np.ndarray) -> List[int]:
    """
    Group index per subject: the number of edges strictly below its time.

    Equal edges collapse and censored subjects fall into the interval
    their censoring time lies in.
    """
    return np.searchsorted(np.asarray(edges, dtype=np.float64), np.asarray(times, dtype=np.float64),
                           side="left").astype(int).tolist()


def discretize_survival(times: Sequence[float], events: Sequence[bool], bins: int = 4) -> List[int]:
    """Bin subjects by survival time at the quantiles of their own uncensored event times"""
    return survival_groups(times, survival_cut_points(times, events, bins))


def risk_scores(probabilities: np.ndarray) -> np.ndarray:
    """Negated expected group index -sum_c c * p_c (group 0 survives shortest)"""
    p = np.asarray(probabilities, dtype=np.float64)
    return -(p * np.arange(p.shape[1])).sum(axis=1)


def parse_stage(value: str) -> int:
    """'I'..'IV' (optionally prefixed 'Stage ') or '0'..'3' -> class index"""
    text = str(value).strip().upper()
    if text.startswith("STAGE"):
        text = text[5:].strip()
    text = text.rstrip("ABC")
    if text in STAGE_NAMES:
        return STAGE_NAMES.index(text)
    if text.isdigit() and 0 <= int(text) < len(STAGE_NAMES):
        return int(text)
    raise InvalidArgumentError(f"Unrecognized stage label: {value!r}")
