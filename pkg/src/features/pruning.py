"""
Correlation Pruning: drop later features that duplicate earlier ones
"""

from typing import List, Optional
import logging

import numpy as np

from src.core.errors import InvalidArgumentError

logger = logging.getLogger(__name__)


def correlation_matrix(matrix: np.ndarray) -> np.ndarray:
    """Pearson correlation between columns; constant columns correlate 0 with everything"""
    x = np.asarray(matrix, dtype=np.float64)
    centred = x - x.mean(axis=0)
    scale = np.sqrt((centred ** 2).sum(axis=0))
    constant = scale == 0
    z = centred / np.where(constant, 1.0, scale)
    z[:, constant] = 0.0
    return np.clip(z.T @ z, -1.0, 1.0)


def prune_correlated(
    matrix: np.ndarray,
    xi: float,
    active: Optional[List[bool]] = None,
) -> List[bool]:
    """
    Deactivate features highly correlated with an earlier active feature.

    Pairs (i, j), i < j, are scanned in catalog order; while i is active,
    any active j with |rho(i, j)| > xi is switched off.

    Args:
        matrix: Training rows (nodes) x full catalog columns
        xi: Absolute-correlation threshold in (0, 1]
        active: Starting flags; all active when omitted

    Returns:
        Active flag per column
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidArgumentError("Correlation pruning needs at least 2 samples")
    if not 0.0 < xi <= 1.0:
        raise InvalidArgumentError(f"xi must lie in (0, 1], got {xi}")

    flags = [True] * x.shape[1] if active is None else list(active)
    if len(flags) != x.shape[1]:
        raise InvalidArgumentError("Active flags must align with matrix columns")

    rho = np.abs(correlation_matrix(x))
    for i in range(x.shape[1]):
        if not flags[i]:
            continue
        for j in range(i + 1, x.shape[1]):
            if flags[j] and rho[i, j] > xi:
                flags[j] = False

    logger.info(f"Pruning at xi={xi}: {sum(flags)}/{len(flags)} features active")
    return flags
