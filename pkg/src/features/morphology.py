"""
Morphology Features: color and intensity summary of a region (18 values)
"""

from typing import List

import numpy as np

from src.core.errors import InvalidArgumentError

MORPH_NAMES: List[str] = [
    "mean_r", "mean_g", "mean_b",
    "mean_h", "mean_s", "mean_v",
    "mean_l", "mean_a", "mean_(la)b",
    "median_r", "median_g", "median_b",
    "ratio_bright", "ratio_dark",
    "10_dark", "10_bright",
    "mean", "size",
]


def extract_morph(
    rgb: np.ndarray,
    hsv: np.ndarray,
    lab: np.ndarray,
    gray: np.ndarray,
    bright_cutoff: float = 200.0,
    dark_cutoff: float = 50.0,
) -> np.ndarray:
    """
    Color statistics of one region.

    Args:
        rgb: (N, 3) region pixels, 0..255
        hsv: (N, 3) hue in degrees, saturation and value in [0, 1]
        lab: (N, 3) CIELAB
        gray: (N,) gray values
        bright_cutoff: Gray level above which a pixel counts as bright
        dark_cutoff: Gray level below which a pixel counts as dark

    Returns:
        18 values in catalog order
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.size == 0:
        raise InvalidArgumentError("Cannot extract morphology from an empty region")
    rgb = np.asarray(rgb, dtype=np.float64)

    p10, p90 = np.percentile(gray, [10, 90])
    values = [
        *rgb.mean(axis=0),
        *np.asarray(hsv, dtype=np.float64).mean(axis=0),
        *np.asarray(lab, dtype=np.float64).mean(axis=0),
        *np.median(rgb, axis=0),
        float((gray > bright_cutoff).mean()),
        float((gray < dark_cutoff).mean()),
        p10,
        p90,
        gray.mean(),
        float(gray.size),
    ]
    return np.array(values, dtype=np.float64)
