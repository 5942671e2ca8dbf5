"""
Importance Overlay: tint regions by attribution strength

Importance is min-max normalized per slide and mapped through a 256-entry
yellow (low) to red (high) colormap, then alpha-blended over the image.
Background pixels are left untouched.
"""

from typing import Dict

import numpy as np
from matplotlib.colors import LinearSegmentedColormap

from src.core.errors import InvalidArgumentError
from src.imaging.raster import RgbImage
from src.imaging.superpixel import BACKGROUND, LabelMap

COLORMAP_SIZE = 256
IMPORTANCE_COLORMAP = LinearSegmentedColormap.from_list(
    "importance", [(1.0, 1.0, 0.0), (1.0, 0.0, 0.0)], N=COLORMAP_SIZE
)


def colormap_table() -> np.ndarray:
    """(256, 3) uint8 RGB entries, index 0 = lowest importance"""
    rgba = IMPORTANCE_COLORMAP(np.arange(COLORMAP_SIZE))
    return np.floor(rgba[:, :3] * 255.0 + 0.5).astype(np.uint8)


def render_overlay(
    labels: LabelMap,
    importance: Dict[int, float],
    img: RgbImage,
    alpha: float = 0.45,
) -> RgbImage:
    """
    Blend importance colors over the base image.

    Args:
        labels: Per-pixel node ids (flattened coarsened labels)
        importance: Scalar per node id; missing nodes count as 0
        img: Base image of the same size
        alpha: Tint opacity

    Returns:
        New RgbImage
    """
    data = np.asarray(labels.labels)
    if data.shape != img.shape:
        raise InvalidArgumentError(f"Labels {data.shape} do not match image {img.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgumentError(f"alpha must lie in [0, 1], got {alpha}")

    inside = data != BACKGROUND
    ids = np.unique(data[inside])
    raw = np.array([float(importance.get(int(i), 0.0)) for i in ids])
    if raw.size and raw.max() > raw.min():
        normalized = (raw - raw.min()) / (raw.max() - raw.min())
    else:
        normalized = np.zeros_like(raw)

    table = colormap_table()
    index_of = dict(zip(ids.tolist(), np.floor(normalized * (COLORMAP_SIZE - 1) + 0.5).astype(int).tolist()))
    lookup = np.vectorize(lambda n: index_of[int(n)], otypes=[np.int64])
    colors = table[lookup(data[inside])] if inside.any() else np.zeros((0, 3), dtype=np.uint8)

    out = img.pixels.astype(np.float64).copy()
    out[inside] = (1.0 - alpha) * out[inside] + alpha * colors
    return RgbImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))
