"""
Tissue Detection: foreground mask from the saturation channel

Otsu threshold on HSV saturation (scaled to 0..255), followed by binary
closing, binary opening and removal of small 8-connected components.
"""

from dataclasses import dataclass
from typing import Sequence
import logging

import numpy as np
from scipy import ndimage
from skimage import morphology

from src.core.errors import DegenerateInputError, InvalidArgumentError, NoTissueFoundError
from src.imaging.raster import ColorSpace, RgbImage, convert_color

logger = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class TissueMask:
    """Boolean foreground mask with the source image's dimensions"""
    bits: np.ndarray

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def area(self) -> int:
        return int(self.bits.sum())


def otsu_threshold(histogram: Sequence[int]) -> int:
    """
    Otsu threshold over a 256-bin histogram.

    Class 0 holds levels <= t, class 1 levels > t. The between-class
    variance is compared in exact integer arithmetic; ties go to the
    smallest t.

    Args:
        histogram: 256 non-negative integer bin counts

    Returns:
        Threshold level t
    """
    counts = [int(c) for c in histogram]
    if len(counts) != 256:
        raise InvalidArgumentError(f"Histogram must have 256 bins, got {len(counts)}")
    if any(c < 0 for c in counts):
        raise InvalidArgumentError("Histogram counts must be non-negative")
    if sum(1 for c in counts if c > 0) < 2:
        raise DegenerateInputError("Histogram has fewer than two non-empty bins")

    total_n = sum(counts)
    total_s = sum(level * c for level, c in enumerate(counts))

    best_t = -1
    best_num, best_den = 0, 1
    n0 = 0
    s0 = 0
    for t in range(255):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_s - s0
        # sigma_b^2 * N^2 = (n1*s0 - n0*s1)^2 / (n0*n1)
        num = (n1 * s0 - n0 * s1) ** 2
        den = n0 * n1
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def saturation_levels(img: RgbImage) -> np.ndarray:
    """HSV saturation scaled and rounded to integer levels 0..255"""
    hsv = convert_color(img, ColorSpace.HSV)
    return np.clip(np.floor(hsv[..., 1] * 255.0 + 0.5), 0, 255).astype(np.int64)


def remove_small_components(mask: np.ndarray, min_area: int) -> np.ndarray:
    """Drop 8-connected components with fewer than min_area pixels"""
    if min_area <= 1:
        return mask.copy()
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return mask.copy()
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_area
    keep[0] = False
    return keep[labels]


def segment_tissue(
    img: RgbImage,
    close_radius: int = 4,
    open_radius: int = 2,
    min_component_area: int = 64,
) -> TissueMask:
    """
    Detect tissue foreground.

    Args:
        img: Image at segmentation resolution
        close_radius: Disk radius of the binary closing
        open_radius: Disk radius of the binary opening
        min_component_area: Components below this pixel count are removed

    Returns:
        TissueMask with at least one foreground pixel
    """
    saturation = saturation_levels(img)
    histogram = np.bincount(saturation.ravel(), minlength=256)
    try:
        threshold = otsu_threshold(histogram)
    except DegenerateInputError:
        raise NoTissueFoundError("Saturation is constant across the image; no tissue to separate")

    mask = saturation > threshold
    if close_radius > 0:
        mask = morphology.binary_closing(mask, morphology.disk(close_radius))
    if open_radius > 0:
        mask = morphology.binary_opening(mask, morphology.disk(open_radius))
    mask = remove_small_components(mask, min_component_area)

    if not mask.any():
        raise NoTissueFoundError(
            f"Tissue mask is empty after cleanup (otsu threshold {threshold}, "
            f"min_component_area {min_component_area})"
        )

    logger.debug(f"Tissue mask: threshold={threshold}, area={int(mask.sum())} px")
    return TissueMask(bits=np.asarray(mask, dtype=bool))
