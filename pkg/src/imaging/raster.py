"""
Raster: image containers, color conversion, downsampling, quantization

Every downstream stage reads pixels through these helpers:
- RgbImage / GrayImage containers with shape invariants
- RGB -> HSV / CIELAB (sRGB companding, D65) / GRAY conversion
- Block-mean downsampling with truncated edge blocks
- Fixed-bin-width gray-level quantization for texture matrices
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from skimage import color

from src.core.errors import InvalidArgumentError


class ColorSpace(Enum):
    """Targets supported by convert_color"""
    HSV = "hsv"
    CIELAB = "lab"
    GRAY = "gray"


GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass
class RgbImage:
    """8-bit RGB raster, row-major (height, width, 3)"""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise InvalidArgumentError(f"RGB image must have shape (H, W, 3), got {pixels.shape}")
        if pixels.shape[0] == 0 or pixels.shape[1] == 0:
            raise InvalidArgumentError("RGB image must have positive width and height")
        self.pixels = pixels.astype(np.uint8, copy=False)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def shape(self):
        return self.pixels.shape[:2]


@dataclass
class GrayImage:
    """Quantized intensities in [0, levels - 1]"""
    data: np.ndarray
    levels: int

    def __post_init__(self):
        if self.levels < 2:
            raise InvalidArgumentError(f"levels must be >= 2, got {self.levels}")

    @property
    def height(self) -> int:
        return int(self.data.shape[0]) if self.data.ndim >= 1 else 1

    @property
    def width(self) -> int:
        return int(self.data.shape[1]) if self.data.ndim >= 2 else int(self.data.size)


def convert_color(img: RgbImage, target: ColorSpace) -> np.ndarray:
    """
    Convert an RGB image to another color space.

    Args:
        img: Source image
        target: HSV (H in degrees [0, 360), S and V in [0, 1]),
            CIELAB (D65, L in [0, 100]) or GRAY (0.299R + 0.587G + 0.114B)

    Returns:
        float64 array of shape (H, W, 3), or (H, W) for GRAY
    """
    rgb = img.pixels
    if target == ColorSpace.GRAY:
        return rgb.astype(np.float64) @ GRAY_WEIGHTS

    unit = rgb.astype(np.float64) / 255.0
    if target == ColorSpace.HSV:
        hsv = color.rgb2hsv(unit)
        hsv[..., 0] = np.mod(hsv[..., 0] * 360.0, 360.0)
        return hsv
    if target == ColorSpace.CIELAB:
        return color.rgb2lab(unit, illuminant="D65", observer="2")
    raise InvalidArgumentError(f"Unsupported color space: {target}")


def downsample(img: RgbImage, factor: int) -> RgbImage:
    """
    Mean-pool factor x factor blocks; edge blocks are truncated.

    Args:
        img: Source image
        factor: Block side, >= 1

    Returns:
        Image of size ceil(H / factor) x ceil(W / factor)
    """
    if factor < 1:
        raise InvalidArgumentError(f"downsample factor must be >= 1, got {factor}")
    if factor == 1:
        return RgbImage(img.pixels.copy())

    data = img.pixels.astype(np.float64)
    row_starts = np.arange(0, img.height, factor)
    col_starts = np.arange(0, img.width, factor)
    sums = np.add.reduceat(np.add.reduceat(data, row_starts, axis=0), col_starts, axis=1)

    row_counts = np.diff(np.append(row_starts, img.height))
    col_counts = np.diff(np.append(col_starts, img.width))
    counts = np.outer(row_counts, col_counts)[..., None]

    # round half away from zero (values are non-negative)
    means = np.floor(sums / counts + 0.5)
    return RgbImage(np.clip(means, 0, 255).astype(np.uint8))


def quantize(plane: np.ndarray, levels: int, mask: Optional[np.ndarray] = None) -> GrayImage:
    """
    Fixed-bin-width quantization over the region's own intensity range.

    Bin width is (max - min + 1) / levels, so integer-valued 0..255 data
    with 32 levels gets bins of width 8. A constant region maps to level 0.
    Pixels outside the mask are set to 0.

    Args:
        plane: Intensity values (any shape)
        levels: Number of gray levels Ng
        mask: Optional boolean mask selecting the region's pixels

    Returns:
        GrayImage with integer levels in [0, levels - 1]
    """
    if levels < 2:
        raise InvalidArgumentError(f"levels must be >= 2, got {levels}")

    values = np.asarray(plane, dtype=np.float64)
    selected = values if mask is None else values[np.asarray(mask, dtype=bool)]
    if selected.size == 0:
        raise InvalidArgumentError("Cannot quantize an empty pixel set")

    low = float(selected.min())
    high = float(selected.max())
    scaled = np.floor((values - low) * levels / (high - low + 1.0))
    quantized = np.clip(scaled, 0, levels - 1).astype(np.int64)
    if mask is not None:
        quantized = np.where(np.asarray(mask, dtype=bool), quantized, 0)
    return GrayImage(data=quantized, levels=levels)
