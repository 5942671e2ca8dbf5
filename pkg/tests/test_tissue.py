from fractions import Fraction

import numpy as np
import pytest

from src.core.errors import DegenerateInputError, InvalidArgumentError, NoTissueFoundError
from src.imaging.raster import RgbImage
from src.imaging.tissue import otsu_threshold, remove_small_components, segment_tissue
from tests.conftest import disk_image


def exhaustive_otsu(histogram):
    """Scan every t with exact rational between-class variance"""
    counts = list(histogram)
    total = sum(counts)
    mean_all = Fraction(sum(i * c for i, c in enumerate(counts)), total)
    best_t, best = None, None
    for t in range(255):
        n0 = sum(counts[: t + 1])
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum(i * counts[i] for i in range(t + 1)), n0)
        w0 = Fraction(n0, total)
        variance = w0 * (mu0 - mean_all) ** 2 / (1 - w0)
        if best is None or variance > best:
            best_t, best = t, variance
    return best_t


def test_otsu_two_spikes_picks_lowest_tied_threshold():
    histogram = np.zeros(256, dtype=int)
    histogram[10] = 100
    histogram[200] = 100
    assert otsu_threshold(histogram) == 10


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_otsu_matches_exhaustive_scan(seed):
    rng = np.random.default_rng(seed)
    histogram = rng.integers(0, 50, 256)
    histogram[rng.integers(0, 256, 200)] = 0
    assert otsu_threshold(histogram) == exhaustive_otsu(histogram)


def test_otsu_rejects_degenerate_histograms():
    histogram = np.zeros(256, dtype=int)
    histogram[40] = 5
    with pytest.raises(DegenerateInputError):
        otsu_threshold(histogram)
    with pytest.raises(InvalidArgumentError):
        otsu_threshold([1, 2, 3])


def test_pink_disk_mask_matches_disk(pink_disk):
    img, disk = pink_disk
    mask = segment_tissue(img, close_radius=2, open_radius=1, min_component_area=16)
    assert mask.bits.shape == disk.shape
    intersection = (mask.bits & disk).sum()
    union = (mask.bits | disk).sum()
    assert intersection / union > 0.95


def test_small_speck_removed_but_disk_kept():
    img, disk = disk_image(size=64, radius=12)
    pixels = img.pixels.copy()
    pixels[2:4, 2:4] = (220, 150, 190)
    mask = segment_tissue(RgbImage(pixels), close_radius=0, open_radius=0, min_component_area=10)
    assert not mask.bits[2:4, 2:4].any()
    assert mask.bits[disk].all()


def test_blank_image_has_no_tissue():
    img = RgbImage(np.full((16, 16, 3), 245, dtype=np.uint8))
    with pytest.raises(NoTissueFoundError):
        segment_tissue(img)


def test_remove_small_components_uses_eight_connectivity():
    mask = np.zeros((5, 5), dtype=bool)
    mask[0, 0] = mask[1, 1] = True  # diagonal pair, one component of 2
    mask[4, 4] = True
    kept = remove_small_components(mask, 2)
    assert kept[0, 0] and kept[1, 1] and not kept[4, 4]
