import numpy as np
import pytest
from scipy import ndimage

from src.core.errors import InvalidArgumentError
from src.imaging.superpixel import (
    BACKGROUND,
    FOUR_CONNECTED,
    LabelMap,
    enforce_connectivity,
    slic,
    target_region_count,
    upsample_labels,
)
from src.imaging.tissue import TissueMask


def test_target_region_count():
    assert target_region_count(1000, 1.0, 1.0, 10.0) == 10
    assert target_region_count(10000, 0.625, 32.0, 300.0) == 291
    assert target_region_count(1, 1.0, 1.0, 100.0) == 1
    with pytest.raises(InvalidArgumentError):
        target_region_count(0, 1.0, 1.0, 1.0)


def test_two_tone_image_splits_on_color_boundary(two_tone_image):
    mask = TissueMask(np.ones(two_tone_image.shape, dtype=bool))
    labels = slic(two_tone_image, mask, k=2).labels
    left, right = np.unique(labels[:, :32]), np.unique(labels[:, 32:])
    assert len(left) == 1 and len(right) == 1
    assert left[0] != right[0]


def test_regions_are_connected_and_inside_mask(pink_disk):
    img, disk = pink_disk
    mask = TissueMask(disk)
    k = 20
    label_map = slic(img, mask, k=k)
    labels = label_map.labels
    assert np.array_equal(labels == BACKGROUND, ~disk)
    assert label_map.region_ids() == list(range(label_map.region_count))
    for region in label_map.region_ids():
        _, components = ndimage.label(labels == region, structure=FOUR_CONNECTED)
        assert components == 1
    mean_area = disk.sum() / label_map.region_count
    assert 0.5 * disk.sum() / k <= mean_area <= 2.0 * disk.sum() / k


def test_slic_is_deterministic(pink_disk):
    img, disk = pink_disk
    a = slic(img, TissueMask(disk), k=12).labels
    b = slic(img, TissueMask(disk), k=12).labels
    np.testing.assert_array_equal(a, b)


def test_slic_rejects_bad_arguments(pink_disk):
    img, disk = pink_disk
    with pytest.raises(InvalidArgumentError):
        slic(img, TissueMask(disk), k=int(disk.sum()) + 1)
    with pytest.raises(InvalidArgumentError):
        slic(img, TissueMask(disk[:10]), k=2)
    with pytest.raises(InvalidArgumentError):
        slic(img, TissueMask(disk), k=4, color_space="xyz")


def test_enforce_connectivity_absorbs_stray_fragment():
    labels = np.array([[0, 0, 1, 1, 0]])
    mask = np.ones_like(labels, dtype=bool)
    out = enforce_connectivity(labels, mask, min_size=1.5)
    np.testing.assert_array_equal(out, [[0, 0, 1, 1, 1]])


def test_upsample_labels_replicates_and_crops():
    small = LabelMap(np.array([[0, 1], [BACKGROUND, 2]]))
    big = upsample_labels(small, 2, (3, 4)).labels
    np.testing.assert_array_equal(big, [[0, 0, 1, 1], [0, 0, 1, 1], [BACKGROUND, BACKGROUND, 2, 2]])
    with pytest.raises(InvalidArgumentError):
        upsample_labels(small, 2, (5, 4))
