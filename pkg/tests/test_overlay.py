import numpy as np
import pytest

from src.core.errors import InvalidArgumentError
from src.explain.overlay import colormap_table, render_overlay
from src.imaging.raster import RgbImage
from src.imaging.superpixel import LabelMap


def test_colormap_endpoints():
    table = colormap_table()
    assert table.shape == (256, 3)
    assert table[0].tolist() == [255, 255, 0]
    assert table[-1].tolist() == [255, 0, 0]


def scene():
    img = RgbImage(np.full((4, 6, 3), 200, dtype=np.uint8))
    labels = np.full((4, 6), -1, dtype=np.int64)
    labels[:, :2] = 0
    labels[:, 2:4] = 1
    return img, LabelMap(labels=labels)


def test_blend_low_and_high_regions():
    img, labels = scene()
    out = render_overlay(labels, {0: 0.0, 1: 3.0}, img, alpha=0.45).pixels
    assert out[0, 0].tolist() == [225, 225, 110]
    assert out[0, 2].tolist() == [225, 110, 110]
    assert out[0, 5].tolist() == [200, 200, 200]


def test_missing_and_equal_importance_map_to_low_end():
    img, labels = scene()
    out = render_overlay(labels, {}, img).pixels
    assert out[0, 0].tolist() == out[0, 3].tolist() == [225, 225, 110]


def test_alpha_zero_is_identity():
    img, labels = scene()
    np.testing.assert_array_equal(render_overlay(labels, {0: 1.0}, img, alpha=0.0).pixels, img.pixels)


def test_invalid_inputs():
    img, labels = scene()
    with pytest.raises(InvalidArgumentError):
        render_overlay(labels, {}, img, alpha=1.5)
    with pytest.raises(InvalidArgumentError):
        render_overlay(LabelMap(labels=np.zeros((2, 2), dtype=np.int64)), {}, img)
