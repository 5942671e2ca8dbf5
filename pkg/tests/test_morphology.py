import numpy as np
import pytest

from src.core.errors import InvalidArgumentError
from src.features.morphology import MORPH_NAMES, extract_morph


def test_names_count():
    assert len(MORPH_NAMES) == 18
    assert MORPH_NAMES[-1] == "size"


def test_uniform_region_values():
    n = 10
    rgb = np.tile([200.0, 100.0, 50.0], (n, 1))
    hsv = np.tile([20.0, 0.75, 0.78], (n, 1))
    lab = np.tile([55.0, 30.0, 45.0], (n, 1))
    gray = np.full(n, 120.0)
    values = dict(zip(MORPH_NAMES, extract_morph(rgb, hsv, lab, gray)))
    assert values["mean_r"] == 200.0
    assert values["median_b"] == 50.0
    assert values["mean_h"] == 20.0
    assert values["mean_(la)b"] == 45.0
    assert values["ratio_bright"] == 0.0
    assert values["ratio_dark"] == 0.0
    assert values["10_dark"] == values["10_bright"] == 120.0
    assert values["size"] == 10.0


def test_bright_and_dark_ratios():
    gray = np.array([10.0, 40.0, 100.0, 210.0])
    rgb = np.stack([gray] * 3, axis=1)
    values = dict(zip(MORPH_NAMES, extract_morph(rgb, np.zeros_like(rgb), np.zeros_like(rgb), gray)))
    assert values["ratio_bright"] == pytest.approx(0.25)
    assert values["ratio_dark"] == pytest.approx(0.5)
    assert values["mean"] == pytest.approx(90.0)
    assert values["10_dark"] == pytest.approx(np.percentile(gray, 10))


def test_empty_region_rejected():
    empty = np.zeros((0, 3))
    with pytest.raises(InvalidArgumentError):
        extract_morph(empty, empty, empty, np.zeros(0))
