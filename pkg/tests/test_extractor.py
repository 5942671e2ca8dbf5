import numpy as np
import pytest

from src.core.errors import FileFormatError, InvalidArgumentError
from src.features.catalog import FeatureCatalog
from src.features.extractor import extract_node_features, read_feature_matrix, write_feature_matrix
from src.features.nuclear import NucleiMap
from src.imaging.superpixel import LabelMap


def two_regions(shape):
    labels = np.full(shape, -1, dtype=np.int64)
    labels[4:28, 4:32] = 0
    labels[4:28, 32:60] = 1
    return LabelMap(labels=labels)


def test_matrix_shape_and_morphology(two_tone_image):
    catalog = FeatureCatalog.full()
    matrix = extract_node_features(two_tone_image, two_regions(two_tone_image.shape), None, [0, 1], catalog)
    assert matrix.shape == (2, 188)
    assert np.all(np.isfinite(matrix))
    names = catalog.names()
    assert matrix[0, names.index("mean_r")] == pytest.approx(200.0)
    assert matrix[1, names.index("mean_b")] == pytest.approx(200.0)
    assert matrix[0, names.index("size")] == 24 * 28
    assert matrix[0, names.index("all_count")] == 0


def test_parallel_matches_serial(two_tone_image):
    catalog = FeatureCatalog.full(include_lbp=True)
    labels = two_regions(two_tone_image.shape)
    serial = extract_node_features(two_tone_image, labels, None, [0, 1], catalog)
    parallel = extract_node_features(two_tone_image, labels, None, [0, 1], catalog, workers=2)
    assert serial.shape == (2, 198)
    np.testing.assert_array_equal(serial, parallel)


def test_nuclei_counted_in_owning_region(two_tone_image):
    instances = np.zeros(two_tone_image.shape, dtype=np.int64)
    instances[10:13, 40:43] = 1
    nuclei = NucleiMap(instances, {1: 1})
    catalog = FeatureCatalog.full()
    matrix = extract_node_features(two_tone_image, two_regions(two_tone_image.shape), nuclei, [0, 1], catalog)
    col = catalog.names().index("neopla_count")
    assert matrix[:, col].tolist() == [0.0, 1.0]


def test_missing_node_rejected(two_tone_image):
    with pytest.raises(InvalidArgumentError):
        extract_node_features(two_tone_image, two_regions(two_tone_image.shape), None, [7], FeatureCatalog.full())


def test_csv_round_trip(tmp_path, rng):
    matrix = rng.normal(size=(3, 4)) * 1e5
    path = str(tmp_path / "f.csv")
    write_feature_matrix(path, [2, 5, 9], ["a", "b", "c", "d"], matrix)
    ids, names, back = read_feature_matrix(path)
    assert ids == [2, 5, 9]
    assert names == ["a", "b", "c", "d"]
    np.testing.assert_array_equal(back, matrix)


def test_csv_requires_node_id(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(FileFormatError):
        read_feature_matrix(str(path))
