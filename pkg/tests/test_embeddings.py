import struct

import numpy as np
import pytest

from src.core.errors import FileFormatError, InvalidArgumentError
from src.graph.embeddings import (
    BUILTIN_DIM,
    EMBEDDING_MAGIC,
    check_coverage,
    compute_builtin_embeddings,
    read_embeddings,
    write_embeddings,
)
from src.imaging.superpixel import BACKGROUND, LabelMap


def test_embedding_file_layout(tmp_path):
    path = str(tmp_path / "e.bin")
    write_embeddings(path, {3: np.array([1.0, 2.0]), 1: np.array([0.5, -1.0])})
    raw = open(path, "rb").read()
    assert raw[:4] == EMBEDDING_MAGIC
    assert struct.unpack_from("<II", raw, 4) == (2, 2)
    assert struct.unpack_from("<I", raw, 12) == (1,)
    loaded = read_embeddings(path)
    assert sorted(loaded) == [1, 3]
    np.testing.assert_array_equal(loaded[3], [1.0, 2.0])


def test_truncated_or_duplicated_records_rejected(tmp_path):
    path = tmp_path / "e.bin"
    write_embeddings(str(path), {0: np.ones(4)})
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(FileFormatError):
        read_embeddings(str(path))

    record = struct.pack("<I", 7) + np.ones(2, dtype="<f4").tobytes()
    path.write_bytes(EMBEDDING_MAGIC + struct.pack("<II", 2, 2) + record + record)
    with pytest.raises(FileFormatError):
        read_embeddings(str(path))


def test_builtin_embeddings_are_unit_vectors(two_tone_image):
    labels = np.zeros(two_tone_image.shape, dtype=np.int64)
    labels[:, 32:] = 1
    labels[0, 0] = BACKGROUND
    embeddings = compute_builtin_embeddings(two_tone_image, LabelMap(labels))
    assert sorted(embeddings) == [0, 1]
    for vector in embeddings.values():
        assert vector.shape == (BUILTIN_DIM,)
        assert np.linalg.norm(vector) == pytest.approx(1.0)
    assert not np.allclose(embeddings[0], embeddings[1])


def test_same_color_regions_embed_identically(two_tone_image):
    labels = np.zeros(two_tone_image.shape, dtype=np.int64)
    labels[:16, :32] = 0
    labels[16:, :32] = 1
    labels[:, 32:] = 2
    embeddings = compute_builtin_embeddings(two_tone_image, LabelMap(labels))
    np.testing.assert_allclose(embeddings[0], embeddings[1])


def test_coverage_checks():
    with pytest.raises(InvalidArgumentError):
        check_coverage({0: np.ones(2)}, [0, 1])
    with pytest.raises(InvalidArgumentError):
        check_coverage({0: np.zeros(2)}, [0])
    with pytest.raises(InvalidArgumentError):
        check_coverage({0: np.ones(2), 1: np.ones(3)}, [0, 1])
    check_coverage({0: np.ones(2), 1: np.ones(2), 5: np.zeros(2)}, [0, 1])
