import numpy as np
import pytest
from PIL import Image

from src.core.errors import FileFormatError
from src.features.nuclear import NucleiMap
from src.imaging.io import (
    read_label_map,
    read_mask,
    read_nuclei_map,
    read_rgb,
    write_label_map,
    write_mask,
    write_nuclei_map,
    write_rgb,
)
from src.imaging.superpixel import BACKGROUND, LabelMap
from src.imaging.tissue import TissueMask


def test_rgb_file_keeps_pixels(tmp_path, pink_disk):
    img, _ = pink_disk
    path = str(tmp_path / "img.png")
    write_rgb(path, img)
    np.testing.assert_array_equal(read_rgb(path).pixels, img.pixels)


def test_rgba_and_gray_are_promoted(tmp_path):
    rgba = np.zeros((4, 4, 4), dtype=np.uint8)
    rgba[..., 0] = 10
    rgba[..., 3] = 128
    Image.fromarray(rgba, mode="RGBA").save(tmp_path / "a.png")
    Image.fromarray(np.full((4, 4), 77, dtype=np.uint8), mode="L").save(tmp_path / "g.png")
    assert read_rgb(str(tmp_path / "a.png")).pixels[0, 0].tolist() == [10, 0, 0]
    assert read_rgb(str(tmp_path / "g.png")).pixels[0, 0].tolist() == [77, 77, 77]


def test_unreadable_image_raises(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"not a png")
    with pytest.raises(FileFormatError):
        read_rgb(str(path))


def test_mask_file_is_zero_or_255(tmp_path):
    bits = np.eye(5, dtype=bool)
    path = str(tmp_path / "mask.png")
    write_mask(path, TissueMask(bits))
    raw = np.array(Image.open(path))
    assert set(np.unique(raw).tolist()) == {0, 255}
    np.testing.assert_array_equal(read_mask(path).bits, bits)


def test_label_map_keeps_background_sentinel(tmp_path):
    labels = np.array([[0, 1, BACKGROUND], [300, 300, 2]])
    path = str(tmp_path / "labels.png")
    write_label_map(path, LabelMap(labels))
    np.testing.assert_array_equal(read_label_map(path).labels, labels)


def test_label_map_rejects_ids_past_sentinel(tmp_path):
    with pytest.raises(FileFormatError):
        write_label_map(str(tmp_path / "x.png"), LabelMap(np.array([[70000]])))


def test_nuclei_map_drops_empty_table_rows(tmp_path, caplog):
    instances = np.zeros((6, 6), dtype=np.int64)
    instances[1:3, 1:3] = 1
    instances[4, 4] = 2
    png, table = str(tmp_path / "n.png"), str(tmp_path / "n.csv")
    write_nuclei_map(png, table, NucleiMap(instances, {1: 1, 2: 3, 9: 2}))
    nuclei = read_nuclei_map(png, table)
    assert nuclei.types == {1: 1, 2: 3}
    assert nuclei.areas() == {1: 4, 2: 1}
    assert "no pixels" in caplog.text


def test_nuclei_missing_from_table_is_an_error(tmp_path):
    instances = np.zeros((4, 4), dtype=np.uint16)
    instances[0, 0] = 5
    Image.fromarray(instances).save(tmp_path / "n.png")
    (tmp_path / "n.csv").write_text("instance_id,type_code\n1,2\n")
    with pytest.raises(FileFormatError):
        read_nuclei_map(str(tmp_path / "n.png"), str(tmp_path / "n.csv"))


def test_nuclei_table_header_is_checked(tmp_path):
    Image.fromarray(np.zeros((2, 2), dtype=np.uint16)).save(tmp_path / "n.png")
    (tmp_path / "n.csv").write_text("id,type\n")
    with pytest.raises(FileFormatError):
        read_nuclei_map(str(tmp_path / "n.png"), str(tmp_path / "n.csv"))
