import numpy as np
import pytest

from src.core.errors import FileFormatError, InvalidArgumentError
from src.features.catalog import FeatureCatalog, FeatureGroup


def test_full_catalog_layout():
    catalog = FeatureCatalog.full()
    assert catalog.size == 188
    assert catalog.group_sizes() == {"tex": 93, "morph": 18, "nuc": 77}
    names = catalog.names()
    assert names[0] == "original_firstorder_10Percentile"
    assert names[93] == "mean_r"
    assert names[-1] == "no-neo_density"
    assert all(catalog.active)


def test_lbp_extends_texture_group():
    catalog = FeatureCatalog.full(include_lbp=True)
    assert catalog.size == 198
    assert catalog.group_sizes()["tex"] == 103
    assert catalog.entries[93].family == "lbp"
    assert catalog.entries[103].group is FeatureGroup.MORPH


def test_texture_params_recorded():
    glcm = next(e for e in FeatureCatalog.full(levels=16).entries if e.family == "glcm")
    assert glcm.params["levels"] == 16
    assert glcm.params["distance"] == 1


def test_select_and_active_names():
    catalog = FeatureCatalog.full()
    flags = [i % 2 == 0 for i in range(catalog.size)]
    pruned = catalog.with_active(flags, xi=0.9)
    assert pruned.active_names()[:2] == [catalog.names()[0], catalog.names()[2]]

    matrix = np.arange(2 * catalog.size, dtype=float).reshape(2, -1)
    assert pruned.select(matrix).shape == (2, 94)
    with pytest.raises(InvalidArgumentError):
        pruned.select(matrix[:, :10])


def test_json_round_trip(tmp_path):
    catalog = FeatureCatalog.full().with_active([i != 5 for i in range(188)], xi=0.95)
    path = tmp_path / "catalog.json"
    catalog.save(str(path))
    loaded = FeatureCatalog.load(str(path))
    assert loaded.names() == catalog.names()
    assert loaded.active == catalog.active
    assert loaded.xi == 0.95
    assert loaded.entries[0].params == catalog.entries[0].params


def test_malformed_catalog(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"entries": [{"name": "x"}]}')
    with pytest.raises(FileFormatError):
        FeatureCatalog.load(str(path))


def test_duplicate_names_rejected():
    catalog = FeatureCatalog.full()
    with pytest.raises(InvalidArgumentError):
        FeatureCatalog(entries=catalog.entries + catalog.entries[:1])
