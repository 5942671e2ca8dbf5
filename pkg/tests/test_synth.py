import os

import numpy as np
import pytest

from src.core.config import load_config
from src.core.errors import InvalidArgumentError
from src.evaluation.manifest import Split, load_manifest
from src.imaging.io import read_nuclei_map
from src.pipeline.synth import (
    NEOPLASTIC,
    benchmark_config,
    make_synthetic_slide,
    stripe_period,
    write_synthetic_benchmark,
)


def test_slide_is_reproducible():
    a, na = make_synthetic_slide(1, np.random.default_rng(5), size=64)
    b, nb = make_synthetic_slide(1, np.random.default_rng(5), size=64)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    np.testing.assert_array_equal(na.instances, nb.instances)
    assert a.shape == (64, 64)


def test_visible_nuclei_numbered_consecutively():
    _, nuclei = make_synthetic_slide(2, np.random.default_rng(0), size=96)
    ids = sorted(nuclei.areas())
    assert ids == list(range(1, len(ids) + 1))
    assert set(nuclei.types) == set(ids)


def test_later_stages_carry_more_nuclei_and_finer_stripes():
    rng = np.random.default_rng(1)
    counts = {stage: [len(make_synthetic_slide(stage, rng, 96)[1].types) for _ in range(6)] for stage in (0, 1)}
    assert np.mean(counts[1]) > np.mean(counts[0])
    assert stripe_period(1) < stripe_period(0)


def test_stage_one_nuclei_mostly_neoplastic():
    _, nuclei = make_synthetic_slide(1, np.random.default_rng(3), size=128)
    codes = list(nuclei.types.values())
    assert codes.count(NEOPLASTIC) > len(codes) / 2


@pytest.mark.parametrize("stage,size", [(4, 64), (-1, 64), (0, 16)])
def test_invalid_arguments(stage, size):
    with pytest.raises(InvalidArgumentError):
        make_synthetic_slide(stage, np.random.default_rng(0), size)


def test_benchmark_layout(tmp_path, monkeypatch):
    for name in ("TISSUEGRAPH_OUT", "TISSUEGRAPH_WORKERS", "TISSUEGRAPH_SEED"):
        monkeypatch.delenv(name, raising=False)
    path = write_synthetic_benchmark(str(tmp_path), n_slides=10, seed=2, size=48)
    manifest = load_manifest(path)
    assert len(manifest) == 10
    assert sorted(s.stage for s in manifest.slides) == [0] * 5 + [1] * 5
    assert [len(manifest.by_split(s)) for s in Split] == [6, 2, 2]
    assert all(s.time >= 30.0 and s.event is not None for s in manifest.slides)
    first = manifest.slides[0]
    assert os.path.exists(first.image_path)
    assert read_nuclei_map(first.nuclei_path, first.nuclei_table_path).instances.shape == (48, 48)
    assert load_config(str(tmp_path / "config.json")) == benchmark_config(str(tmp_path))


def test_benchmark_needs_slides(tmp_path):
    with pytest.raises(InvalidArgumentError):
        write_synthetic_benchmark(str(tmp_path), n_slides=0)
