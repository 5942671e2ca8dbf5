import pytest

from src.core.errors import ConfigError
from src.evaluation.manifest import (
    Manifest,
    SlideRecord,
    Split,
    assign_patient_splits,
    load_manifest,
    write_manifest,
)


def write_csv(path, text):
    path.write_text(text)
    return str(path)


def test_load_resolves_paths_and_labels(tmp_path):
    path = write_csv(
        tmp_path / "m.csv",
        "slide_id,patient_id,image_path,stage,time,event,split\n"
        "s1,p1,img/s1.png,Stage IIA,120.5,1,train\n"
        "s2,p2,/abs/s2.png,,,,\n",
    )
    manifest = load_manifest(path)
    s1, s2 = manifest.slides
    assert s1.image_path == str(tmp_path / "img" / "s1.png")
    assert s1.stage == 1 and s1.time == 120.5 and s1.event is True and s1.split is Split.TRAIN
    assert s2.image_path == "/abs/s2.png"
    assert s2.stage is None and s2.event is None and s2.split is None
    assert manifest.patients() == ["p1", "p2"]


@pytest.mark.parametrize(
    "text",
    [
        "slide_id,image_path\ns1,a.png\n",
        "slide_id,patient_id,image_path,colour\ns1,p1,a.png,red\n",
        "slide_id,patient_id,image_path\ns1,p1,a.png\ns1,p2,b.png\n",
        "slide_id,patient_id,image_path,split\ns1,p1,a.png,train\ns2,p1,b.png,test\n",
        "slide_id,patient_id,image_path,stage\ns1,p1,a.png,V\n",
        "slide_id,patient_id,image_path,event\ns1,p1,a.png,maybe\n",
    ],
)
def test_invalid_manifests(tmp_path, text):
    with pytest.raises(ConfigError):
        load_manifest(write_csv(tmp_path / "m.csv", text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_manifest(str(tmp_path / "absent.csv"))


def test_write_then_load(tmp_path):
    slides = [
        SlideRecord("s1", "p1", str(tmp_path / "a.png"), stage=3, time=10.0, event=False, split=Split.VAL),
        SlideRecord("s2", "p2", str(tmp_path / "b.png")),
    ]
    path = str(tmp_path / "m.csv")
    write_manifest(path, Manifest(slides))
    assert load_manifest(path).slides == slides


def test_patient_level_assignment():
    slides = [SlideRecord(f"s{i}", f"p{i // 2}", f"/x/{i}.png") for i in range(20)]
    slides[0].split = Split.TEST
    slides[1].split = Split.TEST
    first = assign_patient_splits(Manifest(slides), seed=4)
    again = assign_patient_splits(Manifest(slides), seed=4)
    assert [s.split for s in first.slides] == [s.split for s in again.slides]
    assert first.slides[0].split is Split.TEST
    by_patient = {}
    for s in first.slides:
        by_patient.setdefault(s.patient_id, set()).add(s.split)
    assert all(len(v) == 1 for v in by_patient.values())
    counts = {split: sum(1 for v in by_patient.values() if split in v) for split in Split}
    assert counts[Split.TRAIN] == 5  # 9 untagged patients: round(5.4), round(1.8), rest
    assert counts[Split.VAL] == 2


def test_bad_fractions():
    with pytest.raises(ConfigError):
        assign_patient_splits(Manifest([]), fractions=(0.5, 0.5, 0.5))
