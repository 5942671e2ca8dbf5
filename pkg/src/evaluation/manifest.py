"""
Dataset Manifest: slides, patients, labels and patient-level splits

CSV header (optional columns may be omitted or left blank):

    slide_id, patient_id, image_path, nuclei_path, nuclei_table_path,
    embedding_path, stage, time, event, split

Relative paths resolve against the manifest's directory.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import os

import numpy as np
import pandas as pd

from src.core.errors import ConfigError
from src.evaluation.survival import parse_stage

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("slide_id", "patient_id", "image_path")
OPTIONAL_COLUMNS = (
    "nuclei_path", "nuclei_table_path", "embedding_path", "stage", "time", "event", "split",
)
MANIFEST_COLUMNS = REQUIRED_COLUMNS + OPTIONAL_COLUMNS


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass
class SlideRecord:
    slide_id: str
    patient_id: str
    image_path: str
    nuclei_path: Optional[str] = None
    nuclei_table_path: Optional[str] = None
    embedding_path: Optional[str] = None
    stage: Optional[int] = None
    time: Optional[float] = None
    event: Optional[bool] = None
    split: Optional[Split] = None


@dataclass
class Manifest:
    slides: List[SlideRecord]

    def __len__(self) -> int:
        return len(self.slides)

    def by_split(self, split: Split) -> List[SlideRecord]:
        return [s for s in self.slides if s.split == split]

    def patients(self) -> List[str]:
        return sorted({s.patient_id for s in self.slides})


def _optional(value: str) -> Optional[str]:
    text = str(value).strip()
    return text or None


def _optional_field(row: Dict[str, str], key: str) -> Optional[str]:
    return _optional(row.get(key, ""))


def _resolve(base: str, value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    return value if os.path.isabs(value) else os.path.normpath(os.path.join(base, value))


def _parse_event(value: Optional[str]) -> Optional[bool]:
    if value is None:
        return None
    text = value.lower()
    if text in ("1", "true", "yes"):
        return True
    if text in ("0", "false", "no"):
        return False
    raise ConfigError(f"Unrecognized event flag: {value!r}")


def check_patient_splits(slides: Sequence[SlideRecord]):
    """No patient may have slides in two different splits"""
    seen: Dict[str, Optional[Split]] = {}
    for slide in slides:
        if slide.patient_id in seen and seen[slide.patient_id] != slide.split:
            raise ConfigError(f"Patient {slide.patient_id} has slides in more than one split")
        seen[slide.patient_id] = slide.split


def load_manifest(path: str) -> Manifest:
    """
    Read and validate a manifest CSV.

    Args:
        path: Manifest file

    Returns:
        Manifest with absolute paths and parsed labels
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot read manifest {path}: {e}")

    columns = list(frame.columns)
    missing = [c for c in REQUIRED_COLUMNS if c not in columns]
    unknown = [c for c in columns if c not in MANIFEST_COLUMNS]
    if missing or unknown:
        raise ConfigError(f"Manifest {path}: missing columns {missing}, unknown columns {unknown}")

    base = os.path.dirname(os.path.abspath(path))
    slides: List[SlideRecord] = []
    for row in frame.to_dict(orient="records"):
        try:
            stage = _optional_field(row, "stage")
            time = _optional_field(row, "time")
            split = _optional_field(row, "split")
            slides.append(
                SlideRecord(
                    slide_id=row["slide_id"].strip(),
                    patient_id=row["patient_id"].strip(),
                    image_path=_resolve(base, _optional_field(row, "image_path")),
                    nuclei_path=_resolve(base, _optional_field(row, "nuclei_path")),
                    nuclei_table_path=_resolve(base, _optional_field(row, "nuclei_table_path")),
                    embedding_path=_resolve(base, _optional_field(row, "embedding_path")),
                    stage=None if stage is None else parse_stage(stage),
                    time=None if time is None else float(time),
                    event=_parse_event(_optional_field(row, "event")),
                    split=None if split is None else Split(split.lower()),
                )
            )
        except ValueError as e:
            raise ConfigError(f"Manifest {path}, slide {row.get('slide_id')!r}: {e}")

    ids = [s.slide_id for s in slides]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"Manifest {path} repeats slide ids")
    if any(not s.slide_id or not s.patient_id or not s.image_path for s in slides):
        raise ConfigError(f"Manifest {path} has rows without slide_id, patient_id or image_path")
    check_patient_splits(slides)
    logger.info(f"Manifest {path}: {len(slides)} slides, {len({s.patient_id for s in slides})} patients")
    return Manifest(slides=slides)


def write_manifest(path: str, manifest: Manifest):
    base = os.path.dirname(os.path.abspath(path))

    def rel(value: Optional[str]) -> str:
        return "" if value is None else os.path.relpath(value, base)

    rows = []
    for s in manifest.slides:
        rows.append({
            "slide_id": s.slide_id,
            "patient_id": s.patient_id,
            "image_path": rel(s.image_path),
            "nuclei_path": rel(s.nuclei_path),
            "nuclei_table_path": rel(s.nuclei_table_path),
            "embedding_path": rel(s.embedding_path),
            "stage": "" if s.stage is None else str(s.stage),
            "time": "" if s.time is None else repr(float(s.time)),
            "event": "" if s.event is None else str(int(s.event)),
            "split": "" if s.split is None else s.split.value,
        })
    pd.DataFrame(rows, columns=list(MANIFEST_COLUMNS)).to_csv(path, index=False)


def assign_patient_splits(
    manifest: Manifest,
    fractions: Tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> Manifest:
    """
    Fill missing split tags patient by patient.

    Patients that already carry a split keep it. The rest are shuffled
    with the seed and cut into train/val/test by the given fractions.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not np.isclose(sum(fractions), 1.0):
        raise ConfigError(f"Split fractions must be three non-negative numbers summing to 1, got {fractions}")
    check_patient_splits(manifest.slides)

    untagged = sorted({s.patient_id for s in manifest.slides if s.split is None})
    order = np.random.default_rng(seed).permutation(len(untagged))
    n_train = int(round(fractions[0] * len(untagged)))
    n_val = int(round(fractions[1] * len(untagged)))
    assigned: Dict[str, Split] = {}
    for rank, index in enumerate(order):
        if rank < n_train:
            split = Split.TRAIN
        elif rank < n_train + n_val:
            split = Split.VAL
        else:
            split = Split.TEST
        assigned[untagged[index]] = split

    slides = [
        SlideRecord(**{**s.__dict__, "split": s.split or assigned[s.patient_id]}) for s in manifest.slides
    ]
    return Manifest(slides=slides)
