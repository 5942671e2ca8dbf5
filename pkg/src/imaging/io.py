"""
Raster I/O: images, masks, label maps and nuclei maps on disk

- RGB images: PNG/TIFF via Pillow (alpha dropped, gray/palette promoted)
- Tissue masks: 8-bit PNG, 0 / 255
- Label maps: 16-bit PNG, background stored as 65535
- Nuclei maps: 16-bit instance PNG + CSV table (instance_id,type_code)
"""

from typing import Dict
import logging

import numpy as np
import pandas as pd
from PIL import Image

from src.core.errors import FileFormatError
from src.features.nuclear import NUCLEUS_TYPES, NucleiMap
from src.imaging.raster import RgbImage
from src.imaging.superpixel import BACKGROUND, LabelMap
from src.imaging.tissue import TissueMask

logger = logging.getLogger(__name__)

LABEL_SENTINEL = 65535


def _open(path: str) -> Image.Image:
    try:
        image = Image.open(path)
        image.load()
        return image
    except (OSError, ValueError) as e:
        raise FileFormatError(f"Cannot read image {path}: {e}")


def read_rgb(path: str) -> RgbImage:
    """Load an 8-bit RGB raster"""
    image = _open(path)
    if image.mode != "RGB":
        image = image.convert("RGB")
    return RgbImage(np.array(image, dtype=np.uint8))


def write_rgb(path: str, img: RgbImage):
    Image.fromarray(np.asarray(img.pixels, dtype=np.uint8), mode="RGB").save(path)


def write_mask(path: str, mask: TissueMask):
    Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8), mode="L").save(path)


def read_mask(path: str) -> TissueMask:
    data = np.array(_open(path).convert("L"))
    return TissueMask(bits=data > 0)


def write_label_map(path: str, labels: LabelMap):
    """16-bit PNG; region ids must stay below the sentinel"""
    data = np.asarray(labels.labels)
    if data.size and int(data.max()) >= LABEL_SENTINEL:
        raise FileFormatError(f"Label id {int(data.max())} does not fit a 16-bit label map")
    encoded = np.where(data == BACKGROUND, LABEL_SENTINEL, data).astype(np.uint16)
    Image.fromarray(encoded).save(path)


def read_label_map(path: str) -> LabelMap:
    data = np.array(_open(path)).astype(np.int64)
    if data.ndim != 2:
        raise FileFormatError(f"Label map {path} must be single-channel, got shape {data.shape}")
    return LabelMap(labels=np.where(data == LABEL_SENTINEL, BACKGROUND, data))


def write_nuclei_map(png_path: str, table_path: str, nuclei: NucleiMap):
    Image.fromarray(np.asarray(nuclei.instances).astype(np.uint16)).save(png_path)
    table = pd.DataFrame(
        {"instance_id": sorted(nuclei.types), "type_code": [nuclei.types[i] for i in sorted(nuclei.types)]}
    )
    table.to_csv(table_path, index=False)


def read_nuclei_map(png_path: str, table_path: str) -> NucleiMap:
    """
    Load a nuclei instance map and its type table.

    Args:
        png_path: 16-bit instance-label PNG, 0 = no nucleus
        table_path: CSV with columns instance_id,type_code

    Returns:
        NucleiMap; instances present in the map but missing from the table
        raise FileFormatError, table rows without pixels are ignored
    """
    instances = np.array(_open(png_path)).astype(np.int64)
    if instances.ndim != 2:
        raise FileFormatError(f"Nuclei map {png_path} must be single-channel")

    try:
        table = pd.read_csv(table_path)
    except (OSError, ValueError) as e:
        raise FileFormatError(f"Cannot read nuclei table {table_path}: {e}")
    if list(table.columns) != ["instance_id", "type_code"]:
        raise FileFormatError(f"Nuclei table header must be instance_id,type_code, got {list(table.columns)}")

    types: Dict[int, int] = {}
    for instance_id, type_code in zip(table["instance_id"], table["type_code"]):
        if int(type_code) not in range(len(NUCLEUS_TYPES)):
            raise FileFormatError(f"Nucleus {instance_id} has unknown type code {type_code}")
        types[int(instance_id)] = int(type_code)

    present = set(int(v) for v in np.unique(instances) if v != 0)
    missing = sorted(present - set(types))
    if missing:
        raise FileFormatError(f"Nuclei {missing[:5]} appear in the map but not in the type table")
    unused = sorted(set(types) - present)
    if unused:
        logger.warning(f"{len(unused)} nuclei in {table_path} have no pixels and are ignored")
        for instance_id in unused:
            del types[instance_id]
    return NucleiMap(instances=instances, types=types)
