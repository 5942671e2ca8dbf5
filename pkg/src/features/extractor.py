"""
Node Feature Extraction: full catalog vector for every graph node

Rows follow ascending node id; columns follow the catalog. Regions are
independent, so extraction fans out over a thread pool.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd
from scipy import ndimage

from src.core.errors import FileFormatError, InvalidArgumentError
from src.features.catalog import FeatureCatalog, FeatureGroup
from src.features.morphology import extract_morph
from src.features.nuclear import NucleiMap, assign_nuclei, nuclear_vector
from src.features.texture import extract_lbp, extract_texture
from src.imaging.raster import ColorSpace, RgbImage, convert_color
from src.imaging.superpixel import BACKGROUND, LabelMap

logger = logging.getLogger(__name__)


def extract_node_features(
    img: RgbImage,
    labels: LabelMap,
    nuclei: Optional[NucleiMap],
    node_ids: Sequence[int],
    catalog: FeatureCatalog,
    levels: int = 32,
    bright_cutoff: float = 200.0,
    dark_cutoff: float = 50.0,
    workers: int = 1,
) -> np.ndarray:
    """
    Extract the full-catalog vector of every node.

    Args:
        img: Analysis-scale image
        labels: Per-pixel node ids (flattened coarsened labels)
        nuclei: Nuclei map of the same size; None means no nuclei
        node_ids: Nodes to extract, rows follow this order
        catalog: Full catalog (decides whether LBP columns are present)
        levels: Gray levels for texture matrices
        bright_cutoff: Morphology bright threshold
        dark_cutoff: Morphology dark threshold
        workers: Thread count

    Returns:
        (len(node_ids), catalog.size) float64 matrix
    """
    data = np.asarray(labels.labels)
    if data.shape != img.shape:
        raise InvalidArgumentError(f"Labels {data.shape} do not match image {img.shape}")
    if nuclei is None:
        nuclei = NucleiMap.empty(data.shape)
    include_lbp = any(e.family == "lbp" for e in catalog.entries)
    if catalog.group_sizes()[FeatureGroup.MORPH.value] != 18:
        raise InvalidArgumentError("Catalog does not carry the standard morphology group")

    hsv = convert_color(img, ColorSpace.HSV)
    lab = convert_color(img, ColorSpace.CIELAB)
    gray = convert_color(img, ColorSpace.GRAY)
    rgb = img.pixels
    owned = assign_nuclei(data, nuclei)

    shifted = np.where(data == BACKGROUND, 0, data + 1)
    boxes = ndimage.find_objects(shifted)

    def one(node_id: int) -> np.ndarray:
        box = boxes[node_id] if node_id < len(boxes) else None
        if box is None:
            raise InvalidArgumentError(f"Node {node_id} has no pixels in the label map")
        mask = shifted[box] == node_id + 1
        parts: List[np.ndarray] = [extract_texture(gray[box], mask, levels)]
        if include_lbp:
            parts.append(extract_lbp(gray[box], mask))
        parts.append(
            extract_morph(
                rgb[box][mask], hsv[box][mask], lab[box][mask], gray[box][mask],
                bright_cutoff=bright_cutoff, dark_cutoff=dark_cutoff,
            )
        )
        parts.append(nuclear_vector(owned.get(node_id, []), nuclei, int(mask.sum())))
        return np.concatenate(parts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, node_ids))
    else:
        rows = [one(n) for n in node_ids]

    matrix = np.vstack(rows) if rows else np.zeros((0, catalog.size))
    if matrix.shape[1] != catalog.size:
        raise InvalidArgumentError(f"Extracted {matrix.shape[1]} values, catalog expects {catalog.size}")
    logger.debug(f"Extracted features for {len(rows)} nodes")
    return matrix


def write_feature_matrix(path: str, node_ids: Sequence[int], names: Sequence[str], matrix: np.ndarray):
    """CSV: node_id column then one column per named feature, 17 significant digits"""
    frame = pd.DataFrame(np.asarray(matrix, dtype=np.float64), columns=list(names))
    frame.insert(0, "node_id", [int(n) for n in node_ids])
    frame.to_csv(path, index=False, float_format="%.17g")


def read_feature_matrix(path: str) -> Tuple[List[int], List[str], np.ndarray]:
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise FileFormatError(f"Cannot read feature matrix {path}: {e}")
    if not len(frame.columns) or frame.columns[0] != "node_id":
        raise FileFormatError(f"{path}: first column must be node_id")
    names = [str(c) for c in frame.columns[1:]]
    return frame["node_id"].astype(int).tolist(), names, frame[names].to_numpy(dtype=np.float64)
