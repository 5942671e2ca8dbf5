"""
Region Embeddings: per-region vectors that drive graph coarsening

Two sources:
- FILE: precomputed vectors (e.g. from a pretrained encoder) in the
  binary EMB1 layout, keyed by region id
- BUILTIN: a 48-d handcrafted descriptor, LAB color histogram (3 x 8
  bins) plus GLCM contrast/correlation/energy at 4 angles x 2 distances,
  L2-normalized. A desk-scale stand-in for a learned encoder.
"""

from enum import Enum
from typing import Dict, Iterable
import logging
import struct

import numpy as np
from scipy import ndimage

from src.core.errors import FileFormatError, InvalidArgumentError
from src.features.texture import GLCM_ANGLES, masked_glcm
from src.imaging.raster import ColorSpace, RgbImage, convert_color, quantize
from src.imaging.superpixel import BACKGROUND, LabelMap

logger = logging.getLogger(__name__)

EMBEDDING_MAGIC = b"EMB1"
BUILTIN_DIM = 48
HISTOGRAM_BINS = 8
LAB_RANGES = ((0.0, 100.0), (-128.0, 127.0), (-128.0, 127.0))
GLCM_DISTANCES = (1, 2)
GLCM_PROPERTIES = ("contrast", "correlation", "energy")
GLCM_LEVELS = 32


class EmbeddingSource(Enum):
    """Where region embeddings come from"""
    FILE = "file"
    BUILTIN = "builtin"


def write_embeddings(path: str, embeddings: Dict[int, np.ndarray]):
    """Little-endian: magic, uint32 count, uint32 dim, then (uint32 id, dim x float32) records"""
    ids = sorted(embeddings)
    dim = int(np.asarray(embeddings[ids[0]]).shape[0]) if ids else 0
    with open(path, "wb") as handle:
        handle.write(EMBEDDING_MAGIC)
        handle.write(struct.pack("<II", len(ids), dim))
        for region_id in ids:
            vector = np.asarray(embeddings[region_id], dtype="<f4")
            if vector.shape != (dim,):
                raise InvalidArgumentError(f"Embedding {region_id} has shape {vector.shape}, expected ({dim},)")
            handle.write(struct.pack("<I", region_id))
            handle.write(vector.tobytes())


def read_embeddings(path: str) -> Dict[int, np.ndarray]:
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as e:
        raise FileFormatError(f"Cannot read embedding file {path}: {e}")

    if raw[:4] != EMBEDDING_MAGIC or len(raw) < 12:
        raise FileFormatError(f"{path} is not an EMB1 embedding file")
    count, dim = struct.unpack_from("<II", raw, 4)
    record = 4 + 4 * dim
    if len(raw) != 12 + count * record:
        raise FileFormatError(f"{path}: expected {count} records of dim {dim}, file size {len(raw)} disagrees")

    embeddings: Dict[int, np.ndarray] = {}
    offset = 12
    for _ in range(count):
        (region_id,) = struct.unpack_from("<I", raw, offset)
        vector = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset + 4).astype(np.float64)
        if region_id in embeddings:
            raise FileFormatError(f"{path}: duplicate region id {region_id}")
        if not np.all(np.isfinite(vector)):
            raise FileFormatError(f"{path}: non-finite embedding for region {region_id}")
        embeddings[int(region_id)] = vector
        offset += record
    return embeddings


def builtin_embedding(lab: np.ndarray, gray: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    Handcrafted 48-d region descriptor.

    Args:
        lab: CIELAB planes of the region's bounding box
        gray: Gray plane of the same box
        mask: Region pixels within the box

    Returns:
        Unit-norm vector of length BUILTIN_DIM
    """
    parts = []
    pixels = lab[mask]
    for channel, (low, high) in enumerate(LAB_RANGES):
        hist, _ = np.histogram(pixels[:, channel], bins=HISTOGRAM_BINS, range=(low, high))
        parts.append(hist / max(1, pixels.shape[0]))

    quantized = quantize(gray, GLCM_LEVELS, mask).data
    matrices = masked_glcm(quantized, mask, GLCM_LEVELS, GLCM_DISTANCES, GLCM_ANGLES)
    parts.append(_glcm_summary(matrices).ravel())

    vector = np.concatenate(parts).astype(np.float64)
    norm = np.linalg.norm(vector)
    return vector / norm if norm > 0 else vector


def _glcm_summary(matrices: np.ndarray) -> np.ndarray:
    """contrast / correlation / energy for each (distance, angle) slice"""
    levels, _, n_dist, n_angle = matrices.shape
    i, j = np.meshgrid(np.arange(levels), np.arange(levels), indexing="ij")
    out = np.zeros((len(GLCM_PROPERTIES), n_dist, n_angle))
    for d in range(n_dist):
        for a in range(n_angle):
            counts = matrices[:, :, d, a]
            total = counts.sum()
            if total == 0:
                continue
            p = counts / total
            mu_i, mu_j = (i * p).sum(), (j * p).sum()
            sd_i = np.sqrt(((i - mu_i) ** 2 * p).sum())
            sd_j = np.sqrt(((j - mu_j) ** 2 * p).sum())
            out[0, d, a] = ((i - j) ** 2 * p).sum()
            out[1, d, a] = 1.0 if sd_i * sd_j == 0 else ((i - mu_i) * (j - mu_j) * p).sum() / (sd_i * sd_j)
            out[2, d, a] = np.sqrt((p ** 2).sum())
    return out


def compute_builtin_embeddings(img: RgbImage, labels: LabelMap) -> Dict[int, np.ndarray]:
    """Builtin descriptor for every region of the label map"""
    data = np.asarray(labels.labels)
    if data.shape != img.shape:
        raise InvalidArgumentError(f"Label map {data.shape} does not match image {img.shape}")
    lab = convert_color(img, ColorSpace.CIELAB)
    gray = convert_color(img, ColorSpace.GRAY)
    shifted = np.where(data == BACKGROUND, 0, data + 1)

    embeddings: Dict[int, np.ndarray] = {}
    for index, box in enumerate(ndimage.find_objects(shifted)):
        if box is None:
            continue
        mask = shifted[box] == index + 1
        embeddings[index] = builtin_embedding(lab[box], gray[box], mask)
    logger.debug(f"Builtin embeddings computed for {len(embeddings)} regions")
    return embeddings


def check_coverage(embeddings: Dict[int, np.ndarray], region_ids: Iterable[int]):
    """Every region needs a finite, nonzero vector of one shared dimension"""
    dims = set()
    for region_id in region_ids:
        if region_id not in embeddings:
            raise InvalidArgumentError(f"No embedding for region {region_id}")
        vector = embeddings[region_id]
        if not np.all(np.isfinite(vector)) or not np.any(vector):
            raise InvalidArgumentError(f"Embedding for region {region_id} is zero or non-finite")
        dims.add(int(vector.shape[0]))
    if len(dims) > 1:
        raise InvalidArgumentError(f"Embedding dimensions disagree: {sorted(dims)}")
