"""
Superpixels: SLIC over-segmentation of the tissue area

- Region-count targeting from magnification constants
- SLIC restricted to the tissue mask (labxy distance, 2S x 2S search)
- Connectivity pass so every region is 4-connected
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple
import logging
import math

import numpy as np
from scipy import ndimage

from src.core.errors import InvalidArgumentError
from src.imaging.raster import ColorSpace, RgbImage, convert_color
from src.imaging.tissue import TissueMask

logger = logging.getLogger(__name__)

BACKGROUND = -1
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass
class LabelMap:
    """Per-pixel region index, BACKGROUND outside the tissue"""
    labels: np.ndarray

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def region_count(self) -> int:
        valid = self.labels[self.labels != BACKGROUND]
        return int(valid.max()) + 1 if valid.size else 0

    def region_ids(self) -> List[int]:
        return sorted(int(v) for v in np.unique(self.labels) if v != BACKGROUND)

    def pixel_counts(self) -> Dict[int, int]:
        valid = self.labels[self.labels != BACKGROUND]
        ids, counts = np.unique(valid, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}


def target_region_count(
    tissue_area: float,
    seg_mag: float,
    ref_mag: float,
    target_side: float,
) -> int:
    """
    Number of superpixels giving regions of target_side^2 pixels at ref_mag.

    Args:
        tissue_area: Tissue pixels at segmentation scale
        seg_mag: Segmentation magnification
        ref_mag: Reference magnification at which target_side is measured
        target_side: Desired region side at ref_mag

    Returns:
        K >= 1
    """
    if min(tissue_area, seg_mag, ref_mag, target_side) <= 0:
        raise InvalidArgumentError("target_region_count arguments must all be positive")
    scale = ref_mag / seg_mag
    ratio = tissue_area * scale * scale / (target_side * target_side)
    # round half away from zero, ratio is positive
    return max(1, int(math.floor(ratio + 0.5)))


def _gradient(features: np.ndarray) -> np.ndarray:
    padded = np.pad(features, ((1, 1), (1, 1), (0, 0)), mode="edge")
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    return (dy ** 2).sum(axis=2) + (dx ** 2).sum(axis=2)


def _grid_seeds(mask: np.ndarray, step: float, gradient: np.ndarray) -> List[Tuple[int, int]]:
    height, width = mask.shape
    seeds: List[Tuple[int, int]] = []
    seen = set()
    for y in np.arange(step / 2.0, height, step):
        for x in np.arange(step / 2.0, width, step):
            cy, cx = int(y), int(x)
            if not mask[cy, cx]:
                continue
            best = (cy, cx)
            best_g = gradient[cy, cx]
            for ny in range(max(0, cy - 1), min(height, cy + 2)):
                for nx in range(max(0, cx - 1), min(width, cx + 2)):
                    if mask[ny, nx] and gradient[ny, nx] < best_g:
                        best, best_g = (ny, nx), gradient[ny, nx]
            if best not in seen:
                seen.add(best)
                seeds.append(best)

    if not seeds:
        # mask too thin for the grid: seed at the masked pixel closest to its centroid
        ys, xs = np.nonzero(mask)
        d = (ys - ys.mean()) ** 2 + (xs - xs.mean()) ** 2
        i = int(np.argmin(d))
        seeds.append((int(ys[i]), int(xs[i])))
    return seeds


def _assign_unreached(
    labels: np.ndarray,
    mask: np.ndarray,
    features: np.ndarray,
    centers: np.ndarray,
    spatial_weight: float,
):
    ys, xs = np.nonzero(mask & (labels == BACKGROUND))
    if ys.size == 0:
        return
    pix = features[ys, xs]
    d_color = ((pix[:, None, :] - centers[None, :, :3]) ** 2).sum(axis=2)
    d_xy = (ys[:, None] - centers[None, :, 3]) ** 2 + (xs[:, None] - centers[None, :, 4]) ** 2
    labels[ys, xs] = np.argmin(d_color + spatial_weight * d_xy, axis=1)


def slic(
    img: RgbImage,
    mask: TissueMask,
    k: int,
    compactness: float = 10.0,
    iterations: int = 10,
    color_space: str = "lab",
) -> LabelMap:
    """
    SLIC superpixels restricted to the tissue mask.

    Args:
        img: Image at segmentation resolution
        mask: Tissue mask of the same size
        k: Target number of regions
        compactness: m, weight of spatial proximity
        iterations: Assignment/update rounds
        color_space: "lab" (default) or "rgb"

    Returns:
        LabelMap with contiguous 4-connected regions 0..K'-1
    """
    bits = np.asarray(mask.bits, dtype=bool)
    if bits.shape != img.shape:
        raise InvalidArgumentError(f"Mask shape {bits.shape} does not match image shape {img.shape}")
    area = int(bits.sum())
    if area == 0:
        raise InvalidArgumentError("SLIC requires a non-empty mask")
    if k < 1 or k > area:
        raise InvalidArgumentError(f"K={k} must lie in [1, masked area={area}]")

    if color_space == "lab":
        features = convert_color(img, ColorSpace.CIELAB)
    elif color_space == "rgb":
        features = img.pixels.astype(np.float64)
    else:
        raise InvalidArgumentError(f"Unsupported SLIC color space: {color_space}")

    height, width = bits.shape
    step = math.sqrt(area / k)
    spatial_weight = (compactness / step) ** 2

    seeds = _grid_seeds(bits, step, _gradient(features))
    centers = np.array(
        [[*features[y, x], float(y), float(x)] for y, x in seeds], dtype=np.float64
    )
    yy, xx = np.indices((height, width), dtype=np.float64)
    reach = int(math.ceil(step))

    labels = np.full((height, width), BACKGROUND, dtype=np.int64)
    for _ in range(iterations):
        labels.fill(BACKGROUND)
        distance = np.full((height, width), np.inf)
        for index, center in enumerate(centers):
            cy, cx = int(round(center[3])), int(round(center[4]))
            y0, y1 = max(0, cy - reach), min(height, cy + reach + 1)
            x0, x1 = max(0, cx - reach), min(width, cx + reach + 1)
            window = features[y0:y1, x0:x1]
            d_color = ((window - center[:3]) ** 2).sum(axis=2)
            d_xy = (yy[y0:y1, x0:x1] - center[3]) ** 2 + (xx[y0:y1, x0:x1] - center[4]) ** 2
            d = np.sqrt(d_color + spatial_weight * d_xy)
            better = bits[y0:y1, x0:x1] & (d < distance[y0:y1, x0:x1])
            distance[y0:y1, x0:x1][better] = d[better]
            labels[y0:y1, x0:x1][better] = index

        _assign_unreached(labels, bits, features, centers, spatial_weight)

        # centroid update from the full assignment pass
        flat = labels[bits]
        counts = np.bincount(flat, minlength=len(centers)).astype(np.float64)
        stacked = np.concatenate(
            [features[bits], yy[bits][:, None], xx[bits][:, None]], axis=1
        )
        sums = np.zeros_like(centers)
        np.add.at(sums, flat, stacked)
        occupied = counts > 0
        centers[occupied] = sums[occupied] / counts[occupied, None]

    result = enforce_connectivity(labels, bits, min_size=step * step / 16.0)
    logger.debug(f"SLIC: K={k}, seeds={len(seeds)}, regions={int(result.max()) + 1}")
    return LabelMap(labels=result)


def enforce_connectivity(labels: np.ndarray, mask: np.ndarray, min_size: float) -> np.ndarray:
    """
    Relabel so every region is one 4-connected component.

    Each label keeps its largest component when that component has at
    least min_size pixels; every other component is absorbed into its
    largest adjacent region. Components with no neighbours keep their
    own label. Output labels are contiguous in raster order of first pixel.
    """
    height, width = labels.shape
    components = np.full((height, width), BACKGROUND, dtype=np.int64)
    sizes: List[int] = []
    first_pixel: List[int] = []
    owner: List[int] = []

    for value in np.unique(labels[mask]):
        comp, count = ndimage.label((labels == value) & mask, structure=FOUR_CONNECTED)
        for c in range(1, count + 1):
            where = comp == c
            components[where] = len(sizes)
            sizes.append(int(where.sum()))
            first_pixel.append(int(np.flatnonzero(where.ravel())[0]))
            owner.append(int(value))

    n = len(sizes)
    parent = list(range(n))
    size = list(sizes)

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    members: List[List[int]] = [[i] for i in range(n)]
    neighbours: List[set] = [set() for _ in range(n)]
    for a, b in ((components[:, :-1], components[:, 1:]), (components[:-1, :], components[1:, :])):
        pairs = np.stack([a.ravel(), b.ravel()], axis=1)
        pairs = pairs[(pairs[:, 0] >= 0) & (pairs[:, 1] >= 0) & (pairs[:, 0] != pairs[:, 1])]
        for p, q in np.unique(pairs, axis=0):
            neighbours[int(p)].add(int(q))
            neighbours[int(q)].add(int(p))

    largest: Dict[int, int] = {}
    for c in range(n):
        best = largest.get(owner[c])
        if best is None or sizes[c] > sizes[best]:
            largest[owner[c]] = c
    keepers = {c for c in largest.values() if sizes[c] >= min_size}
    fragments = sorted((c for c in range(n) if c not in keepers), key=lambda c: (sizes[c], first_pixel[c]))

    for c in fragments:
        root = find(c)
        candidates = {find(q) for member in members[root] for q in neighbours[member]}
        candidates.discard(root)
        if not candidates:
            continue
        target = min(candidates, key=lambda r: (-size[r], r))
        parent[root] = target
        size[target] += size[root]
        members[target].extend(members[root])

    roots = np.array([find(c) for c in range(n)], dtype=np.int64)
    root_first: Dict[int, int] = {}
    for c in range(n):
        r = int(roots[c])
        root_first[r] = min(root_first.get(r, first_pixel[c]), first_pixel[c])
    order = sorted(root_first, key=lambda r: root_first[r])
    relabel = {r: i for i, r in enumerate(order)}
    lookup = np.array([relabel[int(r)] for r in roots], dtype=np.int64)

    out = np.full((height, width), BACKGROUND, dtype=np.int64)
    inside = components >= 0
    out[inside] = lookup[components[inside]]
    return out


def upsample_labels(labels: LabelMap, factor: int, shape: Tuple[int, int]) -> LabelMap:
    """Nearest-neighbour replication to analysis scale, cropped to shape"""
    if factor < 1:
        raise InvalidArgumentError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return LabelMap(labels=labels.labels[: shape[0], : shape[1]].copy())
    big = np.repeat(np.repeat(labels.labels, factor, axis=0), factor, axis=1)
    if big.shape[0] < shape[0] or big.shape[1] < shape[1]:
        raise InvalidArgumentError(f"Upsampled labels {big.shape} smaller than target {shape}")
    return LabelMap(labels=big[: shape[0], : shape[1]].copy())
