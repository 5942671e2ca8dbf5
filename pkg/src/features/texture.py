"""
Texture Features: radiomics-style intensity and texture descriptors

93 values per region, in catalog order:
- firstorder (18) on raw gray values
- glcm (24), symmetric, distance 1, averaged over 0/45/90/135 degrees
- glrlm (16), averaged over the same four directions
- glszm (16), 8-connected zones
- gldm (14), alpha = 0, 8-neighbourhood
- ngtdm (5), 8-neighbourhood

Matrix features use gray levels 1..Ng (quantized level + 1). Optional
uniform LBP histogram (P=8, R=1, 10 bins) when enabled.
"""

from typing import Dict, List, Sequence, Tuple
import logging

import numpy as np
from scipy import ndimage
from skimage.feature import graycomatrix, local_binary_pattern

from src.core.errors import InvalidArgumentError
from src.imaging.raster import quantize

logger = logging.getLogger(__name__)

EPS = 2.2e-16
GLCM_ANGLES = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
# (row, col) steps matching GLCM_ANGLES
DIRECTIONS = ((0, 1), (1, 1), (1, 0), (1, -1))
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
NEIGHBOUR_SHIFTS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]

FIRSTORDER_NAMES = [
    "10Percentile", "90Percentile", "Energy", "Entropy", "InterquartileRange", "Kurtosis",
    "Maximum", "MeanAbsoluteDeviation", "Mean", "Median", "Minimum", "Range",
    "RobustMeanAbsoluteDeviation", "RootMeanSquared", "Skewness", "TotalEnergy",
    "Uniformity", "Variance",
]
GLCM_NAMES = [
    "Autocorrelation", "ClusterProminence", "ClusterShade", "ClusterTendency", "Contrast",
    "Correlation", "DifferenceAverage", "DifferenceEntropy", "DifferenceVariance", "Id", "Idm",
    "Idmn", "Idn", "Imc1", "Imc2", "InverseVariance", "JointAverage", "JointEnergy",
    "JointEntropy", "MCC", "MaximumProbability", "SumAverage", "SumEntropy", "SumSquares",
]
GLRLM_NAMES = [
    "GrayLevelNonUniformity", "GrayLevelNonUniformityNormalized", "GrayLevelVariance",
    "HighGrayLevelRunEmphasis", "LongRunEmphasis", "LongRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis", "LowGrayLevelRunEmphasis", "RunEntropy",
    "RunLengthNonUniformity", "RunLengthNonUniformityNormalized", "RunPercentage",
    "RunVariance", "ShortRunEmphasis", "ShortRunHighGrayLevelEmphasis",
    "ShortRunLowGrayLevelEmphasis",
]
GLSZM_NAMES = [
    "GrayLevelNonUniformity", "GrayLevelNonUniformityNormalized", "GrayLevelVariance",
    "HighGrayLevelZoneEmphasis", "LargeAreaEmphasis", "LargeAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis", "LowGrayLevelZoneEmphasis", "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized", "SmallAreaEmphasis", "SmallAreaHighGrayLevelEmphasis",
    "SmallAreaLowGrayLevelEmphasis", "ZoneEntropy", "ZonePercentage", "ZoneVariance",
]
GLDM_NAMES = [
    "DependenceEntropy", "DependenceNonUniformity", "DependenceNonUniformityNormalized",
    "DependenceVariance", "GrayLevelNonUniformity", "GrayLevelVariance", "HighGrayLevelEmphasis",
    "LargeDependenceEmphasis", "LargeDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis", "LowGrayLevelEmphasis", "SmallDependenceEmphasis",
    "SmallDependenceHighGrayLevelEmphasis", "SmallDependenceLowGrayLevelEmphasis",
]
NGTDM_NAMES = ["Busyness", "Coarseness", "Complexity", "Contrast", "Strength"]

TEXTURE_FAMILIES: List[Tuple[str, List[str]]] = [
    ("firstorder", FIRSTORDER_NAMES),
    ("glcm", GLCM_NAMES),
    ("glrlm", GLRLM_NAMES),
    ("glszm", GLSZM_NAMES),
    ("gldm", GLDM_NAMES),
    ("ngtdm", NGTDM_NAMES),
]
LBP_BINS = 10
LBP_NAMES = [f"lbp_uniform_{i}" for i in range(LBP_BINS)]


def texture_feature_names() -> List[str]:
    return [f"original_{family}_{name}" for family, names in TEXTURE_FAMILIES for name in names]


def _entropy(p: np.ndarray) -> float:
    return float(-(p * np.log2(p + EPS)).sum())


# First order

def firstorder_features(values: np.ndarray, quantized: np.ndarray, levels: int) -> Dict[str, float]:
    """Statistics of raw gray values; Entropy and Uniformity use the quantized histogram"""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    mean = x.mean()
    deviations = x - mean
    m2 = (deviations ** 2).mean()
    p10, p25, p75, p90 = np.percentile(x, [10, 25, 75, 90])

    robust = x[(x >= p10) & (x <= p90)]
    histogram = np.bincount(quantized, minlength=levels) / n
    energy = float((x ** 2).sum())

    return {
        "10Percentile": float(p10),
        "90Percentile": float(p90),
        "Energy": energy,
        "Entropy": _entropy(histogram[histogram > 0]),
        "InterquartileRange": float(p75 - p25),
        "Kurtosis": float((deviations ** 4).mean() / m2 ** 2) if m2 > 0 else 0.0,
        "Maximum": float(x.max()),
        "MeanAbsoluteDeviation": float(np.abs(deviations).mean()),
        "Mean": float(mean),
        "Median": float(np.median(x)),
        "Minimum": float(x.min()),
        "Range": float(x.max() - x.min()),
        "RobustMeanAbsoluteDeviation": float(np.abs(robust - robust.mean()).mean()),
        "RootMeanSquared": float(np.sqrt(energy / n)),
        "Skewness": float((deviations ** 3).mean() / m2 ** 1.5) if m2 > 0 else 0.0,
        "TotalEnergy": energy,
        "Uniformity": float((histogram ** 2).sum()),
        "Variance": float(m2),
    }


# GLCM

def masked_glcm(
    quantized: np.ndarray,
    mask: np.ndarray,
    levels: int,
    distances: Sequence[int] = (1,),
    angles: Sequence[float] = GLCM_ANGLES,
) -> np.ndarray:
    """
    Symmetric co-occurrence counts restricted to a region.

    Pixels outside the mask are mapped to an extra level 0 which is
    dropped afterwards, so only pairs with both pixels inside count.

    Returns:
        Counts of shape (levels, levels, len(distances), len(angles))
    """
    shifted = np.where(mask, quantized + 1, 0)
    dtype = np.uint8 if levels + 1 <= 256 else np.uint16
    counts = graycomatrix(
        shifted.astype(dtype),
        distances=list(distances),
        angles=list(angles),
        levels=levels + 1,
        symmetric=True,
        normed=False,
    )
    return counts[1:, 1:].astype(np.float64)


def glcm_angle_features(counts: np.ndarray) -> Dict[str, float]:
    """All GLCM features of one non-empty (levels x levels) count matrix"""
    ng = counts.shape[0]
    p = counts / counts.sum()
    i, j = np.meshgrid(np.arange(1, ng + 1), np.arange(1, ng + 1), indexing="ij")
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    levels = np.arange(1, ng + 1)
    mu_x = float((levels * px).sum())
    mu_y = float((levels * py).sum())
    sigma_x = np.sqrt(((levels - mu_x) ** 2 * px).sum())
    sigma_y = np.sqrt(((levels - mu_y) ** 2 * py).sum())

    k_sum = np.arange(2, 2 * ng + 1)
    p_sum = np.bincount((i + j).ravel() - 2, weights=p.ravel(), minlength=2 * ng - 1)
    k_diff = np.arange(ng)
    p_diff = np.bincount(np.abs(i - j).ravel(), weights=p.ravel(), minlength=ng)

    hx = _entropy(px)
    hy = _entropy(py)
    hxy = _entropy(p)
    outer = np.outer(px, py)
    hxy1 = float(-(p * np.log2(outer + EPS)).sum())
    hxy2 = _entropy(outer)

    autocorrelation = float((p * i * j).sum())
    centred = i + j - mu_x - mu_y
    difference_average = float((k_diff * p_diff).sum())
    max_h = max(hx, hy)

    return {
        "Autocorrelation": autocorrelation,
        "ClusterProminence": float((centred ** 4 * p).sum()),
        "ClusterShade": float((centred ** 3 * p).sum()),
        "ClusterTendency": float((centred ** 2 * p).sum()),
        "Contrast": float(((i - j) ** 2 * p).sum()),
        "Correlation": 1.0 if sigma_x * sigma_y == 0 else float((autocorrelation - mu_x * mu_y) / (sigma_x * sigma_y)),
        "DifferenceAverage": difference_average,
        "DifferenceEntropy": _entropy(p_diff),
        "DifferenceVariance": float(((k_diff - difference_average) ** 2 * p_diff).sum()),
        "Id": float((p_diff / (1 + k_diff)).sum()),
        "Idm": float((p_diff / (1 + k_diff ** 2)).sum()),
        "Idmn": float((p_diff / (1 + k_diff ** 2 / ng ** 2)).sum()),
        "Idn": float((p_diff / (1 + k_diff / ng)).sum()),
        "Imc1": 0.0 if max_h == 0 else float((hxy - hxy1) / max_h),
        "Imc2": float(np.sqrt(max(0.0, 1 - np.exp(-2 * (hxy2 - hxy))))),
        "InverseVariance": float((p_diff[1:] / k_diff[1:] ** 2).sum()),
        "JointAverage": mu_x,
        "JointEnergy": float((p ** 2).sum()),
        "JointEntropy": hxy,
        "MCC": _mcc(p, px),
        "MaximumProbability": float(p.max()),
        "SumAverage": float((k_sum * p_sum).sum()),
        "SumEntropy": _entropy(p_sum),
        "SumSquares": float(((i - mu_x) ** 2 * p).sum()),
    }


def _mcc(p: np.ndarray, px: np.ndarray) -> float:
    present = px > 0
    if present.sum() < 2:
        return 1.0
    sub = p[np.ix_(present, present)]
    root = np.sqrt(px[present])
    a = sub / np.outer(root, root)
    eigenvalues = np.sort(np.linalg.eigvalsh(a @ a.T))[::-1]
    return float(np.sqrt(max(0.0, min(1.0, eigenvalues[1]))))


def glcm_features(quantized: np.ndarray, mask: np.ndarray, levels: int) -> Dict[str, float]:
    counts = masked_glcm(quantized, mask, levels)
    per_angle = [glcm_angle_features(counts[:, :, 0, a]) for a in range(counts.shape[3]) if counts[:, :, 0, a].sum() > 0]
    if not per_angle:
        return {name: 0.0 for name in GLCM_NAMES}
    return {name: float(np.mean([f[name] for f in per_angle])) for name in GLCM_NAMES}


# Run-length, size-zone and dependence matrices share one sparse form:
# (gray level i, length/size/dependence j, count) triples.

def _emphasis(i: np.ndarray, j: np.ndarray, c: np.ndarray, total: float) -> Dict[str, float]:
    p = c / total
    gray_marginal = np.bincount(i, weights=c)
    size_marginal = np.bincount(j, weights=c)
    mu_i = float((p * i).sum())
    mu_j = float((p * j).sum())
    i2 = i.astype(np.float64) ** 2
    j2 = j.astype(np.float64) ** 2
    return {
        "gln": float((gray_marginal ** 2).sum() / total),
        "glnn": float((gray_marginal ** 2).sum() / total ** 2),
        "sn": float((size_marginal ** 2).sum() / total),
        "snn": float((size_marginal ** 2).sum() / total ** 2),
        "glv": float((p * (i - mu_i) ** 2).sum()),
        "sv": float((p * (j - mu_j) ** 2).sum()),
        "entropy": _entropy(p),
        "small": float((c / j2).sum() / total),
        "large": float((c * j2).sum() / total),
        "low": float((c / i2).sum() / total),
        "high": float((c * i2).sum() / total),
        "small_low": float((c / (i2 * j2)).sum() / total),
        "small_high": float((c * i2 / j2).sum() / total),
        "large_low": float((c * j2 / i2).sum() / total),
        "large_high": float((c * i2 * j2).sum() / total),
    }


def _triples(i: List[int], j: List[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs, counts = np.unique(np.stack([np.asarray(i), np.asarray(j)], axis=1), axis=0, return_counts=True)
    return pairs[:, 0].astype(np.int64), pairs[:, 1].astype(np.int64), counts.astype(np.float64)


def _line_runs(line: np.ndarray, levels_out: List[int], lengths_out: List[int]):
    if line.size == 0:
        return
    starts = np.flatnonzero(np.r_[True, line[1:] != line[:-1]])
    lengths = np.diff(np.r_[starts, line.size])
    values = line[starts]
    keep = values > 0
    levels_out.extend(values[keep].tolist())
    lengths_out.extend(lengths[keep].tolist())


def _direction_lines(grid: np.ndarray, direction: Tuple[int, int]) -> List[np.ndarray]:
    height, width = grid.shape
    if direction == (0, 1):
        return list(grid)
    if direction == (1, 0):
        return list(grid.T)
    source = grid if direction == (1, 1) else np.fliplr(grid)
    return [np.diagonal(source, offset=k) for k in range(-(height - 1), width)]


def glrlm_features(quantized: np.ndarray, mask: np.ndarray) -> Dict[str, float]:
    grid = np.where(mask, quantized + 1, 0)
    n_pixels = int(mask.sum())
    per_direction = []
    for direction in DIRECTIONS:
        levels: List[int] = []
        lengths: List[int] = []
        for line in _direction_lines(grid, direction):
            _line_runs(line, levels, lengths)
        i, j, c = _triples(levels, lengths)
        n_runs = float(c.sum())
        e = _emphasis(i, j, c, n_runs)
        per_direction.append({
            "GrayLevelNonUniformity": e["gln"],
            "GrayLevelNonUniformityNormalized": e["glnn"],
            "GrayLevelVariance": e["glv"],
            "HighGrayLevelRunEmphasis": e["high"],
            "LongRunEmphasis": e["large"],
            "LongRunHighGrayLevelEmphasis": e["large_high"],
            "LongRunLowGrayLevelEmphasis": e["large_low"],
            "LowGrayLevelRunEmphasis": e["low"],
            "RunEntropy": e["entropy"],
            "RunLengthNonUniformity": e["sn"],
            "RunLengthNonUniformityNormalized": e["snn"],
            "RunPercentage": n_runs / n_pixels,
            "RunVariance": e["sv"],
            "ShortRunEmphasis": e["small"],
            "ShortRunHighGrayLevelEmphasis": e["small_high"],
            "ShortRunLowGrayLevelEmphasis": e["small_low"],
        })
    return {name: float(np.mean([f[name] for f in per_direction])) for name in GLRLM_NAMES}


def glszm_features(quantized: np.ndarray, mask: np.ndarray) -> Dict[str, float]:
    grid = np.where(mask, quantized + 1, 0)
    levels: List[int] = []
    sizes: List[int] = []
    for level in np.unique(grid[mask]):
        zones, count = ndimage.label(grid == level, structure=EIGHT_CONNECTED)
        zone_sizes = np.bincount(zones.ravel())[1:]
        levels.extend([int(level)] * count)
        sizes.extend(zone_sizes.tolist())
    i, j, c = _triples(levels, sizes)
    n_zones = float(c.sum())
    e = _emphasis(i, j, c, n_zones)
    return {
        "GrayLevelNonUniformity": e["gln"],
        "GrayLevelNonUniformityNormalized": e["glnn"],
        "GrayLevelVariance": e["glv"],
        "HighGrayLevelZoneEmphasis": e["high"],
        "LargeAreaEmphasis": e["large"],
        "LargeAreaHighGrayLevelEmphasis": e["large_high"],
        "LargeAreaLowGrayLevelEmphasis": e["large_low"],
        "LowGrayLevelZoneEmphasis": e["low"],
        "SizeZoneNonUniformity": e["sn"],
        "SizeZoneNonUniformityNormalized": e["snn"],
        "SmallAreaEmphasis": e["small"],
        "SmallAreaHighGrayLevelEmphasis": e["small_high"],
        "SmallAreaLowGrayLevelEmphasis": e["small_low"],
        "ZoneEntropy": e["entropy"],
        "ZonePercentage": n_zones / int(mask.sum()),
        "ZoneVariance": e["sv"],
    }


def _neighbour_stack(grid: np.ndarray) -> np.ndarray:
    """(8, H, W) neighbour levels, 0 where the neighbour is outside the region or image"""
    padded = np.pad(grid, 1)
    height, width = grid.shape
    return np.stack([padded[1 + dr:1 + dr + height, 1 + dc:1 + dc + width] for dr, dc in NEIGHBOUR_SHIFTS])


def gldm_features(quantized: np.ndarray, mask: np.ndarray) -> Dict[str, float]:
    grid = np.where(mask, quantized + 1, 0)
    neighbours = _neighbour_stack(grid)
    dependence = 1 + (neighbours == grid[None]).sum(axis=0)
    i, j, c = _triples(grid[mask].tolist(), dependence[mask].tolist())
    e = _emphasis(i, j, c, float(c.sum()))
    return {
        "DependenceEntropy": e["entropy"],
        "DependenceNonUniformity": e["sn"],
        "DependenceNonUniformityNormalized": e["snn"],
        "DependenceVariance": e["sv"],
        "GrayLevelNonUniformity": e["gln"],
        "GrayLevelVariance": e["glv"],
        "HighGrayLevelEmphasis": e["high"],
        "LargeDependenceEmphasis": e["large"],
        "LargeDependenceHighGrayLevelEmphasis": e["large_high"],
        "LargeDependenceLowGrayLevelEmphasis": e["large_low"],
        "LowGrayLevelEmphasis": e["low"],
        "SmallDependenceEmphasis": e["small"],
        "SmallDependenceHighGrayLevelEmphasis": e["small_high"],
        "SmallDependenceLowGrayLevelEmphasis": e["small_low"],
    }


def ngtdm_features(quantized: np.ndarray, mask: np.ndarray, levels: int) -> Dict[str, float]:
    grid = np.where(mask, quantized + 1, 0)
    neighbours = _neighbour_stack(grid)
    valid = neighbours > 0
    n_valid = valid.sum(axis=0)
    counted = mask & (n_valid > 0)
    if not counted.any():
        return {"Busyness": 0.0, "Coarseness": 1e6, "Complexity": 0.0, "Contrast": 0.0, "Strength": 0.0}

    neighbour_mean = np.where(valid, neighbours, 0).sum(axis=0)[counted] / n_valid[counted]
    level_of = grid[counted]
    s = np.bincount(level_of, weights=np.abs(level_of - neighbour_mean), minlength=levels + 1)[1:]
    n = np.bincount(level_of, minlength=levels + 1)[1:].astype(np.float64)
    n_vp = n.sum()
    p = n / n_vp

    present = p > 0
    gray = np.arange(1, levels + 1)[present]
    p_i = p[present]
    s_i = s[present]
    n_gp = int(present.sum())
    diff = gray[:, None] - gray[None, :]

    weighted = float((p_i * s_i).sum())
    s_total = float(s_i.sum())
    busy_den = float(np.abs((gray * p_i)[:, None] - (gray * p_i)[None, :]).sum())
    pair_p = p_i[:, None] + p_i[None, :]

    return {
        "Busyness": weighted / busy_den if busy_den > 0 else 0.0,
        "Coarseness": 1.0 / weighted if weighted > 0 else 1e6,
        "Complexity": float((np.abs(diff) * ((p_i * s_i)[:, None] + (p_i * s_i)[None, :]) / pair_p).sum() / n_vp),
        "Contrast": (
            float((np.outer(p_i, p_i) * diff ** 2).sum() / (n_gp * (n_gp - 1)) * s_total / n_vp)
            if n_gp > 1 else 0.0
        ),
        "Strength": float((pair_p * diff ** 2).sum() / s_total) if s_total > 0 else 0.0,
    }


def extract_texture(gray: np.ndarray, mask: np.ndarray, levels: int = 32) -> np.ndarray:
    """
    Texture vector of one region.

    Args:
        gray: Raw gray plane (typically the region's bounding box)
        mask: Region pixels within gray
        levels: Ng used for every matrix family

    Returns:
        93 values in catalog order
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InvalidArgumentError("Cannot extract texture from an empty region")
    quantized = quantize(gray, levels, mask).data

    families = [
        firstorder_features(np.asarray(gray, dtype=np.float64)[mask], quantized[mask], levels),
        glcm_features(quantized, mask, levels),
        glrlm_features(quantized, mask),
        glszm_features(quantized, mask),
        gldm_features(quantized, mask),
        ngtdm_features(quantized, mask, levels),
    ]
    values = [family[name] for family, (_, names) in zip(families, TEXTURE_FAMILIES) for name in names]
    return np.array(values, dtype=np.float64)


def extract_lbp(gray: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Normalized histogram of uniform LBP codes (P=8, R=1) over the region"""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InvalidArgumentError("Cannot extract LBP from an empty region")
    image = np.clip(np.floor(np.asarray(gray, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)
    codes = local_binary_pattern(image, P=8, R=1, method="uniform")
    histogram = np.bincount(codes[mask].astype(np.int64), minlength=LBP_BINS)[:LBP_BINS]
    return histogram / mask.sum()
