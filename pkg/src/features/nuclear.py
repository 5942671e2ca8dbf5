"""
Nuclear Features: count, area and density statistics per nucleus type

Seven groups (all + six cell types) x eleven statistics = 77 values.
A nucleus belongs to a region when strictly more than half of its
pixels lie inside it.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence
import logging

import numpy as np

from src.core.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

# index = type code stored in the nuclei table
NUCLEUS_TYPES = ("nolabe", "neopla", "inflam", "connec", "necros", "no-neo")
NUCLEAR_GROUPS = ("all",) + NUCLEUS_TYPES
NUCLEAR_STATS = (
    "count", "mean_area", "std_area",
    "5p_area", "25p_area", "50p_area", "75p_area", "95p_area",
    "min_area", "max_area", "density",
)
NUCLEAR_NAMES: List[str] = [f"{group}_{stat}" for group in NUCLEAR_GROUPS for stat in NUCLEAR_STATS]


@dataclass
class NucleiMap:
    """Instance label per pixel (0 = none) plus type code per instance"""
    instances: np.ndarray
    types: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        for instance_id, code in self.types.items():
            if code not in range(len(NUCLEUS_TYPES)):
                raise InvalidArgumentError(f"Nucleus {instance_id} has unknown type code {code}")

    def areas(self) -> Dict[int, int]:
        ids, counts = np.unique(self.instances[self.instances > 0], return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    @classmethod
    def empty(cls, shape) -> "NucleiMap":
        return cls(instances=np.zeros(shape, dtype=np.int64), types={})


def assign_nuclei(labels: np.ndarray, nuclei: NucleiMap) -> Dict[int, List[int]]:
    """
    Region id -> nuclei whose majority of pixels fall inside that region.

    Args:
        labels: Per-pixel region ids (negative = background)
        nuclei: Nuclei instance map of the same shape

    Returns:
        Mapping with only the regions that own at least one nucleus
    """
    instances = np.asarray(nuclei.instances)
    if instances.shape != labels.shape:
        raise InvalidArgumentError(f"Nuclei map {instances.shape} does not match labels {labels.shape}")
    covered = instances > 0
    if not covered.any():
        return {}

    areas = nuclei.areas()
    pairs, counts = np.unique(
        np.stack([instances[covered], labels[covered]], axis=1), axis=0, return_counts=True
    )
    owned: Dict[int, List[int]] = {}
    for (instance_id, region), count in zip(pairs, counts):
        if region < 0 or 2 * int(count) <= areas[int(instance_id)]:
            continue
        owned.setdefault(int(region), []).append(int(instance_id))
    return owned


def _area_stats(areas: np.ndarray, region_area: int) -> List[float]:
    if areas.size == 0:
        return [0.0] * len(NUCLEAR_STATS)
    percentiles = np.percentile(areas, [5, 25, 50, 75, 95])
    return [
        float(areas.size),
        float(areas.mean()),
        float(areas.std()),
        *[float(v) for v in percentiles],
        float(areas.min()),
        float(areas.max()),
        areas.size / region_area,
    ]


def nuclear_vector(instance_ids: Sequence[int], nuclei: NucleiMap, region_area: int) -> np.ndarray:
    """77 statistics for the given nuclei of a region of region_area pixels"""
    if region_area <= 0:
        raise InvalidArgumentError("Region area must be positive")
    areas = nuclei.areas()
    all_areas = np.array([areas[i] for i in instance_ids], dtype=np.float64)
    codes = np.array([nuclei.types.get(i, 0) for i in instance_ids], dtype=np.int64)

    values = _area_stats(all_areas, region_area)
    for code in range(len(NUCLEUS_TYPES)):
        values.extend(_area_stats(all_areas[codes == code], region_area))
    return np.array(values, dtype=np.float64)


def extract_nuclear(region_mask: np.ndarray, nuclei: NucleiMap) -> np.ndarray:
    """
    Nuclear statistics of one region.

    Args:
        region_mask: Boolean mask of the region, same shape as the nuclei map
        nuclei: Nuclei instances and types

    Returns:
        77 values in catalog order; zeros when the region owns no nucleus
    """
    region_mask = np.asarray(region_mask, dtype=bool)
    labels = np.where(region_mask, 0, -1)
    owned = assign_nuclei(labels, nuclei).get(0, [])
    area = int(region_mask.sum())
    if area == 0:
        return np.zeros(len(NUCLEAR_NAMES))
    return nuclear_vector(owned, nuclei, area)
