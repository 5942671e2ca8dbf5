"""
Feature Catalog: the ordered, named node-feature universe

The catalog is the contract between extraction, pruning, training and
explanation. Order is fixed (texture, morphology, nuclear); pruning only
flips active flags, never reorders.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional
import json
import logging

import numpy as np

from src.core.errors import FileFormatError, InvalidArgumentError
from src.features.morphology import MORPH_NAMES
from src.features.nuclear import NUCLEAR_GROUPS, NUCLEAR_STATS
from src.features.texture import LBP_NAMES, TEXTURE_FAMILIES

logger = logging.getLogger(__name__)

TEXTURE_SIZE = 93
MORPH_SIZE = 18
NUCLEAR_SIZE = 77


class FeatureGroup(Enum):
    """Top-level feature groups"""
    TEX = "tex"
    MORPH = "morph"
    NUC = "nuc"


@dataclass
class FeatureEntry:
    name: str
    group: FeatureGroup
    family: str
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "group": self.group.value, "family": self.family, "params": self.params}


@dataclass
class FeatureCatalog:
    """Ordered feature entries plus active flags set by pruning"""
    entries: List[FeatureEntry]
    active: List[bool] = field(default_factory=list)
    xi: Optional[float] = None

    def __post_init__(self):
        if not self.active:
            self.active = [True] * len(self.entries)
        if len(self.active) != len(self.entries):
            raise InvalidArgumentError("Active flags must align with catalog entries")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise InvalidArgumentError("Feature names must be unique")

    @classmethod
    def full(cls, include_lbp: bool = False, levels: int = 32) -> "FeatureCatalog":
        """
        Complete catalog: 93 texture + 18 morphology + 77 nuclear entries,
        with 10 LBP entries appended to the texture group when requested.
        """
        entries: List[FeatureEntry] = []
        for family, names in TEXTURE_FAMILIES:
            params: Dict[str, Any] = {} if family == "firstorder" else {"levels": levels}
            if family == "glcm":
                params.update({"distance": 1, "angles": [0, 45, 90, 135], "symmetric": True})
            elif family == "glrlm":
                params.update({"angles": [0, 45, 90, 135]})
            elif family in ("glszm", "gldm", "ngtdm"):
                params.update({"connectivity": 8})
                if family == "gldm":
                    params["alpha"] = 0
            for name in names:
                entries.append(FeatureEntry(f"original_{family}_{name}", FeatureGroup.TEX, family, dict(params)))
        if include_lbp:
            for name in LBP_NAMES:
                entries.append(FeatureEntry(name, FeatureGroup.TEX, "lbp", {"P": 8, "R": 1, "method": "uniform"}))
        for name in MORPH_NAMES:
            entries.append(FeatureEntry(name, FeatureGroup.MORPH, "color"))
        for group in NUCLEAR_GROUPS:
            for stat in NUCLEAR_STATS:
                entries.append(FeatureEntry(f"{group}_{stat}", FeatureGroup.NUC, group, {"stat": stat}))
        return cls(entries=entries)

    @property
    def size(self) -> int:
        return len(self.entries)

    def names(self) -> List[str]:
        return [e.name for e in self.entries]

    def group_sizes(self) -> Dict[str, int]:
        sizes: Dict[str, int] = {g.value: 0 for g in FeatureGroup}
        for e in self.entries:
            sizes[e.group.value] += 1
        return sizes

    def active_indices(self) -> List[int]:
        return [i for i, flag in enumerate(self.active) if flag]

    def active_names(self) -> List[str]:
        return [self.entries[i].name for i in self.active_indices()]

    def with_active(self, active: List[bool], xi: Optional[float] = None) -> "FeatureCatalog":
        return FeatureCatalog(entries=self.entries, active=list(active), xi=xi)

    def select(self, matrix: np.ndarray) -> np.ndarray:
        """Columns of a full-catalog matrix that are active"""
        matrix = np.asarray(matrix)
        if matrix.shape[-1] != self.size:
            raise InvalidArgumentError(f"Matrix has {matrix.shape[-1]} columns, catalog has {self.size}")
        return matrix[..., self.active_indices()]

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "xi": self.xi,
            "entries": [{**e.to_dict(), "active": flag} for e, flag in zip(self.entries, self.active)],
        }

    @classmethod
    def from_json_dict(cls, data: Dict[str, Any]) -> "FeatureCatalog":
        try:
            entries = [
                FeatureEntry(e["name"], FeatureGroup(e["group"]), e["family"], dict(e.get("params", {})))
                for e in data["entries"]
            ]
            active = [bool(e["active"]) for e in data["entries"]]
            xi = data.get("xi")
            return cls(entries=entries, active=active, xi=None if xi is None else float(xi))
        except (KeyError, TypeError, ValueError) as e:
            raise FileFormatError(f"Malformed catalog: {e}")

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_dict(), handle, indent=1)
            handle.write("\n")

    @classmethod
    def load(cls, path: str) -> "FeatureCatalog":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                return cls.from_json_dict(json.load(handle))
        except (OSError, json.JSONDecodeError) as e:
            raise FileFormatError(f"Cannot read catalog {path}: {e}")
