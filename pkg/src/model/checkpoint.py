"""
Model Checkpoints: versioned binary layout

    b"TGCK" | uint32 version | uint32 manifest length | manifest (UTF-8 JSON)
    | float32 little-endian tensor data in manifest order

The manifest holds the architecture, tensor names/shapes/offsets, the
active feature names, the standardization statistics and the history.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
import json
import logging
import struct

import numpy as np
import torch

from src.core.errors import FileFormatError
from src.features.stats import DatasetStats
from src.model.gat import DTYPE, GatModel, ModelConfig
from src.model.training import TrainHistory

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"TGCK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: GatModel
    feature_names: List[str]
    stats: Optional[DatasetStats] = None
    history: TrainHistory = field(default_factory=TrainHistory)
    task: str = "stage"
    meta: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path: str, checkpoint: Checkpoint):
    tensors = []
    blobs = []
    offset = 0
    for name, param in checkpoint.model.state_dict().items():
        data = param.detach().cpu().numpy().astype("<f4")
        tensors.append({"name": name, "shape": list(data.shape), "offset": offset, "count": int(data.size)})
        blobs.append(data.tobytes())
        offset += data.nbytes

    manifest = {
        "model": checkpoint.model.config.to_dict(),
        "tensors": tensors,
        "feature_names": list(checkpoint.feature_names),
        "stats": None if checkpoint.stats is None else checkpoint.stats.to_json_dict(),
        "history": checkpoint.history.to_json_list(),
        "task": checkpoint.task,
        "meta": checkpoint.meta,
    }
    encoded = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<II", FORMAT_VERSION, len(encoded)))
        handle.write(encoded)
        for blob in blobs:
            handle.write(blob)
    logger.debug(f"Checkpoint written to {path} ({len(tensors)} tensors)")


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as e:
        raise FileFormatError(f"Cannot read checkpoint {path}: {e}")

    if raw[:4] != CHECKPOINT_MAGIC or len(raw) < 12:
        raise FileFormatError(f"{path} is not a checkpoint file")
    version, length = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"Unsupported checkpoint version {version}")
    try:
        manifest = json.loads(raw[12:12 + length].decode("utf-8"))
        model = GatModel(ModelConfig(**manifest["model"]))
        body = raw[12 + length:]
        state = {}
        for entry in manifest["tensors"]:
            end = entry["offset"] + 4 * entry["count"]
            if end > len(body):
                raise FileFormatError(f"{path}: tensor {entry['name']} runs past end of file")
            values = np.frombuffer(body, dtype="<f4", count=entry["count"], offset=entry["offset"])
            state[entry["name"]] = torch.tensor(values.reshape(entry["shape"]).astype(np.float64), dtype=DTYPE)
        model.load_state_dict(state)
        stats = None if manifest.get("stats") is None else DatasetStats.from_json_dict(manifest["stats"])
        return Checkpoint(
            model=model,
            feature_names=list(manifest["feature_names"]),
            stats=stats,
            history=TrainHistory.from_json_list(manifest.get("history", [])),
            task=manifest.get("task", "stage"),
            meta=manifest.get("meta", {}),
        )
    except (KeyError, TypeError, ValueError, RuntimeError, UnicodeDecodeError) as e:
        raise FileFormatError(f"Malformed checkpoint {path}: {e}")
