"""
Stage Cache: content-addressed storage of per-slide stage outputs

Keys are sha256(stage name, input digests, params digest). Payloads are
.npz (arrays) or .json; a corrupt entry is treated as a miss and later
overwritten.
"""

from typing import Any, Dict, Optional, Sequence
import hashlib
import json
import logging
import os
import zipfile

import numpy as np

logger = logging.getLogger(__name__)


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_file(path: str) -> str:
    hasher = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


def digest_json(value: Any) -> str:
    return digest_bytes(json.dumps(value, sort_keys=True, default=str).encode())


def digest_array(array: np.ndarray) -> str:
    array = np.ascontiguousarray(array)
    return digest_bytes(f"{array.dtype.str}{array.shape}".encode() + array.tobytes())


def stage_key(stage: str, inputs: Sequence[str], params: str) -> str:
    return digest_json({"stage": stage, "inputs": list(inputs), "params": params})


class StageCache:
    """Directory of cached stage outputs, sharded by key prefix"""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)

    def _path(self, key: str, suffix: str) -> str:
        return os.path.join(self.root, key[:2], f"{key}{suffix}")

    def _write(self, path: str, writer):
        os.makedirs(os.path.dirname(path), exist_ok=True)
        partial = f"{path}.partial"
        with open(partial, "wb") as handle:
            writer(handle)
        os.replace(partial, path)

    def get_arrays(self, key: str) -> Optional[Dict[str, np.ndarray]]:
        path = self._path(key, ".npz")
        if not os.path.exists(path):
            return None
        try:
            with np.load(path, allow_pickle=False) as data:
                return {name: data[name] for name in data.files}
        except (OSError, ValueError, zipfile.BadZipFile) as e:
            logger.warning(f"Corrupt cache entry {path} ignored: {e}")
            return None

    def put_arrays(self, key: str, arrays: Dict[str, np.ndarray]):
        self._write(self._path(key, ".npz"), lambda handle: np.savez(handle, **arrays))

    def get_json(self, key: str) -> Optional[Any]:
        path = self._path(key, ".json")
        if not os.path.exists(path):
            return None
        try:
            with open(path, "r", encoding="utf-8") as handle:
                return json.load(handle)
        except (OSError, ValueError) as e:
            logger.warning(f"Corrupt cache entry {path} ignored: {e}")
            return None

    def put_json(self, key: str, value: Any):
        encoded = json.dumps(value, sort_keys=True).encode("utf-8")
        self._write(self._path(key, ".json"), lambda handle: handle.write(encoded))
