"""
Run Configuration: every tunable of the pipeline in one tree

Loaded from JSON, overridable by environment (.env) and CLI flags.
Unknown keys are rejected at every level so typos never silently fall
back to defaults.
"""

from dataclasses import dataclass, field, fields, asdict, is_dataclass
from typing import Any, Dict, Optional, Tuple
import hashlib
import json
import logging
import os

from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

TASKS = ("stage", "survival")
READOUTS = ("mean", "sum", "max")
OPTIMIZERS = ("adamw", "sgd")
CLASS_WEIGHT_MODES = ("none", "balanced")
COLOR_SPACES = ("lab", "rgb")


@dataclass
class TissueConfig:
    """Tissue masking parameters (segmentation resolution)"""
    close_radius: int = 4
    open_radius: int = 2
    min_component_area: int = 64
    downsample: int = 1  # analysis -> segmentation scale factor


@dataclass
class SuperpixelConfig:
    """SLIC and region-count targeting"""
    seg_mag: float = 0.625
    ref_mag: float = 32.0
    target_side: float = 300.0
    compactness: float = 10.0
    iterations: int = 10
    color_space: str = "lab"


@dataclass
class CoarsenConfig:
    """Embedding-guided merging"""
    tau: float = 0.9
    embeddings: str = "builtin"  # "builtin" or a directory of <slide_id>.bin files


@dataclass
class FeatureConfig:
    """Node feature extraction and pruning"""
    levels: int = 32
    xi: float = 0.99
    include_lbp: bool = False
    bright_cutoff: float = 200.0
    dark_cutoff: float = 50.0


@dataclass
class TrainConfig:
    """GAT architecture and optimisation settings"""
    lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 100
    batch_size: int = 8
    seed: int = 0
    hidden_dim: int = 64
    layers: int = 3
    heads: int = 4
    dropout: float = 0.2
    mlp_hidden: int = 64
    num_classes: int = 4
    class_weight: str = "none"
    readout: str = "mean"
    optimizer: str = "adamw"


@dataclass
class SearchConfig:
    """Random search over learning rate and weight decay"""
    trials: int = 25
    instances: int = 5
    lr_range: Tuple[float, float] = (1e-5, 1e-2)
    wd_range: Tuple[float, float] = (1e-6, 1e-2)


@dataclass
class ExplainConfig:
    """Integrated Gradients reports"""
    enabled: bool = True
    steps: int = 64
    top_k: int = 10
    alpha: float = 0.45


@dataclass
class RunConfig:
    """Complete, resolved configuration of a pipeline run"""
    seed: int = 0
    workers: int = 1
    out_root: str = "runs"
    task: str = "stage"
    tissue: TissueConfig = field(default_factory=TissueConfig)
    superpixel: SuperpixelConfig = field(default_factory=SuperpixelConfig)
    coarsen: CoarsenConfig = field(default_factory=CoarsenConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)

    def to_dict(self) -> Dict[str, Any]:
        """Plain JSON-compatible dictionary"""
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """Build from a dictionary, rejecting unknown keys"""
        config = _build(cls, data, path="")
        config.validate()
        return config

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form"""
        return hashlib.sha256(dump_config_text(self).encode()).hexdigest()

    def validate(self):
        """Raise ConfigError for illegal values"""
        checks = [
            (self.task in TASKS, f"task must be one of {TASKS}"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.tissue.close_radius >= 0, "tissue.close_radius must be >= 0"),
            (self.tissue.open_radius >= 0, "tissue.open_radius must be >= 0"),
            (self.tissue.min_component_area >= 0, "tissue.min_component_area must be >= 0"),
            (self.tissue.downsample >= 1, "tissue.downsample must be >= 1"),
            (self.superpixel.seg_mag > 0 and self.superpixel.ref_mag > 0, "magnifications must be positive"),
            (self.superpixel.target_side > 0, "superpixel.target_side must be positive"),
            (self.superpixel.compactness > 0, "superpixel.compactness must be positive"),
            (self.superpixel.iterations >= 1, "superpixel.iterations must be >= 1"),
            (self.superpixel.color_space in COLOR_SPACES, f"superpixel.color_space must be one of {COLOR_SPACES}"),
            (-1.0 <= self.coarsen.tau <= 1.0, "coarsen.tau must lie in [-1, 1]"),
            (self.features.levels >= 2, "features.levels must be >= 2"),
            (0.0 < self.features.xi <= 1.0, "features.xi must lie in (0, 1]"),
            (self.train.lr >= 0, "train.lr must be >= 0"),
            (self.train.epochs >= 1, "train.epochs must be >= 1"),
            (self.train.batch_size >= 1, "train.batch_size must be >= 1"),
            (self.train.layers >= 1 and self.train.heads >= 1, "train.layers and train.heads must be >= 1"),
            (0.0 <= self.train.dropout < 1.0, "train.dropout must lie in [0, 1)"),
            (self.train.num_classes >= 2, "train.num_classes must be >= 2"),
            (self.train.class_weight in CLASS_WEIGHT_MODES, f"train.class_weight must be one of {CLASS_WEIGHT_MODES}"),
            (self.train.readout in READOUTS, f"train.readout must be one of {READOUTS}"),
            (self.train.optimizer in OPTIMIZERS, f"train.optimizer must be one of {OPTIMIZERS}"),
            (self.search.trials >= 1 and self.search.instances >= 1, "search.trials and search.instances must be >= 1"),
            (0 < self.search.lr_range[0] <= self.search.lr_range[1], "search.lr_range must be positive and ordered"),
            (0 < self.search.wd_range[0] <= self.search.wd_range[1], "search.wd_range must be positive and ordered"),
            (self.explain.steps >= 1, "explain.steps must be >= 1"),
            (self.explain.top_k >= 1, "explain.top_k must be >= 1"),
            (0.0 <= self.explain.alpha <= 1.0, "explain.alpha must lie in [0, 1]"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"Expected an object at '{path or '<root>'}', got {type(data).__name__}")

    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"Unknown config keys at '{path or '<root>'}': {unknown}")

    defaults = cls()
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        default = getattr(defaults, name)
        key = f"{path}.{name}" if path else name
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, key)
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)) or len(value) != len(default):
                raise ConfigError(f"'{key}' must be a list of {len(default)} numbers")
            kwargs[name] = tuple(float(v) for v in value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"'{key}' must be true or false")
            kwargs[name] = value
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"'{key}' must be an integer")
            kwargs[name] = value
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"'{key}' must be a number")
            kwargs[name] = float(value)
        else:
            if not isinstance(value, str):
                raise ConfigError(f"'{key}' must be a string")
            kwargs[name] = value
    return cls(**kwargs)


def dump_config_text(config: RunConfig) -> str:
    """Canonical JSON text (sorted keys, two-space indent)"""
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def dump_config(config: RunConfig, path: str):
    """Write the config snapshot"""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dump_config_text(config))


def load_config(path: Optional[str] = None) -> RunConfig:
    """
    Load configuration with environment defaults applied.

    Args:
        path: JSON config file; None uses built-in defaults

    Returns:
        Validated RunConfig
    """
    data: Dict[str, Any] = {}
    env_defaults = {
        "out_root": os.getenv("TISSUEGRAPH_OUT"),
        "workers": os.getenv("TISSUEGRAPH_WORKERS"),
        "seed": os.getenv("TISSUEGRAPH_SEED"),
    }
    for key, raw in env_defaults.items():
        if raw is None:
            continue
        if key == "out_root":
            data[key] = raw
        else:
            try:
                data[key] = int(raw)
            except ValueError:
                raise ConfigError(f"Environment value for {key} is not an integer: {raw!r}")

    if path:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                file_data = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {path}: {e}")
        if not isinstance(file_data, dict):
            raise ConfigError(f"Config {path} must contain a JSON object")
        data.update(file_data)
        logger.info(f"Config loaded from {path}")

    return RunConfig.from_dict(data)
