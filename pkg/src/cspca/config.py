"""Run configuration: a single YAML document carrying every stage's
parameters, with per-stage content hashes used to gate the pipeline.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .loocv import TrainConfig
from .model import ModelConfig
from .preprocess import PreprocessParams

_CLASS_POLICIES = ("predicted", "positive")
_MODEL_SOURCES = ("fold", "final")


@dataclass
class XaiParams:
    """Attention-map settings.

    layer_id: feature layer to tap (None = the classifier default, layer4).
    class_policy: "predicted" explains each patient's predicted class;
        "positive" always explains class 1.
    model_source: "fold" runs each patient through its own held-out fold
        model; "final" uses one model trained on the full cohort.
    """

    layer_id: str | None = None
    class_policy: str = "predicted"
    model_source: str = "fold"

    def __post_init__(self):
        if self.class_policy not in _CLASS_POLICIES:
            raise ConfigError(
                f"class_policy must be one of {_CLASS_POLICIES}, got {self.class_policy!r}"
            )
        if self.model_source not in _MODEL_SOURCES:
            raise ConfigError(
                f"model_source must be one of {_MODEL_SOURCES}, got {self.model_source!r}"
            )

    def to_dict(self) -> dict:
        return {
            "layer_id": self.layer_id,
            "class_policy": self.class_policy,
            "model_source": self.model_source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "XaiParams":
        return cls(
            layer_id=d.get("layer_id"),
            class_policy=d.get("class_policy", "predicted"),
            model_source=d.get("model_source", "fold"),
        )


@dataclass
class RunConfig:
    dataset_root: Path | None = None
    output_dir: Path = Path("run")
    seed: int = 0
    preprocess: PreprocessParams = field(default_factory=PreprocessParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    xai: XaiParams = field(default_factory=XaiParams)

    def __post_init__(self):
        if self.dataset_root is not None:
            self.dataset_root = Path(self.dataset_root)
        self.output_dir = Path(self.output_dir)

    def to_dict(self) -> dict:
        return {
            "dataset_root": str(self.dataset_root) if self.dataset_root else None,
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "preprocess": self.preprocess.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "xai": self.xai.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"dataset_root", "output_dir", "seed", "preprocess", "model", "train", "xai"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        seed = int(d.get("seed", 0))
        model_d = dict(d.get("model") or {})
        train_d = dict(d.get("train") or {})
        model_d.setdefault("seed", seed)  # sub-seeds inherit the run seed
        train_d.setdefault("seed", seed)
        root = d.get("dataset_root")
        return cls(
            dataset_root=Path(root) if root else None,
            output_dir=Path(d.get("output_dir", "run")),
            seed=seed,
            preprocess=PreprocessParams.from_dict(d.get("preprocess") or {}),
            model=ModelConfig.from_dict(model_d),
            train=TrainConfig.from_dict(train_d),
            xai=XaiParams.from_dict(d.get("xai") or {}),
        )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping, got {type(raw).__name__}")
    return RunConfig.from_dict(raw)


def save_config(config: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False))
    return path


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def config_hash(value) -> str:
    """sha256 over the canonical JSON form of a config (or any sub-dict)."""
    if isinstance(value, RunConfig):
        value = value.to_dict()
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


# Which config sections each stage's artifacts depend on. A stage's recorded
# hash must match the current config over exactly these sections.
STAGE_SECTIONS = {
    "ingest": ("dataset_root",),
    "preprocess": ("dataset_root", "preprocess"),
    "train": ("dataset_root", "preprocess", "model", "train"),
    "explain": ("dataset_root", "preprocess", "model", "train", "xai"),
    "report": ("dataset_root", "preprocess", "model", "train", "xai"),
}

STAGE_ORDER = ("ingest", "preprocess", "train", "explain", "report")


def stage_hash(config: RunConfig, stage: str) -> str:
    if stage not in STAGE_SECTIONS:
        raise ConfigError(f"unknown stage: {stage}")
    d = config.to_dict()
    return config_hash({k: d[k] for k in STAGE_SECTIONS[stage]})
