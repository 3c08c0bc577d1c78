"""Classifier construction, transfer-weight loading, and inference.

The network predicts binary clinical significance from a composite volume;
predicted class 1 means clinically significant. Ties in the logits break
toward class 0 (never flag significance on a tie).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointError, GeometryError, NumericError, ParameterError
from .preprocess import CompositeVolume
from .resnet3d import BLOCK_COUNTS, ResNet3d

DEFAULT_FEATURE_LAYER = "layer4"


class Depth(str, Enum):
    RESNET34_3D = "RESNET34_3D"
    RESNET10_3D = "RESNET10_3D"


@dataclass
class ModelConfig:
    depth: Depth = Depth.RESNET34_3D
    in_channels: int = 1
    n_classes: int = 2
    init_checkpoint: Path | None = None
    seed: int = 0

    def __post_init__(self):
        self.depth = Depth(self.depth)
        if self.n_classes != 2:
            raise ParameterError(f"classifier is binary; n_classes must be 2, got {self.n_classes}")
        if self.in_channels < 1:
            raise ParameterError(f"in_channels must be >= 1, got {self.in_channels}")

    def to_dict(self) -> dict:
        return {
            "depth": self.depth.value,
            "in_channels": self.in_channels,
            "n_classes": self.n_classes,
            "init_checkpoint": str(self.init_checkpoint) if self.init_checkpoint else None,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        ckpt = d.get("init_checkpoint")
        return cls(
            depth=Depth(d.get("depth", Depth.RESNET34_3D.value)),
            in_channels=int(d.get("in_channels", 1)),
            n_classes=int(d.get("n_classes", 2)),
            init_checkpoint=Path(ckpt) if ckpt else None,
            seed=int(d.get("seed", 0)),
        )


@dataclass
class Prediction:
    logits: tuple[float, float]
    predicted_class: int
    probability_positive: float


@dataclass
class LoadReport:
    loaded: list[str] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)


@dataclass(eq=False)
class Classifier:
    net: ResNet3d
    config: ModelConfig
    feature_layer_id: str = DEFAULT_FEATURE_LAYER

    def named_parameters(self):
        return dict(self.net.named_parameters())

    def state_tensors(self) -> dict[str, torch.Tensor]:
        return dict(self.net.state_dict())

    def save(self, path) -> Path:
        return save_checkpoint(self.state_tensors(), path)

    def feature_module(self, layer_id: str | None = None):
        """The module whose activations feed attention maps (KeyError if the
        name does not resolve)."""
        return self.net.feature_module(layer_id or self.feature_layer_id)


def classify_logits(logit_neg: float, logit_pos: float) -> Prediction:
    """Argmax with tie toward class 0; numerically stable positive probability."""
    if not (math.isfinite(logit_neg) and math.isfinite(logit_pos)):
        raise NumericError(f"non-finite logits: ({logit_neg}, {logit_pos})")
    m = max(logit_neg, logit_pos)
    e0 = math.exp(logit_neg - m)
    e1 = math.exp(logit_pos - m)
    return Prediction(
        logits=(float(logit_neg), float(logit_pos)),
        predicted_class=1 if logit_pos > logit_neg else 0,
        probability_positive=e1 / (e0 + e1),
    )


def build_model(config: ModelConfig) -> Classifier:
    """Construct the network with seed-deterministic initialization, loading
    transfer weights when a checkpoint is configured."""
    torch.manual_seed(config.seed)
    net = ResNet3d(
        BLOCK_COUNTS[config.depth.value],
        in_channels=config.in_channels,
        n_classes=config.n_classes,
    )
    classifier = Classifier(net=net, config=config)
    if config.init_checkpoint is not None:
        _, report = load_pretrained(classifier, config.init_checkpoint)
        if not report.loaded:
            raise CheckpointError(
                f"incompatible checkpoint: no tensors in {config.init_checkpoint} "
                "match the architecture"
            )
    return classifier


def load_pretrained(classifier: Classifier, checkpoint) -> tuple[Classifier, LoadReport]:
    """Replace parameters whose name and shape match the archive.

    The classification head is re-initialized first, so a transfer checkpoint
    with a different head (e.g. a different class count) leaves a fresh
    2-class head in place; a compatible head still loads.
    """
    tensors = load_checkpoint(checkpoint)
    if not tensors:
        raise CheckpointError(f"incompatible checkpoint: {checkpoint} holds no tensors")

    classifier.net.fc.reset_parameters()
    report = LoadReport()
    state = classifier.net.state_dict()
    with torch.no_grad():
        for name, target in state.items():
            if name not in tensors:
                report.skipped.append((name, "absent from checkpoint"))
                continue
            value = tensors[name]
            if tuple(value.shape) != tuple(target.shape):
                report.skipped.append(
                    (name, f"shape {tuple(value.shape)} != {tuple(target.shape)}")
                )
                continue
            target.copy_(torch.from_numpy(value).to(target.dtype))
            report.loaded.append(name)
    if not report.loaded:
        raise CheckpointError(f"incompatible checkpoint: no tensors in {checkpoint} matched")
    return classifier, report


def _input_tensor(classifier: Classifier, composite) -> torch.Tensor:
    if isinstance(composite, CompositeVolume):
        arr = composite.model_array()
    else:
        arr = np.asarray(composite, dtype=np.float32)
    if arr.ndim != 4:
        raise GeometryError(f"classifier input must be (C, D, H, W), got shape {arr.shape}")
    if arr.shape[0] != classifier.config.in_channels:
        raise GeometryError(
            f"input has {arr.shape[0]} channels but the model expects "
            f"{classifier.config.in_channels}"
        )
    return torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32)).unsqueeze(0)


def forward(classifier: Classifier, composite) -> Prediction:
    """Deterministic inference on one composite volume."""
    x = _input_tensor(classifier, composite)
    classifier.net.eval()
    with torch.no_grad():
        logits = classifier.net(x)[0]
    l0, l1 = float(logits[0]), float(logits[1])
    if not (math.isfinite(l0) and math.isfinite(l1)):
        raise NumericError("classifier produced non-finite logits")
    return classify_logits(l0, l1)
