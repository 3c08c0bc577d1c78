"""Leave-one-out cross-validation: fold planning, per-fold training, and the
confusion-matrix metrics (accuracy, sensitivity, specificity, F1).

Every fold derives its own seed from (train seed, model seed, held-out id),
so results are reproducible and independent of fold execution order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import IoError, NumericError, ParameterError
from .model import Classifier, ModelConfig, Prediction, build_model, forward
from .preprocess import CompositeVolume, load_composite


class Optimizer(str, Enum):
    ADAM = "ADAM"
    SGD = "SGD"


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 40
    loss: str = "CROSS_ENTROPY"
    optimizer: Optimizer = Optimizer.ADAM
    batch_size: int = 4
    augmentation: str = "NONE"
    seed: int = 0

    def __post_init__(self):
        self.optimizer = Optimizer(self.optimizer)
        if self.learning_rate < 0:
            raise ParameterError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch size must be >= 1, got {self.batch_size}")
        if self.loss != "CROSS_ENTROPY":
            raise ParameterError(f"only CROSS_ENTROPY loss is supported, got {self.loss}")
        if self.augmentation != "NONE":
            raise ParameterError("augmentation is fixed to NONE")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "loss": self.loss,
            "optimizer": self.optimizer.value,
            "batch_size": self.batch_size,
            "augmentation": self.augmentation,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            learning_rate=float(d.get("learning_rate", 0.001)),
            epochs=int(d.get("epochs", 40)),
            loss=d.get("loss", "CROSS_ENTROPY"),
            optimizer=Optimizer(d.get("optimizer", Optimizer.ADAM.value)),
            batch_size=int(d.get("batch_size", 4)),
            augmentation=d.get("augmentation", "NONE"),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class Fold:
    train_ids: tuple[str, ...]
    val_id: str


@dataclass
class FoldPlan:
    folds: list[Fold]


@dataclass
class FoldResult:
    val_id: str
    label: int
    prediction: Prediction
    final_train_loss: float
    checkpoint_path: Path | None = None
    epoch_losses: list[float] = field(default_factory=list)


@dataclass
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class MetricsReport:
    accuracy: float
    sensitivity: float
    specificity: float
    f1: float


def make_loocv_folds(catalog) -> FoldPlan:
    """One fold per record; the held-out sample follows catalog order."""
    ids = list(catalog.patient_ids()) if hasattr(catalog, "patient_ids") else list(catalog)
    if not ids:
        raise ParameterError("cannot plan folds for an empty catalog")
    if len(ids) == 1:
        raise ParameterError("train set empty: leave-one-out needs at least 2 records")
    if len(set(ids)) != len(ids):
        raise ParameterError("catalog ids are not unique")
    folds = [
        Fold(train_ids=tuple(ids[:i] + ids[i + 1 :]), val_id=val_id)
        for i, val_id in enumerate(ids)
    ]
    return FoldPlan(folds=folds)


def cross_entropy_loss(logits, label: int) -> float:
    """-log softmax(logits)[label], evaluated stably."""
    l0, l1 = (float(v) for v in logits)
    if not (math.isfinite(l0) and math.isfinite(l1)):
        raise NumericError(f"non-finite logits: ({l0}, {l1})")
    if label not in (0, 1):
        raise ParameterError(f"label must be 0 or 1, got {label}")
    m = max(l0, l1)
    lse = m + math.log(math.exp(l0 - m) + math.exp(l1 - m))
    return lse - (l0 if label == 0 else l1)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from string parts (unlike hash(), not salted per run)."""
    digest = hashlib.sha256("::".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


class CompositeStore:
    """Lookup of composites and labels by patient id; entries may be in-memory
    volumes or paths loaded (and cached) on demand."""

    def __init__(self, composites: dict, labels: dict[str, int]):
        self._entries = dict(composites)
        self._labels = dict(labels)
        self._cache: dict[str, CompositeVolume] = {}

    @classmethod
    def from_directory(cls, directory) -> "CompositeStore":
        directory = Path(directory)
        entries: dict[str, Path] = {}
        labels: dict[str, int] = {}
        for path in sorted(directory.glob("*_composite.nii.gz")):
            composite = load_composite(path)
            pid = composite.provenance.get("patient_id") or path.name[: -len("_composite.nii.gz")]
            entries[pid] = path
            labels[pid] = int(composite.provenance.get("label", 0))
        return cls(entries, labels)

    def patient_ids(self) -> list[str]:
        return sorted(self._entries)

    def composite(self, patient_id: str) -> CompositeVolume:
        if patient_id in self._cache:
            return self._cache[patient_id]
        entry = self._entries.get(patient_id)
        if entry is None:
            raise IoError(f"no composite available for patient {patient_id}")
        if isinstance(entry, CompositeVolume):
            return entry
        if not Path(entry).is_file():
            raise IoError(f"composite file missing for patient {patient_id}: {entry}")
        composite = load_composite(entry)
        self._cache[patient_id] = composite
        return composite

    def label(self, patient_id: str) -> int:
        if patient_id not in self._labels:
            raise IoError(f"no label available for patient {patient_id}")
        return int(self._labels[patient_id])


def _make_optimizer(config: TrainConfig, parameters):
    if config.optimizer == Optimizer.ADAM:
        return torch.optim.Adam(parameters, lr=config.learning_rate)
    return torch.optim.SGD(parameters, lr=config.learning_rate)


def train_fold(
    fold: Fold,
    config: TrainConfig,
    model_config: ModelConfig,
    composites: CompositeStore,
    checkpoint_dir=None,
) -> FoldResult:
    """Train on the fold's train ids for exactly ``config.epochs`` and evaluate
    once on the held-out composite. Deterministic given the configured seeds."""
    if not fold.train_ids:
        raise ParameterError(f"fold for {fold.val_id} has an empty train set")
    fold_seed = derive_seed(config.seed, model_config.seed, fold.val_id)
    torch.manual_seed(fold_seed)

    classifier = build_model(replace(model_config, seed=fold_seed))
    net = classifier.net

    xs = np.stack([composites.composite(pid).model_array() for pid in fold.train_ids])
    ys = np.asarray([composites.label(pid) for pid in fold.train_ids], dtype=np.int64)
    data = torch.from_numpy(np.ascontiguousarray(xs, dtype=np.float32))
    targets = torch.from_numpy(ys)

    optimizer = _make_optimizer(config, net.parameters())
    sampler = torch.Generator()
    sampler.manual_seed(fold_seed)

    n = len(fold.train_ids)
    epoch_losses: list[float] = []
    net.train()
    for epoch in range(config.epochs):
        perm = torch.randperm(n, generator=sampler)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            optimizer.zero_grad()
            logits = net(data[idx])
            loss = F.cross_entropy(logits, targets[idx])
            loss_value = float(loss.detach())
            if not math.isfinite(loss_value):
                raise NumericError(f"diverged: non-finite loss at epoch {epoch + 1}")
            loss.backward()
            optimizer.step()
            total += loss_value * len(idx)
        epoch_losses.append(total / n)

    prediction = forward(classifier, composites.composite(fold.val_id))

    checkpoint_path = None
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = classifier.save(checkpoint_dir / f"{fold.val_id}.ckpt")

    return FoldResult(
        val_id=fold.val_id,
        label=composites.label(fold.val_id),
        prediction=prediction,
        final_train_loss=epoch_losses[-1],
        checkpoint_path=checkpoint_path,
        epoch_losses=epoch_losses,
    )


def train_full(
    ids,
    config: TrainConfig,
    model_config: ModelConfig,
    composites: CompositeStore,
    checkpoint_path=None,
) -> Classifier:
    """Train one model on every listed patient (no held-out sample)."""
    fold = Fold(train_ids=tuple(ids), val_id="__full__")
    fold_seed = derive_seed(config.seed, model_config.seed, "__full__")
    torch.manual_seed(fold_seed)
    classifier = build_model(replace(model_config, seed=fold_seed))
    net = classifier.net

    xs = np.stack([composites.composite(pid).model_array() for pid in fold.train_ids])
    ys = np.asarray([composites.label(pid) for pid in fold.train_ids], dtype=np.int64)
    data = torch.from_numpy(np.ascontiguousarray(xs, dtype=np.float32))
    targets = torch.from_numpy(ys)

    optimizer = _make_optimizer(config, net.parameters())
    sampler = torch.Generator()
    sampler.manual_seed(fold_seed)
    net.train()
    n = len(fold.train_ids)
    for epoch in range(config.epochs):
        perm = torch.randperm(n, generator=sampler)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            optimizer.zero_grad()
            loss = F.cross_entropy(net(data[idx]), targets[idx])
            if not math.isfinite(float(loss.detach())):
                raise NumericError(f"diverged: non-finite loss at epoch {epoch + 1}")
            loss.backward()
            optimizer.step()
    if checkpoint_path is not None:
        classifier.save(checkpoint_path)
    return classifier


def confusion_matrix(results) -> ConfusionMatrix:
    """Counts over (predicted class, label) pairs."""
    if not results:
        raise ParameterError("cannot build a confusion matrix from zero results")
    tp = tn = fp = fn = 0
    for r in results:
        pred = r.prediction.predicted_class
        if pred == 1 and r.label == 1:
            tp += 1
        elif pred == 0 and r.label == 0:
            tn += 1
        elif pred == 1 and r.label == 0:
            fp += 1
        else:
            fn += 1
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def aggregate_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Standard definitions; zero-denominator fractions are 0 by convention."""
    if cm.total <= 0:
        raise ParameterError("confusion matrix is empty")

    def frac(num: int, den: int) -> float:
        return num / den if den > 0 else 0.0

    return MetricsReport(
        accuracy=frac(cm.tp + cm.tn, cm.total),
        sensitivity=frac(cm.tp, cm.tp + cm.fn),
        specificity=frac(cm.tn, cm.tn + cm.fp),
        f1=frac(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn),
    )
