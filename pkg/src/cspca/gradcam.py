"""Gradient-weighted attention maps (Grad-CAM++) over the 3D classifier.

The closed form assumes an exponentiated score, which collapses the
second/third-order terms to expressions in the first-order gradients:

    alpha_k = g^2 / (2 g^2 + sum_spatial(A_k) * g^3 + eps)
    w_k     = sum_spatial(alpha_k * relu(g))
    map     = relu(sum_k w_k * A_k)

The raw map is upsampled trilinearly (corner-aligned) to the model input
grid and min-max normalized; an all-zero map stays zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch
import torch.nn.functional as F

from .errors import GeometryError, NumericError, ParameterError
from .model import Classifier, _input_tensor, classify_logits
from .preprocess import CompositeVolume, Layout

EPSILON = 1e-7


@dataclass
class FeatureGradients:
    """Activations and score gradients at the tapped layer, plus the forward
    pass outcome they were computed from."""

    activations: np.ndarray  # (K, d, h, w)
    gradients: np.ndarray  # (K, d, h, w)
    logits: tuple[float, float]
    predicted_class: int
    class_index: int  # class the gradients were taken for


@dataclass
class AttentionMap:
    patient_id: str
    class_index: int
    values: np.ndarray  # float32 in [0, 1], model-input spatial shape
    layer_id: str = ""


class OutcomeCategory(str, Enum):
    TP = "TP"
    TN = "TN"
    FP = "FP"
    FN = "FN"


@dataclass
class SummedAttentionMap:
    values: np.ndarray  # float32 in [0, 1]
    category: OutcomeCategory
    n_contributors: int


def categorize_outcome(predicted_class: int, label: int) -> OutcomeCategory:
    if predicted_class not in (0, 1) or label not in (0, 1):
        raise ParameterError(
            f"predicted class and label must be 0 or 1, got ({predicted_class}, {label})"
        )
    if label == 1:
        return OutcomeCategory.TP if predicted_class == 1 else OutcomeCategory.FN
    return OutcomeCategory.FP if predicted_class == 1 else OutcomeCategory.TN


def feature_gradients(
    classifier: Classifier,
    composite,
    class_index: int | None = None,
    layer_id: str | None = None,
) -> FeatureGradients:
    """Forward/backward pass capturing activations and d(score)/d(activation)
    at the tapped layer. With ``class_index=None`` the predicted class's score
    is used (ties resolve to class 0)."""
    if class_index is not None and class_index not in (0, 1):
        raise ParameterError(f"class index must be 0 or 1, got {class_index}")
    net = classifier.net
    try:
        module = classifier.feature_module(layer_id)
    except KeyError as exc:
        raise ParameterError(str(exc)) from None

    captured = {}

    def hook(_module, _inputs, output):
        output.retain_grad()
        captured["activations"] = output

    handle = module.register_forward_hook(hook)
    try:
        net.eval()
        dtype = next(net.parameters()).dtype
        x = _input_tensor(classifier, composite).to(dtype)
        net.zero_grad(set_to_none=True)
        logits = net(x)
        if logits.shape != (1, 2):
            raise GeometryError(f"expected logits of shape (1, 2), got {tuple(logits.shape)}")
        l0, l1 = float(logits[0, 0].detach()), float(logits[0, 1].detach())
        predicted = classify_logits(l0, l1).predicted_class
        target_class = predicted if class_index is None else class_index
        logits[0, target_class].backward()
    finally:
        handle.remove()

    activations = captured["activations"]
    if activations.grad is None:
        raise NumericError("no gradient reached the tapped layer")
    acts = activations.detach()[0].numpy().astype(np.float64, copy=True)
    grads = activations.grad.detach()[0].numpy().astype(np.float64, copy=True)
    if not (np.isfinite(acts).all() and np.isfinite(grads).all()):
        raise NumericError("non-finite activations or gradients at the tapped layer")
    return FeatureGradients(
        activations=acts,
        gradients=grads,
        logits=(l0, l1),
        predicted_class=predicted,
        class_index=target_class,
    )


def attention_from_gradients(activations, gradients, eps: float = EPSILON) -> np.ndarray:
    """Raw (unnormalized, feature-grid resolution) attention map from the
    closed-form channel weights."""
    a = np.asarray(activations, dtype=np.float64)
    g = np.asarray(gradients, dtype=np.float64)
    if a.shape != g.shape or a.ndim != 4:
        raise GeometryError(
            f"activations and gradients must share a (K, d, h, w) shape, "
            f"got {a.shape} and {g.shape}"
        )
    g2 = g * g
    g3 = g2 * g
    channel_sums = a.sum(axis=(1, 2, 3), keepdims=True)
    denom = 2.0 * g2 + channel_sums * g3 + eps
    alpha = np.divide(g2, denom, out=np.zeros_like(g2), where=denom != 0)
    weights = (alpha * np.maximum(g, 0.0)).sum(axis=(1, 2, 3))
    raw = (weights[:, None, None, None] * a).sum(axis=0)
    return np.maximum(raw, 0.0)


def upsample_trilinear(values, shape) -> np.ndarray:
    """Corner-aligned trilinear resize of a (d, h, w) array to ``shape``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3 or len(shape) != 3:
        raise GeometryError(f"expected a 3D array and target, got {values.shape} -> {shape}")
    if any(int(s) < 1 for s in shape):
        raise ParameterError(f"target shape must be positive, got {tuple(shape)}")
    t = torch.from_numpy(values)[None, None]
    out = F.interpolate(t, size=tuple(int(s) for s in shape), mode="trilinear", align_corners=True)
    return out[0, 0].numpy()


def normalize_map(values) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant map collapses to zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo = float(v.min())
    hi = float(v.max())
    if hi <= lo:
        return np.zeros_like(v, dtype=np.float32)
    return ((v - lo) / (hi - lo)).astype(np.float32)


def gradcam_pp(
    classifier: Classifier,
    composite,
    class_index: int | None = None,
    layer_id: str | None = None,
    patient_id: str | None = None,
) -> AttentionMap:
    """End-to-end attention map for one composite, on the model input grid."""
    fg = feature_gradients(classifier, composite, class_index=class_index, layer_id=layer_id)
    raw = attention_from_gradients(fg.activations, fg.gradients)
    if isinstance(composite, CompositeVolume):
        target_shape = composite.model_array().shape[1:]
        if patient_id is None:
            patient_id = str(composite.provenance.get("patient_id", ""))
    else:
        target_shape = np.asarray(composite).shape[1:]
    upsampled = upsample_trilinear(raw, target_shape)
    return AttentionMap(
        patient_id=patient_id or "",
        class_index=fg.class_index,
        values=normalize_map(upsampled),
        layer_id=layer_id or classifier.feature_layer_id,
    )


def sum_attention_maps(maps, category: OutcomeCategory = OutcomeCategory.TP) -> SummedAttentionMap:
    """Normalized sum of attention maps, bit-identical under input reordering
    (maps are reduced in a canonical sort order). Each map is min-max
    normalized before summation so no single patient dominates."""
    maps = list(maps)
    if not maps:
        raise ParameterError("cannot sum zero attention maps")
    shapes = {m.values.shape for m in maps}
    if len(shapes) != 1:
        raise GeometryError(f"attention maps disagree on shape: {sorted(shapes)}")
    ordered = sorted(maps, key=lambda m: (m.patient_id, m.class_index, m.values.tobytes()))
    total = np.zeros(ordered[0].values.shape, dtype=np.float64)
    for m in ordered:
        total += np.asarray(normalize_map(m.values), dtype=np.float64)
    return SummedAttentionMap(
        values=normalize_map(total),
        category=OutcomeCategory(category),
        n_contributors=len(maps),
    )


def attention_mass_in_mask(values, mask) -> float:
    """Fraction of total attention falling inside the mask (0 if the map sums
    to zero)."""
    v = np.asarray(values, dtype=np.float64)
    m = np.asarray(mask)
    if v.shape != m.shape:
        raise GeometryError(f"map and mask shapes differ: {v.shape} vs {m.shape}")
    total = float(v.sum())
    if total <= 0.0:
        return 0.0
    return float(v[m > 0].sum()) / total


def mask_to_attention_grid(mask, layout: Layout) -> np.ndarray:
    """Carry a (S, H, W) mask onto the attention-map grid for ``layout``: the
    interleaved layout stacks all three channels per slice, so each mask slice
    repeats three times."""
    m = np.asarray(mask)
    if m.ndim != 3:
        raise GeometryError(f"expected a (S, H, W) mask, got shape {m.shape}")
    layout = Layout(layout)
    if layout == Layout.INTERLEAVED:
        return np.repeat(m, 3, axis=0)
    return m.copy()
