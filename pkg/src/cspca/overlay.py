"""Jet-colormap overlays of attention maps on source slices, and the
side-by-side per-patient panels (source + lesion contour | overlay).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import GeometryError, IoError, ParameterError
from .preprocess import Layout

# Classic jet, as (value, (r, g, b)) anchors; linear between anchors.
JET_ANCHORS = (
    (0.0, (0.0, 0.0, 0.5)),
    (0.125, (0.0, 0.0, 1.0)),
    (0.375, (0.0, 1.0, 1.0)),
    (0.625, (1.0, 1.0, 0.0)),
    (0.875, (1.0, 0.0, 0.0)),
    (1.0, (0.5, 0.0, 0.0)),
)

_JET_X = np.array([a[0] for a in JET_ANCHORS])
_JET_RGB = np.array([a[1] for a in JET_ANCHORS])


def jet_colormap(values) -> np.ndarray:
    """Map values (clamped to [0, 1]) through the jet anchors; returns an
    array with a trailing RGB axis."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    out = np.empty(v.shape + (3,), dtype=np.float64)
    for c in range(3):
        out[..., c] = np.interp(v, _JET_X, _JET_RGB[:, c])
    return out


def render_overlay(source_slice, attention_slice, alpha: float = 0.5) -> np.ndarray:
    """(1-alpha) * grayscale source + alpha * jet(attention), clamped to [0,1]."""
    src = np.asarray(source_slice, dtype=np.float64)
    att = np.asarray(attention_slice, dtype=np.float64)
    if src.shape != att.shape or src.ndim != 2:
        raise GeometryError(
            f"source and attention slices must share a 2D shape, got {src.shape} vs {att.shape}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    gray = np.clip(src, 0.0, 1.0)[..., None]
    rgb = (1.0 - alpha) * gray + alpha * jet_colormap(att)
    return np.clip(rgb, 0.0, 1.0)


def to_uint8(rgb) -> np.ndarray:
    """Quantize [0,1] channels to 8 bit by round(255 * c), half away from zero."""
    v = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def write_png(rgb, path) -> Path:
    path = Path(path)
    arr = to_uint8(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise GeometryError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc
    return path


def attention_per_slice(values, layout) -> np.ndarray:
    """Reduce a model-space attention volume to one map per anatomical slice;
    an interleaved volume averages its three channel slices."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 3:
        raise GeometryError(f"expected a 3D attention volume, got shape {v.shape}")
    if Layout(layout) == Layout.INTERLEAVED:
        if v.shape[0] % 3 != 0:
            raise GeometryError(
                f"interleaved volume needs a slice count divisible by 3, got {v.shape[0]}"
            )
        v = v.reshape(v.shape[0] // 3, 3, *v.shape[1:]).mean(axis=1)
    return v


def lesion_contour(mask_slice) -> np.ndarray:
    """Boundary voxels of a binary 2D mask (mask minus its erosion)."""
    m = np.asarray(mask_slice) > 0
    if not m.any():
        return np.zeros_like(m)
    return m & ~ndimage.binary_erosion(m)


def select_slice(attention) -> int:
    """Index of the slice holding the attention peak; an all-zero map falls
    back to the middle slice."""
    att = np.asarray(attention)
    if att.max() <= 0:
        return att.shape[0] // 2
    peaks = att.reshape(att.shape[0], -1).max(axis=1)
    return int(np.argmax(peaks))


def emit_patient_panel(
    patient_id: str,
    source,
    attention,
    lesion_mask=None,
    out_dir=".",
    category: str = "map",
    alpha: float = 0.5,
    slices=None,
) -> list[Path]:
    """Write one side-by-side panel per selected slice: left = source with the
    lesion contour in white, right = the jet overlay. Defaults to the
    attention-peak slice. Returns the written paths."""
    src = np.asarray(getattr(source, "voxels", source), dtype=np.float64)
    att = np.asarray(getattr(attention, "values", attention), dtype=np.float64)
    if src.shape != att.shape or src.ndim != 3:
        raise GeometryError(
            f"source and attention volumes must share a 3D shape, got {src.shape} vs {att.shape}"
        )
    mask = None
    if lesion_mask is not None:
        mask = np.asarray(getattr(lesion_mask, "voxels", lesion_mask))
        if mask.shape != src.shape:
            raise GeometryError(
                f"lesion mask shape {mask.shape} does not match source {src.shape}"
            )
    if slices is None:
        slices = [select_slice(att)]

    out_dir = Path(out_dir)
    written: list[Path] = []
    for s in slices:
        s = int(s)
        if not 0 <= s < src.shape[0]:
            raise ParameterError(f"slice {s} out of range for {src.shape[0]} slices")
        gray = np.clip(src[s], 0.0, 1.0)
        left = np.repeat(gray[..., None], 3, axis=2)
        if mask is not None:
            left[lesion_contour(mask[s])] = (1.0, 1.0, 1.0)
        right = render_overlay(src[s], att[s], alpha=alpha)
        panel = np.concatenate([left, right], axis=1)
        written.append(write_png(panel, out_dir / f"{patient_id}_{category}_{s}.png"))
    return written
