"""Per-patient preprocessing: resampling, slice standardization, prostate
cropping, intensity normalization, and composite assembly.

All operations are pure functions of their inputs. The canonical per-patient
pipeline is resample -> standardize_slices -> crop -> (resize) -> normalize,
then ``build_composite``; ``preprocess_patient`` wires it together and keeps
the masks on the same grid throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DataError, GeometryError, ParameterError
from .volume import GridVolume, MaskVolume, ModalityVolume
from .volume_io import read_volume, write_volume

TARGET_SLICES = 12
CHANNEL_ORDER = ("T2W", "ADC", "DWI")


class Layout(str, Enum):
    CHANNELS = "CHANNELS"
    INTERLEAVED = "INTERLEAVED"


@dataclass
class PreprocessParams:
    """Knobs of the per-patient pipeline; recorded in composite provenance."""

    target_slices: int = TARGET_SLICES
    margin_frac: float = 0.10
    layout: Layout = Layout.INTERLEAVED
    in_plane_size: tuple[int, int] | None = None
    mask_outside: bool = False

    def to_dict(self) -> dict:
        return {
            "target_slices": self.target_slices,
            "margin_frac": self.margin_frac,
            "layout": self.layout.value,
            "in_plane_size": list(self.in_plane_size) if self.in_plane_size else None,
            "mask_outside": self.mask_outside,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessParams":
        size = d.get("in_plane_size")
        return cls(
            target_slices=int(d.get("target_slices", TARGET_SLICES)),
            margin_frac=float(d.get("margin_frac", 0.10)),
            layout=Layout(d.get("layout", Layout.INTERLEAVED.value)),
            in_plane_size=tuple(int(v) for v in size) if size else None,
            mask_outside=bool(d.get("mask_outside", False)),
        )


# ---------------------------------------------------------------- resampling

def resample_to_grid(vol: GridVolume, reference: GridVolume, nearest: bool = False):
    """Resample ``vol`` onto the reference grid via trilinear interpolation in
    physical space (nearest-neighbor for masks). Out-of-bounds samples are 0."""
    if min(reference.shape) < 1:
        raise GeometryError("degenerate reference grid")
    src = vol.scaled_direction()
    tgt = reference.scaled_direction()
    src_inv = np.linalg.inv(src)
    matrix = src_inv @ tgt
    offset = src_inv @ (np.asarray(reference.origin) - np.asarray(vol.origin))

    nearest = nearest or isinstance(vol, MaskVolume)
    order = 0 if nearest else 1
    data = vol.voxels.astype(np.uint8 if nearest else np.float64)
    out = ndimage.affine_transform(
        data,
        matrix,
        offset=offset,
        output_shape=reference.shape,
        order=order,
        mode="grid-constant",
        cval=0.0,
        prefilter=False,
    )
    out = out.astype(vol.voxels.dtype if nearest else np.float32)
    return vol.with_voxels(
        out,
        spacing=reference.spacing,
        origin=reference.origin,
        direction=reference.direction.copy(),
    )


def resize_in_plane(vol: GridVolume, size: tuple[int, int]):
    """Resample in-plane to a fixed (H, W), preserving the physical extent.

    Cropped boxes vary per patient while the classifier needs one input
    shape, so the cropped grid is mapped onto ``size`` with voxel-edge
    alignment (spacing rescaled by old/new).
    """
    h, w = int(size[0]), int(size[1])
    if h < 1 or w < 1:
        raise ParameterError(f"in-plane size must be positive, got {size}")
    nz, ny, nx = vol.shape
    if (ny, nx) == (h, w):
        return vol.with_voxels(vol.voxels.copy())
    dz, dy, dx = vol.spacing
    new_spacing = (dz, dy * ny / h, dx * nx / w)
    # voxel-edge alignment: first new center sits half a new voxel into the field
    shift = np.asarray([0.0, (new_spacing[1] - dy) / 2.0, (new_spacing[2] - dx) / 2.0])
    new_origin = tuple(np.asarray(vol.origin) + vol.direction @ shift)
    reference = GridVolume(
        voxels=np.zeros((nz, h, w), dtype=np.float32),
        spacing=new_spacing,
        origin=new_origin,
        direction=vol.direction.copy(),
    )
    return resample_to_grid(vol, reference)


# ------------------------------------------------------------ slice handling

def slice_centroid(mask: MaskVolume | None, n_slices: int) -> float:
    """Mean slice index weighted by per-slice mask area; volume center without a mask."""
    if mask is None or mask.count_nonzero() == 0:
        return (n_slices - 1) / 2.0
    counts = mask.voxels.reshape(mask.shape[0], -1).sum(axis=1).astype(np.float64)
    return float((np.arange(mask.shape[0]) * counts).sum() / counts.sum())


def slice_window(n_slices: int, target: int, centroid: float) -> int:
    """Start index of the ``target``-slice window closest to the centroid.

    Ties between equally-centered windows resolve to the smaller start.
    """
    start = math.ceil(centroid - target / 2.0)
    return min(max(start, 0), n_slices - target)


def standardize_slices(vol, target: int = TARGET_SLICES, mask: MaskVolume | None = None):
    """Force exactly ``target`` slices: window around the mask centroid when the
    input is longer, zero-pad symmetrically (extra slice after) when shorter."""
    if target <= 0:
        raise ParameterError(f"target slice count must be positive, got {target}")
    nz = vol.shape[0]
    dz = vol.spacing[0]
    if nz == target:
        return vol.with_voxels(vol.voxels.copy())
    if nz > target:
        start = slice_window(nz, target, slice_centroid(mask, nz))
        out = vol.voxels[start : start + target]
        origin = tuple(np.asarray(vol.origin) + vol.direction @ np.asarray([start * dz, 0.0, 0.0]))
        return vol.with_voxels(np.ascontiguousarray(out), origin=origin)
    pad_before = (target - nz) // 2
    pad_after = target - nz - pad_before
    out = np.concatenate(
        [
            np.zeros((pad_before,) + vol.shape[1:], dtype=vol.voxels.dtype),
            vol.voxels,
            np.zeros((pad_after,) + vol.shape[1:], dtype=vol.voxels.dtype),
        ]
    )
    origin = tuple(np.asarray(vol.origin) - vol.direction @ np.asarray([pad_before * dz, 0.0, 0.0]))
    return vol.with_voxels(out, origin=origin)


# ----------------------------------------------------------------- cropping

def crop_box(mask: MaskVolume, margin_frac: float = 0.10) -> tuple[int, int, int, int]:
    """Global in-plane bounding box (y0, y1, x0, x1), end-exclusive, of the
    mask's nonzero voxels expanded by ceil(margin_frac * extent) per side."""
    if mask.count_nonzero() == 0:
        raise DataError("empty prostate mask: cropping is undefined")
    flat = mask.voxels.any(axis=0)
    ys, xs = np.nonzero(flat)
    y0, y1 = int(ys.min()), int(ys.max())
    x0, x1 = int(xs.min()), int(xs.max())
    pad_y = math.ceil(margin_frac * (y1 - y0 + 1))
    pad_x = math.ceil(margin_frac * (x1 - x0 + 1))
    h, w = flat.shape
    return (
        max(0, y0 - pad_y),
        min(h, y1 + pad_y + 1),
        max(0, x0 - pad_x),
        min(w, x1 + pad_x + 1),
    )


def apply_crop(vol, box: tuple[int, int, int, int]):
    y0, y1, x0, x1 = box
    out = np.ascontiguousarray(vol.voxels[:, y0:y1, x0:x1])
    dz, dy, dx = vol.spacing
    origin = tuple(np.asarray(vol.origin) + vol.direction @ np.asarray([0.0, y0 * dy, x0 * dx]))
    return vol.with_voxels(out, origin=origin)


def crop_to_prostate(vol, mask: MaskVolume, margin_frac: float = 0.10):
    """Crop every slice to one global 2D box around the mask (plus margin)."""
    if vol.shape != mask.shape:
        raise GeometryError(f"volume {vol.shape} and mask {mask.shape} are on different grids")
    return apply_crop(vol, crop_box(mask, margin_frac))


# ----------------------------------------------------- masking + normalizing

def mask_outside_prostate(vol, mask: MaskVolume):
    """Zero every voxel outside the mask; idempotent."""
    if vol.shape != mask.shape:
        raise GeometryError(f"volume {vol.shape} and mask {mask.shape} are on different grids")
    out = vol.voxels * (mask.voxels > 0)
    return vol.with_voxels(out.astype(vol.voxels.dtype))


def normalize_intensity(vol):
    """Min-max scale to [0, 1]; constant volumes map to all zeros."""
    v = vol.voxels.astype(np.float32)
    vmin = float(v.min())
    vmax = float(v.max())
    if vmax - vmin <= 0.0:
        return vol.with_voxels(np.zeros_like(v))
    return vol.with_voxels((v - vmin) / np.float32(vmax - vmin))


# ---------------------------------------------------------------- composite

@dataclass(eq=False)
class CompositeVolume:
    """The fused 3-modality input. Stored canonically as (3, S, H, W) in
    channel order (T2W, ADC, DWI); ``layout_mode`` selects what the classifier
    consumes: a 1-channel (3S, H, W) slice-interleave or the 3-channel stack."""

    voxels: np.ndarray
    layout_mode: Layout = Layout.INTERLEAVED
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float32)
        if self.voxels.ndim != 4 or self.voxels.shape[0] != 3:
            raise GeometryError(f"composite must be (3, S, H, W), got {self.voxels.shape}")

    @property
    def patient_id(self) -> str:
        return self.provenance.get("patient_id", "")

    @property
    def slices(self) -> int:
        return self.voxels.shape[1]

    @property
    def plane_shape(self) -> tuple[int, int]:
        return tuple(self.voxels.shape[2:])

    def interleaved(self) -> np.ndarray:
        """(3S, H, W): slice order T2W_0, ADC_0, DWI_0, T2W_1, ..."""
        c, s, h, w = self.voxels.shape
        return self.voxels.transpose(1, 0, 2, 3).reshape(c * s, h, w)

    def model_array(self) -> np.ndarray:
        """Array shaped (in_channels, D, H, W) as the classifier consumes it."""
        if self.layout_mode == Layout.INTERLEAVED:
            return self.interleaved()[np.newaxis]
        return self.voxels

    def channel(self, name: str) -> np.ndarray:
        return self.voxels[CHANNEL_ORDER.index(name)]


def deinterleave(stacked: np.ndarray) -> np.ndarray:
    """Inverse of ``CompositeVolume.interleaved``: (3S, H, W) -> (3, S, H, W)."""
    zs, h, w = stacked.shape
    if zs % 3 != 0:
        raise GeometryError(f"interleaved stack depth must be a multiple of 3, got {zs}")
    return np.ascontiguousarray(stacked.reshape(zs // 3, 3, h, w).transpose(1, 0, 2, 3))


def build_composite(
    t2w: ModalityVolume,
    adc: ModalityVolume,
    dwi: ModalityVolume,
    layout: Layout = Layout.INTERLEAVED,
    provenance: dict | None = None,
    target_slices: int = TARGET_SLICES,
) -> CompositeVolume:
    """Stack the three preprocessed modality volumes into one composite."""
    shapes = [t2w.shape, adc.shape, dwi.shape]
    if len({s for s in shapes}) != 1:
        raise GeometryError(f"modality shapes differ: {shapes}")
    if t2w.shape[0] != target_slices:
        raise GeometryError(f"expected {target_slices} slices per modality, got {t2w.shape[0]}")
    stack = np.stack([t2w.voxels, adc.voxels, dwi.voxels]).astype(np.float32)
    if stack.min() < 0.0 or stack.max() > 1.0:
        raise DataError("composite intensities must lie in [0, 1]; normalize first")
    return CompositeVolume(voxels=stack, layout_mode=layout, provenance=dict(provenance or {}))


# -------------------------------------------------------- patient pipeline

@dataclass(eq=False)
class PreprocessedPatient:
    patient_id: str
    composite: CompositeVolume
    prostate_mask: np.ndarray  # (S, H, W) uint8, on the composite grid
    lesion_mask: np.ndarray | None
    label: int


def preprocess_patient(
    t2w: ModalityVolume,
    adc: ModalityVolume,
    dwi: ModalityVolume,
    prostate: MaskVolume,
    params: PreprocessParams,
    lesion: MaskVolume | None = None,
    patient_id: str = "",
    label: int = 0,
) -> PreprocessedPatient:
    """Run the full pipeline for one patient, keeping masks aligned throughout."""
    prostate = resample_to_grid(prostate, t2w)
    if prostate.count_nonzero() == 0:
        raise DataError(f"{patient_id}: prostate mask empty after resampling")
    adc = resample_to_grid(adc, t2w)
    dwi = resample_to_grid(dwi, t2w)
    lesion = resample_to_grid(lesion, t2w) if lesion is not None else None

    volumes = {"T2W": t2w, "ADC": adc, "DWI": dwi}
    prostate12 = standardize_slices(prostate, params.target_slices, mask=prostate)
    lesion12 = standardize_slices(lesion, params.target_slices, mask=prostate) if lesion is not None else None
    volumes = {k: standardize_slices(v, params.target_slices, mask=prostate) for k, v in volumes.items()}

    box = crop_box(prostate12, params.margin_frac)
    prostate12 = apply_crop(prostate12, box)
    lesion12 = apply_crop(lesion12, box) if lesion12 is not None else None
    volumes = {k: apply_crop(v, box) for k, v in volumes.items()}

    if params.in_plane_size is not None:
        prostate12 = resize_in_plane(prostate12, params.in_plane_size)
        lesion12 = resize_in_plane(lesion12, params.in_plane_size) if lesion12 is not None else None
        volumes = {k: resize_in_plane(v, params.in_plane_size) for k, v in volumes.items()}

    volumes = {k: normalize_intensity(v) for k, v in volumes.items()}
    if params.mask_outside:
        volumes = {k: mask_outside_prostate(v, prostate12) for k, v in volumes.items()}

    provenance = {"patient_id": patient_id, "label": int(label), "params": params.to_dict()}
    composite = build_composite(
        volumes["T2W"],
        volumes["ADC"],
        volumes["DWI"],
        layout=params.layout,
        provenance=provenance,
        target_slices=params.target_slices,
    )
    return PreprocessedPatient(
        patient_id=patient_id,
        composite=composite,
        prostate_mask=prostate12.voxels,
        lesion_mask=lesion12.voxels if lesion12 is not None else None,
        label=int(label),
    )


# -------------------------------------------------------------- persistence

def save_composite(composite: CompositeVolume, path) -> Path:
    """Persist the interleaved stack as a 3D volume plus a JSON sidecar."""
    path = Path(path)
    write_volume(path, composite.interleaved())
    sidecar = path.with_name(_sidecar_name(path.name))
    meta = {"layout_mode": composite.layout_mode.value, "provenance": composite.provenance}
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_composite(path) -> CompositeVolume:
    path = Path(path)
    voxels, _, _, _ = read_volume(path)
    sidecar = path.with_name(_sidecar_name(path.name))
    try:
        meta = json.loads(sidecar.read_text())
    except OSError as exc:
        raise DataError(f"composite sidecar missing for {path}: {exc}") from exc
    return CompositeVolume(
        voxels=deinterleave(np.asarray(voxels, dtype=np.float32)),
        layout_mode=Layout(meta.get("layout_mode", Layout.INTERLEAVED.value)),
        provenance=meta.get("provenance", {}),
    )


def _sidecar_name(name: str) -> str:
    for suffix in (".nii.gz", ".nii", ".mha"):
        if name.endswith(suffix):
            return name[: -len(suffix)] + ".json"
    return name + ".json"
