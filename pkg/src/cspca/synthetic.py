"""Synthetic multi-modality phantom datasets for desk-scale verification.

Each patient gets an ellipsoidal prostate on a fine T2w grid plus coarser
ADC/DWI grids (with a small origin jitter, so ingestion really resamples).
Positive patients carry an ellipsoidal lesion inside the prostate that is
bright in DWI and dark in ADC — mimicking the clinical contrast directions —
plus the matching lesion mask; negatives instead get a benign T2w-only blob.
This contrast is test fiction for exercising the pipeline, not a clinical
model.

Generation is deterministic per seed (per-patient child seeds, fixed draw
order), and the volume writer is timestamp-free, so identical specs produce
byte-identical trees.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoError, ParameterError
from .volume import ADC, DWI_B800, T2W, MaskRole, MaskVolume, ModalityVolume
from .volume_io import write_volume

_T2W_SPACING = (3.0, 0.5, 0.5)
_COARSE_FACTOR = 2  # ADC/DWI in-plane grids are this much coarser


@dataclass
class SyntheticSpec:
    n_patients: int = 24
    positive_fraction: float = 0.5
    grid_size: int = 64  # T2w in-plane voxels per axis
    n_slices: int = 16  # T2w slice count (exceeds the 12-slice target)
    lesion_radius_range: tuple[float, float] = (3.5, 6.0)  # mm
    noise: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 2:
            raise ParameterError(f"n_patients must be >= 2, got {self.n_patients}")
        if not 0.0 < self.positive_fraction < 1.0:
            raise ParameterError(
                f"positive_fraction must lie strictly between 0 and 1, "
                f"got {self.positive_fraction}"
            )
        if self.grid_size < 16 or self.n_slices < 4:
            raise ParameterError("grid too small for a plausible phantom")
        lo, hi = self.lesion_radius_range
        if not 0 < lo <= hi:
            raise ParameterError(f"bad lesion radius range: {self.lesion_radius_range}")
        if self.noise < 0:
            raise ParameterError(f"noise level must be >= 0, got {self.noise}")

    @property
    def n_positive(self) -> int:
        n = int(self.n_patients * self.positive_fraction + 0.5)
        return min(max(n, 1), self.n_patients - 1)

    def to_dict(self) -> dict:
        return {
            "n_patients": self.n_patients,
            "positive_fraction": self.positive_fraction,
            "grid_size": self.grid_size,
            "n_slices": self.n_slices,
            "lesion_radius_range": list(self.lesion_radius_range),
            "noise": self.noise,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        rr = d.get("lesion_radius_range", (3.5, 6.0))
        return cls(
            n_patients=int(d.get("n_patients", 24)),
            positive_fraction=float(d.get("positive_fraction", 0.5)),
            grid_size=int(d.get("grid_size", 64)),
            n_slices=int(d.get("n_slices", 16)),
            lesion_radius_range=(float(rr[0]), float(rr[1])),
            noise=float(d.get("noise", 0.03)),
            seed=int(d.get("seed", 0)),
        )


def _voxel_centers(shape, spacing, origin):
    """Physical coordinates of voxel centers, one (S,H,W) array per axis."""
    zs = origin[0] + spacing[0] * np.arange(shape[0], dtype=np.float64)
    ys = origin[1] + spacing[1] * np.arange(shape[1], dtype=np.float64)
    xs = origin[2] + spacing[2] * np.arange(shape[2], dtype=np.float64)
    return np.meshgrid(zs, ys, xs, indexing="ij")


def _ellipsoid_dist2(coords, center, semi_axes):
    """Squared normalized ellipsoid distance (<= 1 means inside)."""
    z, y, x = coords
    return (
        ((z - center[0]) / semi_axes[0]) ** 2
        + ((y - center[1]) / semi_axes[1]) ** 2
        + ((x - center[2]) / semi_axes[2]) ** 2
    )


@dataclass
class _Anatomy:
    prostate_center: np.ndarray
    prostate_semi: np.ndarray
    blob_center: np.ndarray | None  # lesion (positives) or benign blob (negatives)
    blob_semi: np.ndarray | None


def _draw_anatomy(rng, extent, spec: SyntheticSpec, with_blob: bool) -> _Anatomy:
    center = extent / 2.0 + rng.uniform(-2.0, 2.0, size=3)
    semi = np.array([13.0, 12.0, 12.0]) + rng.uniform(-1.0, 1.0, size=3)
    semi = np.minimum(semi, extent / 2.0 - 2.0)  # keep the gland inside the volume

    blob_center = blob_semi = None
    if with_blob:
        lo, hi = spec.lesion_radius_range
        r = rng.uniform(lo, hi)
        blob_semi = np.array([r, r, r]) * rng.uniform(0.85, 1.15, size=3)
        # Containment guarantee: in the prostate's normalized metric the blob
        # extends at most max(blob_semi / prostate_semi) from its own center,
        # so an offset of norm <= 0.9 * (1 - that) keeps it strictly inside.
        budget = 0.9 * (1.0 - float(np.max(blob_semi / semi)))
        if budget <= 0:
            blob_semi = semi * 0.4
            budget = 0.9 * 0.6
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        offset_norm = rng.uniform(0.0, budget)
        blob_center = center + direction * offset_norm * semi
    return _Anatomy(center, semi, blob_center, blob_semi)


def _patient_volumes(rng, spec: SyntheticSpec, label: int):
    """Build the three modality volumes plus prostate/lesion masks."""
    shape = (spec.n_slices, spec.grid_size, spec.grid_size)
    spacing = _T2W_SPACING
    extent = np.array([shape[i] * spacing[i] for i in range(3)])
    anatomy = _draw_anatomy(rng, extent, spec, with_blob=True)

    coarse_shape = (
        spec.n_slices,
        spec.grid_size // _COARSE_FACTOR,
        spec.grid_size // _COARSE_FACTOR,
    )
    coarse_spacing = (spacing[0], spacing[1] * _COARSE_FACTOR, spacing[2] * _COARSE_FACTOR)
    jitter = rng.uniform(0.0, 1.0, size=3)  # sub-voxel origin shift, in mm

    fine_coords = _voxel_centers(shape, spacing, (0.0, 0.0, 0.0))
    coarse_coords = _voxel_centers(coarse_shape, coarse_spacing, jitter)

    fine_prostate = _ellipsoid_dist2(fine_coords, anatomy.prostate_center, anatomy.prostate_semi) <= 1.0
    coarse_prostate = (
        _ellipsoid_dist2(coarse_coords, anatomy.prostate_center, anatomy.prostate_semi) <= 1.0
    )
    fine_blob = _ellipsoid_dist2(fine_coords, anatomy.blob_center, anatomy.blob_semi) <= 1.0
    coarse_blob = _ellipsoid_dist2(coarse_coords, anatomy.blob_center, anatomy.blob_semi) <= 1.0

    def assemble(base, prostate_delta, blob_delta, prostate, blob, grid_shape):
        img = np.full(grid_shape, base, dtype=np.float64)
        img[prostate] += prostate_delta
        if blob_delta:
            img[blob] += blob_delta
        img += rng.normal(0.0, spec.noise, size=grid_shape)
        return np.clip(img, 0.0, None).astype(np.float32)

    if label == 1:
        deltas = {"t2w": -0.05, "adc": -0.35, "dwi": 0.50}  # csPCa-like contrast
    else:
        deltas = {"t2w": 0.10, "adc": 0.0, "dwi": 0.0}  # benign blob: T2w only

    t2w = ModalityVolume(
        voxels=assemble(0.20, 0.35, deltas["t2w"], fine_prostate, fine_blob, shape),
        spacing=spacing,
        origin=(0.0, 0.0, 0.0),
        direction=np.eye(3),
        modality=T2W,
    )
    adc = ModalityVolume(
        voxels=assemble(0.30, 0.30, deltas["adc"], coarse_prostate, coarse_blob, coarse_shape),
        spacing=coarse_spacing,
        origin=tuple(jitter),
        direction=np.eye(3),
        modality=ADC,
    )
    dwi = ModalityVolume(
        voxels=assemble(0.15, 0.20, deltas["dwi"], coarse_prostate, coarse_blob, coarse_shape),
        spacing=coarse_spacing,
        origin=tuple(jitter),
        direction=np.eye(3),
        modality=DWI_B800,
    )
    prostate_mask = MaskVolume(
        voxels=fine_prostate.astype(np.uint8),
        spacing=spacing,
        origin=(0.0, 0.0, 0.0),
        direction=np.eye(3),
        role=MaskRole.PROSTATE,
    )
    lesion_mask = None
    if label == 1:
        lesion_mask = MaskVolume(
            voxels=fine_blob.astype(np.uint8),
            spacing=spacing,
            origin=(0.0, 0.0, 0.0),
            direction=np.eye(3),
            role=MaskRole.LESION,
        )
    return t2w, adc, dwi, prostate_mask, lesion_mask


def generate_dataset(spec: SyntheticSpec, out_dir) -> Path:
    """Write a complete synthetic dataset tree (per-patient volume folders
    plus manifest.csv) under ``out_dir`` and return that path."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create dataset directory {out_dir}: {exc}") from exc

    n_pos = spec.n_positive
    rows = []
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_patients)
    for i in range(spec.n_patients):
        patient_id = f"synth-{i:03d}"
        label = 1 if i < n_pos else 0
        rng = np.random.default_rng(children[i])
        t2w, adc, dwi, prostate_mask, lesion_mask = _patient_volumes(rng, spec, label)

        pdir = out_dir / patient_id
        pdir.mkdir(parents=True, exist_ok=True)

        def put(vol, name):
            write_volume(pdir / name, vol.voxels, vol.spacing, vol.origin, vol.direction)

        put(t2w, "t2w.nii.gz")
        put(adc, "adc.nii.gz")
        put(dwi, "dwi_b800.nii.gz")
        put(prostate_mask, "prostate_mask.nii.gz")
        if lesion_mask is not None:
            put(lesion_mask, "lesion_mask.nii.gz")
        rows.append({"patient_id": patient_id, "label": label})

    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["patient_id", "label"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return out_dir
