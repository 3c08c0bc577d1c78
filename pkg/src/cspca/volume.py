"""Core volumetric grid types shared across the pipeline.

Arrays are indexed ``(z, y, x)`` = (slice, row, column). Geometry follows the
voxel-center convention: the physical position of index ``(iz, iy, ix)`` is
``origin + direction @ (iz*dz, iy*dy, ix*dx)``, with physical coordinates kept
in the same (z, y, x) axis order. ``volume_io`` converts to/from the x-fastest
conventions of the on-disk formats.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import DataError, GeometryError

ORTHONORMAL_TOL = 1e-6


class Modality(str, Enum):
    T2W = "T2W"
    ADC = "ADC"
    DWI = "DWI"


@dataclass(frozen=True)
class ModalityKind:
    """A modality tag; DWI additionally carries its diffusion b-value."""

    kind: Modality
    b_value: int | None = None

    def __post_init__(self):
        if self.kind == Modality.DWI:
            if self.b_value is None:
                raise ValueError("DWI requires a b-value")
            if int(self.b_value) <= 0:
                raise ValueError(f"b-value must be positive, got {self.b_value}")
        elif self.b_value is not None:
            raise ValueError(f"{self.kind.value} does not take a b-value")

    def __str__(self):
        if self.kind == Modality.DWI:
            return f"DWI(b={self.b_value})"
        return self.kind.value


T2W = ModalityKind(Modality.T2W)
ADC = ModalityKind(Modality.ADC)
DWI_B800 = ModalityKind(Modality.DWI, 800)


class MaskRole(str, Enum):
    PROSTATE = "PROSTATE"
    LESION = "LESION"


def _as_direction(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=np.float64)
    if d.shape != (3, 3):
        raise GeometryError(f"direction must be 3x3, got shape {d.shape}")
    if not np.allclose(d.T @ d, np.eye(3), atol=ORTHONORMAL_TOL):
        raise GeometryError("direction matrix is not orthonormal")
    return d


@dataclass(eq=False)
class GridVolume:
    """A 3D scalar grid plus physical geometry. Base for image and mask volumes."""

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    direction: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels)
        if self.voxels.ndim != 3:
            raise GeometryError(f"expected a 3D grid, got ndim={self.voxels.ndim}")
        if min(self.voxels.shape) < 1:
            raise GeometryError(f"degenerate grid shape {self.voxels.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise GeometryError(f"spacing components must be > 0, got {self.spacing}")
        self.origin = tuple(float(o) for o in self.origin)
        self.direction = _as_direction(self.direction)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.voxels.shape)

    def index_to_physical(self, idx) -> np.ndarray:
        """Physical point (z, y, x ordering) of a voxel index."""
        idx = np.asarray(idx, dtype=np.float64)
        return np.asarray(self.origin) + self.direction @ (idx * np.asarray(self.spacing))

    def scaled_direction(self) -> np.ndarray:
        """3x3 matrix mapping index steps to physical displacements."""
        return self.direction @ np.diag(self.spacing)

    def same_grid(self, other: "GridVolume", tol: float = 1e-5) -> bool:
        return (
            self.shape == other.shape
            and np.allclose(self.spacing, other.spacing, atol=tol)
            and np.allclose(self.origin, other.origin, atol=tol)
            and np.allclose(self.direction, other.direction, atol=tol)
        )

    def with_voxels(self, voxels, **geometry):
        return replace(self, voxels=voxels, **geometry)


@dataclass(eq=False)
class ModalityVolume(GridVolume):
    modality: ModalityKind = T2W


@dataclass(eq=False)
class MaskVolume(GridVolume):
    role: MaskRole = MaskRole.PROSTATE

    def __post_init__(self):
        arr = np.asarray(self.voxels)
        bad = (arr != 0) & (arr != 1)
        if bad.any():
            raise DataError(f"mask voxels must be 0/1, found {arr[bad].flat[0]}")
        self.voxels = arr.astype(np.uint8)
        super().__post_init__()

    def count_nonzero(self) -> int:
        return int(np.count_nonzero(self.voxels))
