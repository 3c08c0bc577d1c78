"""Shared helpers for building small volumes and composites in tests."""

import numpy as np
import pytest

from cspca.preprocess import CompositeVolume, Layout
from cspca.volume import ADC, DWI_B800, T2W, MaskRole, MaskVolume, ModalityVolume


def make_volume(voxels, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0),
                direction=None, modality=T2W):
    return ModalityVolume(
        voxels=np.asarray(voxels, dtype=np.float32),
        spacing=spacing,
        origin=origin,
        direction=np.eye(3) if direction is None else direction,
        modality=modality,
    )


def make_mask(voxels, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0),
              role=MaskRole.PROSTATE):
    return MaskVolume(
        voxels=np.asarray(voxels, dtype=np.uint8),
        spacing=spacing,
        origin=origin,
        direction=np.eye(3),
        role=role,
    )


def random_composite(seed=0, slices=12, hw=(8, 8), layout=Layout.INTERLEAVED,
                     patient_id="p0", label=0):
    rng = np.random.default_rng(seed)
    voxels = rng.uniform(0.0, 1.0, size=(3, slices, *hw)).astype(np.float32)
    provenance = {"patient_id": patient_id, "label": label}
    return CompositeVolume(voxels=voxels, layout_mode=layout, provenance=provenance)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
