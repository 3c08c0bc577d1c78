"""Discover, validate and catalog multi-modality patient studies.

Expected directory layout (one folder per patient, fixed file stems):

    <root>/
      manifest.csv            # patient_id,label[,t2w,adc,dwi,prostate_mask,lesion_mask]
      <patient_id>/
        t2w.nii.gz            # or .mha / .nii
        adc.nii.gz
        dwi_b800.nii.gz       # dwi_b<value>; b=800 preferred, highest otherwise
        prostate_mask.nii.gz
        lesion_mask.nii.gz    # optional; required only for attention auditing

The manifest carries the binary label (1 = clinically significant) and may
override any path (relative to the root or absolute). Empty path cells fall
back to the layout above.
"""

from __future__ import annotations

import csv
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDatasetError, IoError, PipelineError, ValidationError
from .volume import (
    ADC,
    T2W,
    MaskRole,
    MaskVolume,
    Modality,
    ModalityKind,
    ModalityVolume,
)
from .volume_io import SUPPORTED_SUFFIXES, read_volume, require_finite

PREFERRED_B_VALUE = 800

_MANIFEST_PATH_COLUMNS = ("t2w", "adc", "dwi", "prostate_mask", "lesion_mask")
_DWI_STEM = re.compile(r"^dwi_b(\d+)$")


@dataclass
class PatientRecord:
    patient_id: str
    volume_paths: dict[ModalityKind, Path]
    prostate_mask_path: Path | None
    label: int
    lesion_mask_path: Path | None = None

    def path_for(self, kind: Modality) -> Path | None:
        for mk, path in self.volume_paths.items():
            if mk.kind == kind:
                return path
        return None

    def dwi_kind(self) -> ModalityKind | None:
        for mk in self.volume_paths:
            if mk.kind == Modality.DWI:
                return mk
        return None


@dataclass
class ValidationReport:
    patient_id: str
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class DatasetCatalog:
    records: list[PatientRecord]
    n_positive: int
    n_negative: int
    warnings: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def patient_ids(self) -> list[str]:
        return [r.patient_id for r in self.records]

    def labels(self) -> dict[str, int]:
        return {r.patient_id: r.label for r in self.records}


def load_volume(path, expected: ModalityKind) -> ModalityVolume:
    """Load one modality volume; rejects NaN/Inf voxels."""
    voxels, spacing, origin, direction = read_volume(path)
    require_finite(voxels, path)
    return ModalityVolume(
        voxels=voxels.astype(np.float32),
        spacing=spacing,
        origin=origin,
        direction=direction,
        modality=expected,
    )


def load_mask(path, role: MaskRole) -> MaskVolume:
    voxels, spacing, origin, direction = read_volume(path)
    require_finite(voxels, path)
    binary = (np.asarray(voxels) > 0.5).astype(np.uint8)
    return MaskVolume(voxels=binary, spacing=spacing, origin=origin, direction=direction, role=role)


def _find_file(folder: Path, stem: str) -> Path | None:
    for suffix in SUPPORTED_SUFFIXES:
        candidate = folder / f"{stem}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def _find_dwi(folder: Path, warnings: list[str], patient_id: str):
    """Select the DWI series: exact b=800 when present, otherwise highest b."""
    found = {}
    for path in sorted(folder.iterdir()) if folder.is_dir() else []:
        stem = path.name
        for suffix in SUPPORTED_SUFFIXES:
            if stem.endswith(suffix):
                stem = stem[: -len(suffix)]
                break
        m = _DWI_STEM.match(stem)
        if m and path.is_file():
            found.setdefault(int(m.group(1)), path)
    if not found:
        return None, None
    if PREFERRED_B_VALUE in found:
        return found[PREFERRED_B_VALUE], PREFERRED_B_VALUE
    b = max(found)
    warnings.append(f"{patient_id}: no b={PREFERRED_B_VALUE} DWI series, using b={b}")
    return found[b], b


def _read_manifest(manifest: Path) -> list[dict]:
    try:
        with open(manifest, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or "patient_id" not in reader.fieldnames:
                raise ValidationError(f"{manifest}: manifest needs a patient_id column")
            if "label" not in reader.fieldnames:
                raise ValidationError(f"{manifest}: manifest needs a label column")
            return [row for row in reader if (row.get("patient_id") or "").strip()]
    except OSError as exc:
        raise IoError(f"cannot read manifest {manifest}: {exc}") from exc


def _resolve(root: Path, cell: str | None) -> Path | None:
    if not cell or not cell.strip():
        return None
    p = Path(cell.strip())
    return p if p.is_absolute() else root / p


def _build_record(root: Path, row: dict, warnings: list[str]) -> PatientRecord:
    pid = row["patient_id"].strip()
    label_text = (row.get("label") or "").strip()
    try:
        label = int(label_text)
    except ValueError:
        label = -1
    folder = root / pid

    volume_paths: dict[ModalityKind, Path] = {}
    t2w = _resolve(root, row.get("t2w")) or _find_file(folder, "t2w")
    adc = _resolve(root, row.get("adc")) or _find_file(folder, "adc")
    if t2w is not None:
        volume_paths[T2W] = t2w
    if adc is not None:
        volume_paths[ADC] = adc
    dwi = _resolve(root, row.get("dwi"))
    if dwi is not None:
        m = _DWI_STEM.match(dwi.name.split(".")[0])
        b = int(m.group(1)) if m else PREFERRED_B_VALUE
        volume_paths[ModalityKind(Modality.DWI, b)] = dwi
    else:
        dwi, b = _find_dwi(folder, warnings, pid)
        if dwi is not None:
            volume_paths[ModalityKind(Modality.DWI, b)] = dwi

    prostate = _resolve(root, row.get("prostate_mask")) or _find_file(folder, "prostate_mask")
    lesion = _resolve(root, row.get("lesion_mask")) or _find_file(folder, "lesion_mask")
    return PatientRecord(
        patient_id=pid,
        volume_paths=volume_paths,
        prostate_mask_path=prostate,
        lesion_mask_path=lesion,
        label=label,
    )


def validate_record(record: PatientRecord) -> ValidationReport:
    """Check a record is usable; violations are data, not exceptions."""
    report = ValidationReport(patient_id=record.patient_id)
    for kind in (Modality.T2W, Modality.ADC, Modality.DWI):
        path = record.path_for(kind)
        if path is None:
            report.violations.append(f"missing {kind.value} volume")
            continue
        if not Path(path).is_file():
            report.violations.append(f"{kind.value} path does not exist: {path}")
            continue
        try:
            load_volume(path, record.dwi_kind() if kind == Modality.DWI else ModalityKind(kind))
        except PipelineError as exc:
            report.violations.append(f"unreadable {kind.value} volume: {exc}")

    if record.prostate_mask_path is None or not Path(record.prostate_mask_path).is_file():
        report.violations.append("missing prostate mask")
    else:
        try:
            mask = load_mask(record.prostate_mask_path, MaskRole.PROSTATE)
            if mask.count_nonzero() == 0:
                report.violations.append("empty prostate mask")
        except PipelineError as exc:
            report.violations.append(f"unreadable prostate mask: {exc}")

    if record.lesion_mask_path is not None and Path(record.lesion_mask_path).is_file():
        try:
            load_mask(record.lesion_mask_path, MaskRole.LESION)
        except PipelineError as exc:
            report.violations.append(f"unreadable lesion mask: {exc}")

    if record.label not in (0, 1):
        report.violations.append(f"label must be 0 or 1, got {record.label!r}")
    return report


def scan_dataset(root, manifest=None, jobs: int = 1) -> DatasetCatalog:
    """Catalog every valid patient under ``root``; deterministic (sorted by id)."""
    root = Path(root)
    if not root.is_dir():
        raise IoError(f"dataset root does not exist: {root}")
    manifest = Path(manifest) if manifest is not None else root / "manifest.csv"

    if not manifest.is_file():
        has_patient_dirs = any(p.is_dir() for p in root.iterdir())
        if not has_patient_dirs:
            raise EmptyDatasetError(f"empty dataset: no manifest and no patient folders in {root}")
        raise ValidationError(f"manifest not found: {manifest} (labels must come from a manifest)")

    rows = _read_manifest(manifest)
    if not rows:
        raise EmptyDatasetError(f"empty dataset: manifest {manifest} lists no patients")

    seen: set[str] = set()
    for row in rows:
        pid = row["patient_id"].strip()
        if pid in seen:
            raise ValidationError(f"duplicate patient_id in manifest: {pid}")
        seen.add(pid)

    warnings: list[str] = []
    records = [_build_record(root, row, warnings) for row in rows]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(validate_record, records))
    else:
        reports = [validate_record(r) for r in records]

    kept = []
    for record, report in zip(records, reports):
        if report.ok:
            kept.append(record)
        else:
            warnings.append(f"{record.patient_id}: excluded ({'; '.join(report.violations)})")
    if not kept:
        raise EmptyDatasetError(f"empty dataset: no valid records under {root}")

    kept.sort(key=lambda r: r.patient_id)
    n_positive = sum(r.label for r in kept)
    return DatasetCatalog(
        records=kept,
        n_positive=n_positive,
        n_negative=len(kept) - n_positive,
        warnings=warnings,
    )
