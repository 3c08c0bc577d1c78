"""Stage orchestration: ingest -> preprocess -> train -> explain -> report.

Each stage writes its artifacts under the run's output directory and records
a content hash of the config sections it depends on in run_manifest.json.
Later stages refuse to run when their upstream stage is missing ("run X
first") or was produced under different settings (staleness), so artifacts
from mixed configurations can never be combined silently.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, stage_hash
from .dataset import DatasetCatalog, load_mask, load_volume, scan_dataset
from .errors import ConfigError, IoError, StalenessError
from .gradcam import (
    OutcomeCategory,
    attention_mass_in_mask,
    categorize_outcome,
    gradcam_pp,
    mask_to_attention_grid,
    sum_attention_maps,
)
from .loocv import (
    CompositeStore,
    aggregate_metrics,
    confusion_matrix,
    make_loocv_folds,
    train_fold,
    train_full,
)
from .model import build_model, load_pretrained
from .overlay import attention_per_slice, emit_patient_panel
from .preprocess import preprocess_patient, save_composite
from .volume import ADC, MaskRole, T2W
from .volume_io import read_volume, write_volume

MANIFEST_NAME = "run_manifest.json"


# ------------------------------------------------------------ run manifest

def load_run_manifest(out_dir) -> dict:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.is_file():
        return {"stages": {}}
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    manifest.setdefault("stages", {})
    return manifest


def _save_run_manifest(out_dir, manifest) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out_dir / MANIFEST_NAME).write_text(text)


def _record_stage(config: RunConfig, stage: str, **extra) -> dict:
    manifest = load_run_manifest(config.output_dir)
    entry = {"hash": stage_hash(config, stage), "seed": config.seed}
    entry.update(extra)
    manifest["stages"][stage] = entry
    _save_run_manifest(config.output_dir, manifest)
    return manifest


def _require_stage(config: RunConfig, stage: str) -> dict:
    manifest = load_run_manifest(config.output_dir)
    entry = manifest["stages"].get(stage)
    if entry is None:
        raise StalenessError(
            f"run {stage} first: {config.output_dir / MANIFEST_NAME} records no "
            f"completed {stage} stage"
        )
    if entry.get("hash") != stage_hash(config, stage):
        raise StalenessError(
            f"{stage} artifacts are stale: the configuration changed since "
            f"{stage} ran; re-run {stage}"
        )
    return manifest


# ----------------------------------------------------------------- ingest

def _dataset_checksum(root: Path, catalog: DatasetCatalog) -> str:
    """Content fingerprint of the ingested tree (manifest bytes + per-record
    file names and sizes), for detecting dataset drift between stages."""
    h = hashlib.sha256()
    manifest = root / "manifest.csv"
    if manifest.is_file():
        h.update(manifest.read_bytes())
    for record in catalog.records:
        paths = list(record.volume_paths.values())
        paths.append(record.prostate_mask_path)
        if record.lesion_mask_path:
            paths.append(record.lesion_mask_path)
        for p in sorted(paths, key=str):
            h.update(str(p).encode())
            h.update(str(p.stat().st_size).encode())
    return h.hexdigest()


def run_ingest(config: RunConfig, jobs: int = 1) -> DatasetCatalog:
    if config.dataset_root is None:
        raise ConfigError("no dataset_root configured")
    catalog = scan_dataset(config.dataset_root, jobs=jobs)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    records = []
    for r in catalog.records:
        paths = {"t2w": str(r.path_for(T2W.kind)), "adc": str(r.path_for("ADC"))}
        dwi = r.dwi_kind()
        paths["dwi"] = str(r.volume_paths[dwi])
        paths["dwi_b_value"] = dwi.b_value
        paths["prostate_mask"] = str(r.prostate_mask_path)
        paths["lesion_mask"] = str(r.lesion_mask_path) if r.lesion_mask_path else None
        records.append({"patient_id": r.patient_id, "label": r.label, "paths": paths})
    catalog_doc = {
        "n_records": len(catalog.records),
        "n_positive": catalog.n_positive,
        "n_negative": catalog.n_negative,
        "warnings": list(catalog.warnings),
        "records": records,
    }
    (out / "catalog.json").write_text(json.dumps(catalog_doc, indent=2, sort_keys=True) + "\n")

    _record_stage(
        config,
        "ingest",
        n_records=len(catalog.records),
        n_positive=catalog.n_positive,
        dataset_checksum=_dataset_checksum(Path(config.dataset_root), catalog),
        warnings=list(catalog.warnings),
    )
    return catalog


# ------------------------------------------------------------- preprocess

def _composite_paths(out_dir, patient_id):
    comp_dir = Path(out_dir) / "composites"
    return {
        "composite": comp_dir / f"{patient_id}_composite.nii.gz",
        "prostate": comp_dir / f"{patient_id}_prostate_mask.nii.gz",
        "lesion": comp_dir / f"{patient_id}_lesion_mask.nii.gz",
    }


def run_preprocess(config: RunConfig, jobs: int = 1) -> list[str]:
    manifest = _require_stage(config, "ingest")
    catalog = scan_dataset(config.dataset_root, jobs=jobs)
    recorded = manifest["stages"]["ingest"].get("dataset_checksum")
    current = _dataset_checksum(Path(config.dataset_root), catalog)
    if recorded != current:
        raise StalenessError("dataset contents changed since ingest; re-run ingest")

    comp_dir = Path(config.output_dir) / "composites"
    comp_dir.mkdir(parents=True, exist_ok=True)

    def process(record):
        t2w = load_volume(record.path_for("T2W"), T2W)
        adc = load_volume(record.path_for("ADC"), ADC)
        dwi_kind = record.dwi_kind()
        dwi = load_volume(record.volume_paths[dwi_kind], dwi_kind)
        prostate = load_mask(record.prostate_mask_path, MaskRole.PROSTATE)
        lesion = None
        if record.lesion_mask_path:
            lesion = load_mask(record.lesion_mask_path, MaskRole.LESION)
        pp = preprocess_patient(
            t2w,
            adc,
            dwi,
            prostate,
            config.preprocess,
            lesion=lesion,
            patient_id=record.patient_id,
            label=record.label,
        )
        paths = _composite_paths(config.output_dir, record.patient_id)
        save_composite(pp.composite, paths["composite"])
        write_volume(paths["prostate"], pp.prostate_mask.astype(np.uint8))
        if pp.lesion_mask is not None:
            write_volume(paths["lesion"], pp.lesion_mask.astype(np.uint8))
        return record.patient_id

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(process, catalog.records))
    else:
        done = [process(r) for r in catalog.records]

    _record_stage(config, "preprocess", n_patients=len(done))
    return done


# ------------------------------------------------------------------ train

def run_train(config: RunConfig) -> dict:
    _require_stage(config, "preprocess")
    out = Path(config.output_dir)
    store = CompositeStore.from_directory(out / "composites")
    ids = store.patient_ids()
    plan = make_loocv_folds(ids)

    results = []
    for i, fold in enumerate(plan.folds):
        result = train_fold(fold, config.train, config.model, store, checkpoint_dir=out / "folds")
        results.append(result)
        print(
            f"[train] fold {i + 1}/{len(plan.folds)} val={result.val_id} "
            f"label={result.label} pred={result.prediction.predicted_class} "
            f"loss={result.final_train_loss:.4f}",
            flush=True,
        )

    results.sort(key=lambda r: r.val_id)
    with open(out / "fold_results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["val_id", "label", "predicted_class", "probability_positive"])
        for r in results:
            writer.writerow(
                [r.val_id, r.label, r.prediction.predicted_class,
                 repr(r.prediction.probability_positive)]
            )

    cm = confusion_matrix(results)
    metrics = aggregate_metrics(cm)
    doc = {
        "n_folds": len(results),
        "confusion_matrix": {"tp": cm.tp, "tn": cm.tn, "fp": cm.fp, "fn": cm.fn},
        "metrics": {
            "accuracy": metrics.accuracy,
            "sensitivity": metrics.sensitivity,
            "specificity": metrics.specificity,
            "f1": metrics.f1,
        },
    }
    (out / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _record_stage(config, "train", n_folds=len(results))
    return doc


def read_fold_results(out_dir) -> list[dict]:
    path = Path(out_dir) / "fold_results.csv"
    if not path.is_file():
        raise IoError(f"fold results not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {
            "val_id": r["val_id"],
            "label": int(r["label"]),
            "predicted_class": int(r["predicted_class"]),
            "probability_positive": float(r["probability_positive"]),
        }
        for r in rows
    ]


# ---------------------------------------------------------------- explain

def _load_fold_classifier(config: RunConfig, checkpoint_path):
    if not Path(checkpoint_path).is_file():
        raise IoError(f"fold checkpoint missing: {checkpoint_path} (re-run train)")
    classifier = build_model(replace(config.model, init_checkpoint=None))
    load_pretrained(classifier, checkpoint_path)
    return classifier


def run_explain(config: RunConfig) -> dict:
    _require_stage(config, "train")
    out = Path(config.output_dir)
    store = CompositeStore.from_directory(out / "composites")
    results = read_fold_results(out)

    att_dir = out / "attention"
    summed_dir = out / "summed"
    att_dir.mkdir(parents=True, exist_ok=True)
    summed_dir.mkdir(parents=True, exist_ok=True)

    final_classifier = None
    if config.xai.model_source == "final":
        final_path = out / "folds" / "final.ckpt"
        if final_path.is_file():
            final_classifier = _load_fold_classifier(config, final_path)
        else:
            print("[explain] training full-cohort model for attention", flush=True)
            final_classifier = train_full(
                store.patient_ids(), config.train, config.model, store,
                checkpoint_path=final_path,
            )

    layout = config.preprocess.layout
    per_category: dict[str, list] = {}
    rows = []
    for r in sorted(results, key=lambda r: r["val_id"]):
        pid = r["val_id"]
        composite = store.composite(pid)
        if final_classifier is not None:
            classifier = final_classifier
        else:
            classifier = _load_fold_classifier(config, out / "folds" / f"{pid}.ckpt")
        class_index = 1 if config.xai.class_policy == "positive" else r["predicted_class"]
        amap = gradcam_pp(
            classifier,
            composite,
            class_index=class_index,
            layer_id=config.xai.layer_id,
            patient_id=pid,
        )
        category = categorize_outcome(r["predicted_class"], r["label"])
        write_volume(att_dir / f"{pid}_class{amap.class_index}.nii.gz", amap.values)
        per_category.setdefault(category.value, []).append(amap)

        paths = _composite_paths(out, pid)
        prostate_grid = mask_to_attention_grid(read_volume(paths["prostate"])[0], layout)
        row = {
            "patient_id": pid,
            "category": category.value,
            "class_index": amap.class_index,
            "prostate_mass": f"{attention_mass_in_mask(amap.values, prostate_grid):.6f}",
            "lesion_mass": "",
            "lesion_fraction": "",
        }
        if paths["lesion"].is_file():
            lesion_grid = mask_to_attention_grid(read_volume(paths["lesion"])[0], layout)
            row["lesion_mass"] = f"{attention_mass_in_mask(amap.values, lesion_grid):.6f}"
            row["lesion_fraction"] = f"{float((lesion_grid > 0).mean()):.6f}"
        rows.append(row)
        print(f"[explain] {pid} category={category.value} class={amap.class_index}", flush=True)

    for cat in sorted(per_category):
        summed = sum_attention_maps(per_category[cat], OutcomeCategory(cat))
        write_volume(summed_dir / f"{cat}.nii.gz", summed.values)
        (summed_dir / f"{cat}.json").write_text(
            json.dumps(
                {"category": cat, "n_contributors": summed.n_contributors},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )

    fieldnames = ["patient_id", "category", "class_index",
                  "lesion_mass", "lesion_fraction", "prostate_mass"]
    with open(out / "attention_mass.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    _record_stage(
        config,
        "explain",
        n_maps=len(rows),
        categories={cat: len(maps) for cat, maps in sorted(per_category.items())},
    )
    return {"n_maps": len(rows), "categories": sorted(per_category)}


# ----------------------------------------------------------------- report

def run_report(config: RunConfig) -> Path:
    _require_stage(config, "explain")
    out = Path(config.output_dir)
    report_dir = out / "report"
    panels_dir = report_dir / "panels"
    report_dir.mkdir(parents=True, exist_ok=True)
    panels_dir.mkdir(parents=True, exist_ok=True)

    metrics_doc = json.loads((out / "metrics.json").read_text())
    m = metrics_doc["metrics"]
    cm = metrics_doc["confusion_matrix"]

    with open(report_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["Acc", "Sen", "Spec", "F1"])
        writer.writerow(
            [f"{100 * m['accuracy']:.1f}", f"{100 * m['sensitivity']:.1f}",
             f"{100 * m['specificity']:.1f}", f"{100 * m['f1']:.1f}"]
        )

    store = CompositeStore.from_directory(out / "composites")
    results = read_fold_results(out)
    layout = config.preprocess.layout
    panel_files = []
    for r in sorted(results, key=lambda r: r["val_id"]):
        pid = r["val_id"]
        category = categorize_outcome(r["predicted_class"], r["label"]).value
        composite = store.composite(pid)
        class_index = 1 if config.xai.class_policy == "positive" else r["predicted_class"]
        att_path = out / "attention" / f"{pid}_class{class_index}.nii.gz"
        if not att_path.is_file():
            raise IoError(f"attention map missing: {att_path} (re-run explain)")
        attention = attention_per_slice(read_volume(att_path)[0], layout)
        lesion_path = _composite_paths(out, pid)["lesion"]
        lesion = read_volume(lesion_path)[0] if lesion_path.is_file() else None
        panel_files.extend(
            emit_patient_panel(
                pid,
                composite.channel("T2W"),
                attention,
                lesion_mask=lesion,
                out_dir=panels_dir,
                category=category,
            )
        )

    mass_path = out / "attention_mass.csv"
    mass_rows = []
    if mass_path.is_file():
        with open(mass_path, newline="") as fh:
            mass_rows = list(csv.DictReader(fh))
    tp_masses = [float(r["lesion_mass"]) for r in mass_rows
                 if r["category"] == "TP" and r["lesion_mass"]]
    tp_fractions = [float(r["lesion_fraction"]) for r in mass_rows
                    if r["category"] == "TP" and r["lesion_fraction"]]

    lines = [
        "# Run report",
        "",
        "## Cohort",
        "",
        f"- patients: {metrics_doc['n_folds']}",
        f"- confusion matrix: tp={cm['tp']} fn={cm['fn']} tn={cm['tn']} fp={cm['fp']}",
        "",
        "## Leave-one-out metrics",
        "",
        "| Acc | Sen | Spec | F1 |",
        "| --- | --- | --- | --- |",
        f"| {100 * m['accuracy']:.1f}% | {100 * m['sensitivity']:.1f}% "
        f"| {100 * m['specificity']:.1f}% | {100 * m['f1']:.1f}% |",
        "",
        "## Attention",
        "",
    ]
    if tp_masses:
        lines.append(
            f"- mean lesion attention mass over {len(tp_masses)} TP patients: "
            f"{sum(tp_masses) / len(tp_masses):.4f}"
        )
    if tp_fractions:
        lines.append(
            f"- mean lesion volume fraction (uniform-attention baseline): "
            f"{sum(tp_fractions) / len(tp_fractions):.4f}"
        )
    lines += [
        f"- per-patient table: attention_mass.csv",
        f"- panels: {len(panel_files)} image(s) under report/panels/",
        "",
    ]
    (report_dir / "report.md").write_text("\n".join(lines))

    _record_stage(config, "report", n_panels=len(panel_files))
    return report_dir
