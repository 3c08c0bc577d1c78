"""Release acceptance gate: seven criteria, each ending in one printed
``[criterion N] PASS/FAIL`` line (run with ``pytest -s`` to see them).

Criteria 4 and 5 share a single desk-scale synthetic cohort run (24
patients, reduced-depth network, 10 epochs per fold), which dominates the
suite's runtime.
"""

import csv
import json
import math
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import torch
import torch.nn as nn

from cspca.config import RunConfig
from cspca.dataset import scan_dataset
from cspca.gradcam import (
    attention_from_gradients,
    feature_gradients,
    gradcam_pp,
    normalize_map,
)
from cspca.loocv import (
    CompositeStore,
    ConfusionMatrix,
    FoldResult,
    aggregate_metrics,
    confusion_matrix,
    make_loocv_folds,
    train_fold,
)
from cspca.model import Classifier, Depth, ModelConfig, Prediction
from cspca.pipeline import run_explain, run_ingest, run_preprocess, run_train
from cspca.preprocess import (
    PreprocessParams,
    apply_crop,
    crop_box,
    mask_outside_prostate,
    preprocess_patient,
    resample_to_grid,
    standardize_slices,
)
from cspca.synthetic import SyntheticSpec, generate_dataset
from cspca.volume import ADC, DWI_B800, T2W, MaskRole, MaskVolume, ModalityVolume
from cspca.volume_io import read_volume, write_volume

PACKAGE_ROOT = Path(__file__).resolve().parents[1]


def _verdict(criterion: int, ok: bool, detail: str):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# =====================================================================
# Criterion 1: published-metrics reproduction via exhaustive search
# =====================================================================

# Published evaluation rows (Acc, Sen, Spec, F1 in percent) for a
# 200-patient cohort with 70 positives / 130 negatives. One cell was
# truncated rather than rounded at press time (132/137 = 96.3504% appears
# as 96.3), so a value matches its printed cell if either one-decimal
# convention reproduces it.
REPORTED_ROWS = [
    (97.5, 94.3, 99.2, 96.3),
    (65.0, 0.0, 100.0, 0.0),
    (85.0, 84.3, 85.4, 79.7),
]
EXPECTED_MATRICES = [  # (tp, fn, tn, fp) re-derived by the search below
    (66, 4, 129, 1),
    (0, 70, 130, 0),
    (59, 11, 111, 19),
]

N_POSITIVE, N_NEGATIVE = 70, 130


def _exact_percent(num: int, den: int) -> Fraction:
    return Fraction(100 * num, den) if den else Fraction(0)


def _matches_printed(value: Fraction, printed: float) -> bool:
    scaled = value * 10
    rounded = math.floor(scaled + Fraction(1, 2)) / 10.0
    truncated = math.floor(scaled) / 10.0
    return abs(rounded - printed) < 1e-9 or abs(truncated - printed) < 1e-9


def _row_metrics_exact(tp, fn, tn, fp):
    return (
        _exact_percent(tp + tn, N_POSITIVE + N_NEGATIVE),
        _exact_percent(tp, tp + fn),
        _exact_percent(tn, tn + fp),
        _exact_percent(2 * tp, 2 * tp + fp + fn),
    )


def test_criterion_1_reported_metrics():
    t0 = time.monotonic()
    derived = []
    unique = True
    for printed in REPORTED_ROWS:
        candidates = []
        for tp in range(N_POSITIVE + 1):
            fn = N_POSITIVE - tp
            for fp in range(N_NEGATIVE + 1):
                tn = N_NEGATIVE - fp
                exact = _row_metrics_exact(tp, fn, tn, fp)
                if all(_matches_printed(v, p) for v, p in zip(exact, printed)):
                    candidates.append((tp, fn, tn, fp))
        unique = unique and len(candidates) == 1
        derived.append(candidates[0] if candidates else None)

    matrices_ok = derived == EXPECTED_MATRICES

    within_tolerance = True
    for (tp, fn, tn, fp), printed in zip(EXPECTED_MATRICES, REPORTED_ROWS):
        report = aggregate_metrics(ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn))
        for value, cell in zip(
            (report.accuracy, report.sensitivity, report.specificity, report.f1), printed
        ):
            pct = 100.0 * value
            close = abs(pct - cell) <= 0.05 + 1e-9
            truncates = abs(math.floor(pct * 10) / 10.0 - cell) < 1e-9
            within_tolerance = within_tolerance and (close or truncates)

    elapsed = time.monotonic() - t0
    ok = unique and matrices_ok and within_tolerance and elapsed < 1.0
    _verdict(1, ok, f"3 matrices re-derived uniquely={unique and matrices_ok}, "
                    f"metrics within tolerance={within_tolerance}, {elapsed:.2f}s")


# =====================================================================
# Criterion 2: attention-map oracle equivalence on three toy networks
# =====================================================================

class _TwoStageNet(nn.Module):
    def __init__(self, features, tail):
        super().__init__()
        self.features = features
        self.tail = tail

    def forward(self, x):
        return self.tail(self.features(x))

    def feature_module(self, layer_id):
        modules = dict(self.named_modules())
        if layer_id not in modules:
            raise KeyError(layer_id)
        return modules[layer_id]


class _SmoothHead(nn.Module):
    """tanh -> global mean pool -> linear; smooth, so finite differences
    behave."""

    def __init__(self, k, seed, linear_only=False):
        super().__init__()
        torch.manual_seed(seed)
        self.fc = nn.Linear(k, 2)
        self.linear_only = linear_only

    def forward(self, a):
        h = a if self.linear_only else torch.tanh(a)
        return self.fc(h.mean(dim=(2, 3, 4)))


def _toy(features, tail):
    net = _TwoStageNet(features, tail).double()
    cfg = ModelConfig(depth=Depth.RESNET10_3D, in_channels=1, seed=0)
    return Classifier(net=net, config=cfg, feature_layer_id="features")


def _naive_closed_form(a, g, eps=1e-7):
    out = np.zeros(a.shape[1:], dtype=np.float64)
    for k in range(a.shape[0]):
        channel_sum = a[k].sum()
        weight = 0.0
        for idx in np.ndindex(a.shape[1:]):
            gv = float(g[(k,) + idx])
            denom = 2.0 * gv * gv + channel_sum * gv**3 + eps
            alpha = gv * gv / denom if denom != 0 else 0.0
            weight += alpha * max(gv, 0.0)
        out += weight * a[k]
    return np.maximum(out, 0.0)


def _check_toy(clf, x, class_index):
    """Returns (map max abs error vs naive oracle, FD worst relative error)."""
    fg = feature_gradients(clf, x, class_index=class_index)
    expected = normalize_map(_naive_closed_form(fg.activations, fg.gradients))
    got = gradcam_pp(clf, x, class_index=class_index).values
    map_err = float(np.max(np.abs(got.astype(np.float64) - expected)))

    def score(a_np):
        with torch.no_grad():
            return float(clf.net.tail(torch.from_numpy(a_np)[None])[0, class_index])

    # probe the 10 largest-magnitude gradient coordinates (all-zero nets
    # fall back to absolute agreement)
    flat_order = np.argsort(np.abs(fg.gradients), axis=None)[::-1][:10]
    step = 1e-3
    worst_rel = 0.0
    for flat in flat_order:
        idx = np.unravel_index(flat, fg.gradients.shape)
        up = fg.activations.copy()
        up[idx] += step
        down = fg.activations.copy()
        down[idx] -= step
        fd = (score(up) - score(down)) / (2 * step)
        grad = float(fg.gradients[idx])
        if abs(grad) > 1e-8:
            worst_rel = max(worst_rel, abs(fd - grad) / abs(grad))
        else:
            worst_rel = max(worst_rel, abs(fd - grad))  # absolute at zero
    return map_err, worst_rel


def test_criterion_2_attention_oracles():
    t0 = time.monotonic()
    rng = np.random.default_rng(21)
    x = rng.uniform(size=(1, 4, 5, 5)).astype(np.float32)

    # toy 1: constant score (zeroed head) -> zero gradients, zero map
    features = nn.Conv3d(1, 2, 3, padding=1)
    tail = _SmoothHead(2, seed=1)
    with torch.no_grad():
        tail.fc.weight.zero_()
        tail.fc.bias.zero_()
    clf1 = _toy(features, tail)
    err1, fd1 = _check_toy(clf1, x, class_index=1)
    zero_map = gradcam_pp(clf1, x, class_index=1).values.sum() == 0.0

    # toy 2: single feature map, linear head -> map proportional to input
    features = nn.Conv3d(1, 1, 1, bias=False)
    with torch.no_grad():
        features.weight.fill_(1.0)
    tail = _SmoothHead(1, seed=2, linear_only=True)
    with torch.no_grad():
        tail.fc.weight.copy_(torch.tensor([[0.0], [1.0]]))
        tail.fc.bias.zero_()
    clf2 = _toy(features, tail)
    err2, fd2 = _check_toy(clf2, x, class_index=1)
    identity_map = float(np.max(np.abs(
        gradcam_pp(clf2, x, class_index=1).values - normalize_map(x[0]))))

    # toy 3: two random conv layers with a smooth head
    torch.manual_seed(3)
    features = nn.Sequential(
        nn.Conv3d(1, 3, 3, padding=1), nn.Tanh(), nn.Conv3d(3, 4, 3, padding=1))
    tail = _SmoothHead(4, seed=4)
    clf3 = _toy(features, tail)
    err3, fd3 = _check_toy(clf3, x, class_index=0)

    elapsed = time.monotonic() - t0
    map_err = max(err1, err2, err3)
    fd_err = max(fd1, fd2, fd3)
    ok = (map_err <= 1e-5 and fd_err <= 1e-3 and zero_map
          and identity_map <= 1e-5 and elapsed < 60.0)
    _verdict(2, ok, f"map error {map_err:.2e} (<=1e-5), finite-diff error "
                    f"{fd_err:.2e} (<=1e-3), {elapsed:.1f}s")


# =====================================================================
# Criterion 3: fold partition properties and metric formula equivalence
# =====================================================================

def test_criterion_3_partitions_and_metrics():
    t0 = time.monotonic()
    partition_ok = True
    for n in range(2, 51):
        ids = [f"p{i:03d}" for i in range(n)]
        plan = make_loocv_folds(ids)
        partition_ok = partition_ok and len(plan.folds) == n
        partition_ok = partition_ok and [f.val_id for f in plan.folds] == ids
        for fold in plan.folds:
            partition_ok = partition_ok and len(fold.train_ids) == n - 1
            partition_ok = partition_ok and fold.val_id not in fold.train_ids
            partition_ok = partition_ok and (
                sorted(fold.train_ids + (fold.val_id,)) == ids)

    rng = np.random.default_rng(3)
    metrics_ok = True
    for _ in range(1000):
        n = int(rng.integers(1, 120))
        preds = rng.integers(0, 2, size=n)
        labels = rng.integers(0, 2, size=n)
        results = [
            FoldResult(
                val_id=str(i), label=int(l), final_train_loss=0.0,
                prediction=Prediction(logits=(1.0 - p, float(p)),
                                      predicted_class=int(p),
                                      probability_positive=float(p)),
            )
            for i, (p, l) in enumerate(zip(preds, labels))
        ]
        report = aggregate_metrics(confusion_matrix(results))

        tp = int(np.sum((preds == 1) & (labels == 1)))
        tn = int(np.sum((preds == 0) & (labels == 0)))
        fp = int(np.sum((preds == 1) & (labels == 0)))
        fn = int(np.sum((preds == 0) & (labels == 1)))
        want = (
            (tp + tn) / n,
            tp / (tp + fn) if tp + fn else 0.0,
            tn / (tn + fp) if tn + fp else 0.0,
            2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0,
        )
        got = (report.accuracy, report.sensitivity, report.specificity, report.f1)
        metrics_ok = metrics_ok and all(abs(a - b) <= 1e-12 for a, b in zip(got, want))

    elapsed = time.monotonic() - t0
    ok = partition_ok and metrics_ok and elapsed < 30.0
    _verdict(3, ok, f"partitions 2-50 hold={partition_ok}, 1000 metric vectors "
                    f"match={metrics_ok}, {elapsed:.1f}s")


# =====================================================================
# Criteria 4 + 5: desk-scale synthetic cohort, shared run
# =====================================================================

@dataclass
class _CohortRun:
    config: RunConfig
    out: Path
    synth_to_train_s: float
    explain_s: float


@pytest.fixture(scope="module")
def cohort_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cohort")
    data = base / "data"
    out = base / "out"
    t0 = time.monotonic()
    generate_dataset(SyntheticSpec(n_patients=24, positive_fraction=0.5, seed=0), data)
    config = RunConfig.from_dict({
        "dataset_root": str(data),
        "output_dir": str(out),
        "seed": 0,
        "preprocess": {"target_slices": 12, "in_plane_size": [32, 32]},
        "model": {"depth": "RESNET10_3D", "in_channels": 1},
        "train": {"learning_rate": 0.001, "epochs": 10, "batch_size": 4},
        # layer4's grid at this input size is 2x1x1 -- meaningless
        # spatially -- so tap an early stage with real resolution
        "xai": {"layer_id": "layer1"},
    })
    run_ingest(config)
    run_preprocess(config)
    run_train(config)
    t_train = time.monotonic()
    run_explain(config)
    t_explain = time.monotonic()
    return _CohortRun(config=config, out=out,
                      synth_to_train_s=t_train - t0,
                      explain_s=t_explain - t_train)


def test_criterion_4_synthetic_end_to_end(cohort_run):
    metrics = json.loads((cohort_run.out / "metrics.json").read_text())
    cm = metrics["confusion_matrix"]
    n_correct = cm["tp"] + cm["tn"]

    # per-seed determinism: retraining one fold reproduces its stored
    # prediction, probability, and checkpoint bytes exactly
    store = CompositeStore.from_directory(cohort_run.out / "composites")
    fold = make_loocv_folds(store).folds[0]
    with tempfile.TemporaryDirectory() as tmp:
        redo = train_fold(fold, cohort_run.config.train, cohort_run.config.model,
                          store, checkpoint_dir=tmp)
        stored = (cohort_run.out / "folds" / f"{fold.val_id}.ckpt").read_bytes()
        deterministic = redo.checkpoint_path.read_bytes() == stored

    with open(cohort_run.out / "fold_results.csv") as fh:
        row = next(r for r in csv.DictReader(fh) if r["val_id"] == fold.val_id)
    deterministic = (deterministic
                     and int(row["predicted_class"]) == redo.prediction.predicted_class
                     and row["probability_positive"]
                     == repr(redo.prediction.probability_positive))

    runtime_ok = cohort_run.synth_to_train_s <= 1800.0
    ok = n_correct >= 22 and deterministic and runtime_ok
    _verdict(4, ok, f"LOOCV {n_correct}/24 correct (>=22), fold rerun "
                    f"identical={deterministic}, synth->train "
                    f"{cohort_run.synth_to_train_s:.0f}s (<=1800s)")


def test_criterion_5_attention_focus(cohort_run):
    with open(cohort_run.out / "attention_mass.csv") as fh:
        rows = list(csv.DictReader(fh))
    tp_rows = [r for r in rows if r["category"] == "TP"]
    masses = [float(r["lesion_mass"]) for r in tp_rows]
    fractions = [float(r["lesion_fraction"]) for r in tp_rows]
    mean_mass = sum(masses) / len(masses) if masses else 0.0
    baseline = sum(fractions) / len(fractions) if fractions else 0.0
    focused = bool(tp_rows) and mean_mass >= 2.0 * baseline

    tn_path = cohort_run.out / "summed" / "TN.nii.gz"
    tn_ok = False
    if tn_path.is_file():
        values, _, _, _ = read_volume(tn_path)
        meta = json.loads((cohort_run.out / "summed" / "TN.json").read_text())
        bounded = float(values.min()) >= -1e-6 and float(values.max()) <= 1.0 + 1e-6
        peak = float(values.max())
        normalized = peak == 0.0 or abs(peak - 1.0) <= 1e-6
        tn_ok = bounded and normalized and meta["n_contributors"] >= 1

    runtime_ok = cohort_run.explain_s <= 300.0
    ok = focused and tn_ok and runtime_ok
    _verdict(5, ok, f"mean TP lesion mass {mean_mass:.3f} >= 2x baseline "
                    f"{baseline:.3f} -> {focused}, TN summed map valid={tn_ok}, "
                    f"explain {cohort_run.explain_s:.0f}s (<=300s)")


# =====================================================================
# Criterion 6: randomized preprocessing invariants
# =====================================================================

def _random_study(rng, with_lesion):
    s = int(rng.integers(8, 13))
    h = int(rng.integers(20, 29))
    w = int(rng.integers(20, 29))
    spacing = (float(rng.uniform(2.5, 3.5)),
               float(rng.uniform(0.4, 0.8)),
               float(rng.uniform(0.4, 0.8)))

    def modality(kind, shape, sp, origin):
        return ModalityVolume(
            voxels=rng.uniform(0.05, 1.0, size=shape).astype(np.float32),
            spacing=sp, origin=origin, direction=np.eye(3), modality=kind)

    t2w = modality(T2W, (s, h, w), spacing, (0.0, 0.0, 0.0))
    coarse = (s, h // 2, w // 2)
    coarse_spacing = (spacing[0], spacing[1] * 2, spacing[2] * 2)
    jitter = tuple(float(v) for v in rng.uniform(0.0, 1.0, size=3))
    adc = modality(ADC, coarse, coarse_spacing, jitter)
    dwi = modality(DWI_B800, coarse, coarse_spacing, jitter)

    mask = np.zeros((s, h, w), dtype=np.uint8)
    z0, z1 = 1, s - 1
    y0 = int(rng.integers(2, 6))
    y1 = int(rng.integers(h - 6, h - 2))
    x0 = int(rng.integers(2, 6))
    x1 = int(rng.integers(w - 6, w - 2))
    mask[z0:z1, y0:y1, x0:x1] = 1
    prostate = MaskVolume(voxels=mask, spacing=spacing, origin=(0.0, 0.0, 0.0),
                          direction=np.eye(3), role=MaskRole.PROSTATE)
    lesion = None
    if with_lesion:
        lmask = np.zeros_like(mask)
        lz = int(rng.integers(z0, z1))
        ly = int(rng.integers(y0, y1 - 3))
        lx = int(rng.integers(x0, x1 - 3))
        lmask[lz, ly:ly + 3, lx:lx + 3] = 1
        lesion = MaskVolume(voxels=lmask, spacing=spacing, origin=(0.0, 0.0, 0.0),
                            direction=np.eye(3), role=MaskRole.LESION)
    return t2w, adc, dwi, prostate, lesion


def test_criterion_6_preprocessing_invariants():
    t0 = time.monotonic()
    rng = np.random.default_rng(2026)
    violations = []
    for trial in range(200):
        with_lesion = trial % 2 == 0
        t2w, adc, dwi, prostate, lesion = _random_study(rng, with_lesion)
        params = PreprocessParams(
            target_slices=12,
            margin_frac=0.10,
            in_plane_size=(16, 16) if trial % 3 == 0 else None,
            mask_outside=trial % 5 == 0,
        )
        try:
            done = preprocess_patient(t2w, adc, dwi, prostate, params,
                                      lesion=lesion, patient_id=f"r{trial}")
        except Exception as exc:  # any failure is a violation
            violations.append(f"trial {trial}: {type(exc).__name__}: {exc}")
            continue

        c = done.composite
        vox = c.voxels
        if vox.shape[0] != 3 or vox.shape[1] != 12:
            violations.append(f"trial {trial}: composite shape {vox.shape}")
        if not (np.isfinite(vox).all() and vox.min() >= 0.0 and vox.max() <= 1.0 + 1e-6):
            violations.append(f"trial {trial}: values out of [0,1]")
        inter = c.interleaved()
        order_ok = all(
            np.array_equal(inter[3 * sl + ch], vox[ch, sl])
            for sl in range(12) for ch in range(3)
        )
        if not order_ok:
            violations.append(f"trial {trial}: interleave order broken")
        if c.model_array().shape != (1, 36) + vox.shape[2:]:
            violations.append(f"trial {trial}: model array shape")
        pm = done.prostate_mask
        if pm.shape != vox.shape[1:] or not np.isin(pm, (0, 1)).all() or pm.sum() == 0:
            violations.append(f"trial {trial}: prostate mask invalid")

        # crop-contains-mask on the same standardized grid
        prostate_r = resample_to_grid(prostate, t2w, nearest=True)
        p12 = standardize_slices(prostate_r, 12, mask=prostate_r)
        box = crop_box(p12, params.margin_frac)
        if apply_crop(p12, box).voxels.sum() != p12.voxels.sum():
            violations.append(f"trial {trial}: crop lost mask voxels")

        # masking idempotence
        channel = ModalityVolume(
            voxels=c.channel("T2W").astype(np.float32), spacing=(1.0, 1.0, 1.0),
            origin=(0.0, 0.0, 0.0), direction=np.eye(3), modality=T2W)
        grid_mask = MaskVolume(
            voxels=pm, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0),
            direction=np.eye(3), role=MaskRole.PROSTATE)
        masked_once = mask_outside_prostate(channel, grid_mask)
        masked_twice = mask_outside_prostate(masked_once, grid_mask)
        if not np.array_equal(masked_once.voxels, masked_twice.voxels):
            violations.append(f"trial {trial}: masking not idempotent")

    elapsed = time.monotonic() - t0
    ok = not violations and elapsed < 120.0
    head = "; ".join(violations[:3])
    _verdict(6, ok, f"200 randomized studies, {len(violations)} violations"
                    f"{(': ' + head) if head else ''}, {elapsed:.0f}s (<120s)")


# =====================================================================
# Criterion 7: non-reproducibility note + cohort layout conformance
# =====================================================================

def _write_dummy_patient(root, pid, label, seed):
    rng = np.random.default_rng(seed)
    pdir = root / pid
    pdir.mkdir(parents=True)
    fine = (6, 16, 16)
    coarse = (6, 8, 8)
    write_volume(pdir / "t2w.nii.gz", rng.uniform(size=fine).astype(np.float32),
                 spacing=(3.0, 0.5, 0.5))
    write_volume(pdir / "adc.nii.gz", rng.uniform(size=coarse).astype(np.float32),
                 spacing=(3.0, 1.0, 1.0))
    write_volume(pdir / "dwi_b800.nii.gz", rng.uniform(size=coarse).astype(np.float32),
                 spacing=(3.0, 1.0, 1.0))
    mask = np.zeros(fine, dtype=np.uint8)
    mask[1:5, 4:12, 4:12] = 1
    write_volume(pdir / "prostate_mask.nii.gz", mask, spacing=(3.0, 0.5, 0.5))
    if label == 1:
        lesion = np.zeros(fine, dtype=np.uint8)
        lesion[2:4, 6:10, 6:10] = 1
        write_volume(pdir / "lesion_mask.nii.gz", lesion, spacing=(3.0, 0.5, 0.5))


def test_criterion_7_note_and_layout_conformance(tmp_path):
    readme = (PACKAGE_ROOT / "README.md").read_text()
    lowered = readme.lower()
    note_ok = ("not reproducible" in lowered
               and all(v in readme for v in ("97.5", "65.0", "85.0")))

    data = tmp_path / "cohort"
    _write_dummy_patient(data, "ProstateX-0000", 0, seed=1)
    _write_dummy_patient(data, "ProstateX-0001", 1, seed=2)
    (data / "manifest.csv").write_text(
        "patient_id,label\nProstateX-0000,0\nProstateX-0001,1\n")

    catalog = scan_dataset(data)
    layout_ok = (catalog.patient_ids() == ["ProstateX-0000", "ProstateX-0001"]
                 and [r.label for r in catalog.records] == [0, 1]
                 and not catalog.warnings)

    config = RunConfig.from_dict({
        "dataset_root": str(data),
        "output_dir": str(tmp_path / "out"),
        "preprocess": {"target_slices": 12},
        "model": {"depth": "RESNET10_3D"},
    })
    run_ingest(config)
    done = run_preprocess(config)
    pipeline_ok = len(done) == 2 and all(
        (tmp_path / "out" / "composites" / f"{pid}_composite.nii.gz").is_file()
        for pid in ("ProstateX-0000", "ProstateX-0001"))

    ok = note_ok and layout_ok and pipeline_ok
    _verdict(7, ok, f"non-reproducibility note documented={note_ok}, 2-patient "
                    f"cohort-layout fixture ingests={layout_ok and pipeline_ok}")
