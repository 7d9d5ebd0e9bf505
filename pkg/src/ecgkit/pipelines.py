"""End-to-end dataset preparation, training and evaluation pipelines.

These functions do the work behind the CLI subcommands; they take plain
paths and configuration values so tests can drive them directly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluate as ev
from . import nn
from .dsp import segment_beats, standardize_length
from .errors import ParseError, SignalTooShort
from .features import build_feature_sequence, feature_stats
from .ingest import load_csv_signal, read_annotations, read_record

MITBIH_DATASET = "mitbih5"
AF_DATASET = "af2"
AF_CLASS_NAMES = ["normal", "af"]


def _beat_id(beat) -> str:
    return f"{beat.record_id}_{beat.r_sample}"


def prepare_mitbih(
    data_dir: str | Path,
    out_dir: str | Path,
    seed: int,
    window: int = 256,
    per_class: int = 8000,
    k: int = 5,
    demo_per_class: int = 10,
    channel_preference: str = "MLII",
) -> dict:
    """Parse every record in data_dir, segment beats, hold out demo items,
    rebalance, assign folds and persist the prepared dataset."""
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    rng = ds.Rng(seed)
    record_names = sorted(p.stem for p in data_dir.glob("*.hea"))
    if not record_names:
        raise ParseError(f"no .hea files under {data_dir}")

    beats = []
    extracted = np.zeros(len(ds.CLASS_SYMBOLS), dtype=np.int64)
    dropped_boundary = 0
    fs = None
    label_of = {s: i for i, s in enumerate(ds.CLASS_SYMBOLS)}
    for name in record_names:
        record = read_record(data_dir, name)
        annotations = read_annotations(data_dir, name)
        if fs is None:
            fs = record.fs
        elif fs != record.fs:
            raise ParseError(f"record {name} has fs {record.fs}, expected {fs}")
        channel = record.channel_index(channel_preference)
        if channel is None:
            channel = 0
        record_beats, report = segment_beats(record, annotations, channel, window, label_of)
        beats.extend(record_beats)
        dropped_boundary += report.dropped_boundary
        for b in record_beats:
            extracted[b.label] += 1

    full = ds.LabeledSet(
        items=beats,
        labels=np.array([b.label for b in beats]),
        class_names=list(ds.CLASS_SYMBOLS),
    )
    remaining, demo = ds.holdout_demo(full, demo_per_class, rng.fork(0))
    balanced = ds.rebalance(remaining, per_class, rng.fork(1))
    folds = ds.stratified_kfold(balanced.labels, k, rng.fork(2))

    windows = np.stack([b.window for b in balanced.items])
    split_info = ds.write_split(out_dir, "train", windows, balanced.labels)
    demo_entries = ds.write_demo_items(out_dir, demo, fs, id_of=_beat_id)
    manifest = {
        "dataset": MITBIH_DATASET,
        "class_names": list(ds.CLASS_SYMBOLS),
        "window": window,
        "fs": fs,
        "seed": seed,
        "counts": {
            "extracted_per_class": {
                s: int(extracted[i]) for i, s in enumerate(ds.CLASS_SYMBOLS)
            },
            "extracted_total": int(extracted.sum()),
            "dropped_boundary": dropped_boundary,
            "demo_per_class": demo_per_class,
            "balanced_per_class": per_class,
        },
        "folds": {"k": k, "assignment": folds.assignment.tolist()},
        "splits": {"train": split_info},
        "demo": demo_entries,
        "records": record_names,
    }
    ds.write_manifest(out_dir, manifest)
    return manifest


def prepare_af(
    data_dir: str | Path,
    out_dir: str | Path,
    seed: int,
    fs: float = 300.0,
    seconds: float = 30.0,
    test_fraction: float = 0.1,
) -> dict:
    """Prepare the binary corpus: CSV recordings plus a REFERENCE.csv of
    labels (N = normal, A = AF; other labels are excluded). Recordings
    shorter than `seconds` are dropped; longer ones are truncated."""
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    rng = ds.Rng(seed)
    reference = data_dir / "REFERENCE.csv"
    if not reference.exists():
        raise ParseError(f"missing {reference}")
    label_map = {"N": 0, "A": 1}
    entries: list[tuple[str, int]] = []
    excluded_label = 0
    for line_no, line in enumerate(reference.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 2:
            raise ParseError("expected '<id>,<label>'", line_no)
        if parts[1] in label_map:
            entries.append((parts[0], label_map[parts[1]]))
        else:
            excluded_label += 1

    placeholder = (np.zeros(2), np.ones(2))
    sequences = []
    labels = []
    too_short = 0
    for rec_id, label in entries:
        record = load_csv_signal((data_dir / f"{rec_id}.csv").read_text(), fs)
        try:
            record = standardize_length(record, seconds)
        except SignalTooShort:
            too_short += 1
            continue
        sequences.append(build_feature_sequence(record, label, norm_stats=placeholder))
        labels.append(label)

    usable = ds.LabeledSet(items=sequences, labels=np.array(labels), class_names=AF_CLASS_NAMES)
    train, test = ds.train_test_split(usable, test_fraction, rng.fork(0))
    majority = int(train.class_counts().max())
    train = ds.rebalance(train, majority, rng.fork(1))

    train_frames = np.stack([s.frames for s in train.items])  # [N, T, 2]
    test_frames = np.stack([s.frames for s in test.items])
    mean, std = feature_stats(train_frames.reshape(-1, 2))
    n_frames = train_frames.shape[1]

    train_info = ds.write_split(
        out_dir, "train", train_frames.reshape(len(train), -1), train.labels
    )
    test_info = ds.write_split(out_dir, "test", test_frames.reshape(len(test), -1), test.labels)
    manifest = {
        "dataset": AF_DATASET,
        "class_names": AF_CLASS_NAMES,
        "frames": int(n_frames),
        "columns": 2,
        "fs": fs,
        "seconds": seconds,
        "seed": seed,
        "normalization": {"mean": mean.tolist(), "std": std.tolist()},
        "counts": {
            "reference_entries": len(entries) + excluded_label,
            "excluded_label": excluded_label,
            "too_short": too_short,
            "usable": len(usable),
            "train": int(len(train)),
            "test": int(len(test)),
            "train_per_class": {
                n: int(c) for n, c in zip(AF_CLASS_NAMES, train.class_counts())
            },
            "test_per_class": {
                n: int(c) for n, c in zip(AF_CLASS_NAMES, test.class_counts())
            },
        },
        "splits": {"train": train_info, "test": test_info},
    }
    ds.write_manifest(out_dir, manifest)
    return manifest


def _load_mitbih(data_dir: Path) -> tuple[dict, np.ndarray, np.ndarray, ds.FoldSpec]:
    manifest = ds.read_manifest(data_dir)
    if manifest.get("dataset") != MITBIH_DATASET:
        raise ParseError(f"{data_dir} does not hold a prepared beat dataset")
    windows, labels = ds.read_split(data_dir, "train", manifest["window"])
    folds = ds.FoldSpec(
        k=manifest["folds"]["k"],
        assignment=np.asarray(manifest["folds"]["assignment"], dtype=np.int64),
    )
    return manifest, windows, labels, folds


def run_train_cnn(
    data_dir: str | Path,
    out_dir: str | Path,
    cfg: nn.TrainConfig,
    arch: nn.CnnConfig | None = None,
    log=None,
    n_jobs: int = 1,
) -> dict:
    """Train the five fold models and write models, metrics and history."""
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    manifest, windows, labels, folds = _load_mitbih(data_dir)
    if arch is None:
        arch = nn.CnnConfig(input_len=manifest["window"])
    models, fold_cms, history = nn.train_cnn(
        windows, labels, folds, cfg, arch, manifest["class_names"], log=log,
        n_jobs=n_jobs,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    for f, net in enumerate(models):
        nn.save_model(net, out_dir / f"model_fold{f}.ecgm")
    combined = ev.combine(fold_cms)
    fold_accuracies = [ev.overall_accuracy(cm) for cm in fold_cms]
    (out_dir / "metrics.csv").write_text(ev.metrics_csv(ev.per_class_metrics(combined)))
    (out_dir / "metrics.json").write_text(ev.metrics_json(combined, fold_accuracies))
    (out_dir / "confusion.txt").write_text(ev.confusion_text(combined))
    (out_dir / "history.json").write_text(
        json.dumps({"epochs": history.as_dicts()}, indent=2, sort_keys=True) + "\n"
    )
    summary = {
        "fold_accuracies": fold_accuracies,
        "overall_accuracy": ev.overall_accuracy(combined),
        "confusion": combined.counts.tolist(),
        "models": [f"model_fold{f}.ecgm" for f in range(len(models))],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run_train_bilstm(
    data_dir: str | Path,
    out_dir: str | Path,
    cfg: nn.TrainConfig,
    arch: nn.BilstmConfig | None = None,
    log=None,
) -> dict:
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    manifest = ds.read_manifest(data_dir)
    if manifest.get("dataset") != AF_DATASET:
        raise ParseError(f"{data_dir} does not hold a prepared sequence dataset")
    frames = manifest["frames"]
    row_len = frames * manifest["columns"]
    train_rows, train_y = ds.read_split(data_dir, "train", row_len)
    test_rows, test_y = ds.read_split(data_dir, "test", row_len)
    mean = np.asarray(manifest["normalization"]["mean"])
    std = np.asarray(manifest["normalization"]["std"])
    train_x = (train_rows.reshape(len(train_rows), frames, 2) - mean) / std
    test_x = (test_rows.reshape(len(test_rows), frames, 2) - mean) / std
    if arch is None:
        arch = nn.BilstmConfig()
    normalization = {
        "mean": mean.tolist(),
        "std": std.tolist(),
        "fs": manifest["fs"],
        "seconds": manifest["seconds"],
    }
    net, cm_train, cm_test, history = nn.train_bilstm(
        train_x,
        train_y,
        test_x,
        test_y,
        cfg,
        arch,
        manifest["class_names"],
        normalization=normalization,
        log=log,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    nn.save_model(net, out_dir / "model.ecgm")
    (out_dir / "metrics.csv").write_text(ev.metrics_csv(ev.per_class_metrics(cm_test)))
    (out_dir / "metrics.json").write_text(ev.metrics_json(cm_test))
    (out_dir / "confusion.txt").write_text(
        "train:\n" + ev.confusion_text(cm_train) + "test:\n" + ev.confusion_text(cm_test)
    )
    (out_dir / "history.json").write_text(
        json.dumps({"epochs": history.as_dicts()}, indent=2, sort_keys=True) + "\n"
    )
    summary = {
        "train_accuracy": ev.overall_accuracy(cm_train),
        "test_accuracy": ev.overall_accuracy(cm_test),
        "confusion_train": cm_train.counts.tolist(),
        "confusion_test": cm_test.counts.tolist(),
        "model": "model.ecgm",
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run_evaluate(
    data_dir: str | Path,
    models_dir: str | Path,
    out_dir: str | Path,
    svg: bool = False,
) -> dict:
    """Re-run inference for saved models against a prepared dataset."""
    data_dir = Path(data_dir)
    models_dir = Path(models_dir)
    out_dir = Path(out_dir)
    manifest = ds.read_manifest(data_dir)
    if manifest.get("dataset") == MITBIH_DATASET:
        _, windows, labels, folds = _load_mitbih(data_dir)
        x = windows[:, None, :]
        fold_cms = []
        for f in range(folds.k):
            net = nn.load_model(models_dir / f"model_fold{f}.ecgm", expected_arch=nn.ARCH_CNN)
            mask = folds.assignment == f
            fold_cms.append(nn.evaluate_model(net, x[mask], labels[mask]))
        combined = ev.combine(fold_cms)
        fold_accuracies = [ev.overall_accuracy(cm) for cm in fold_cms]
    elif manifest.get("dataset") == AF_DATASET:
        frames = manifest["frames"]
        rows, labels = ds.read_split(data_dir, "test", frames * manifest["columns"])
        net = nn.load_model(models_dir / "model.ecgm", expected_arch=nn.ARCH_BILSTM)
        mean = np.asarray(net.normalization["mean"])
        std = np.asarray(net.normalization["std"])
        x = (rows.reshape(len(rows), frames, 2) - mean) / std
        combined = nn.evaluate_model(net, x, labels)
        fold_accuracies = None
    else:
        raise ParseError(f"unknown dataset kind in {data_dir}")

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ev.per_class_metrics(combined)
    (out_dir / "metrics.csv").write_text(ev.metrics_csv(rows))
    (out_dir / "metrics.json").write_text(ev.metrics_json(combined, fold_accuracies))
    (out_dir / "confusion.txt").write_text(ev.confusion_text(combined))
    if svg:
        (out_dir / "confusion.svg").write_text(ev.confusion_svg(combined))
    return {
        "overall_accuracy": ev.overall_accuracy(combined),
        "fold_accuracies": fold_accuracies,
    }


def load_demo_items(prepared_dir: str | Path) -> list[dict]:
    """Demo holdout items from a prepared dataset directory."""
    prepared_dir = Path(prepared_dir)
    manifest = ds.read_manifest(prepared_dir)
    fs = manifest["fs"]
    items = []
    for entry in manifest.get("demo", []):
        record = load_csv_signal((prepared_dir / entry["path"]).read_text(), fs)
        items.append(
            {
                "id": entry["id"],
                "label": entry["label"],
                "fs": fs,
                "samples": record.samples[0].tolist(),
            }
        )
    return items
