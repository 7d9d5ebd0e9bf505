"""Command-line interface.

Subcommands: prepare-mitbih, prepare-af, train-cnn, train-bilstm, evaluate,
classify, detect-qrs, serve. Every command takes --config (JSON defaults,
overridden by flags), --seed and --out. Exit codes: 0 success, 1 usage
error, 2 data error, 3 integrity/model error.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from . import nn, pipelines
from .dsp import detect_qrs
from .errors import (
    CorruptModel,
    EcgKitError,
    FormatError,
    IntegrityError,
)
from .features import rr_and_hr
from .ingest import load_csv_signal
from .nn.serialize import model_fingerprint

_INTEGRITY_ERRORS = (IntegrityError, FormatError, CorruptModel)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise click.UsageError(f"cannot read config {path}: {e}")
    if not isinstance(config, dict):
        raise click.UsageError(f"config {path} must hold a JSON object")
    return config


def _setting(config: dict, key: str, flag_value, default):
    """Flags override config values, which override defaults."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _train_config(config: dict, seed: int, batch_size, epochs) -> nn.TrainConfig:
    section = config.get("train", {})
    return nn.TrainConfig(
        lr=section.get("lr", 1e-3),
        beta1=section.get("beta1", 0.9),
        beta2=section.get("beta2", 0.999),
        eps=section.get("eps", 1e-8),
        batch_size=_setting(section, "batch_size", batch_size, None),
        epochs=_setting(section, "epochs", epochs, 50),
        seed=seed,
        weight_decay=section.get("weight_decay", 1e-4),
    )


def _echo_epoch(stats) -> None:
    click.echo(
        f"fold {stats.fold} epoch {stats.epoch}: "
        f"loss {stats.loss:.4f} acc {stats.accuracy:.4f}",
        err=True,
    )


common_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="JSON config file; flags override its values."),
    click.option("--seed", type=int, default=None, help="PRNG seed (default 0)."),
    click.option("--out", "out_dir", type=click.Path(), default=None,
                 help="Output directory."),
]


def with_common(f):
    for option in reversed(common_options):
        f = option(f)
    return f


@click.group()
def cli():
    """ECG arrhythmia toolkit."""


@cli.command("prepare-mitbih")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True,
              help="Directory of .hea/.dat/.atr files.")
@click.option("--window", type=int, default=None, help="Beat window length (default 256).")
@click.option("--per-class", type=int, default=None, help="Beats per class after rebalance (default 8000).")
@click.option("--k", type=int, default=None, help="Cross-validation folds (default 5).")
@click.option("--demo-per-class", type=int, default=None, help="Demo holdout per class (default 10).")
@click.option("--channel", default=None,
              help="Preferred lead description (default MLII; falls back to channel 0).")
@with_common
def prepare_mitbih_cmd(data_dir, window, per_class, k, demo_per_class, channel,
                       config_path, seed, out_dir):
    """Parse a beat database directory into a prepared training set."""
    config = _load_config(config_path)
    out = _setting(config, "out", out_dir, None)
    if out is None:
        raise click.UsageError("--out is required")
    manifest = pipelines.prepare_mitbih(
        data_dir,
        out,
        seed=_setting(config, "seed", seed, 0),
        window=_setting(config, "window", window, 256),
        per_class=_setting(config, "per_class", per_class, 8000),
        k=_setting(config, "k", k, 5),
        demo_per_class=_setting(config, "demo_per_class", demo_per_class, 10),
        channel_preference=_setting(config, "channel", channel, "MLII"),
    )
    click.echo(json.dumps(manifest["counts"], indent=2, sort_keys=True))


@cli.command("prepare-af")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True,
              help="Directory of <id>.csv recordings plus REFERENCE.csv labels.")
@click.option("--fs", type=float, default=None, help="Sampling frequency (default 300).")
@click.option("--seconds", type=float, default=None, help="Standardized length (default 30).")
@click.option("--test-fraction", type=float, default=None, help="Test share (default 0.1).")
@with_common
def prepare_af_cmd(data_dir, fs, seconds, test_fraction, config_path, seed, out_dir):
    """Prepare the binary normal-vs-AF corpus from converted CSVs."""
    config = _load_config(config_path)
    out = _setting(config, "out", out_dir, None)
    if out is None:
        raise click.UsageError("--out is required")
    manifest = pipelines.prepare_af(
        data_dir,
        out,
        seed=_setting(config, "seed", seed, 0),
        fs=_setting(config, "fs", fs, 300.0),
        seconds=_setting(config, "seconds", seconds, 30.0),
        test_fraction=_setting(config, "test_fraction", test_fraction, 0.1),
    )
    click.echo(json.dumps(manifest["counts"], indent=2, sort_keys=True))


@cli.command("train-cnn")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True,
              help="Prepared beat dataset directory.")
@click.option("--batch-size", type=int, default=None,
              help="Mini-batch size (default: one 36th of the training items).")
@click.option("--epochs", type=int, default=None, help="Training epochs per fold (default 50).")
@click.option("--jobs", type=int, default=None,
              help="Worker processes for fold training (default: CPU count).")
@click.option("--quiet", is_flag=True, help="Suppress per-epoch progress.")
@with_common
def train_cnn_cmd(data_dir, batch_size, epochs, jobs, quiet, config_path, seed, out_dir):
    """Train the five-fold beat classifier."""
    import os

    config = _load_config(config_path)
    out = _setting(config, "out", out_dir, None)
    if out is None:
        raise click.UsageError("--out is required")
    cfg = _train_config(config, _setting(config, "seed", seed, 0), batch_size, epochs)
    n_jobs = _setting(config, "jobs", jobs, os.cpu_count() or 1)
    summary = pipelines.run_train_cnn(
        data_dir, out, cfg, log=None if quiet or n_jobs > 1 else _echo_epoch,
        n_jobs=n_jobs,
    )
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@cli.command("train-bilstm")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True,
              help="Prepared sequence dataset directory.")
@click.option("--batch-size", type=int, default=None, help="Mini-batch size (default 36).")
@click.option("--epochs", type=int, default=None, help="Training epochs (default 30).")
@click.option("--quiet", is_flag=True, help="Suppress per-epoch progress.")
@with_common
def train_bilstm_cmd(data_dir, batch_size, epochs, quiet, config_path, seed, out_dir):
    """Train the binary normal-vs-AF classifier."""
    config = _load_config(config_path)
    out = _setting(config, "out", out_dir, None)
    if out is None:
        raise click.UsageError("--out is required")
    cfg = _train_config(config, _setting(config, "seed", seed, 0), batch_size,
                        30 if epochs is None else epochs)
    summary = pipelines.run_train_bilstm(
        data_dir, out, cfg, log=None if quiet else _echo_epoch
    )
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@cli.command("evaluate")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True,
              help="Prepared dataset directory.")
@click.option("--models", "models_dir", type=click.Path(exists=True), required=True,
              help="Directory of trained model files.")
@click.option("--svg", is_flag=True, help="Also write an SVG confusion heatmap.")
@with_common
def evaluate_cmd(data_dir, models_dir, svg, config_path, seed, out_dir):
    """Recompute metrics for saved models on a prepared dataset."""
    config = _load_config(config_path)
    out = _setting(config, "out", out_dir, None)
    if out is None:
        raise click.UsageError("--out is required")
    result = pipelines.run_evaluate(data_dir, models_dir, out, svg=svg)
    click.echo(json.dumps(result, indent=2, sort_keys=True))


@cli.command("classify")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help="CSV file, one sample per line.")
@click.option("--fs", type=float, default=None,
              help="Sampling frequency of the input (model default otherwise).")
@with_common
def classify_cmd(model_path, input_path, fs, config_path, seed, out_dir):
    """Classify one input; prints a JSON object on standard output."""
    net = nn.load_model(model_path)
    record = load_csv_signal(Path(input_path).read_text(), fs or 360.0)
    start = time.perf_counter()
    class_index, probs = nn.predict(net, record.samples[0], fs=fs)
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    click.echo(
        json.dumps(
            {
                "label": net.class_names[class_index],
                "class_index": class_index,
                "probabilities": probs.tolist(),
                "model_version": model_fingerprint(model_path),
                "elapsed_ms": elapsed_ms,
            },
            sort_keys=True,
        )
    )


@cli.command("detect-qrs")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help="CSV file, one sample per line.")
@click.option("--fs", type=float, required=True, help="Sampling frequency in Hz.")
@with_common
def detect_qrs_cmd(input_path, fs, config_path, seed, out_dir):
    """Detect R peaks; prints indices and rhythm features as JSON."""
    record = load_csv_signal(Path(input_path).read_text(), fs)
    rpeaks = detect_qrs(record.samples[0], fs)
    payload: dict = {"rpeaks": rpeaks, "count": len(rpeaks)}
    if len(rpeaks) >= 2:
        morph = rr_and_hr(rpeaks, fs)
        payload["mean_hr"] = morph.mean_hr
        payload["rr_std"] = morph.rr_std
        payload["qrs_per_window"] = morph.qrs_per_window.tolist()
    click.echo(json.dumps(payload, sort_keys=True))


@cli.command("serve")
@click.option("--model", "model_specs", multiple=True, required=True,
              help="tag=path, e.g. cnn5=models/model_fold0.ecgm; repeatable.")
@click.option("--demo", "demo_dir", type=click.Path(exists=True), default=None,
              help="Prepared dataset directory holding the demo holdout.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@with_common
def serve_cmd(model_specs, demo_dir, host, port, config_path, seed, out_dir):
    """Run the JSON inference service (blocks until interrupted)."""
    import socket

    import uvicorn

    from .service import create_app

    models = {}
    versions = {}
    for spec in model_specs:
        if "=" not in spec:
            raise click.UsageError(f"--model expects tag=path, got {spec!r}")
        tag, path = spec.split("=", 1)
        models[tag] = nn.load_model(path, expected_arch=tag)
        versions[tag] = model_fingerprint(path)
    demo_items = pipelines.load_demo_items(demo_dir) if demo_dir else []
    app = create_app(models, versions, demo_items)
    # models must load before binding; a taken port is a startup failure
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as e:
        raise click.ClickException(f"cannot bind {host}:{port}: {e}")
    finally:
        probe.close()
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return 0 if e.exit_code == 0 else 1
    except click.ClickException as e:
        e.show(file=sys.stderr)
        return 1
    except _INTEGRITY_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except EcgKitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
