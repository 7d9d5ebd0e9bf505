"""Model file format: JSON manifest + float64 parameter blob + CRC32.

Layout: magic "ECGM", u32 manifest length, manifest JSON, concatenated
little-endian float64 arrays in manifest-declared order, u32 CRC32 over the
blob. Round-trips are bit-exact, so identical training runs produce
byte-identical files.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..dataset import Rng
from ..errors import CorruptModel, FormatError
from .network import (
    ARCH_BILSTM,
    ARCH_CNN,
    BilstmConfig,
    CnnConfig,
    Network,
    build_bilstm,
    build_cnn,
)

_MAGIC = b"ECGM"
_FORMAT_VERSION = 1


def model_fingerprint(path: str | Path) -> str:
    """Short content hash identifying the exact saved weights."""
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]


def save_model(net: Network, path: str | Path) -> None:
    arrays = net.state_arrays()
    manifest = {
        "format_version": _FORMAT_VERSION,
        "arch": net.arch,
        "class_names": net.class_names,
        "config": asdict(net.config),
        "seed": net.seed,
        "dtype": str(net.dtype),
        "normalization": net.normalization,
        "params": [{"key": key, "shape": list(arr.shape)} for key, arr in arrays],
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode()
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in arrays)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(manifest_bytes)))
        f.write(manifest_bytes)
        f.write(blob)
        f.write(struct.pack("<I", zlib.crc32(blob)))


def load_model(path: str | Path, expected_arch: str | None = None) -> Network:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != _MAGIC:
        raise FormatError("not a model file (bad magic)")
    (manifest_len,) = struct.unpack_from("<I", data, 4)
    manifest_end = 8 + manifest_len
    if len(data) < manifest_end + 4:
        raise FormatError("model file truncated")
    try:
        manifest = json.loads(data[8:manifest_end])
    except json.JSONDecodeError as e:
        raise FormatError(f"unreadable manifest: {e}") from None
    if manifest.get("format_version") != _FORMAT_VERSION:
        raise FormatError(f"unsupported format version {manifest.get('format_version')}")
    arch = manifest["arch"]
    if expected_arch is not None and arch != expected_arch:
        raise FormatError(f"expected architecture {expected_arch!r}, found {arch!r}")

    blob = data[manifest_end:-4]
    (stored_crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(blob) != stored_crc:
        raise CorruptModel("parameter blob checksum mismatch")

    rng = Rng(manifest["seed"])
    config = manifest["config"]
    dtype = manifest.get("dtype", "float64")
    if arch == ARCH_CNN:
        cfg = CnnConfig(
            blocks=tuple(tuple(b) for b in config["blocks"]),
            pool=config["pool"],
            dense=tuple(config["dense"]),
            dropout_rates=tuple(config["dropout_rates"]),
            n_classes=config["n_classes"],
            input_len=config["input_len"],
        )
        net = build_cnn(cfg, manifest["class_names"], rng, dtype=dtype)
    elif arch == ARCH_BILSTM:
        cfg = BilstmConfig(**config)
        net = build_bilstm(cfg, manifest["class_names"], rng, dtype=dtype)
    else:
        raise FormatError(f"unknown architecture {arch!r}")
    net.normalization = manifest["normalization"]

    arrays = dict(net.state_arrays())
    offset = 0
    for entry in manifest["params"]:
        key, shape = entry["key"], tuple(entry["shape"])
        if key not in arrays:
            raise FormatError(f"manifest parameter {key!r} not in architecture")
        target = arrays[key]
        if target.shape != shape:
            raise FormatError(f"parameter {key!r} shape {shape} != expected {target.shape}")
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        target[...] = values.reshape(shape)
        offset += count * 8
    if offset != len(blob):
        raise FormatError(f"parameter blob has {len(blob) - offset} unexpected trailing bytes")
    return net
