"""Network container and the two paper architectures.

cnn5: three conv/batchnorm/relu/maxpool blocks (kernels 7/5/3, filters
32/64/128), flatten, dense 128 and 64 with ReLU and dropout, softmax head
over the five beat classes. Operates on z-scored beat windows [B, 1, W].

bilstm2: bidirectional LSTM with 100 units per direction over [B, T, 2]
feature sequences, dense softmax head over {normal, AF}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import Rng
from ..dsp import zscore
from ..errors import ShapeError
from .layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool1d,
    ReLU,
)
from .recurrent import BiLstm

ARCH_CNN = "cnn5"
ARCH_BILSTM = "bilstm2"


@dataclass(frozen=True)
class CnnConfig:
    blocks: tuple[tuple[int, int], ...] = ((7, 32), (5, 64), (3, 128))
    pool: int = 2
    dense: tuple[int, ...] = (128, 64)
    dropout_rates: tuple[float, ...] = (0.3, 0.3)
    n_classes: int = 5
    input_len: int = 256

    def __post_init__(self):
        if any(k % 2 == 0 for k, _ in self.blocks):
            raise ValueError("conv kernels must be odd")
        filters = [f for _, f in self.blocks]
        if filters != sorted(filters):
            raise ValueError("filter counts must be non-decreasing")
        if len(self.dropout_rates) != len(self.dense):
            raise ValueError("need one dropout rate per hidden dense layer")

    @property
    def flat_dim(self) -> int:
        length = self.input_len
        for _ in self.blocks:
            length //= self.pool
        return length * self.blocks[-1][1]


@dataclass(frozen=True)
class BilstmConfig:
    input_dim: int = 2
    hidden: int = 100
    n_classes: int = 2

    def __post_init__(self):
        if self.hidden <= 0:
            raise ValueError(f"hidden size must be positive, got {self.hidden}")


@dataclass
class Network:
    layers: list[Layer]
    arch: str
    class_names: list[str]
    config: CnnConfig | BilstmConfig
    seed: int
    normalization: dict = field(default_factory=dict)

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def param_specs(self) -> list[tuple[str, np.ndarray, np.ndarray, bool]]:
        """(key, param, grad, decay) for every trainable array, stable order."""
        specs = []
        for i, layer in enumerate(self.layers):
            grads = layer.grads()
            decay = layer.decay_keys()
            for name, param in layer.params().items():
                specs.append((f"{i}.{name}", param, grads[name], name in decay))
        return specs

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Every array a saved model must carry, in manifest order."""
        arrays = [(key, param) for key, param, _, _ in self.param_specs()]
        for i, layer in enumerate(self.layers):
            if isinstance(layer, BatchNorm1d):
                for name, arr in layer.state().items():
                    arrays.append((f"{i}.{name}", arr))
        return arrays

    def assert_finite(self) -> None:
        for key, param, _, _ in self.param_specs():
            if not np.all(np.isfinite(param)):
                raise FloatingPointError(f"non-finite values in parameter {key}")

    @property
    def dtype(self) -> np.dtype:
        return self.param_specs()[0][1].dtype


def build_cnn(cfg: CnnConfig, class_names: list[str], rng: Rng, dtype="float64") -> Network:
    dtype = np.dtype(dtype)
    layers: list[Layer] = []
    c_in = 1
    key = 0
    for kernel, filters in cfg.blocks:
        layers.append(Conv1d(c_in, filters, kernel, rng.fork(key), dtype=dtype))
        layers.append(BatchNorm1d(filters, dtype=dtype))
        layers.append(ReLU())
        layers.append(MaxPool1d(cfg.pool, cfg.pool))
        c_in = filters
        key += 1
    layers.append(Flatten())
    d_in = cfg.flat_dim
    for width, rate in zip(cfg.dense, cfg.dropout_rates):
        layers.append(Dense(d_in, width, rng.fork(key), dtype=dtype))
        layers.append(ReLU())
        layers.append(Dropout(rate, rng.fork(100 + key)))
        d_in = width
        key += 1
    layers.append(Dense(d_in, cfg.n_classes, rng.fork(key), dtype=dtype))
    return Network(
        layers=layers,
        arch=ARCH_CNN,
        class_names=list(class_names),
        config=cfg,
        seed=rng.seed,
    )


def build_bilstm(cfg: BilstmConfig, class_names: list[str], rng: Rng, dtype="float64") -> Network:
    dtype = np.dtype(dtype)
    layers: list[Layer] = [
        BiLstm(cfg.input_dim, cfg.hidden, rng.fork(0), dtype=dtype),
        Dense(2 * cfg.hidden, cfg.n_classes, rng.fork(1), dtype=dtype),
    ]
    return Network(
        layers=layers,
        arch=ARCH_BILSTM,
        class_names=list(class_names),
        config=cfg,
        seed=rng.seed,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def forward_probs(net: Network, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Inference-mode class probabilities for a batch of inputs."""
    x = np.asarray(x, dtype=net.dtype)
    chunks = []
    for start in range(0, len(x), batch_size):
        logits = net.forward(x[start : start + batch_size], train=False)
        chunks.append(softmax(logits.astype(np.float64)))
    return np.concatenate(chunks) if chunks else np.zeros((0, len(net.class_names)))


def predict(net: Network, samples: np.ndarray, fs: float | None = None) -> tuple[int, np.ndarray]:
    """Classify one raw input: a W-sample beat window (cnn5) or a 30 s
    signal (bilstm2). Returns (class index, probability vector)."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if net.arch == ARCH_CNN:
        w = net.config.input_len
        if len(samples) != w:
            raise ShapeError(f"cnn5 expects exactly {w} samples, got {len(samples)}")
        x = zscore(samples)[None, None, :]
    elif net.arch == ARCH_BILSTM:
        from ..features import build_feature_sequence
        from ..ingest import ChannelSpec, Record, RecordHeader

        norm = net.normalization
        if fs is None:
            fs = float(norm["fs"])
        need = int(round(float(norm["seconds"]) * fs))
        if len(samples) < need:
            raise ShapeError(f"bilstm2 expects >= {need} samples at {fs} Hz, got {len(samples)}")
        header = RecordHeader(
            record_name="input",
            n_channels=1,
            fs=fs,
            n_samples=need,
            channels=[ChannelSpec(file_name="input", format_code=212, gain=1.0)],
        )
        record = Record(header=header, samples=samples[:need][None, :])
        seq = build_feature_sequence(
            record,
            label=0,
            norm_stats=(np.asarray(norm["mean"]), np.asarray(norm["std"])),
        )
        x = seq.normalized()[None, :, :]
    else:
        raise ShapeError(f"unknown architecture {net.arch!r}")
    probs = forward_probs(net, x)[0]
    return int(np.argmax(probs)), probs
