"""Training loops for the two architectures.

train_cnn rotates the stratified folds so every item validates exactly
once; train_bilstm works from a prepared 9:1 split with normalization
statistics taken from the training side only.

One optimizer step covers one batch (by default sized so an epoch makes a
fixed number of steps); the batch itself is computed in cache-sized chunks
whose gradients are accumulated exactly, so chunking never changes the
update, only the memory profile.

Training pins the BLAS pool to one thread: at these chunk sizes the GEMMs
are small enough that threading overhead loses outright, and a fixed
sequential reduction order makes results bit-identical across machines
with different core counts. Folds are independent, so train_cnn can run
them in parallel worker processes instead (n_jobs), with identical output.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np
from threadpoolctl import threadpool_limits

from ..dataset import FoldSpec, Rng
from ..errors import ShapeError
from ..evaluate import ConfusionMatrix, confusion
from .layers import softmax_xent, xent_grad
from .network import (
    BilstmConfig,
    CnnConfig,
    Network,
    build_bilstm,
    build_cnn,
    forward_probs,
)
from .optim import Adam, TrainConfig


@dataclass
class EpochStats:
    fold: int
    epoch: int
    loss: float
    accuracy: float


@dataclass
class History:
    epochs: list[EpochStats] = field(default_factory=list)

    def as_dicts(self) -> list[dict]:
        return [vars(e) for e in self.epochs]


def _train_epochs(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    shuffle_rng: Rng,
    history: History,
    fold: int,
    log=None,
) -> None:
    adam = Adam(cfg)
    n = len(x)
    batch_size = cfg.resolve_batch_size(n)
    chunk_size = min(cfg.chunk_size, batch_size)
    specs = net.param_specs()
    multi_chunk = chunk_size < batch_size
    accum = (
        {key: np.zeros_like(param) for key, param, _, _ in specs} if multi_chunk else None
    )
    for epoch in range(cfg.epochs):
        order = shuffle_rng.gen.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            if multi_chunk:
                for a in accum.values():
                    a[:] = 0.0
            for c_start in range(0, len(idx), chunk_size):
                c_idx = idx[c_start : c_start + chunk_size]
                logits = net.forward(x[c_idx], train=True)
                loss, probs = softmax_xent(logits, y[c_idx])
                net.backward(xent_grad(probs, y[c_idx]))
                if multi_chunk:
                    weight = len(c_idx) / len(idx)
                    for key, _, grad, _ in specs:
                        accum[key] += weight * grad
                total_loss += loss * len(c_idx)
                correct += int((probs.argmax(axis=1) == y[c_idx]).sum())
            if multi_chunk:
                adam.step([(k, p, accum[k], d) for k, p, _, d in specs])
            else:
                adam.step(specs)
        net.assert_finite()
        stats = EpochStats(
            fold=fold, epoch=epoch, loss=total_loss / n, accuracy=correct / n
        )
        history.epochs.append(stats)
        if log is not None:
            log(stats)


def evaluate_model(net: Network, x: np.ndarray, y: np.ndarray) -> ConfusionMatrix:
    with threadpool_limits(limits=1):
        probs = forward_probs(net, x)
    return confusion(y, probs.argmax(axis=1), len(net.class_names), net.class_names)


def _train_one_fold(
    fold: int,
    x: np.ndarray,
    labels: np.ndarray,
    val_mask: np.ndarray,
    cfg: TrainConfig,
    arch: CnnConfig,
    class_names: list[str],
    log=None,
) -> tuple[Network, ConfusionMatrix, History]:
    fold_rng = Rng(cfg.seed).fork(fold)
    net = build_cnn(arch, class_names, fold_rng.fork(0), dtype=cfg.dtype)
    net.seed = cfg.seed
    history = History()
    with threadpool_limits(limits=1):
        _train_epochs(
            net, x[~val_mask], labels[~val_mask], cfg, fold_rng.fork(1),
            history, fold, log=log,
        )
    cm = evaluate_model(net, x[val_mask], labels[val_mask])
    return net, cm, history


def _fold_worker(payload: bytes) -> bytes:
    args = pickle.loads(payload)
    result = _train_one_fold(*args)
    return pickle.dumps(result)


def train_cnn(
    windows: np.ndarray,
    labels: np.ndarray,
    folds: FoldSpec,
    cfg: TrainConfig,
    arch: CnnConfig,
    class_names: list[str],
    log=None,
    n_jobs: int = 1,
) -> tuple[list[Network], list[ConfusionMatrix], History]:
    """Train one model per fold; fold f validates on fold f's items.

    n_jobs > 1 trains folds in separate processes; each fold's stream of
    random draws and arithmetic is identical either way, so the outputs are
    byte-for-byte the same as a sequential run.
    """
    windows = np.asarray(windows, dtype=cfg.dtype)
    labels = np.asarray(labels, dtype=np.int64)
    if windows.ndim != 2 or windows.shape[1] != arch.input_len:
        raise ShapeError(f"expected [N, {arch.input_len}] windows, got {windows.shape}")
    x = windows[:, None, :]  # [N, 1, W]

    results: list[tuple[Network, ConfusionMatrix, History]] = []
    if n_jobs > 1 and folds.k > 1:
        payloads = [
            pickle.dumps(
                (fold, x, labels, folds.assignment == fold, cfg, arch, class_names, None)
            )
            for fold in range(folds.k)
        ]
        with get_context("spawn").Pool(min(n_jobs, folds.k)) as pool:
            results = [pickle.loads(r) for r in pool.map(_fold_worker, payloads)]
    else:
        for fold in range(folds.k):
            results.append(
                _train_one_fold(
                    fold, x, labels, folds.assignment == fold, cfg, arch, class_names,
                    log=log,
                )
            )

    models = [r[0] for r in results]
    fold_cms = [r[1] for r in results]
    history = History()
    for r in results:
        history.epochs.extend(r[2].epochs)
    return models, fold_cms, history


def train_bilstm(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    cfg: TrainConfig,
    arch: BilstmConfig,
    class_names: list[str],
    normalization: dict | None = None,
    log=None,
) -> tuple[Network, ConfusionMatrix, ConfusionMatrix, History]:
    """Train on normalized sequences [N, T, 2]; returns both confusion matrices."""
    train_x = np.asarray(train_x, dtype=cfg.dtype)
    test_x = np.asarray(test_x, dtype=cfg.dtype)
    if train_x.ndim != 3 or train_x.shape[2] != arch.input_dim:
        raise ShapeError(f"expected [N, T, {arch.input_dim}] sequences, got {train_x.shape}")
    train_y = np.asarray(train_y, dtype=np.int64)
    test_y = np.asarray(test_y, dtype=np.int64)
    root = Rng(cfg.seed)
    net = build_bilstm(arch, class_names, root.fork(0), dtype=cfg.dtype)
    net.seed = cfg.seed
    if normalization is not None:
        net.normalization = normalization
    history = History()
    with threadpool_limits(limits=1):
        _train_epochs(net, train_x, train_y, cfg, root.fork(1), history, fold=0, log=log)
    cm_train = evaluate_model(net, train_x, train_y)
    cm_test = evaluate_model(net, test_x, test_y)
    return net, cm_train, cm_test, history
