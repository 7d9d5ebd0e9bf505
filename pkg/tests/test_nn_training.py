import numpy as np
import pytest

from ecgkit.dataset import FoldSpec, Rng, stratified_kfold, synth_beat
from ecgkit.nn import (
    BilstmConfig,
    CnnConfig,
    Network,
    TrainConfig,
    build_cnn,
    evaluate_model,
    forward_probs,
    train_bilstm,
    train_cnn,
)

SMALL_CNN = CnnConfig(input_len=64, dense=(32, 16), dropout_rates=(0.1, 0.1))


def synth_windows(n_per_class: int, w: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Z-scored synthetic beat windows for all five classes."""
    rng = Rng(seed)
    windows = []
    labels = []
    for c in range(5):
        for _ in range(n_per_class):
            wave, _ = synth_beat(c, fs=360, rng=rng, length=w)
            wave = (wave - wave.mean()) / wave.std()
            windows.append(wave)
            labels.append(c)
    return np.stack(windows), np.array(labels)


def sequence_toy_data(n_per_class: int, t_len: int, seed: int):
    """Two trivially separable sequence classes: constant-frequency rows
    versus alternating rows."""
    rng = Rng(seed)
    xs = []
    ys = []
    for _ in range(n_per_class):
        base = np.full((t_len, 2), [0.5, 0.3]) + 0.05 * rng.gen.normal(size=(t_len, 2))
        xs.append(base)
        ys.append(0)
        alt = np.where(
            (np.arange(t_len) % 2 == 0)[:, None], [1.0, 0.8], [-1.0, -0.2]
        ) + 0.05 * rng.gen.normal(size=(t_len, 2))
        xs.append(alt)
        ys.append(1)
    return np.stack(xs), np.array(ys)


class TestTrainCnn:
    def test_loss_descends_on_toy_set(self):
        windows, labels = synth_windows(10, 64, seed=40)
        folds = FoldSpec(k=2, assignment=stratified_kfold(labels, 2, Rng(41)).assignment)
        cfg = TrainConfig(epochs=3, batch_size=10, seed=1, weight_decay=0.0)
        _, _, history = train_cnn(windows, labels, folds, cfg, SMALL_CNN, list("NLRAV"))
        fold0 = [e for e in history.epochs if e.fold == 0]
        assert fold0[-1].loss < fold0[0].loss

    def test_every_item_validates_once(self):
        windows, labels = synth_windows(6, 64, seed=42)
        folds = stratified_kfold(labels, 3, Rng(43))
        cfg = TrainConfig(epochs=1, batch_size=10, seed=2)
        _, cms, _ = train_cnn(windows, labels, folds, cfg, SMALL_CNN, list("NLRAV"))
        assert sum(cm.total for cm in cms) == len(labels)

    def test_overfits_tiny_set(self):
        windows, labels = synth_windows(4, 64, seed=44)
        folds = FoldSpec(k=2, assignment=np.array([0] * 10 + [1] * 10))
        # fold 1 trains on the first 10 items; drive those to 100%
        cfg = TrainConfig(epochs=200, batch_size=10, seed=3, weight_decay=0.0)
        arch = CnnConfig(input_len=64, dense=(32, 16), dropout_rates=(0.0, 0.0))
        models, _, history = train_cnn(windows, labels, folds, cfg, arch, list("NLRAV"))
        cm = evaluate_model(models[1], windows[:10, None, :], labels[:10])
        assert np.trace(cm.counts) == 10

    def test_determinism_bit_identical(self):
        windows, labels = synth_windows(5, 64, seed=45)
        folds = stratified_kfold(labels, 2, Rng(46))
        cfg = TrainConfig(epochs=2, batch_size=8, seed=7)
        models_a, cms_a, _ = train_cnn(windows, labels, folds, cfg, SMALL_CNN, list("NLRAV"))
        models_b, cms_b, _ = train_cnn(windows, labels, folds, cfg, SMALL_CNN, list("NLRAV"))
        for net_a, net_b in zip(models_a, models_b):
            for (ka, pa, _, _), (kb, pb, _, _) in zip(net_a.param_specs(), net_b.param_specs()):
                assert ka == kb
                assert np.array_equal(pa, pb)
        for cm_a, cm_b in zip(cms_a, cms_b):
            assert np.array_equal(cm_a.counts, cm_b.counts)

    def test_parallel_folds_match_sequential_bit_exact(self):
        windows, labels = synth_windows(8, 64, seed=49)
        folds = stratified_kfold(labels, 3, Rng(50))
        cfg = TrainConfig(epochs=2, batch_size=8, seed=9)
        seq = train_cnn(windows, labels, folds, cfg, SMALL_CNN, list("NLRAV"), n_jobs=1)
        par = train_cnn(windows, labels, folds, cfg, SMALL_CNN, list("NLRAV"), n_jobs=2)
        for net_a, net_b in zip(seq[0], par[0]):
            for (ka, pa, _, _), (kb, pb, _, _) in zip(net_a.param_specs(), net_b.param_specs()):
                assert ka == kb
                assert np.array_equal(pa, pb)
        for cm_a, cm_b in zip(seq[1], par[1]):
            assert np.array_equal(cm_a.counts, cm_b.counts)

    def test_chunked_accumulation_matches_single_chunk(self):
        # chunking is pure blocking; without batch statistics in the model
        # the accumulated update equals the whole-batch update
        train_x, train_y = sequence_toy_data(6, 10, seed=60)
        test_x, test_y = sequence_toy_data(2, 10, seed=61)
        arch = BilstmConfig(input_dim=2, hidden=6, n_classes=2)
        cfg_one = TrainConfig(epochs=2, batch_size=12, chunk_size=12, seed=3, dtype="float64")
        cfg_split = TrainConfig(epochs=2, batch_size=12, chunk_size=5, seed=3, dtype="float64")
        net_one, _, _, _ = train_bilstm(
            train_x, train_y, test_x, test_y, cfg_one, arch, ["n", "a"]
        )
        net_split, _, _, _ = train_bilstm(
            train_x, train_y, test_x, test_y, cfg_split, arch, ["n", "a"]
        )
        for (_, pa, _, _), (_, pb, _, _) in zip(
            net_one.param_specs(), net_split.param_specs()
        ):
            assert np.allclose(pa, pb, atol=1e-12)

    def test_synthetic_classes_learned(self):
        windows, labels = synth_windows(30, 64, seed=47)
        folds = stratified_kfold(labels, 2, Rng(48))
        cfg = TrainConfig(epochs=10, batch_size=16, seed=4)
        _, cms, _ = train_cnn(windows, labels, folds, cfg, SMALL_CNN, list("NLRAV"))
        for cm in cms:
            accuracy = np.trace(cm.counts) / cm.total
            assert accuracy >= 0.95


class TestTrainBilstm:
    def test_separable_classes_reach_perfect_accuracy(self):
        train_x, train_y = sequence_toy_data(20, 30, seed=50)
        test_x, test_y = sequence_toy_data(8, 30, seed=51)
        cfg = TrainConfig(epochs=30, batch_size=8, seed=5, weight_decay=0.0)
        arch = BilstmConfig(input_dim=2, hidden=16, n_classes=2)
        net, cm_train, cm_test, _ = train_bilstm(
            train_x, train_y, test_x, test_y, cfg, arch, ["normal", "af"]
        )
        assert np.trace(cm_test.counts) / cm_test.total == 1.0

    def test_determinism(self):
        train_x, train_y = sequence_toy_data(6, 12, seed=52)
        test_x, test_y = sequence_toy_data(3, 12, seed=53)
        cfg = TrainConfig(epochs=3, batch_size=4, seed=6)
        arch = BilstmConfig(input_dim=2, hidden=8, n_classes=2)
        result_a = train_bilstm(train_x, train_y, test_x, test_y, cfg, arch, ["n", "a"])
        result_b = train_bilstm(train_x, train_y, test_x, test_y, cfg, arch, ["n", "a"])
        assert np.array_equal(result_a[1].counts, result_b[1].counts)
        assert np.array_equal(result_a[2].counts, result_b[2].counts)
        for (ka, pa, _, _), (kb, pb, _, _) in zip(
            result_a[0].param_specs(), result_b[0].param_specs()
        ):
            assert np.array_equal(pa, pb)


class TestPredictProperties:
    def test_probabilities_sum_to_one(self):
        net = build_cnn(SMALL_CNN, list("NLRAV"), Rng(54))
        x = Rng(55).gen.normal(size=(10, 1, 64))
        probs = forward_probs(net, x)
        assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-9

    def test_batch_independence(self):
        net = build_cnn(SMALL_CNN, list("NLRAV"), Rng(56))
        row = Rng(57).gen.normal(size=(1, 1, 64))
        batch = np.repeat(row, 5, axis=0)
        probs = forward_probs(net, batch)
        for i in range(1, 5):
            assert np.allclose(probs[i], probs[0], atol=1e-12)

    def test_flat_dim_invariant(self):
        cfg = CnnConfig()
        assert cfg.input_len == 256
        assert cfg.flat_dim == 32 * 128 == 4096
        net = build_cnn(cfg, list("NLRAV"), Rng(58))
        out = net.forward(np.zeros((1, 1, 256)), False)
        assert out.shape == (1, 5)
