import numpy as np
import pytest

from ecgkit.dataset import Rng
from ecgkit.errors import DegenerateSignal, InsufficientPeaks, SignalTooShort
from ecgkit.features import (
    build_feature_sequence,
    feature_stats,
    instantaneous_frequency,
    rr_and_hr,
    spectral_entropy,
    stft_power,
)
from test_dsp import make_record


def naive_frame_power(frame: np.ndarray) -> np.ndarray:
    """Direct O(n^2) DFT power for bins 0..n/2, the oracle for stft_power."""
    n = len(frame)
    windowed = frame * np.hanning(n)
    bins = n // 2 + 1
    out = np.zeros(bins)
    for k in range(bins):
        re = sum(windowed[t] * np.cos(-2 * np.pi * k * t / n) for t in range(n))
        im = sum(windowed[t] * np.sin(-2 * np.pi * k * t / n) for t in range(n))
        out[k] = re * re + im * im
    return out


class TestRrAndHr:
    def test_regular_rhythm(self):
        morph = rr_and_hr([0, 360, 720], fs=360)
        assert morph.rr_intervals.tolist() == [1.0, 1.0]
        assert morph.mean_hr == pytest.approx(60.0)
        assert morph.rr_std == pytest.approx(0.0)

    def test_qrs_per_window(self):
        peaks = [100, 700, 1100, 1300, 2500]
        morph = rr_and_hr(peaks, fs=360)
        assert morph.qrs_per_window.tolist() == [3, 1, 1]

    def test_single_peak(self):
        with pytest.raises(InsufficientPeaks):
            rr_and_hr([100], fs=360)

    def test_shift_invariance(self):
        a = rr_and_hr([100, 400, 900], fs=300)
        b = rr_and_hr([1300, 1600, 2100], fs=300)
        assert np.allclose(a.rr_intervals, b.rr_intervals)
        assert a.mean_hr == b.mean_hr


class TestStftPower:
    def test_zero_signal(self):
        power = stft_power(np.zeros(600), fs=300)
        assert power.shape == (1 + (600 - 128) // 16, 65)
        assert np.all(power == 0)

    def test_matches_naive_dft(self):
        x = Rng(3).gen.normal(size=64)
        power = stft_power(x, fs=300, win=32, hop=32)
        for t in range(2):
            oracle = naive_frame_power(x[t * 32 : (t + 1) * 32])
            assert np.allclose(power[t], oracle, atol=1e-9)

    def test_bin_centered_sine_dominates(self):
        fs, win = 300.0, 128
        k = 10  # exactly bin 10
        t = np.arange(win * 3)
        x = np.sin(2 * np.pi * k * t / win)
        power = stft_power(x, fs, win=win, hop=win)
        for frame in power:
            # Hann leakage spreads into the two adjacent bins only
            assert frame[k - 1 : k + 2].sum() / frame.sum() > 0.99

    def test_parseval_per_frame(self):
        x = Rng(4).gen.normal(size=128)
        power = stft_power(x, fs=300, win=128, hop=128)
        windowed = x * np.hanning(128)
        # full-spectrum sum from the half spectrum (win even)
        full = power[0, 0] + 2 * power[0, 1:-1].sum() + power[0, -1]
        energy = 128 * (windowed**2).sum()
        assert abs(full - energy) / energy < 1e-6

    def test_window_longer_than_signal(self):
        with pytest.raises(SignalTooShort):
            stft_power(np.zeros(100), fs=300, win=128)


class TestInstantaneousFrequency:
    def test_pure_tone(self):
        fs = 300.0
        t = np.arange(9000) / fs
        x = np.sin(2 * np.pi * 10.0 * t)
        freq = instantaneous_frequency(x, fs)
        assert np.all(np.abs(freq - 10.0) < 1.5)

    def test_zero_signal(self):
        freq = instantaneous_frequency(np.zeros(1000), fs=300)
        assert np.all(freq == 0)

    def test_two_tone_average(self):
        fs = 300.0
        t = np.arange(9000) / fs
        x = np.sin(2 * np.pi * 10 * t) + np.sin(2 * np.pi * 30 * t)
        freq = instantaneous_frequency(x, fs)
        assert np.all(np.abs(freq - 20.0) < 2.0)

    def test_range(self):
        fs = 300.0
        x = Rng(5).gen.normal(size=3000)
        freq = instantaneous_frequency(x, fs)
        assert np.all(freq >= 0)
        assert np.all(freq <= fs / 2)


class TestSpectralEntropy:
    def test_impulse_frame_is_flat_spectrum(self):
        # a centered impulse has uniform DFT magnitude: entropy 1
        x = np.zeros(128)
        x[64] = 1.0
        h = spectral_entropy(x, fs=300, win=128, hop=128)
        assert h[0] == pytest.approx(1.0, abs=1e-9)

    def test_single_bin_entropy_zero(self):
        from ecgkit.features import entropy_of_power

        power = np.zeros((1, 65))
        power[0, 7] = 3.0
        assert entropy_of_power(power)[0] == 0.0

    def test_uniform_power_entropy_one(self):
        from ecgkit.features import entropy_of_power

        assert entropy_of_power(np.full((1, 65), 0.3))[0] == pytest.approx(1.0, abs=1e-12)

    def test_tone_entropy_low_noise_entropy_high(self):
        fs = 300.0
        t = np.arange(6000) / fs
        tone = spectral_entropy(np.sin(2 * np.pi * 10 * t), fs)
        assert tone.mean() < 0.35
        noise_values = []
        for s in range(100):
            noise = Rng(100 + s).gen.normal(size=1000)
            noise_values.append(spectral_entropy(noise, fs).mean())
        assert np.mean(noise_values) > 0.9

    def test_range(self):
        x = Rng(6).gen.normal(size=3000)
        h = spectral_entropy(x, fs=300)
        assert np.all(h >= 0)
        assert np.all(h <= 1)

    def test_zero_signal(self):
        assert np.all(spectral_entropy(np.zeros(1000), fs=300) == 0)


class TestBuildFeatureSequence:
    def test_frame_count_for_thirty_seconds(self):
        record = make_record(Rng(7).gen.normal(size=9000), fs=300)
        seq = build_feature_sequence(record, label=1)
        assert seq.frames.shape == (1 + (9000 - 128) // 16, 2)
        assert seq.frames.shape[0] == 555
        assert seq.label == 1

    def test_self_stats_normalize_to_zero_mean(self):
        record = make_record(Rng(8).gen.normal(size=9000), fs=300)
        seq = build_feature_sequence(record, label=0)
        normalized = seq.normalized()
        assert np.all(np.abs(normalized.mean(axis=0)) < 1e-9)
        assert np.allclose(normalized.std(axis=0), 1.0, atol=1e-9)

    def test_given_stats_attached_unchanged(self):
        record = make_record(Rng(9).gen.normal(size=9000), fs=300)
        stats = (np.array([5.0, 0.5]), np.array([2.0, 0.1]))
        seq = build_feature_sequence(record, label=0, norm_stats=stats)
        assert seq.stats[0] is stats[0]
        expected = (seq.frames - stats[0]) / stats[1]
        assert np.allclose(seq.normalized(), expected)

    def test_zero_variance_column_rejected(self):
        frames = np.column_stack([np.arange(10.0), np.full(10, 0.5)])
        with pytest.raises(DegenerateSignal) as exc:
            feature_stats(frames)
        assert "entropy" in str(exc.value)

    def test_csv_round_trip(self):
        from ecgkit.features import sequence_csv

        record = make_record(Rng(10).gen.normal(size=3000), fs=300)
        seq = build_feature_sequence(record, label=1)
        text = sequence_csv(seq)
        lines = text.strip().splitlines()
        assert lines[0] == "instfreq,entropy"
        assert len(lines) == 1 + len(seq.frames)
        parsed = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        assert np.array_equal(parsed, seq.frames)
