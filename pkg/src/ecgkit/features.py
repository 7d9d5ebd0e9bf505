"""Morphological and spectral features for the normal-vs-AF pipeline.

RR-interval statistics describe rhythm regularity; the two short-time
spectral features (instantaneous frequency and spectral entropy) feed the
recurrent classifier as a T x 2 sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSignal, InsufficientPeaks, SignalTooShort
from .ingest import Record

STFT_WIN = 128
STFT_HOP = 16
QRS_COUNT_WINDOW = 1200  # samples per disjoint counting window


@dataclass(frozen=True)
class MorphFeatures:
    rr_intervals: np.ndarray  # seconds, length n_peaks - 1
    mean_hr: float  # beats per minute
    rr_std: float  # population std, seconds
    qrs_per_window: np.ndarray  # counts in consecutive 1200-sample windows


def rr_and_hr(rpeaks: list[int] | np.ndarray, fs: float) -> MorphFeatures:
    """RR intervals, mean heart rate and per-window QRS counts."""
    rpeaks = np.asarray(rpeaks, dtype=np.int64)
    if len(rpeaks) < 2:
        raise InsufficientPeaks(f"need >= 2 R peaks, got {len(rpeaks)}")
    if np.any(np.diff(rpeaks) <= 0):
        raise ValueError("R peaks must be strictly increasing")
    rr = np.diff(rpeaks) / fs
    mean_hr = 60.0 / rr.mean()
    n_windows = int(rpeaks[-1] // QRS_COUNT_WINDOW) + 1
    counts = np.bincount(rpeaks // QRS_COUNT_WINDOW, minlength=n_windows)
    return MorphFeatures(
        rr_intervals=rr,
        mean_hr=float(mean_hr),
        rr_std=float(rr.std()),
        qrs_per_window=counts,
    )


def stft_power(x: np.ndarray, fs: float, win: int = STFT_WIN, hop: int = STFT_HOP) -> np.ndarray:
    """Hann-windowed short-time power spectrum, frames x bins [0..win/2].

    T = 1 + floor((len(x) - win) / hop); power is the squared DFT magnitude.
    """
    x = np.asarray(x, dtype=np.float64)
    if hop < 1:
        raise ValueError(f"hop must be >= 1, got {hop}")
    if win > len(x):
        raise SignalTooShort(f"window {win} exceeds signal length {len(x)}")
    n_frames = 1 + (len(x) - win) // hop
    starts = np.arange(n_frames) * hop
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[starts]
    window = np.hanning(win)
    spectrum = np.fft.rfft(frames * window, axis=1)
    return np.abs(spectrum) ** 2


def instantaneous_frequency(
    x: np.ndarray, fs: float, win: int = STFT_WIN, hop: int = STFT_HOP
) -> np.ndarray:
    """Power-weighted mean frequency (spectral first moment) per frame, Hz.

    Frames with total power below 1e-12 yield 0.
    """
    power = stft_power(x, fs, win, hop)
    freqs = np.arange(power.shape[1]) * fs / win
    total = power.sum(axis=1)
    out = np.zeros(len(power))
    live = total >= 1e-12
    out[live] = (power[live] * freqs).sum(axis=1) / total[live]
    return out


def entropy_of_power(power: np.ndarray) -> np.ndarray:
    """Normalized Shannon entropy per row of a [T, F] power matrix.

    0 for a single-bin spectrum, 1 for a flat one; degenerate rows
    (total power < 1e-12) yield 0.
    """
    total = power.sum(axis=1)
    out = np.zeros(len(power))
    live = total >= 1e-12
    p = power[live] / total[live, None]
    plogp = np.where(p > 0, p * np.log(np.maximum(p, 1e-300)), 0.0)
    out[live] = -plogp.sum(axis=1) / np.log(power.shape[1])
    return out


def spectral_entropy(
    x: np.ndarray, fs: float, win: int = STFT_WIN, hop: int = STFT_HOP
) -> np.ndarray:
    """Normalized spectral entropy per short-time frame, in [0, 1]."""
    return entropy_of_power(stft_power(x, fs, win, hop))


@dataclass(frozen=True)
class FeatureSequence:
    """Per-frame [instantaneous frequency, spectral entropy] with label.

    Frames hold the raw feature values; `stats` carries the per-column
    mean/std used to normalize them at model-input time, so training-set
    statistics can be applied unchanged at inference.
    """

    frames: np.ndarray  # [T, 2], raw values
    label: int  # 0 = normal, 1 = AF
    stats: tuple[np.ndarray, np.ndarray]  # (mean[2], std[2])

    def normalized(self) -> np.ndarray:
        mean, std = self.stats
        return (self.frames - mean) / std


def feature_stats(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and population std over stacked frames [N, 2]."""
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    if np.any(std <= 1e-12):
        bad = int(np.argmax(std <= 1e-12))
        name = ("instantaneous frequency", "spectral entropy")[bad]
        raise DegenerateSignal(f"zero-variance {name} column")
    return mean, std


def sequence_csv(seq: FeatureSequence) -> str:
    """One frame per row: instantaneous frequency, spectral entropy."""
    lines = ["instfreq,entropy"]
    for freq, entropy in seq.frames:
        lines.append(f"{float(freq)!r},{float(entropy)!r}")
    return "\n".join(lines) + "\n"


def build_feature_sequence(
    record: Record,
    label: int,
    norm_stats: tuple[np.ndarray, np.ndarray] | None = None,
    win: int = STFT_WIN,
    hop: int = STFT_HOP,
) -> FeatureSequence:
    """Stack the two spectral features per frame for one record.

    When `norm_stats` is given (training-set statistics) it is attached
    as-is; otherwise statistics are computed from this sequence alone.
    """
    x = record.samples[0]
    frames = np.column_stack(
        [
            instantaneous_frequency(x, record.fs, win, hop),
            spectral_entropy(x, record.fs, win, hop),
        ]
    )
    stats = norm_stats if norm_stats is not None else feature_stats(frames)
    return FeatureSequence(frames=frames, label=label, stats=stats)
