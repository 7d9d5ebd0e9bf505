"""Symlet-4 wavelet machinery, QRS detection and beat segmentation.

The wavelet transform is the undecimated (maximal-overlap) variant with
circular boundary handling, so coefficient sequences keep the input length
and the transform is shift-invariant, which matters for peak localization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateSignal, InvalidLevel, SignalTooShort
from .ingest import Annotation, Record

# Symlet-4 scaling (lowpass) filter, L2-normalized, sum = sqrt(2).
# Values from the standard orthogonal-wavelet coefficient tables; the
# FilterPair invariants below are asserted at import time.
_SYM4_LOWPASS = (
    0.0322231006040427,
    -0.0126039672620378,
    -0.0992195435768472,
    0.2978577956052774,
    0.8037387518059161,
    0.4976186676320155,
    -0.0296355276459985,
    -0.0757657147892733,
)


@dataclass(frozen=True)
class FilterPair:
    """Orthogonal 8-tap analysis filter pair."""

    lowpass: np.ndarray
    highpass: np.ndarray

    def validate(self) -> None:
        h = self.lowpass
        g = self.highpass
        if abs(h.sum() - math.sqrt(2)) > 1e-12:
            raise AssertionError("lowpass sum != sqrt(2)")
        if abs((h * h).sum() - 1.0) > 1e-12:
            raise AssertionError("lowpass not L2-normalized")
        for k in range(1, 4):
            if abs((h[: 8 - 2 * k] * h[2 * k :]).sum()) > 1e-12:
                raise AssertionError(f"lowpass not orthogonal to its 2*{k} shift")
        expected = np.array([(-1) ** n * h[7 - n] for n in range(8)])
        if np.max(np.abs(g - expected)) > 1e-12:
            raise AssertionError("highpass violates quadrature-mirror relation")


def sym4_filters() -> FilterPair:
    """Return the Symlet-4 filter pair, invariants checked."""
    h = np.asarray(_SYM4_LOWPASS, dtype=np.float64)
    g = np.array([(-1) ** n * h[7 - n] for n in range(8)], dtype=np.float64)
    pair = FilterPair(lowpass=h, highpass=g)
    pair.validate()
    return pair


_SYM4 = sym4_filters()


@dataclass(frozen=True)
class WaveletDecomposition:
    """Undecimated transform output: per-level details plus approximation."""

    details: list[np.ndarray]  # levels 1..L, each len(x)
    approximation: np.ndarray  # len(x)
    level: int


def _circular_filter(v: np.ndarray, taps: np.ndarray, spacing: int) -> np.ndarray:
    """Circular convolution with the filter upsampled by `spacing`:
    out[t] = sum_l taps[l] * v[(t - spacing*l) mod N]."""
    out = taps[0] * v
    for l in range(1, len(taps)):
        out = out + taps[l] * np.roll(v, spacing * l)
    return out


def _circular_filter_adjoint(v: np.ndarray, taps: np.ndarray, spacing: int) -> np.ndarray:
    """Adjoint of _circular_filter: out[t] = sum_l taps[l] * v[(t + spacing*l) mod N]."""
    out = taps[0] * v
    for l in range(1, len(taps)):
        out = out + taps[l] * np.roll(v, -spacing * l)
    return out


def modwt(x: np.ndarray, level: int) -> WaveletDecomposition:
    """Maximal-overlap discrete wavelet transform with sym4 filters.

    At level j the filters are upsampled by 2**(j-1); the per-level 1/sqrt(2)
    scaling makes the pyramid energy-preserving, so
    sum(x**2) == sum of squares over all detail and approximation sequences.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) < 1:
        raise InvalidLevel("input must be a non-empty 1-D sequence")
    if level < 1 or level > int(math.floor(math.log2(len(x)))):
        raise InvalidLevel(
            f"level {level} out of range [1, floor(log2({len(x)}))]"
        )
    h = _SYM4.lowpass / math.sqrt(2)
    g = _SYM4.highpass / math.sqrt(2)
    details = []
    approx = x
    for j in range(1, level + 1):
        spacing = 2 ** (j - 1)
        details.append(_circular_filter(approx, g, spacing))
        approx = _circular_filter(approx, h, spacing)
    return WaveletDecomposition(details=details, approximation=approx, level=level)


def imodwt(dec: WaveletDecomposition) -> np.ndarray:
    """Inverse MODWT; reconstructs the input to ~1e-12 relative error."""
    h = _SYM4.lowpass / math.sqrt(2)
    g = _SYM4.highpass / math.sqrt(2)
    approx = dec.approximation
    for j in range(dec.level, 0, -1):
        spacing = 2 ** (j - 1)
        approx = _circular_filter_adjoint(approx, h, spacing) + _circular_filter_adjoint(
            dec.details[j - 1], g, spacing
        )
    return approx


def wavelet_bandpass(
    x: np.ndarray,
    fs: float,
    keep_levels: set[int],
    level: int = 5,
    keep_approximation: bool = False,
) -> np.ndarray:
    """Reconstruct from a level-5 decomposition keeping only chosen details.

    Detail level j spans roughly [fs/2**(j+1), fs/2**j] Hz, so at 360 Hz the
    default QRS band {3, 4} covers about 11-45 Hz.
    """
    if not set(keep_levels) <= set(range(1, level + 1)):
        raise InvalidLevel(f"keep_levels {keep_levels} outside 1..{level}")
    dec = modwt(x, level)
    details = [
        d if (j + 1) in keep_levels else np.zeros_like(d)
        for j, d in enumerate(dec.details)
    ]
    approx = dec.approximation if keep_approximation else np.zeros_like(dec.approximation)
    return imodwt(WaveletDecomposition(details=details, approximation=approx, level=level))


def _moving_rms(v: np.ndarray, window: int) -> np.ndarray:
    """Centered moving RMS via cumulative sums; edges use the partial window."""
    sq = v * v
    csum = np.concatenate(([0.0], np.cumsum(sq)))
    half = window // 2
    n = len(v)
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return np.sqrt((csum[hi] - csum[lo]) / (hi - lo))


def detect_qrs(
    x: np.ndarray,
    fs: float,
    threshold_scale: float = 2.0,
    rms_window_s: float = 2.0,
    refractory_s: float = 0.2,
    refine_s: float = 0.025,
) -> list[int]:
    """Wavelet-based R-peak detector.

    Pipeline: sym4 bandpass keeping detail levels {3, 4}; square pointwise;
    adaptive energy threshold = threshold_scale * (moving RMS of the
    bandpassed signal over a 2 s window) squared, floored at 1e-6; local
    maxima above threshold; 200 ms refractory period keeping the larger
    peak; refine each candidate to the argmax of |x| within +/-25 ms on the
    original signal.
    """
    x = np.asarray(x, dtype=np.float64)
    if fs <= 50:
        raise SignalTooShort(f"sampling frequency {fs} too low (need > 50 Hz)")
    if len(x) < 2 * fs:
        raise SignalTooShort(f"need at least {int(2 * fs)} samples, got {len(x)}")

    band = wavelet_bandpass(x, fs, keep_levels={3, 4})
    energy = band * band
    rms = _moving_rms(band, max(1, int(rms_window_s * fs)))
    threshold = np.maximum(threshold_scale * rms * rms, 1e-6)

    above = energy > threshold
    interior = np.zeros(len(energy), dtype=bool)
    interior[1:-1] = (energy[1:-1] >= energy[:-2]) & (energy[1:-1] > energy[2:])
    candidates = np.flatnonzero(above & interior)

    # refractory pass: within 200 ms keep the larger energy peak
    refractory = int(round(refractory_s * fs))
    kept: list[int] = []
    for c in candidates:
        if kept and c - kept[-1] < refractory:
            if energy[c] > energy[kept[-1]]:
                kept[-1] = int(c)
        else:
            kept.append(int(c))

    # refine to the strongest |x| deflection nearby on the raw signal
    refine = int(round(refine_s * fs))
    refined = []
    for c in kept:
        lo = max(0, c - refine)
        hi = min(len(x), c + refine + 1)
        refined.append(lo + int(np.argmax(np.abs(x[lo:hi]))))

    out: list[int] = []
    for r in refined:
        if not out or r - out[-1] >= refractory:
            out.append(r)
        elif np.abs(x[r]) > np.abs(x[out[-1]]):
            out[-1] = r
    return out


def zscore(x: np.ndarray) -> np.ndarray:
    """Z-score with population (1/N) standard deviation."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise DegenerateSignal(f"need at least 2 samples, got {x.size}")
    std = x.std()
    if std <= 1e-12:
        raise DegenerateSignal("near-constant signal, z-score undefined")
    return (x - x.mean()) / std


@dataclass(frozen=True)
class Beat:
    """Fixed-length z-scored window centered on an annotated R peak."""

    window: np.ndarray  # length W, zero mean, unit population std
    label: int  # class index 0..4
    record_id: str
    r_sample: int


@dataclass(frozen=True)
class SegmentationReport:
    kept: int
    dropped_boundary: int
    dropped_degenerate: int


def segment_beats(
    record: Record,
    annotations: list[Annotation],
    channel: int,
    window: int,
    label_of: dict[str, int],
) -> tuple[list[Beat], SegmentationReport]:
    """Extract z-scored windows [r - W/2, r + W/2) around annotated beats.

    Annotations whose window crosses a record boundary are dropped and
    counted; windows with no variance (flatline segments) are likewise
    dropped rather than crashing the pipeline.
    """
    if window % 2:
        raise ValueError(f"window length must be even, got {window}")
    if not 0 <= channel < record.header.n_channels:
        raise ValueError(f"channel {channel} out of range")
    signal = record.samples[channel]
    half = window // 2
    beats: list[Beat] = []
    dropped_boundary = 0
    dropped_degenerate = 0
    for ann in annotations:
        if ann.symbol not in label_of:
            continue
        start = ann.sample_index - half
        stop = ann.sample_index + half
        if start < 0 or stop > len(signal):
            dropped_boundary += 1
            continue
        try:
            win = zscore(signal[start:stop])
        except DegenerateSignal:
            dropped_degenerate += 1
            continue
        beats.append(
            Beat(
                window=win,
                label=label_of[ann.symbol],
                record_id=record.header.record_name,
                r_sample=ann.sample_index,
            )
        )
    report = SegmentationReport(
        kept=len(beats),
        dropped_boundary=dropped_boundary,
        dropped_degenerate=dropped_degenerate,
    )
    return beats, report


def standardize_length(record: Record, seconds: float) -> Record:
    """Truncate to the first `seconds` of signal; reject shorter records."""
    if seconds <= 0:
        raise ValueError(f"target length must be positive, got {seconds}")
    target = int(round(seconds * record.fs))
    if record.header.n_samples < target:
        raise SignalTooShort(
            f"record has {record.header.n_samples} samples, need {target}"
        )
    if record.header.n_samples == target:
        return record
    header = replace(record.header, n_samples=target)
    return Record(header=header, samples=record.samples[:, :target].copy())
