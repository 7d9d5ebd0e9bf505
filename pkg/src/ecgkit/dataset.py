"""Label mapping, class rebalancing, fold assignment and dataset I/O.

Also provides a synthetic beat generator with known R locations, used as
ground truth for detector and pipeline tests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ClassTooSmall, EmptyClass, InvalidSplit, UnknownClass

CLASS_SYMBOLS = ("N", "L", "R", "A", "V")
_CLASS_INDEX = {s: i for i, s in enumerate(CLASS_SYMBOLS)}


class Rng:
    """Deterministic 64-bit generator (PCG64): same seed, same stream.

    fork(key) derives an independent stream reproducibly, so separate
    pipeline stages (holdout, rebalance, folds, weight init, dropout...)
    cannot perturb each other's draws.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._spawn_key = _spawn_key
        self.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_spawn_key))
        )

    def fork(self, key: int) -> "Rng":
        return Rng(self.seed, self._spawn_key + (int(key),))


def class_index(symbol: str) -> int:
    """Map a beat symbol to its class index: N=0, L=1, R=2, A=3, V=4."""
    try:
        return _CLASS_INDEX[symbol]
    except KeyError:
        raise UnknownClass(f"symbol {symbol!r} is not one of {CLASS_SYMBOLS}") from None


@dataclass
class LabeledSet:
    items: list
    labels: np.ndarray  # class indices, same length as items
    class_names: list[str]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.items) != len(self.labels):
            raise ValueError("items and labels length mismatch")
        if len(self.labels) and self.labels.max() >= len(self.class_names):
            raise ValueError("label outside class_names range")

    def __len__(self) -> int:
        return len(self.items)

    def subset(self, indices: np.ndarray) -> "LabeledSet":
        return LabeledSet(
            items=[self.items[i] for i in indices],
            labels=self.labels[indices],
            class_names=self.class_names,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.class_names))


@dataclass(frozen=True)
class FoldSpec:
    k: int
    assignment: np.ndarray  # fold index per item, in 0..k-1


def rebalance(dataset: LabeledSet, per_class: int, rng: Rng) -> LabeledSet:
    """Resample every class to exactly per_class items.

    Larger classes are down-sampled uniformly without replacement; smaller
    ones are up-sampled uniformly with replacement (duplicates allowed).
    The result is shuffled deterministically.
    """
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    chosen: list[np.ndarray] = []
    for c in range(len(dataset.class_names)):
        members = np.flatnonzero(dataset.labels == c)
        if len(members) == 0:
            raise EmptyClass(f"class {dataset.class_names[c]!r} has no items")
        if len(members) >= per_class:
            picks = rng.gen.choice(members, size=per_class, replace=False)
        else:
            # keep every original at least once, then fill with replacement
            extra = rng.gen.choice(members, size=per_class - len(members), replace=True)
            picks = np.concatenate([members, extra])
        chosen.append(picks)
    order = np.concatenate(chosen)
    rng.gen.shuffle(order)
    return dataset.subset(order)


def stratified_kfold(labels: np.ndarray, k: int, rng: Rng) -> FoldSpec:
    """Shuffle within each class, then deal round-robin into k folds."""
    labels = np.asarray(labels, dtype=np.int64)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    assignment = np.empty(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if len(members) < k:
            raise ClassTooSmall(f"class {c} has {len(members)} items, fewer than k={k}")
        members = rng.gen.permutation(members)
        assignment[members] = np.arange(len(members)) % k
    return FoldSpec(k=k, assignment=assignment)


def train_test_split(
    dataset: LabeledSet, test_fraction: float, rng: Rng
) -> tuple[LabeledSet, LabeledSet]:
    """Stratified split; the test side gets round(count * fraction) per class."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for c in range(len(dataset.class_names)):
        members = np.flatnonzero(dataset.labels == c)
        if len(members) == 0:
            continue
        members = rng.gen.permutation(members)
        n_test = int(round(len(members) * test_fraction))
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    train = np.sort(np.concatenate(train_idx)) if train_idx else np.array([], dtype=np.int64)
    test = np.sort(np.concatenate(test_idx)) if test_idx else np.array([], dtype=np.int64)
    if len(train) == 0 or len(test) == 0:
        raise InvalidSplit(
            f"split leaves an empty side (train {len(train)}, test {len(test)})"
        )
    return dataset.subset(train), dataset.subset(test)


def holdout_demo(
    dataset: LabeledSet, per_class: int, rng: Rng
) -> tuple[LabeledSet, LabeledSet]:
    """Remove per_class items per class for demonstration, before any training use."""
    if per_class == 0:
        empty = dataset.subset(np.array([], dtype=np.int64))
        return dataset, empty
    demo_idx: list[np.ndarray] = []
    for c in range(len(dataset.class_names)):
        members = np.flatnonzero(dataset.labels == c)
        if len(members) <= per_class:
            raise ClassTooSmall(
                f"class {dataset.class_names[c]!r} has {len(members)} items, "
                f"cannot hold out {per_class}"
            )
        demo_idx.append(rng.gen.choice(members, size=per_class, replace=False))
    demo = np.sort(np.concatenate(demo_idx))
    remaining = np.setdiff1d(np.arange(len(dataset)), demo)
    return dataset.subset(remaining), dataset.subset(demo)


# --- synthetic waveforms ----------------------------------------------------
#
# Each beat is a sum of Gaussian bumps (amplitude, center seconds from R,
# width seconds). Morphologies follow the textbook patterns: bundle-branch
# blocks widen/notch the QRS, atrial premature beats reshape and advance the
# P wave, ventricular beats drop the P wave and produce a wide biphasic
# complex with a discordant T.

_TEMPLATES: dict[int, tuple[tuple[float, float, float], ...]] = {
    0: (  # N: textbook PQRST
        (0.12, -0.180, 0.025),
        (-0.12, -0.028, 0.010),
        (1.00, 0.000, 0.012),
        (-0.18, 0.030, 0.011),
        (0.32, 0.240, 0.055),
    ),
    1: (  # L: wide notched complex, inverted T
        (0.10, -0.190, 0.028),
        (0.92, 0.000, 0.020),
        (0.55, 0.050, 0.022),
        (-0.30, 0.260, 0.060),
    ),
    2: (  # R: rSR' pattern with deep wide S
        (0.11, -0.180, 0.025),
        (0.35, -0.040, 0.014),
        (0.85, 0.000, 0.016),
        (-0.55, 0.048, 0.024),
        (0.22, 0.250, 0.055),
    ),
    3: (  # A: early, reshaped P
        (0.22, -0.105, 0.018),
        (-0.10, -0.026, 0.009),
        (0.95, 0.000, 0.011),
        (-0.16, 0.028, 0.010),
        (0.28, 0.220, 0.050),
    ),
    4: (  # V: no P, wide biphasic complex, discordant T
        (1.15, 0.000, 0.024),
        (-0.65, 0.055, 0.030),
        (-0.45, 0.300, 0.075),
    ),
}


def _add_bumps(
    signal: np.ndarray,
    fs: float,
    r_index: int,
    bumps,
    rng: Rng | None,
) -> None:
    for amp, center, width in bumps:
        if rng is not None:
            amp = amp * (1.0 + 0.05 * rng.gen.normal())
            width = width * (1.0 + 0.05 * rng.gen.normal())
            if center != 0.0:  # never move the R bump: it defines ground truth
                center = center + 0.004 * rng.gen.normal()
        mu = r_index + center * fs
        sigma = max(width * fs, 1.0)
        lo = max(0, int(mu - 5 * sigma))
        hi = min(len(signal), int(mu + 5 * sigma) + 1)
        if lo >= hi:
            continue
        t = np.arange(lo, hi)
        signal[lo:hi] += amp * np.exp(-0.5 * ((t - mu) / sigma) ** 2)


def synth_beat(
    label: int,
    fs: float,
    rng: Rng,
    length: int | None = None,
    noise: float = 0.02,
) -> tuple[np.ndarray, int]:
    """One synthetic beat of the given class; returns (waveform, R sample).

    Noise is Gaussian with sigma = `noise` times the R amplitude. With zero
    noise the waveform argmax falls on the returned R sample.
    """
    if fs <= 50:
        raise ValueError(f"sampling frequency {fs} too low (need > 50 Hz)")
    if label not in _TEMPLATES:
        raise UnknownClass(f"class index {label} outside 0..4")
    if length is None:
        length = int(round(0.711 * fs))
    r_index = length // 2
    signal = np.zeros(length)
    _add_bumps(signal, fs, r_index, _TEMPLATES[label], rng)
    if noise > 0:
        r_amp = _TEMPLATES[label][_r_bump_index(label)][0]
        signal += noise * r_amp * rng.gen.normal(size=length)
    return signal, r_index


def _r_bump_index(label: int) -> int:
    amps = [abs(b[0]) for b in _TEMPLATES[label]]
    return int(np.argmax(amps))


def synth_strip(
    labels: list[int],
    fs: float,
    rng: Rng,
    rr_seconds: float = 0.8,
    noise: float = 0.02,
) -> tuple[np.ndarray, list[int]]:
    """A strip of beats at roughly rr_seconds spacing; returns true R samples.

    Atrial and ventricular premature beats arrive early, shortening their
    preceding RR interval, as the real arrhythmias do.
    """
    n = len(labels)
    length = int(round((n + 1.5) * rr_seconds * fs))
    signal = np.zeros(length)
    r_truth: list[int] = []
    for i, label in enumerate(labels):
        r = (i + 1) * rr_seconds * fs
        r += 0.02 * rr_seconds * fs * rng.gen.normal()
        if label in (3, 4):  # premature beats come early
            r -= 0.15 * rr_seconds * fs
        r_index = int(round(r))
        _add_bumps(signal, fs, r_index, _TEMPLATES[label], rng)
        r_truth.append(r_index)
    if noise > 0:
        signal += noise * rng.gen.normal(size=length)
    return signal, r_truth


# --- dataset persistence ----------------------------------------------------
#
# A prepared dataset is a manifest (JSON) plus, per split, a binary file of
# little-endian float32 rows and a labels file with one integer per line.


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_split(out_dir: Path, name: str, rows: np.ndarray, labels: np.ndarray) -> dict:
    """Write <name>.f32 (row-major float32 LE) and <name>.labels.txt."""
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = np.ascontiguousarray(rows, dtype="<f4").tobytes()
    (out_dir / f"{name}.f32").write_bytes(blob)
    label_text = "".join(f"{int(v)}\n" for v in labels)
    (out_dir / f"{name}.labels.txt").write_text(label_text)
    return {
        "rows": int(rows.shape[0]),
        "row_len": int(rows.shape[1]) if rows.ndim > 1 else 0,
        "sha256": _sha256(blob),
    }


def read_split(out_dir: Path, name: str, row_len: int) -> tuple[np.ndarray, np.ndarray]:
    blob = (out_dir / f"{name}.f32").read_bytes()
    rows = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    rows = rows.reshape(-1, row_len)
    labels = np.array(
        [int(line) for line in (out_dir / f"{name}.labels.txt").read_text().split()],
        dtype=np.int64,
    )
    if len(labels) != len(rows):
        raise InvalidSplit(f"split {name}: {len(rows)} rows but {len(labels)} labels")
    return rows, labels


def write_manifest(out_dir: Path, manifest: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(manifest, indent=2, sort_keys=True)
    (out_dir / "manifest.json").write_text(text + "\n")


def read_manifest(out_dir: Path) -> dict:
    return json.loads((out_dir / "manifest.json").read_text())


def write_demo_items(
    out_dir: Path, demo: LabeledSet, fs: float, id_of=None
) -> list[dict]:
    """One CSV per demo item under demo/<class>/<id>.csv."""
    written = []
    for i, item in enumerate(demo.items):
        label = int(demo.labels[i])
        class_name = demo.class_names[label]
        item_id = id_of(item) if id_of is not None else f"item{i:04d}"
        rel_path = Path("demo") / class_name / f"{item_id}.csv"
        path = out_dir / rel_path
        path.parent.mkdir(parents=True, exist_ok=True)
        values = item.window if hasattr(item, "window") else np.asarray(item)
        path.write_text("value\n" + "".join(f"{float(v)!r}\n" for v in values))
        written.append({"id": item_id, "label": class_name, "path": str(rel_path)})
    return written
