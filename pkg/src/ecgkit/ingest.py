"""Parsers for PhysioNet/MIT-BIH on-disk formats and a CSV fallback.

Covers the WFDB header grammar (.hea), format-212 signal packing (.dat),
the MIT annotation stream (.atr), and single-channel CSV ingestion.
All parsers are total: any input yields a value or a structured error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyInput,
    IntegrityError,
    ParseError,
    TruncatedData,
    UnsupportedFormat,
)

# WFDB annotation type codes for the five beat classes handled downstream.
# Codes verified against the annotation table shipped with the WFDB software
# library (annot.c / ecgcodes.h): 1=normal, 2=LBBB, 3=RBBB, 5=PVC, 8=APC.
BEAT_SYMBOLS = {1: "N", 2: "L", 3: "R", 5: "V", 8: "A"}

# Every annotation code the WFDB library treats as a beat (QRS) event.
# Non-beat events (rhythm changes, noise markers, comments...) advance the
# annotation clock but are not returned by parse_annotations.
_BEAT_CODES = frozenset(range(1, 14)) | {25, 30, 34, 35, 38, 41}

_DEFAULT_GAIN = 200.0  # ADC units per millivolt when the header omits gain


@dataclass(frozen=True)
class ChannelSpec:
    """Per-channel metadata from one header signal line."""

    file_name: str
    format_code: int
    gain: float = _DEFAULT_GAIN
    adc_resolution: int = 12
    adc_zero: int = 0
    first_value: int | None = None
    checksum: int = 0
    description: str = ""


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    n_channels: int
    fs: float
    n_samples: int
    channels: list[ChannelSpec] = field(default_factory=list)


@dataclass(frozen=True)
class Record:
    """Calibrated multi-channel signal, samples in millivolts."""

    header: RecordHeader
    samples: np.ndarray  # [n_channels, n_samples], float64 mV

    @property
    def fs(self) -> float:
        return self.header.fs

    def channel_index(self, description: str) -> int | None:
        for i, ch in enumerate(self.header.channels):
            if ch.description == description:
                return i
        return None


@dataclass(frozen=True)
class Annotation:
    sample_index: int
    type_code: int
    symbol: str  # one of N, L, R, A, V, or "other"


def _parse_int(token: str, line: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected integer {what}, got {token!r}", line) from None


def _parse_gain(token: str, line: int) -> tuple[float, int | None]:
    """Parse the gain field, which may carry a baseline and units.

    WFDB allows 'gain', 'gain(baseline)' and 'gain/units' forms; a gain of
    zero means the default 200 ADC units per millivolt.
    """
    baseline = None
    text = token.split("/", 1)[0]
    if "(" in text:
        if not text.endswith(")"):
            raise ParseError(f"malformed gain field {token!r}", line)
        text, base_text = text[:-1].split("(", 1)
        baseline = _parse_int(base_text, line, "baseline")
    try:
        gain = float(text)
    except ValueError:
        raise ParseError(f"malformed gain field {token!r}", line) from None
    if gain == 0.0:
        gain = _DEFAULT_GAIN
    if gain < 0:
        raise ParseError(f"gain must be positive, got {gain}", line)
    return gain, baseline


def parse_header(text: str) -> RecordHeader:
    """Parse WFDB header (.hea) contents into a RecordHeader.

    The first non-comment line holds: record name, channel count, sampling
    frequency, sample count. Each following line describes one channel:
    file name, format, gain, ADC resolution, ADC zero, first value,
    checksum, block size, description. Lines starting with '#' are comments.
    """
    lines = text.splitlines()
    numbered = [
        (i + 1, ln.strip())
        for i, ln in enumerate(lines)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not numbered:
        raise ParseError("empty header", 1)

    line_no, first = numbered[0]
    fields = first.split()
    if len(fields) < 2:
        raise ParseError("record line needs at least name and channel count", line_no)
    record_name = fields[0].split("/")[0]  # strip segment count if present
    n_channels = _parse_int(fields[1], line_no, "channel count")
    if n_channels < 0:
        raise ParseError(f"negative channel count {n_channels}", line_no)
    if len(fields) < 3:
        raise ParseError("sampling frequency missing", line_no)
    try:
        fs = float(fields[2].split("/")[0])
    except ValueError:
        raise ParseError(f"malformed sampling frequency {fields[2]!r}", line_no) from None
    if fs <= 0:
        raise ParseError(f"sampling frequency must be positive, got {fs}", line_no)
    if n_channels > 0 and len(fields) < 4:
        raise ParseError("sample count missing where channels declared", line_no)
    n_samples = _parse_int(fields[3], line_no, "sample count") if len(fields) >= 4 else 0
    if n_samples < 0:
        raise ParseError(f"negative sample count {n_samples}", line_no)

    channel_lines = numbered[1:]
    if len(channel_lines) < n_channels:
        raise ParseError(
            f"header declares {n_channels} channels but has {len(channel_lines)} signal lines",
            line_no,
        )
    channels = []
    for line_no, line in channel_lines[:n_channels]:
        fields = line.split()
        if len(fields) < 2:
            raise ParseError("signal line needs file name and format", line_no)
        file_name = fields[0]
        fmt_text = fields[1].split("x")[0].split(":")[0].split("+")[0]
        fmt = _parse_int(fmt_text, line_no, "format code")
        if fmt != 212:
            raise UnsupportedFormat(f"signal format {fmt} not supported (only 212)")
        gain, baseline = (
            _parse_gain(fields[2], line_no) if len(fields) > 2 else (_DEFAULT_GAIN, None)
        )
        adc_res = _parse_int(fields[3], line_no, "ADC resolution") if len(fields) > 3 else 12
        if not 8 <= adc_res <= 16:
            raise ParseError(f"ADC resolution {adc_res} outside [8, 16]", line_no)
        adc_zero = _parse_int(fields[4], line_no, "ADC zero") if len(fields) > 4 else 0
        first_value = _parse_int(fields[5], line_no, "first value") if len(fields) > 5 else None
        checksum = _parse_int(fields[6], line_no, "checksum") if len(fields) > 6 else 0
        description = " ".join(fields[8:]) if len(fields) > 8 else ""
        if baseline is not None:
            adc_zero = baseline  # explicit baseline overrides the ADC-zero field
        channels.append(
            ChannelSpec(
                file_name=file_name,
                format_code=fmt,
                gain=gain,
                adc_resolution=adc_res,
                adc_zero=adc_zero,
                first_value=first_value,
                checksum=checksum,
                description=description,
            )
        )
    return RecordHeader(
        record_name=record_name,
        n_channels=n_channels,
        fs=fs,
        n_samples=n_samples,
        channels=channels,
    )


def decode_format212(data: bytes, n_samples: int, n_channels: int) -> np.ndarray:
    """Unpack format-212 bytes into an [n_channels, n_samples] int array.

    Each 3-byte group holds two 12-bit two's-complement samples:
    s1 = b0 | (b1 & 0x0F) << 8, s2 = b2 | (b1 & 0xF0) << 4. Samples are
    interleaved across channels. When the total sample count is odd the
    final sample occupies the first two bytes of a partial group.
    """
    total = n_samples * n_channels
    if total == 0:
        return np.zeros((n_channels, 0), dtype=np.int64)
    need = math.ceil(total * 3 / 2)
    if len(data) < need:
        raise TruncatedData(f"need {need} bytes for {total} samples, got {len(data)}")
    raw = np.frombuffer(data, dtype=np.uint8, count=need).astype(np.int64)

    n_pairs = total // 2
    b0 = raw[0 : 3 * n_pairs : 3]
    b1 = raw[1 : 3 * n_pairs : 3]
    b2 = raw[2 : 3 * n_pairs : 3]
    flat = np.empty(total, dtype=np.int64)
    flat[0 : 2 * n_pairs : 2] = b0 | ((b1 & 0x0F) << 8)
    flat[1 : 2 * n_pairs : 2] = b2 | ((b1 & 0xF0) << 4)
    if total % 2:
        lo, hi = raw[3 * n_pairs], raw[3 * n_pairs + 1]
        flat[-1] = lo | ((hi & 0x0F) << 8)
    flat[flat > 2047] -= 4096  # sign-extend 12-bit values

    return np.ascontiguousarray(flat.reshape(n_samples, n_channels).T)


def load_record(header: RecordHeader, signal_bytes: bytes) -> Record:
    """Decode a format-212 signal and calibrate it to millivolts.

    The decoded first sample of every channel must match that channel's
    first_value header field; a mismatch raises IntegrityError naming the
    channel.
    """
    for ch in header.channels:
        if ch.format_code != 212:
            raise UnsupportedFormat(f"signal format {ch.format_code} not supported (only 212)")
    adc = decode_format212(signal_bytes, header.n_samples, header.n_channels)
    mv = np.empty(adc.shape, dtype=np.float64)
    for i, ch in enumerate(header.channels):
        if header.n_samples > 0 and ch.first_value is not None and adc[i, 0] != ch.first_value:
            raise IntegrityError(
                f"channel {i} ({ch.description or ch.file_name}): "
                f"first decoded sample {adc[i, 0]} != header first value {ch.first_value}"
            )
        mv[i] = (adc[i] - ch.adc_zero) / ch.gain
    if not np.all(np.isfinite(mv)):
        raise IntegrityError("non-finite sample values after calibration")
    return Record(header=header, samples=mv)


def read_record(directory: str | Path, name: str) -> Record:
    """Read <name>.hea plus its signal file(s) from a directory."""
    directory = Path(directory)
    header = parse_header((directory / f"{name}.hea").read_text())
    dat_names = {ch.file_name for ch in header.channels}
    if len(dat_names) > 1:
        raise UnsupportedFormat("multi-file records not supported")
    signal_bytes = (directory / next(iter(dat_names))).read_bytes() if dat_names else b""
    return load_record(header, signal_bytes)


def parse_annotations(data: bytes) -> list[Annotation]:
    """Decode an MIT annotation stream into beat annotations.

    Each little-endian 16-bit word packs a 6-bit type code and a 10-bit
    time delta. Code 0 with delta 0 terminates. SKIP (59) is followed by a
    4-byte time operand, high word first, each word little-endian; NUM/SUB/
    CHN (60/61/62) carry state without advancing time; AUX (63) carries
    delta payload bytes padded to even length. Every other code advances
    the clock by delta; only beat codes are returned, with symbols from
    BEAT_SYMBOLS and "other" for the remaining beat types.
    """
    if len(data) % 2:
        data = data[:-1]  # stray trailing byte carries no word
    words = np.frombuffer(data, dtype="<u2").astype(np.int64)
    out: list[Annotation] = []
    time = 0
    i = 0
    n = len(words)
    while i < n:
        word = int(words[i])
        code = word >> 10
        delta = word & 0x3FF
        if code == 0:
            if delta == 0:
                return out
            i += 1  # null annotation: skip without advancing time
            continue
        if code == 59:  # SKIP: 4-byte operand, high 16 bits first
            if i + 2 >= n:
                raise TruncatedData("SKIP operand truncated")
            time += (int(words[i + 1]) << 16) + int(words[i + 2])
            i += 3
            continue
        if code in (60, 61, 62):  # NUM / SUB / CHN: no time advance
            i += 1
            continue
        if code == 63:  # AUX: delta bytes of payload, padded to even
            n_payload_words = (delta + 1) // 2
            if i + n_payload_words >= n:
                raise TruncatedData("AUX payload truncated")
            i += 1 + n_payload_words
            continue
        time += delta
        if code in _BEAT_CODES:
            out.append(
                Annotation(
                    sample_index=time,
                    type_code=code,
                    symbol=BEAT_SYMBOLS.get(code, "other"),
                )
            )
        i += 1
    raise TruncatedData("annotation stream ends without terminator")


def read_annotations(directory: str | Path, name: str, extension: str = "atr") -> list[Annotation]:
    return parse_annotations((Path(directory) / f"{name}.{extension}").read_bytes())


def load_csv_signal(text: str, fs: float) -> Record:
    """Parse single-channel CSV contents into a calibrated Record.

    One sample per line; an optional header row "value" and an optional
    second column are ignored. Values are taken as already physical
    (gain 1.0).
    """
    if fs <= 0:
        raise ParseError(f"sampling frequency must be positive, got {fs}")
    values: list[float] = []
    first_data_line = True
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        token = line.split(",")[0].strip()
        if first_data_line and token.lower() == "value":
            first_data_line = False
            continue
        first_data_line = False
        try:
            value = float(token)
        except ValueError:
            raise ParseError(f"non-numeric sample {token!r}", line_no) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite sample {token!r}", line_no)
        values.append(value)
    if not values:
        raise EmptyInput("CSV contains no samples")
    samples = np.asarray(values, dtype=np.float64).reshape(1, -1)
    header = RecordHeader(
        record_name="csv",
        n_channels=1,
        fs=fs,
        n_samples=samples.shape[1],
        channels=[ChannelSpec(file_name="csv", format_code=212, gain=1.0, description="csv")],
    )
    return Record(header=header, samples=samples)
