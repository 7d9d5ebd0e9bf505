import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgkit.errors import (
    EcgKitError,
    EmptyInput,
    IntegrityError,
    ParseError,
    TruncatedData,
    UnsupportedFormat,
)
from ecgkit.ingest import (
    Annotation,
    decode_format212,
    load_csv_signal,
    load_record,
    parse_annotations,
    parse_header,
    read_annotations,
    read_record,
)
from wfdb_writers import encode_annotations, encode_format212, interleave

MITBIH_100_HEADER = """100 2 360 650000
100.dat 212 200 11 1024 995 -22131 0 MLII
100.dat 212 200 11 1024 1011 20052 0 V5
"""


class TestParseHeader:
    def test_record_100_layout(self):
        header = parse_header(MITBIH_100_HEADER)
        assert header.record_name == "100"
        assert header.n_channels == 2
        assert header.fs == 360
        assert header.n_samples == 650000
        assert header.channels[0].first_value == 995
        assert header.channels[0].gain == 200
        assert header.channels[0].adc_zero == 1024
        assert header.channels[0].description == "MLII"
        assert header.channels[1].description == "V5"

    def test_zero_length_record_accepted(self):
        header = parse_header("X 1 360 0\nX.dat 212 200 11 1024 0 0 0 ch")
        assert header.n_samples == 0
        assert header.channels[0].description == "ch"

    def test_missing_sample_count_rejected(self):
        with pytest.raises(ParseError):
            parse_header("100 2 360")

    def test_missing_fs_rejected(self):
        with pytest.raises(ParseError):
            parse_header("100 1")

    def test_comment_lines_skipped(self):
        header = parse_header("# comment\n100 1 360 10\n# mid\n100.dat 212 200 11 1024 5 0 0 MLII")
        assert header.n_channels == 1

    def test_unsupported_format(self):
        with pytest.raises(UnsupportedFormat):
            parse_header("100 1 360 10\n100.dat 16 200 11 1024 5 0 0 MLII")

    def test_channel_count_mismatch(self):
        with pytest.raises(ParseError):
            parse_header("100 2 360 10\n100.dat 212 200 11 1024 5 0 0 MLII")

    def test_malformed_line_reports_number(self):
        with pytest.raises(ParseError) as exc:
            parse_header("100 1 360 10\n100.dat 212 abc 11 1024 5 0 0 MLII")
        assert exc.value.line == 2

    def test_default_gain_when_missing(self):
        header = parse_header("r 1 250 4\nr.dat 212")
        assert header.channels[0].gain == 200.0

    def test_gain_with_baseline_and_units(self):
        header = parse_header("r 1 250 4\nr.dat 212 100(512)/mV 12 0 7 0 0 x")
        assert header.channels[0].gain == 100.0
        assert header.channels[0].adc_zero == 512


class TestDecodeFormat212:
    def test_small_positives(self):
        out = decode_format212(bytes([0x01, 0x00, 0x02]), n_samples=2, n_channels=1)
        assert out.tolist() == [[1, 2]]

    def test_sign_extension(self):
        # hand bit-arithmetic: s1 = 0x3F&0x0F «8 | 0xFF = 0xFFF -> -1;
        # s2 = (0x3F & 0xF0) « 4 = 0x300 = 768
        out = decode_format212(bytes([0xFF, 0x3F, 0x00]), n_samples=2, n_channels=1)
        assert out.tolist() == [[-1, 768]]

    def test_two_channel_interleaving(self):
        channels = np.array([[10, 30, -5], [20, -40, 6]])
        data = encode_format212(interleave(channels))
        out = decode_format212(data, n_samples=3, n_channels=2)
        assert np.array_equal(out, channels)

    def test_odd_total_uses_partial_group(self):
        data = encode_format212(np.array([100, -200, 300]))
        out = decode_format212(data, n_samples=3, n_channels=1)
        assert out.tolist() == [[100, -200, 300]]

    def test_truncated(self):
        with pytest.raises(TruncatedData):
            decode_format212(bytes([0x01, 0x00]), n_samples=2, n_channels=1)

    def test_empty(self):
        out = decode_format212(b"", n_samples=0, n_channels=2)
        assert out.shape == (2, 0)

    @settings(max_examples=200)
    @given(
        st.lists(
            st.integers(min_value=-2048, max_value=2047), min_size=2, max_size=64
        ).filter(lambda v: len(v) % 2 == 0)
    )
    def test_round_trip_encode_decode(self, values):
        data = encode_format212(np.array(values))
        out = decode_format212(data, n_samples=len(values), n_channels=1)
        assert out.ravel().tolist() == values
        assert encode_format212(out.ravel()) == data


class TestLoadRecord:
    def test_millivolt_conversion(self):
        header = parse_header("r 1 360 2\nr.dat 212 200 11 1024 1024 0 0 MLII")
        record = load_record(header, encode_format212(np.array([1024, 1224])))
        assert record.samples[0, 0] == 0.0  # baseline maps to zero
        assert record.samples[0, 1] == pytest.approx(1.0)  # (1224-1024)/200

    def test_first_value_mismatch(self):
        header = parse_header("r 1 360 2\nr.dat 212 200 11 1024 999 0 0 MLII")
        with pytest.raises(IntegrityError) as exc:
            load_record(header, encode_format212(np.array([1024, 1224])))
        assert "MLII" in str(exc.value)

    def test_synthetic_database_first_values(self, synth_db):
        directory, truth = synth_db
        for name in truth:
            record = read_record(directory, name)  # IntegrityError would fail here
            assert record.header.n_channels == 2
            assert np.all(np.isfinite(record.samples))


class TestParseAnnotations:
    def test_single_beat(self):
        data = encode_annotations([(18, 1)])
        anns = parse_annotations(data)
        assert anns == [Annotation(sample_index=18, type_code=1, symbol="N")]

    def test_cumulative_time(self):
        data = encode_annotations([(10, 1), (15, 1)])
        anns = parse_annotations(data)
        assert [a.sample_index for a in anns] == [10, 15]

    def test_aux_payload_skipped(self):
        # AUX with 3 payload bytes padded to 4; nothing emitted for it
        data = encode_annotations([(5, 1)], extras={0: [("aux", b"abc")]})
        anns = parse_annotations(data)
        assert len(anns) == 1
        assert anns[0].sample_index == 5

    def test_skip_code_large_delta(self):
        # delta 100000 > 1023 forces the 4-byte SKIP operand path
        data = encode_annotations([(100000, 5), (100300, 1)])
        anns = parse_annotations(data)
        assert [(a.sample_index, a.symbol) for a in anns] == [(100000, "V"), (100300, "N")]

    def test_skip_hand_built_word_order(self):
        # SKIP then operand words: high half 0x0001, low half 0x86A0 = 100000
        stream = bytes(
            [0x00, 59 << 2]  # SKIP, delta 0
            + [0x01, 0x00]  # high 16 bits, little-endian
            + [0xA0, 0x86]  # low 16 bits, little-endian
            + [0x00, 1 << 2]  # NORMAL beat, delta 0
            + [0x00, 0x00]
        )
        anns = parse_annotations(stream)
        assert anns == [Annotation(sample_index=100000, type_code=1, symbol="N")]

    def test_num_sub_chn_do_not_advance_time(self):
        data = encode_annotations(
            [(10, 1), (20, 1)], extras={0: [("num", 3), ("sub", 1), ("chn", 1)]}
        )
        anns = parse_annotations(data)
        assert [a.sample_index for a in anns] == [10, 20]

    def test_beat_symbol_table(self):
        events = [(10, 1), (20, 2), (30, 3), (40, 5), (50, 8), (60, 13)]
        anns = parse_annotations(encode_annotations(events))
        assert [a.symbol for a in anns] == ["N", "L", "R", "V", "A", "other"]

    def test_non_beat_codes_excluded(self):
        # rhythm change (28) and signal-quality (14) advance time, emit nothing
        data = encode_annotations([(5, 28), (10, 1), (15, 14), (25, 1)])
        anns = parse_annotations(data)
        assert [(a.sample_index, a.symbol) for a in anns] == [(10, "N"), (25, "N")]

    def test_truncated_stream(self):
        data = encode_annotations([(10, 1)])[:-2]  # strip the terminator
        with pytest.raises(TruncatedData):
            parse_annotations(data)

    def test_truncated_skip_operand(self):
        with pytest.raises(TruncatedData):
            parse_annotations(bytes([0x00, 59 << 2, 0x01, 0x00]))

    def test_strictly_increasing_on_synthetic_db(self, synth_db):
        directory, truth = synth_db
        for name, expected in truth.items():
            anns = read_annotations(directory, name)
            samples = [a.sample_index for a in anns]
            assert samples == sorted(samples)
            assert all(b > a for a, b in zip(samples, samples[1:]))
            assert [(a.sample_index, a.symbol) for a in anns] == expected

    @settings(max_examples=100)
    @given(
        st.lists(
            st.tuples(
                st.integers(min_value=1, max_value=2000),
                st.sampled_from([1, 2, 3, 5, 8]),
            ),
            min_size=1,
            max_size=30,
        )
    )
    def test_round_trip_against_independent_encoder(self, gaps_and_codes):
        samples = np.cumsum([g for g, _ in gaps_and_codes])
        events = [(int(s), c) for s, (_, c) in zip(samples, gaps_and_codes)]
        anns = parse_annotations(encode_annotations(events))
        assert [(a.sample_index, a.type_code) for a in anns] == events


class TestParsersAreTotal:
    """Any input yields a value or a structured error, never a crash."""

    @settings(max_examples=300)
    @given(st.binary(max_size=200))
    def test_parse_annotations_total(self, data):
        try:
            anns = parse_annotations(data)
        except EcgKitError:
            return
        assert all(a.sample_index >= 0 for a in anns)

    @settings(max_examples=300)
    @given(st.text(max_size=300))
    def test_parse_header_total(self, text):
        try:
            parse_header(text)
        except EcgKitError:
            pass

    @settings(max_examples=200)
    @given(st.binary(max_size=100), st.integers(0, 40), st.integers(1, 3))
    def test_decode_format212_total(self, data, n_samples, n_channels):
        try:
            out = decode_format212(data, n_samples, n_channels)
        except EcgKitError:
            return
        assert out.shape == (n_channels, n_samples)
        if out.size:
            assert out.min() >= -2048 and out.max() <= 2047

    @settings(max_examples=200)
    @given(st.text(max_size=200))
    def test_load_csv_total(self, text):
        try:
            load_csv_signal(text, fs=300)
        except EcgKitError:
            pass


class TestLoadCsvSignal:
    def test_basic(self):
        record = load_csv_signal("0.0\n1.0\n0.0", fs=300)
        assert record.header.n_samples == 3
        assert record.fs == 300
        assert record.samples.tolist() == [[0.0, 1.0, 0.0]]

    def test_thirty_second_record(self):
        text = "\n".join("0.5" for _ in range(9000))
        record = load_csv_signal(text, fs=300)
        assert record.header.n_samples / record.fs == 30.0

    def test_header_row_and_second_column(self):
        record = load_csv_signal("value\n1.5,9\n2.5,8", fs=100)
        assert record.samples.tolist() == [[1.5, 2.5]]

    def test_malformed(self):
        with pytest.raises(ParseError) as exc:
            load_csv_signal("abc", fs=300)
        assert exc.value.line == 1

    def test_empty(self):
        with pytest.raises(EmptyInput):
            load_csv_signal("", fs=300)
