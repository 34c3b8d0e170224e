import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxdemod import formats as fmt
from fluxdemod.errors import FormatError

EVENT_HEADER_BYTES = 25
STREAM_HEADER_BYTES = 22


def roundtrip_stream(stream):
    buf = io.BytesIO()
    fmt.write_stream(buf, stream)
    buf.seek(0)
    return fmt.read_stream(buf)


def make_stream(frames, kind=fmt.KIND_REAL, sample_format=fmt.FMT_I16,
                rate=1e6, ramp_len=0):
    header = fmt.StreamHeader(kind=kind, channel_count=frames.shape[1],
                              sample_rate_hz=rate, ramp_length_samples=ramp_len,
                              sample_format=sample_format)
    return fmt.SampleStream(header=header, frames=frames)


class TestStreamFormat:
    def test_header_layout_is_little_endian(self):
        stream = make_stream(np.zeros((0, 2), dtype=np.int16), rate=1.0, ramp_len=7)
        buf = io.BytesIO()
        fmt.write_stream(buf, stream)
        raw = buf.getvalue()
        assert len(raw) == STREAM_HEADER_BYTES
        assert raw[:4] == b"FLXD"
        assert raw[4:6] == (1).to_bytes(2, "little")          # version
        assert raw[6] == fmt.KIND_REAL
        assert raw[7:9] == (2).to_bytes(2, "little")          # channels
        assert raw[9:17] == np.float64(1.0).tobytes()
        assert raw[17:21] == (7).to_bytes(4, "little")
        assert raw[21] == fmt.FMT_I16

    def test_empty_payload_roundtrips(self):
        stream = make_stream(np.zeros((0, 3), dtype=np.int16))
        back = roundtrip_stream(stream)
        assert back.n_frames == 0
        assert back.header.channel_count == 3

    def test_known_values_roundtrip(self):
        frames = np.arange(15, dtype=np.int16).reshape(5, 3)
        back = roundtrip_stream(make_stream(frames))
        assert np.array_equal(back.frames, frames)

    def test_truncated_payload_reports_offset(self):
        frames = np.arange(12, dtype=np.int16).reshape(4, 3)
        buf = io.BytesIO()
        fmt.write_stream(buf, make_stream(frames))
        raw = buf.getvalue()[:-3]  # cut mid-frame
        with pytest.raises(FormatError) as err:
            fmt.read_stream(io.BytesIO(raw))
        # three whole frames survive; the bad frame starts after them
        assert err.value.offset == STREAM_HEADER_BYTES + 3 * 6

    def test_bad_magic_rejected(self):
        with pytest.raises(FormatError):
            fmt.read_stream(io.BytesIO(b"NOPE" + bytes(40)))

    def test_iter_stream_matches_full_read(self):
        frames = np.arange(64, dtype=np.int16).reshape(16, 4)
        buf = io.BytesIO()
        fmt.write_stream(buf, make_stream(frames))
        buf.seek(0)
        blocks = [b for _, b in fmt.iter_stream(buf, block_frames=5)]
        assert np.array_equal(np.concatenate(blocks), frames)

    def test_complex_pairs_roundtrip(self):
        frames = np.arange(24, dtype=np.int16).reshape(4, 3, 2)
        back = roundtrip_stream(make_stream(frames, kind=fmt.KIND_COMPLEX))
        assert back.frames.shape == (4, 3, 2)
        assert np.array_equal(back.frames, frames)

    @settings(max_examples=30, deadline=None)
    @given(
        n_frames=st.integers(0, 20),
        channels=st.integers(1, 5),
        kind=st.sampled_from([fmt.KIND_REAL, fmt.KIND_PHASE]),
        use_float=st.booleans(),
        seed=st.integers(0, 2 ** 31),
    )
    def test_roundtrip_property(self, n_frames, channels, kind, use_float, seed):
        r = np.random.default_rng(seed)
        if use_float:
            frames = r.normal(size=(n_frames, channels))
            sample_format = fmt.FMT_F64
        else:
            frames = r.integers(-32768, 32768, size=(n_frames, channels)).astype(np.int16)
            sample_format = fmt.FMT_I16
        back = roundtrip_stream(make_stream(frames, kind=kind, sample_format=sample_format))
        assert back.frames.dtype == frames.dtype
        assert np.array_equal(back.frames, frames)


def make_records(n, length=3):
    return [fmt.EventRecord(channel=k % 7, timestamp=10 * k, trigger_value=0.25 * k,
                            pileup=(k % 3 == 0), samples=np.full(length, float(k)))
            for k in range(n)]


class TestEventFormat:
    def test_single_record_roundtrip_bit_exact(self):
        rec = fmt.EventRecord(channel=3, timestamp=2 ** 40, trigger_value=-0.125,
                              pileup=False, samples=np.array([1.0, -2.5, 3e-300]))
        buf = io.BytesIO()
        fmt.write_events(buf, [rec])
        got, skipped = fmt.read_events(io.BytesIO(buf.getvalue()))
        assert skipped == 0
        assert len(got) == 1
        assert got[0].channel == 3
        assert got[0].timestamp == 2 ** 40
        assert got[0].trigger_value == -0.125
        assert got[0].samples.tobytes() == rec.samples.tobytes()

    def test_pileup_flag_preserved(self):
        rec = fmt.EventRecord(channel=0, timestamp=1, trigger_value=0.0,
                              pileup=True, samples=np.zeros(2))
        buf = io.BytesIO()
        fmt.write_events(buf, [rec])
        got, _ = fmt.read_events(io.BytesIO(buf.getvalue()))
        assert got[0].pileup is True

    def test_corrupt_magic_recovers_rest(self):
        recs = make_records(1000)
        buf = io.BytesIO()
        fmt.write_events(buf, recs)
        raw = bytearray(buf.getvalue())
        rec_bytes = EVENT_HEADER_BYTES + 8 * 3
        raw[rec_bytes * 500] ^= 0xFF  # break record 500's magic
        got, skipped = fmt.read_events(io.BytesIO(bytes(raw)))
        assert skipped == 1
        assert len(got) == 999
        assert [r.timestamp for r in got] == [10 * k for k in range(1000) if k != 500]

    def test_corrupt_length_recovers_rest(self):
        recs = make_records(100)
        buf = io.BytesIO()
        fmt.write_events(buf, recs)
        raw = bytearray(buf.getvalue())
        rec_bytes = EVENT_HEADER_BYTES + 8 * 3
        # length field sits in the last 4 header bytes; blow it up
        off = rec_bytes * 50 + EVENT_HEADER_BYTES - 4
        raw[off:off + 4] = (2 ** 31).to_bytes(4, "little")
        got, skipped = fmt.read_events(io.BytesIO(bytes(raw)))
        assert skipped == 1
        assert len(got) == 99

    def test_strict_mode_raises(self):
        recs = make_records(2)
        buf = io.BytesIO()
        fmt.write_events(buf, recs)
        raw = bytearray(buf.getvalue())
        raw[0] ^= 0xFF
        with pytest.raises(FormatError):
            fmt.read_events(io.BytesIO(bytes(raw)), strict=True)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(0, 12), length=st.integers(0, 9), seed=st.integers(0, 2 ** 31))
    def test_roundtrip_property(self, n, length, seed):
        r = np.random.default_rng(seed)
        recs = [fmt.EventRecord(channel=int(r.integers(0, 2 ** 16)),
                                timestamp=int(r.integers(0, 2 ** 63)),
                                trigger_value=float(r.normal()),
                                pileup=bool(r.integers(0, 2)),
                                samples=r.normal(size=length))
                for _ in range(n)]
        buf = io.BytesIO()
        fmt.write_events(buf, recs)
        got, skipped = fmt.read_events(io.BytesIO(buf.getvalue()))
        assert skipped == 0
        assert len(got) == n
        for a, b in zip(got, recs):
            assert a.samples.tobytes() == b.samples.tobytes()
            assert (a.channel, a.timestamp, a.trigger_value, a.pileup) == \
                   (b.channel, b.timestamp, b.trigger_value, b.pileup)


class TestCsvExport:
    def test_header_only_stream(self):
        stream = make_stream(np.zeros((0, 2), dtype=np.int16))
        assert fmt.dumps_csv(stream) == "frame,channel,value\n"

    def test_phase_stream_columns(self):
        frames = np.array([[0.5, -0.25], [0.125, 1.0]])
        stream = make_stream(frames, kind=fmt.KIND_PHASE, sample_format=fmt.FMT_F64)
        lines = fmt.dumps_csv(stream).splitlines()
        assert lines[0] == "channel,ramp_index,phase_rad"
        assert lines[1] == "0,0,0.5"
        assert lines[4] == "1,1,1.0"

    def test_event_rows_per_sample(self):
        recs = make_records(2, length=2)
        lines = fmt.dumps_csv(recs).splitlines()
        assert lines[0] == "event_id,channel,timestamp,sample_index,phase_rad"
        assert len(lines) == 1 + 4

    def test_float_cells_roundtrip_exactly(self, rng):
        values = rng.normal(size=(4, 2)) * 1e-7
        stream = make_stream(values, kind=fmt.KIND_PHASE, sample_format=fmt.FMT_F64)
        lines = fmt.dumps_csv(stream).splitlines()[1:]
        parsed = np.array([float(line.split(",")[2]) for line in lines]).reshape(4, 2)
        assert np.array_equal(parsed, values)
