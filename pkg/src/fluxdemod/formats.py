"""Binary stream and event-record containers plus CSV export.

Two self-describing little-endian formats (byte-level layout in
docs/formats.md):

* sample streams ("FLXD" magic): a fixed header followed by TDM frames,
  channel-major within each frame.  Carries raw real samples, raw complex
  pairs or demodulated phase points.
* event records ("EV" magic): self-framing records, each a small header
  followed by the captured phase samples, concatenated back to back so a
  reader can resynchronize after a corrupted record.

Phase payloads are stored as 64-bit floats; the fixed-point representation
used inside the demodulator is an internal invariant, not a file concern.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

STREAM_MAGIC = b"FLXD"
EVENT_MAGIC = b"EV"
STREAM_VERSION = 1

KIND_REAL = 0
KIND_COMPLEX = 1
KIND_PHASE = 2

FMT_I16 = 0
FMT_F64 = 1

_HEADER_STRUCT = struct.Struct("<4sHBHdIB")  # magic, version, kind, channels, rate, ramp_len, fmt
_EVENT_STRUCT = struct.Struct("<2sHQdBI")  # magic, channel, timestamp, trigger_value, flags, length

_DTYPES = {FMT_I16: np.dtype("<i2"), FMT_F64: np.dtype("<f8")}


@dataclass
class StreamHeader:
    kind: int
    channel_count: int
    sample_rate_hz: float
    ramp_length_samples: int = 0
    sample_format: int = FMT_I16
    version: int = STREAM_VERSION

    def __post_init__(self):
        if self.kind not in (KIND_REAL, KIND_COMPLEX, KIND_PHASE):
            raise FormatError(f"unknown stream kind {self.kind}")
        if self.sample_format not in _DTYPES:
            raise FormatError(f"unknown sample format {self.sample_format}")
        if self.channel_count < 1:
            raise FormatError("channel_count must be >= 1")

    @property
    def values_per_frame(self) -> int:
        return self.channel_count * (2 if self.kind == KIND_COMPLEX else 1)

    @property
    def frame_bytes(self) -> int:
        return self.values_per_frame * _DTYPES[self.sample_format].itemsize

    @property
    def dtype(self) -> np.dtype:
        return _DTYPES[self.sample_format]


@dataclass
class SampleStream:
    """A header plus its TDM payload.

    ``frames`` has shape (n_frames, channels) for real and phase streams and
    (n_frames, channels, 2) for complex pairs.  ``sync`` optionally lists the
    frame indices of ramp starts; files do not store it (ramp boundaries are
    implied by ``ramp_length_samples``), it exists so in-memory streams can
    model irregular synchronization.
    """

    header: StreamHeader
    frames: np.ndarray
    sync: np.ndarray | None = None

    def __post_init__(self):
        want = 3 if self.header.kind == KIND_COMPLEX else 2
        if self.frames.ndim != want or self.frames.shape[1] != self.header.channel_count:
            raise FormatError(
                f"frame array shape {self.frames.shape} does not match header "
                f"(kind {self.header.kind}, {self.header.channel_count} channels)"
            )

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def sync_positions(self) -> np.ndarray:
        """Ramp-start frame indices, explicit if given, else derived from the header."""
        if self.sync is not None:
            return np.asarray(self.sync, dtype=np.int64)
        n = self.header.ramp_length_samples
        if n <= 0:
            return np.empty(0, dtype=np.int64)
        return np.arange(0, self.n_frames, n, dtype=np.int64)


@dataclass
class EventRecord:
    channel: int
    timestamp: int
    trigger_value: float
    pileup: bool
    samples: np.ndarray

    length: int = field(init=False)

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype="<f8")
        self.length = int(self.samples.shape[0])


def _open(path_or_file, mode):
    if hasattr(path_or_file, "read") or hasattr(path_or_file, "write"):
        return path_or_file, False
    return open(path_or_file, mode), True


def write_stream(path_or_file, stream: SampleStream) -> None:
    f, owned = _open(path_or_file, "wb")
    try:
        h = stream.header
        f.write(_HEADER_STRUCT.pack(STREAM_MAGIC, h.version, h.kind, h.channel_count,
                                     h.sample_rate_hz, h.ramp_length_samples, h.sample_format))
        payload = np.ascontiguousarray(stream.frames, dtype=h.dtype)
        f.write(payload.tobytes())
    finally:
        if owned:
            f.close()


def read_header(f) -> StreamHeader:
    raw = f.read(_HEADER_STRUCT.size)
    if len(raw) < _HEADER_STRUCT.size:
        raise FormatError("truncated stream header", offset=len(raw))
    magic, version, kind, channels, rate, ramp_len, fmt = _HEADER_STRUCT.unpack(raw)
    if magic != STREAM_MAGIC:
        raise FormatError(f"bad stream magic {magic!r}", offset=0)
    if version != STREAM_VERSION:
        raise FormatError(f"unsupported stream version {version}", offset=4)
    return StreamHeader(kind=kind, channel_count=channels, sample_rate_hz=rate,
                        ramp_length_samples=ramp_len, sample_format=fmt, version=version)


def read_stream(path_or_file) -> SampleStream:
    f, owned = _open(path_or_file, "rb")
    try:
        header = read_header(f)
        body = f.read()
        if len(body) % header.frame_bytes:
            bad = _HEADER_STRUCT.size + (len(body) // header.frame_bytes) * header.frame_bytes
            raise FormatError("payload truncated mid-frame", offset=bad)
        n_frames = len(body) // header.frame_bytes
        frames = np.frombuffer(body, dtype=header.dtype).copy()
        if header.kind == KIND_COMPLEX:
            frames = frames.reshape(n_frames, header.channel_count, 2)
        else:
            frames = frames.reshape(n_frames, header.channel_count)
        return SampleStream(header=header, frames=frames)
    finally:
        if owned:
            f.close()


def iter_stream(path_or_file, block_frames: int = 65536):
    """Stream a file in blocks without loading the whole payload.

    Yields (header, frames) pairs where every block but the last holds
    ``block_frames`` frames.  Raises FormatError with the offending byte
    offset when the payload ends mid-frame.
    """
    f, owned = _open(path_or_file, "rb")
    try:
        header = read_header(f)
        offset = _HEADER_STRUCT.size
        while True:
            raw = f.read(header.frame_bytes * block_frames)
            if not raw:
                return
            if len(raw) % header.frame_bytes:
                bad = offset + (len(raw) // header.frame_bytes) * header.frame_bytes
                raise FormatError("payload truncated mid-frame", offset=bad)
            n = len(raw) // header.frame_bytes
            frames = np.frombuffer(raw, dtype=header.dtype).copy()
            if header.kind == KIND_COMPLEX:
                frames = frames.reshape(n, header.channel_count, 2)
            else:
                frames = frames.reshape(n, header.channel_count)
            yield header, frames
            offset += len(raw)
    finally:
        if owned:
            f.close()


def write_events(path_or_file, records) -> None:
    f, owned = _open(path_or_file, "wb")
    try:
        for r in records:
            flags = 1 if r.pileup else 0
            f.write(_EVENT_STRUCT.pack(EVENT_MAGIC, r.channel, r.timestamp,
                                        r.trigger_value, flags, r.length))
            f.write(np.ascontiguousarray(r.samples, dtype="<f8").tobytes())
    finally:
        if owned:
            f.close()


def read_events(path_or_file, strict: bool = False) -> tuple[list[EventRecord], int]:
    """Read event records, resynchronizing on corruption.

    Returns (records, skipped).  A record is skipped when its magic does not
    match or its declared length runs past the end of the data; the reader
    then scans forward to the next record magic.  With ``strict`` the first
    corruption raises FormatError instead.
    """
    f, owned = _open(path_or_file, "rb")
    try:
        data = f.read()
    finally:
        if owned:
            f.close()

    records: list[EventRecord] = []
    skipped = 0
    pos = 0
    hsize = _EVENT_STRUCT.size
    while pos < len(data):
        if len(data) - pos < hsize:
            if strict:
                raise FormatError("truncated event header", offset=pos)
            skipped += 1
            break
        magic, channel, timestamp, trig, flags, length = _EVENT_STRUCT.unpack_from(data, pos)
        end = pos + hsize + 8 * length
        if magic != EVENT_MAGIC or end > len(data):
            if strict:
                raise FormatError("corrupt event record", offset=pos)
            nxt = data.find(EVENT_MAGIC, pos + 1)
            skipped += 1
            if nxt < 0:
                break
            pos = nxt
            continue
        samples = np.frombuffer(data, dtype="<f8", count=length, offset=pos + hsize).copy()
        records.append(EventRecord(channel=channel, timestamp=timestamp,
                                   trigger_value=trig, pileup=bool(flags & 1),
                                   samples=samples))
        pos = end
    return records, skipped


def _fmt(value) -> str:
    """Round-trip-safe decimal rendering for floats, plain str otherwise."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def export_stream_csv(stream: SampleStream, sink) -> None:
    """Write a stream as CSV with deterministic column order."""
    h = stream.header
    if h.kind == KIND_PHASE:
        sink.write("channel,ramp_index,phase_rad\n")
        for m in range(stream.n_frames):
            row = stream.frames[m]
            for c in range(h.channel_count):
                sink.write(f"{c},{m},{_fmt(row[c])}\n")
    elif h.kind == KIND_COMPLEX:
        sink.write("frame,channel,i,q\n")
        for m in range(stream.n_frames):
            for c in range(h.channel_count):
                i, q = stream.frames[m, c]
                sink.write(f"{m},{c},{_fmt(i)},{_fmt(q)}\n")
    else:
        sink.write("frame,channel,value\n")
        for m in range(stream.n_frames):
            for c in range(h.channel_count):
                sink.write(f"{m},{c},{_fmt(stream.frames[m, c])}\n")


def export_events_csv(records, sink, per_sample: bool = True) -> None:
    """Write event records as CSV, one row per sample (or per event header)."""
    if per_sample:
        sink.write("event_id,channel,timestamp,sample_index,phase_rad\n")
        for k, r in enumerate(records):
            for j, v in enumerate(r.samples):
                sink.write(f"{k},{r.channel},{r.timestamp},{j},{_fmt(v)}\n")
    else:
        sink.write("event_id,channel,timestamp,trigger_value,pileup,length\n")
        for k, r in enumerate(records):
            sink.write(f"{k},{r.channel},{r.timestamp},{_fmt(r.trigger_value)},"
                       f"{int(r.pileup)},{r.length}\n")


def export_csv(obj, sink, **kwargs) -> None:
    """Dispatch CSV export for a SampleStream or a list of EventRecords."""
    if isinstance(obj, SampleStream):
        export_stream_csv(obj, sink)
    else:
        export_events_csv(obj, sink, **kwargs)


def dumps_csv(obj, **kwargs) -> str:
    buf = io.StringIO()
    export_csv(obj, buf, **kwargs)
    return buf.getvalue()
