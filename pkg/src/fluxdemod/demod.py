"""Fixed-point TDM flux-ramp demodulator.

The datapath mirrors a streaming hardware implementation: an optional
magnitude stage for complex envelopes, a table-driven NCO that restarts at
every ramp, windowed sine/cosine correlation with one-ramp-delayed DC
removal, block scaling of the two accumulators to a common full scale, and a
shift-add arctangent.  All arithmetic is integer; widths are configurable
and checked for overflow when a config is built.

Two execution engines share the exact same integer semantics: a per-frame
streaming engine (the reference state machine, one TDM frame at a time) and
a vectorized block engine used for bulk runs.  Their outputs are bit-equal,
which the test suite asserts on randomized streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .cordic import atan2_fixed, atan2_fixed_array, magnitude, magnitude_array
from .errors import ConfigError, FormatError
from .formats import KIND_COMPLEX, KIND_PHASE, KIND_REAL, SampleStream, StreamHeader, FMT_F64

WINDOW_KINDS = ("rectangular", "bartlett", "hann")
INPUT_KINDS = ("real", "complex_envelope")


def _per_channel(value, channels: int, name: str) -> tuple:
    if isinstance(value, (list, tuple, np.ndarray)):
        if len(value) != channels:
            raise ConfigError(f"{name} needs one entry per channel")
        return tuple(value)
    return (value,) * channels


@lru_cache(maxsize=4)
def sine_table(width_bits: int) -> np.ndarray:
    """Full-turn signed sine table, 2^width entries at 2^(width-1)-1 full scale."""
    size = 1 << width_bits
    fs = (1 << (width_bits - 1)) - 1
    return np.round(fs * np.sin(2 * np.pi * np.arange(size) / size)).astype(np.int64)


def window_weight_q(n: int, span_length: int, kind: str, frac_bits: int = 16) -> int:
    """Window weight as an integer fraction with ``frac_bits`` fractional bits.

    Symmetry (weight(n) == weight(L-1-n)) holds exactly: bartlett is computed
    from an integer expression that is identical for mirrored indices and
    hann is evaluated at the canonical mirrored index.
    """
    if kind not in WINDOW_KINDS:
        raise ConfigError(f"unknown window kind {kind!r}")
    if not 0 <= n < span_length:
        raise ConfigError("window index outside span")
    one = 1 << frac_bits
    if kind == "rectangular" or span_length == 1:
        return one
    if kind == "bartlett":
        num = (span_length - 1) - abs(2 * n - (span_length - 1))
        return (2 * one * num + (span_length - 1)) // (2 * (span_length - 1))
    m = min(n, span_length - 1 - n)
    val = 0.5 * (1.0 - math.cos(2 * math.pi * m / (span_length - 1)))
    return round(val * one)


def window_weight(n: int, span_length: int, kind: str, frac_bits: int = 16) -> float:
    """Quantized window weight as a fraction in [0, 1]."""
    return window_weight_q(n, span_length, kind, frac_bits) / (1 << frac_bits)


@lru_cache(maxsize=64)
def window_table_q(span_length: int, kind: str, frac_bits: int) -> np.ndarray:
    return np.array([window_weight_q(j, span_length, kind, frac_bits)
                     for j in range(span_length)], dtype=np.int64)


def _rdiv(a: int, b: int) -> int:
    """Divide rounding half away from zero (b > 0)."""
    if a >= 0:
        return (a + b // 2) // b
    return -((-a + b // 2) // b)


def _rdiv_array(a: np.ndarray, b: int) -> np.ndarray:
    mag = (np.abs(a) + b // 2) // b
    return np.where(a < 0, -mag, mag)


@dataclass(frozen=True)
class DemodConfig:
    """Datapath configuration; per-channel fields accept a scalar or a list."""

    channel_count: int
    sample_rate_hz: float
    ramp_length_samples: int | Sequence[int]
    modulation_freq_hz: float | Sequence[float]
    trim_begin: int | Sequence[int] = 0
    trim_end: int | Sequence[int] = 0
    window: str | Sequence[str] = "rectangular"
    input_kind: str = "real"
    nco_width_bits: int = 16
    accumulator_width_bits: int = 48
    sample_width_bits: int = 16

    def __post_init__(self):
        if self.channel_count < 1:
            raise ConfigError("channel_count must be >= 1")
        if self.input_kind not in INPUT_KINDS:
            raise ConfigError(f"unknown input kind {self.input_kind!r}")
        if not 4 <= self.nco_width_bits <= 26:
            raise ConfigError("nco_width_bits out of supported range")
        c = self.channel_count
        object.__setattr__(self, "_n", _per_channel(self.ramp_length_samples, c, "ramp_length_samples"))
        object.__setattr__(self, "_fr", _per_channel(self.modulation_freq_hz, c, "modulation_freq_hz"))
        object.__setattr__(self, "_ob", _per_channel(self.trim_begin, c, "trim_begin"))
        object.__setattr__(self, "_oe", _per_channel(self.trim_end, c, "trim_end"))
        object.__setattr__(self, "_win", _per_channel(self.window, c, "window"))
        for ch in range(c):
            n, fr, ob, oe, win = (self._n[ch], self._fr[ch], self._ob[ch],
                                  self._oe[ch], self._win[ch])
            if n < 2:
                raise ConfigError(f"channel {ch}: ramp length must be >= 2")
            if not 0 < fr < self.sample_rate_hz / 2:
                raise ConfigError(f"channel {ch}: modulation frequency not below Nyquist")
            if ob < 0 or oe < 0 or ob + oe >= n - 1:
                raise ConfigError(f"channel {ch}: trim offsets leave no span")
            if (n - ob - oe) * fr / self.sample_rate_hz < 1.0:
                raise ConfigError(f"channel {ch}: span shorter than one modulation period")
            if win not in WINDOW_KINDS:
                raise ConfigError(f"channel {ch}: unknown window {win!r}")
        # Worst-case accumulator growth must fit the configured width (and the
        # int64 math of the block engine).
        diff_max = 1 << (self.sample_width_bits + (1 if self.input_kind == "complex_envelope" else 0))
        fs = (1 << (self.nco_width_bits - 1)) - 1
        for ch in range(c):
            span = self._n[ch] - self._ob[ch] - self._oe[ch]
            need = (span * diff_max * fs).bit_length() + 1
            if need > self.accumulator_width_bits:
                raise ConfigError(
                    f"channel {ch}: worst case needs {need} accumulator bits, "
                    f"configured {self.accumulator_width_bits}")
            if need > 63:
                raise ConfigError(f"channel {ch}: accumulator exceeds 63-bit engine limit")

    # Resolved per-channel views -------------------------------------------
    def ramp_length(self, ch: int) -> int:
        return self._n[ch]

    def span_length(self, ch: int) -> int:
        return self._n[ch] - self._ob[ch] - self._oe[ch]

    def trim(self, ch: int) -> tuple[int, int]:
        return self._ob[ch], self._oe[ch]

    def window_kind(self, ch: int) -> str:
        return self._win[ch]

    def modulation_freq(self, ch: int) -> float:
        return self._fr[ch]

    def phase_increment(self, ch: int) -> int:
        return round(self._fr[ch] / self.sample_rate_hz * (1 << self.nco_width_bits)) \
            % (1 << self.nco_width_bits)

    @property
    def uniform_ramp_length(self) -> int | None:
        return self._n[0] if len(set(self._n)) == 1 else None


class Nco:
    """Direct-digital-synthesis oscillator on a shared full-turn sine table."""

    def __init__(self, phase_increment: int, width_bits: int, table: np.ndarray | None = None):
        self.width_bits = width_bits
        self.mask = (1 << width_bits) - 1
        self.quarter = 1 << (width_bits - 2)
        self.phase_increment = phase_increment & self.mask
        self.phase_accumulator = 0
        self.table = sine_table(width_bits) if table is None else table

    def reset(self) -> None:
        self.phase_accumulator = 0

    def step(self) -> tuple[int, int]:
        """Emit (sine, cosine) at the current phase, then advance."""
        p = self.phase_accumulator
        s = int(self.table[p])
        c = int(self.table[(p + self.quarter) & self.mask])
        self.phase_accumulator = (p + self.phase_increment) & self.mask
        return s, c


def nco_step(state: Nco) -> tuple[int, int, Nco]:
    s, c = state.step()
    return s, c, state


@dataclass
class PhasePoint:
    channel: int
    ramp_index: int
    phase_rad: float
    magnitude_class: int


class RampAccumulator:
    """Correlation state of one channel for the current ramp.

    A demodulator holds one per channel; conceptually they sit in a ring that
    advances one entry per TDM frame slot.  ``dc_estimate`` carries the
    previous ramp's span mean (zero before the first ramp completes, so the
    estimate settles within two ramps).
    """

    __slots__ = ("acc_sin", "acc_cos", "dc_estimate", "sample_sum", "sample_count",
                 "frac_bits")

    def __init__(self, frac_bits: int = 16):
        self.frac_bits = frac_bits
        self.acc_sin = 0
        self.acc_cos = 0
        self.dc_estimate = 0
        self.sample_sum = 0
        self.sample_count = 0

    def clear_ramp(self) -> None:
        self.acc_sin = 0
        self.acc_cos = 0
        self.sample_sum = 0
        self.sample_count = 0

    def accumulate(self, sample: int, sine: int, cosine: int, weight_q: int) -> None:
        """Add one in-span sample: pre-adder DC removal, window, then MAC."""
        wdiff = ((sample - self.dc_estimate) * weight_q) >> self.frac_bits
        self.acc_sin += wdiff * sine
        self.acc_cos += wdiff * cosine
        self.sample_sum += sample
        self.sample_count += 1


def accumulate_sample(acc: RampAccumulator, sample: int, sine: int, cosine: int,
                      weight_q: int) -> RampAccumulator:
    acc.accumulate(sample, sine, cosine, weight_q)
    return acc


def finalize_ramp(acc: RampAccumulator, channel: int, ramp_index: int,
                  atan_width_bits: int = 16) -> PhasePoint:
    """Block-scale the accumulators, run the arctangent, rotate the DC estimate.

    Both accumulators are shifted by the same amount so that the larger one
    occupies the arctangent input width; the shared shift preserves the
    quotient, making the output invariant under scaling both accumulators by
    any power of two.  An all-zero ramp yields a flagged degenerate point
    (phase 0, magnitude_class -1) instead of an error so one dead channel
    cannot stall the stream.
    """
    phase, mag_class = scaled_atan2(acc.acc_cos, acc.acc_sin, atan_width_bits)
    if acc.sample_count > 0:
        acc.dc_estimate = _rdiv(acc.sample_sum, acc.sample_count)
    acc.clear_ramp()
    return PhasePoint(channel=channel, ramp_index=ramp_index,
                      phase_rad=phase, magnitude_class=mag_class)


def scaled_atan2(acc_cos: int, acc_sin: int, atan_width_bits: int = 16) -> tuple[float, int]:
    """(phase, magnitude class) of a correlation pair after block scaling."""
    mag = max(abs(acc_sin), abs(acc_cos))
    if mag == 0:
        return 0.0, -1
    p = mag.bit_length() - 1
    shift = (atan_width_bits - 2) - p
    if shift >= 0:
        a_sin, a_cos = acc_sin << shift, acc_cos << shift
    else:
        a_sin, a_cos = acc_sin >> -shift, acc_cos >> -shift
    return atan2_fixed(a_cos, a_sin, iterations=atan_width_bits), p


@dataclass
class DemodResult:
    """Per-channel phase streams plus bookkeeping counters."""

    channel_phases: list[np.ndarray]
    channel_mags: list[np.ndarray]
    resyncs: np.ndarray
    frames_in: int

    @property
    def total_resyncs(self) -> int:
        return int(self.resyncs.sum())

    def phase_matrix(self) -> np.ndarray:
        """(ramps, channels) matrix; requires equal emission counts."""
        counts = {len(p) for p in self.channel_phases}
        if len(counts) != 1:
            raise ValueError("channels emitted unequal ramp counts")
        return np.stack(self.channel_phases, axis=1)

    def mag_matrix(self) -> np.ndarray:
        return np.stack(self.channel_mags, axis=1)

    def points(self):
        """PhasePoints in TDM order (ramp-major); requires equal counts."""
        mat = self.phase_matrix()
        mags = self.mag_matrix()
        for m in range(mat.shape[0]):
            for c in range(mat.shape[1]):
                yield PhasePoint(c, m, float(mat[m, c]), int(mags[m, c]))

    def to_stream(self, ramp_rate_hz: float, ramp_length: int) -> SampleStream:
        header = StreamHeader(kind=KIND_PHASE, channel_count=len(self.channel_phases),
                              sample_rate_hz=ramp_rate_hz,
                              ramp_length_samples=ramp_length, sample_format=FMT_F64)
        return SampleStream(header=header, frames=self.phase_matrix())


class Demodulator:
    """Streaming reference engine, one TDM frame at a time."""

    def __init__(self, config: DemodConfig):
        self.config = config
        w = config.nco_width_bits
        self._table = sine_table(w)
        self._ncos = [Nco(config.phase_increment(c), w, self._table)
                      for c in range(config.channel_count)]
        self._accs = [RampAccumulator(frac_bits=w) for _ in range(config.channel_count)]
        self._wtabs = [window_table_q(config.span_length(c), config.window_kind(c), w)
                       for c in range(config.channel_count)]
        self._pos = [0] * config.channel_count
        self._emitted = [0] * config.channel_count
        self.resyncs = np.zeros(config.channel_count, dtype=np.int64)
        self.frames_in = 0

    def _resync_channel(self, c: int) -> None:
        if self._pos[c] != 0:
            self.resyncs[c] += 1
            self._accs[c].clear_ramp()
            self._pos[c] = 0
        self._ncos[c].reset()

    def push_frame(self, frame, sync: bool = False) -> list[PhasePoint]:
        """Process one TDM frame (one sample per channel), returning any
        completed PhasePoints.  ``sync`` marks the frame as a ramp start."""
        cfg = self.config
        if sync:
            for c in range(cfg.channel_count):
                self._resync_channel(c)
        out: list[PhasePoint] = []
        complex_in = cfg.input_kind == "complex_envelope"
        for c in range(cfg.channel_count):
            if complex_in:
                i, q = frame[c]
                sample = magnitude(int(i), int(q), iterations=cfg.nco_width_bits)
            else:
                sample = int(frame[c])
            pos = self._pos[c]
            nco = self._ncos[c]
            sine, cosine = nco.step()
            ob, oe = cfg.trim(c)
            n = cfg.ramp_length(c)
            if ob <= pos <= n - 1 - oe:
                self._accs[c].accumulate(sample, sine, cosine,
                                         int(self._wtabs[c][pos - ob]))
            pos += 1
            if pos == n:
                out.append(finalize_ramp(self._accs[c], c, self._emitted[c],
                                         atan_width_bits=cfg.nco_width_bits))
                self._emitted[c] += 1
                pos = 0
                nco.reset()
            self._pos[c] = pos
        self.frames_in += 1
        return out


def _as_int_frames(frames: np.ndarray, cfg: DemodConfig) -> np.ndarray:
    if frames.dtype.kind == "f":
        out = np.rint(frames).astype(np.int64)
    else:
        out = frames.astype(np.int64)
    limit = 1 << (cfg.sample_width_bits - 1)
    if out.size and (out.max() > limit or out.min() < -limit):
        raise FormatError("sample magnitude exceeds configured sample width")
    return out


def _channel_segments(sync_positions, n_frames: int, ramp_length: int):
    """Segment a stream for one channel, merging ramp-aligned sync markers.

    A sync landing where the channel's ramp counter is already zero is a
    no-op; only misaligned syncs cut the stream (discarding a partial ramp).
    Returns (segment bounds, resync count).
    """
    effective = []
    origin = 0
    for s in sorted({int(s) for s in sync_positions if 0 < s < n_frames}):
        if (s - origin) % ramp_length != 0:
            effective.append(s)
            origin = s
    return [0] + effective + [n_frames], len(effective)


def _stream_kind_check(stream: SampleStream, cfg: DemodConfig) -> None:
    if stream.header.kind == KIND_PHASE:
        raise FormatError("cannot demodulate an already-demodulated phase stream")
    want_complex = cfg.input_kind == "complex_envelope"
    got_complex = stream.header.kind == KIND_COMPLEX
    if want_complex != got_complex:
        raise FormatError("stream kind does not match configured input kind")
    if stream.header.channel_count != cfg.channel_count:
        raise FormatError(
            f"stream has {stream.header.channel_count} channels, "
            f"config expects {cfg.channel_count}")


def demodulate_stream(stream: SampleStream, config: DemodConfig,
                      engine: str = "block") -> DemodResult:
    """Demodulate a whole sample stream into per-channel phase series.

    ``engine`` selects the per-frame reference state machine ("frame") or the
    vectorized implementation ("block"); both produce bit-identical results.
    """
    _stream_kind_check(stream, config)
    if engine == "frame":
        return _demodulate_frames(stream, config)
    if engine == "block":
        return _demodulate_block(stream, config)
    raise ConfigError(f"unknown engine {engine!r}")


def _demodulate_frames(stream: SampleStream, config: DemodConfig) -> DemodResult:
    demod = Demodulator(config)
    sync_set = set(stream.sync_positions().tolist())
    phases: list[list[float]] = [[] for _ in range(config.channel_count)]
    mags: list[list[int]] = [[] for _ in range(config.channel_count)]
    frames = stream.frames
    for t in range(stream.n_frames):
        for pt in demod.push_frame(frames[t], sync=t in sync_set):
            phases[pt.channel].append(pt.phase_rad)
            mags[pt.channel].append(pt.magnitude_class)
    return DemodResult(
        channel_phases=[np.array(p, dtype=float) for p in phases],
        channel_mags=[np.array(m, dtype=np.int64) for m in mags],
        resyncs=demod.resyncs.copy(), frames_in=demod.frames_in)


def _bit_lengths(values: np.ndarray) -> np.ndarray:
    """floor(log2(v)) for positive int64 values, exact at power boundaries."""
    v = values.astype(np.float64)
    p = np.floor(np.log2(v)).astype(np.int64)
    # float log2 can be off by one ulp near exact powers; correct exactly
    too_high = (np.left_shift(np.int64(1), p) > values)
    p = p - too_high.astype(np.int64)
    too_low = (np.left_shift(np.int64(1), p + 1) <= values)
    p = p + too_low.astype(np.int64)
    return p


def _demodulate_block(stream: SampleStream, config: DemodConfig) -> DemodResult:
    cfg = config
    syncs = stream.sync_positions()
    n_frames = stream.n_frames
    if cfg.input_kind == "complex_envelope":
        i = stream.frames[..., 0]
        q = stream.frames[..., 1]
        if i.dtype.kind == "f":
            i = np.rint(i).astype(np.int64)
            q = np.rint(q).astype(np.int64)
        samples = magnitude_array(np.asarray(i, dtype=np.int64),
                                  np.asarray(q, dtype=np.int64),
                                  iterations=cfg.nco_width_bits)
    else:
        samples = _as_int_frames(stream.frames, cfg)

    table = sine_table(cfg.nco_width_bits)
    mask = (1 << cfg.nco_width_bits) - 1
    quarter = 1 << (cfg.nco_width_bits - 2)
    frac = cfg.nco_width_bits
    width = cfg.nco_width_bits

    phases_out = [[] for _ in range(cfg.channel_count)]
    mags_out = [[] for _ in range(cfg.channel_count)]
    resyncs = np.zeros(cfg.channel_count, dtype=np.int64)
    carry_dc = np.zeros(cfg.channel_count, dtype=np.int64)

    for c in range(cfg.channel_count):
        n = cfg.ramp_length(c)
        ob, oe = cfg.trim(c)
        span = cfg.span_length(c)
        inc = cfg.phase_increment(c)
        idx = (inc * np.arange(n, dtype=np.int64)) & mask
        sine_ref = table[idx][ob:n - oe]
        cos_ref = table[(idx + quarter) & mask][ob:n - oe]
        w_q = window_table_q(span, cfg.window_kind(c), frac)

        bounds, n_resync = _channel_segments(syncs, n_frames, n)
        resyncs[c] = n_resync
        for seg in range(len(bounds) - 1):
            b, e = bounds[seg], bounds[seg + 1]
            m_ramps = (e - b) // n
            if m_ramps == 0:
                continue
            ramps = samples[b:b + m_ramps * n, c].reshape(m_ramps, n)
            span_samples = ramps[:, ob:n - oe]
            span_sums = span_samples.sum(axis=1, dtype=np.int64)
            dc = np.empty(m_ramps, dtype=np.int64)
            dc[0] = carry_dc[c]
            if m_ramps > 1:
                dc[1:] = _rdiv_array(span_sums[:-1], span)
            carry_dc[c] = _rdiv_array(span_sums[-1:], span)[0]

            wdiff = ((span_samples - dc[:, None]) * w_q[None, :]) >> frac
            acc_sin = wdiff @ sine_ref
            acc_cos = wdiff @ cos_ref

            mag = np.maximum(np.abs(acc_sin), np.abs(acc_cos))
            degenerate = mag == 0
            p = np.zeros(m_ramps, dtype=np.int64)
            nz = ~degenerate
            if nz.any():
                p[nz] = _bit_lengths(mag[nz])
            shift = (width - 2) - p
            a_sin = np.where(shift >= 0, acc_sin << np.maximum(shift, 0),
                             acc_sin >> np.maximum(-shift, 0))
            a_cos = np.where(shift >= 0, acc_cos << np.maximum(shift, 0),
                             acc_cos >> np.maximum(-shift, 0))
            ph = atan2_fixed_array(a_cos, a_sin, iterations=width)
            ph = np.where(degenerate, 0.0, ph)
            mag_class = np.where(degenerate, -1, p)
            phases_out[c].append(ph)
            mags_out[c].append(mag_class)

    return DemodResult(
        channel_phases=[np.concatenate(p) if p else np.empty(0) for p in phases_out],
        channel_mags=[np.concatenate(m) if m else np.empty(0, dtype=np.int64)
                      for m in mags_out],
        resyncs=resyncs, frames_in=n_frames)


def oracle_comparison(stream: SampleStream, config: DemodConfig,
                      result: DemodResult) -> float:
    """Max circular deviation between the fixed-point result and the
    double-precision reference, across all channels and ramps."""
    from . import sigmodel

    worst = 0.0
    syncs = stream.sync_positions()
    for c in range(config.channel_count):
        n = config.ramp_length(c)
        ob, oe = config.trim(c)
        spec = sigmodel.RampSpec(sample_rate_hz=config.sample_rate_hz,
                                 ramp_length_samples=n,
                                 modulation_freq_hz=config.modulation_freq(c))
        bounds, _ = _channel_segments(syncs, stream.n_frames, n)
        k = 0
        for seg in range(len(bounds) - 1):
            b, e = bounds[seg], bounds[seg + 1]
            for m in range((e - b) // n):
                ramp = np.asarray(stream.frames[b + m * n:b + (m + 1) * n, c], dtype=float)
                ref = sigmodel.oracle_demod(ramp, spec, window=config.window_kind(c),
                                            o_beg=ob, o_end=oe)
                got = result.channel_phases[c][k]
                d = abs((got - ref + math.pi) % (2 * math.pi) - math.pi)
                worst = max(worst, d)
                k += 1
    return worst
