"""Synthetic flux-ramp scenes and a double-precision reference demodulator.

Models the digitized output of a flux-ramp modulated SQUID channel: within
every ramp of N samples the channel carries one period-locked sine carrier
whose phase offset tracks the (slowly varying) sensor signal.  Calorimeter
hits appear as fast-rise, slow-decay excursions of that phase.  Everything
here is double precision and vectorized; it provides both the stimulus and
the ground truth against which the fixed-point datapath is judged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, UndefinedPhaseError
from .formats import FMT_F64, FMT_I16, KIND_REAL, SampleStream, StreamHeader

WINDOW_KINDS = ("rectangular", "bartlett", "hann")


@dataclass
class RampSpec:
    """Carrier parameters for one flux-ramp period."""

    sample_rate_hz: float
    ramp_length_samples: int
    modulation_freq_hz: float
    amplitude: float = 1.0
    dc_offset: float = 0.0

    def __post_init__(self):
        if self.ramp_length_samples < 2:
            raise ParameterError("ramp_length_samples must be >= 2")
        if not 0.0 < self.modulation_freq_hz < self.sample_rate_hz / 2:
            raise ParameterError("modulation frequency must sit below Nyquist")

    @property
    def cycles_per_sample(self) -> float:
        return self.modulation_freq_hz / self.sample_rate_hz

    @property
    def ramp_rate_hz(self) -> float:
        return self.sample_rate_hz / self.ramp_length_samples


@dataclass
class PulseSpec:
    """Double-exponential pulse shape and its Poisson arrival rate.

    ``event_rate_hz`` may be zero (no arrivals); negative rates and
    non-positive time constants are rejected.
    """

    rise_time_s: float
    decay_time_s: float
    amplitude_rad: float
    event_rate_hz: float

    def __post_init__(self):
        if self.rise_time_s <= 0 or self.decay_time_s <= 0:
            raise ParameterError("pulse time constants must be positive")
        if self.rise_time_s >= self.decay_time_s:
            raise ParameterError("pulse must rise faster than it decays")
        if self.amplitude_rad <= 0:
            raise ParameterError("pulse amplitude must be positive")
        if self.event_rate_hz < 0:
            raise ParameterError("event rate must be >= 0")


@dataclass
class ChannelScene:
    """A multi-channel synthetic acquisition.

    ``ramp`` is either one RampSpec shared by all channels or a list with one
    entry per channel (all entries must share the sample rate and the ramp
    length so the TDM stream still has a single ramp clock, the per-channel
    carrier frequency models dc-SQUID coupling spread).  ``static_phase_rad``
    adds a constant per-channel phase offset on top of the pulse train.
    ``glitch_*`` corrupt the first and last samples of every ramp, exercising
    the trimming offsets downstream.
    """

    channel_count: int
    ramp: RampSpec | list[RampSpec]
    pulses: PulseSpec | None = None
    noise_sigma: float = 0.0
    duration_s: float = 1.0
    seed: int = 0
    static_phase_rad: float | list[float] = 0.0
    glitch_begin: int = 0
    glitch_end: int = 0
    glitch_amplitude: float = 0.0
    sample_format: int = FMT_I16

    def __post_init__(self):
        if self.channel_count < 1:
            raise ParameterError("channel_count must be >= 1")
        if self.duration_s < 0:
            raise ParameterError("duration_s must be >= 0")
        ramps = self.ramps_per_channel()
        first = ramps[0]
        for r in ramps[1:]:
            if (r.sample_rate_hz != first.sample_rate_hz
                    or r.ramp_length_samples != first.ramp_length_samples):
                raise ParameterError("per-channel ramps must share f_s and ramp length")

    def ramps_per_channel(self) -> list[RampSpec]:
        if isinstance(self.ramp, RampSpec):
            return [self.ramp] * self.channel_count
        if len(self.ramp) != self.channel_count:
            raise ParameterError("need one RampSpec per channel")
        return list(self.ramp)

    def static_phases(self) -> np.ndarray:
        if isinstance(self.static_phase_rad, (int, float)):
            return np.full(self.channel_count, float(self.static_phase_rad))
        phases = np.asarray(self.static_phase_rad, dtype=float)
        if phases.shape != (self.channel_count,):
            raise ParameterError("need one static phase per channel")
        return phases


@dataclass
class SceneTruth:
    """Ground truth emitted alongside a generated stream."""

    phase: np.ndarray  # (n_ramps, channels), radians, value held during ramp m
    event_times: list[np.ndarray]  # per channel, seconds
    event_amplitudes: list[np.ndarray]  # per channel, radians


def pulse_shape(t: np.ndarray, rise_time_s: float, decay_time_s: float) -> np.ndarray:
    """Unit-amplitude double exponential, zero for t < 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t >= 0
    out[m] = np.exp(-t[m] / decay_time_s) - np.exp(-t[m] / rise_time_s)
    return out


def render_pulse_train(event_times_s, pulses: PulseSpec, duration_s: float,
                       rate_out_hz: float) -> np.ndarray:
    """Superpose the pulse shape at each arrival onto an output-rate timeline."""
    if rate_out_hz <= 0:
        raise ParameterError("output rate must be positive")
    if duration_s < 0:
        raise ParameterError("duration must be >= 0")
    n = int(round(duration_s * rate_out_hz))
    timeline = np.zeros(n)
    t = np.arange(n) / rate_out_hz
    for t0 in np.sort(np.asarray(event_times_s, dtype=float)):
        k0 = int(math.ceil(t0 * rate_out_hz - 1e-12))
        if k0 >= n:
            continue
        k0 = max(k0, 0)
        timeline[k0:] += pulses.amplitude_rad * pulse_shape(
            t[k0:] - t0, pulses.rise_time_s, pulses.decay_time_s)
    return timeline


def draw_poisson_arrivals(rate_hz: float, duration_s: float, rng) -> np.ndarray:
    """Arrival times of a homogeneous Poisson process on [0, duration)."""
    if rate_hz == 0 or duration_s == 0:
        return np.empty(0)
    count = rng.poisson(rate_hz * duration_s)
    return np.sort(rng.uniform(0.0, duration_s, size=count))


def gen_pulse_train(pulses: PulseSpec, duration_s: float, rate_out_hz: float,
                    seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw Poisson arrivals and render them; returns (timeline, arrival times)."""
    rng = np.random.default_rng(seed)
    times = draw_poisson_arrivals(pulses.event_rate_hz, duration_s, rng)
    return render_pulse_train(times, pulses, duration_s, rate_out_hz), times


def tone_ramp(spec: RampSpec, phase_rad: float = 0.0) -> np.ndarray:
    """One noiseless ramp of the carrier with the given phase offset (float64)."""
    n = np.arange(spec.ramp_length_samples)
    return (spec.dc_offset
            + spec.amplitude * np.sin(2 * np.pi * spec.cycles_per_sample * n + phase_rad))


def two_tone_ramp(n_samples: int, periods_a: float, periods_b: float,
                  phase_a: float = 0.0, phase_b: float = 0.0,
                  amplitude_a: float = 1.0, amplitude_b: float = 1.0,
                  dc: float = 0.0) -> np.ndarray:
    """One ramp carrying two carriers, given as periods per ramp.

    Used for leakage studies: a channel whose correlation period fits tone A
    exactly sees tone B as an interferer.
    """
    n = np.arange(n_samples)
    return (dc + amplitude_a * np.sin(2 * np.pi * periods_a / n_samples * n + phase_a)
            + amplitude_b * np.sin(2 * np.pi * periods_b / n_samples * n + phase_b))


def window_curve(span_length: int, kind: str) -> np.ndarray:
    """Continuous (float) window weights over a correlation span.

    This is the reference definition used by the oracle; the fixed-point
    datapath quantizes its own copy independently.
    """
    if kind not in WINDOW_KINDS:
        raise ParameterError(f"unknown window kind {kind!r}")
    m = np.arange(span_length)
    if kind == "rectangular" or span_length == 1:
        return np.ones(span_length)
    if kind == "bartlett":
        return 1.0 - np.abs(2.0 * m - (span_length - 1)) / (span_length - 1)
    return 0.5 * (1.0 - np.cos(2 * np.pi * m / (span_length - 1)))


def oracle_demod(samples, spec: RampSpec, window: str = "rectangular",
                 o_beg: int = 0, o_end: int = 0) -> float:
    """Double-precision phase of one ramp.

    Correlates the mean-removed, windowed span [o_beg, N-1-o_end] against
    sine and cosine references at the carrier frequency and returns
    atan2(cosine correlation, sine correlation) in (-pi, pi], so a pure
    ``sin(2*pi*f_r/f_s*n + phi)`` input yields phi.
    """
    samples = np.asarray(samples, dtype=float)
    n_total = spec.ramp_length_samples
    if samples.shape != (n_total,):
        raise ParameterError("need exactly one ramp of samples")
    if o_beg < 0 or o_end < 0 or o_beg + o_end >= n_total - 1:
        raise ParameterError("trim offsets leave no correlation span")
    idx = np.arange(o_beg, n_total - o_end)
    span = samples[idx]
    w = window_curve(idx.size, window)
    ref = 2 * np.pi * spec.cycles_per_sample * idx
    resid = span - span.mean()
    cos_corr = float(np.sum(resid * np.cos(ref) * w))
    sin_corr = float(np.sum(resid * np.sin(ref) * w))
    if cos_corr == 0.0 and sin_corr == 0.0:
        raise UndefinedPhaseError("both correlation sums are zero")
    phase = math.atan2(cos_corr, sin_corr)
    return math.pi if phase == -math.pi else phase


def gen_scene(scene: ChannelScene) -> tuple[SampleStream, SceneTruth]:
    """Render a scene into a TDM sample stream plus its ground truth.

    Per channel, sample n of ramp m is
    ``dc + A*sin(2*pi*f_r/f_s*n + phi_m) + noise`` with n restarting at every
    ramp boundary and phi_m sampled from the pulse train at the ramp start
    (the sensor signal is quasi-static within one ramp).  A sync marker is
    recorded at every ramp start.
    """
    ramps = scene.ramps_per_channel()
    base = ramps[0]
    n = base.ramp_length_samples
    f_ramp = base.ramp_rate_hz
    n_ramps = int(round(scene.duration_s * f_ramp))
    n_frames = n_ramps * n

    children = np.random.SeedSequence(scene.seed).spawn(scene.channel_count)
    statics = scene.static_phases()

    phase = np.zeros((n_ramps, scene.channel_count))
    quantize = scene.sample_format == FMT_I16
    payload = np.zeros((n_frames, scene.channel_count),
                       dtype=np.int16 if quantize else np.float64)
    event_times: list[np.ndarray] = []
    event_amps: list[np.ndarray] = []

    sample_idx = np.arange(n)
    for c, spec in enumerate(ramps):
        rng = np.random.default_rng(children[c])
        if scene.pulses is not None:
            times = draw_poisson_arrivals(scene.pulses.event_rate_hz, scene.duration_s, rng)
            train = render_pulse_train(times, scene.pulses, scene.duration_s, f_ramp)
            amps = np.full(times.size, scene.pulses.amplitude_rad)
        else:
            times = np.empty(0)
            train = np.zeros(n_ramps)
            amps = np.empty(0)
        event_times.append(times)
        event_amps.append(amps)
        phase[:, c] = train[:n_ramps] + statics[c]

        carrier = np.sin(2 * np.pi * spec.cycles_per_sample * sample_idx[None, :]
                         + phase[:, c][:, None])
        chan = spec.dc_offset + spec.amplitude * carrier
        if scene.glitch_amplitude and (scene.glitch_begin or scene.glitch_end):
            if scene.glitch_begin:
                chan[:, :scene.glitch_begin] += scene.glitch_amplitude
            if scene.glitch_end:
                chan[:, n - scene.glitch_end:] += scene.glitch_amplitude
        if scene.noise_sigma > 0:
            chan = chan + rng.normal(0.0, scene.noise_sigma, size=chan.shape)
        flat = chan.reshape(-1)
        if quantize:
            payload[:, c] = np.clip(np.rint(flat), -32768, 32767).astype(np.int16)
        else:
            payload[:, c] = flat
    header = StreamHeader(kind=KIND_REAL, channel_count=scene.channel_count,
                          sample_rate_hz=base.sample_rate_hz,
                          ramp_length_samples=n, sample_format=scene.sample_format)
    stream = SampleStream(header=header, frames=payload,
                          sync=np.arange(0, n_frames, n, dtype=np.int64))
    return stream, SceneTruth(phase=phase, event_times=event_times,
                              event_amplitudes=event_amps)


def truth_phase_csv(truth: SceneTruth, sink) -> None:
    sink.write("channel,ramp_index,phase_rad\n")
    n_ramps, channels = truth.phase.shape
    for m in range(n_ramps):
        for c in range(channels):
            sink.write(f"{c},{m},{truth.phase[m, c]!r}\n")


def truth_events_csv(truth: SceneTruth, sink) -> None:
    sink.write("channel,time_s,amplitude_rad\n")
    for c, (times, amps) in enumerate(zip(truth.event_times, truth.event_amplitudes)):
        for t0, a in zip(times, amps):
            sink.write(f"{c},{float(t0)!r},{float(a)!r}\n")
