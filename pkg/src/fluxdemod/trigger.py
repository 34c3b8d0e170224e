"""Event detection over the TDM phase stream.

A difference-of-moving-averages filter feeds a 3-point peak trigger.  When a
channel fires, a descriptor is taken from a preallocated free pool, the
pre-trigger history is copied in, and the capture keeps filling until the
configured event length is reached; the filled descriptor then waits in a
queue for the evacuation domain, which emits the event packet and recycles
the descriptor.  A fire during an active capture marks the event as pile-up
without taking a second slot; a fire with the free pool empty is counted as
a lost event (no backpressure toward the signal domain).

Filter arithmetic runs on phase samples quantized to binary fixed point
(2^-quant_bits radian steps) so the recursive moving sums are exactly equal
to direct window summation, as an integer datapath would be.  Captured
packets store the original float samples.

Like the demodulator, the engine has two bit-equivalent execution paths: a
per-frame reference state machine and a vectorized block path for bulk runs.
The signal domain (process_frame / process_block) and the evacuation domain
(evacuate) follow a single-producer single-consumer contract on the two
descriptor queues and may run on separate threads, or single-threaded with
evacuation polled in between.
"""

from __future__ import annotations

import heapq
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, HardFault, StreamOrderError
from .formats import EventRecord


@dataclass(frozen=True)
class TriggerConfig:
    channel_count: int
    threshold: float
    event_length: int
    maw_length: int = 4
    maw_gap: int | None = None
    pre_trigger_length: int = 256
    slot_count: int = 5
    enabled: Sequence[bool] | None = None
    phase_quant_bits: int = 16

    def __post_init__(self):
        if self.channel_count < 1:
            raise ConfigError("channel_count must be >= 1")
        if self.maw_length < 1:
            raise ConfigError("maw_length must be >= 1")
        gap = self.maw_length if self.maw_gap is None else self.maw_gap
        if gap < 0:
            raise ConfigError("maw_gap must be >= 0")
        object.__setattr__(self, "maw_gap", gap)
        if self.pre_trigger_length < 1:
            raise ConfigError("pre_trigger_length must be >= 1")
        if self.event_length <= self.pre_trigger_length:
            raise ConfigError("event_length must exceed pre_trigger_length")
        if self.slot_count < 1:
            raise ConfigError("slot_count must be >= 1")
        if self.threshold < 0:
            raise ConfigError("threshold must be >= 0")
        if self.enabled is not None and len(self.enabled) != self.channel_count:
            raise ConfigError("enable mask needs one entry per channel")

    @property
    def quant_scale(self) -> int:
        return 1 << self.phase_quant_bits

    def enabled_mask(self) -> np.ndarray:
        if self.enabled is None:
            return np.ones(self.channel_count, dtype=bool)
        return np.asarray(self.enabled, dtype=bool)


class FilterState:
    """Two recursive moving-average windows per channel on a shared delay line.

    The recent window covers the last ``maw_length`` samples, the gapped
    window the ``maw_length`` samples ``maw_gap`` further back; the filter
    output is their difference.  Each accumulator is updated by adding the
    entering sample and subtracting the leaving one, which equals direct
    summation exactly because the arithmetic is integer.
    """

    def __init__(self, channel_count: int, maw_length: int, maw_gap: int,
                 quant_bits: int = 16):
        self.maw_length = maw_length
        self.maw_gap = maw_gap
        self.quant_bits = quant_bits
        self.ring_len = 2 * maw_length + maw_gap
        self._rings = [[0] * self.ring_len for _ in range(channel_count)]
        self._pos = [0] * channel_count
        self._sum_recent = [0] * channel_count
        self._sum_gapped = [0] * channel_count

    def quantize(self, sample: float) -> int:
        return int(round(sample * (1 << self.quant_bits)))

    def update_q(self, channel: int, q: int) -> int:
        """Push one quantized sample, return the integer filter output."""
        ring = self._rings[channel]
        pos = self._pos[channel]
        length = self.maw_length
        # Entering/leaving taps relative to the write position.
        leave_recent = ring[(pos - length) % self.ring_len]
        enter_gapped = ring[(pos - length - self.maw_gap) % self.ring_len]
        leave_gapped = ring[(pos - 2 * length - self.maw_gap) % self.ring_len]
        ring[pos % self.ring_len] = q
        self._pos[channel] = (pos + 1) % self.ring_len
        sr = self._sum_recent[channel] + q - leave_recent
        sg = self._sum_gapped[channel] + enter_gapped - leave_gapped
        self._sum_recent[channel] = sr
        self._sum_gapped[channel] = sg
        return sr - sg

    def update(self, channel: int, sample: float) -> float:
        """Filter output normalized to input units (difference of means)."""
        y = self.update_q(channel, self.quantize(sample))
        return y / (self.maw_length * (1 << self.quant_bits))

    def tail(self, channel: int) -> list[int]:
        """Last ring_len quantized samples, oldest first."""
        ring = self._rings[channel]
        pos = self._pos[channel]
        return [ring[(pos + k) % self.ring_len] for k in range(self.ring_len)]

    def load_tail(self, channel: int, values: list[int]) -> None:
        if len(values) != self.ring_len:
            raise ConfigError("tail length mismatch")
        self._rings[channel] = list(values)
        self._pos[channel] = 0
        self._sum_recent[channel] = sum(values[-self.maw_length:])
        self._sum_gapped[channel] = sum(
            values[-2 * self.maw_length - self.maw_gap:-self.maw_length - self.maw_gap])


def maw_update(state: FilterState, channel: int, sample: float) -> float:
    return state.update(channel, sample)


def three_point_decision(prev2: float, prev1: float, current: float,
                         threshold: float) -> bool:
    """Fire at the prev1 position when |prev1| is a local maximum above the
    threshold; plateaus fire on their first sample."""
    a2, a1, a0 = abs(prev2), abs(prev1), abs(current)
    return a1 >= threshold and a2 < a1 and a1 >= a0


_FREE, _ACTIVE, _FILLED, _EVACUATING = "free", "active", "filled", "evacuating"


@dataclass
class EventDescriptor:
    slot_id: int
    buffer: np.ndarray
    state: str = _FREE
    channel: int = -1
    timestamp: int = 0
    trigger_value: float = 0.0
    pileup: bool = False
    length: int = 0


@dataclass
class TriggerStats:
    channel_count: int
    events_captured: np.ndarray = field(default=None)
    events_lost_no_slot: np.ndarray = field(default=None)
    pileups_marked: np.ndarray = field(default=None)
    resyncs: int = 0
    packets_completed: int = 0
    frames_in: int = 0

    def __post_init__(self):
        for name in ("events_captured", "events_lost_no_slot", "pileups_marked"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.channel_count, dtype=np.int64))

    @property
    def total_captured(self) -> int:
        return int(self.events_captured.sum())

    @property
    def total_lost(self) -> int:
        return int(self.events_lost_no_slot.sum())

    @property
    def total_pileups(self) -> int:
        return int(self.pileups_marked.sum())

    def loss_fraction(self) -> float:
        fires = self.total_captured + self.total_lost
        return self.total_lost / fires if fires else 0.0

    def retained_sample_fraction(self, event_length: int) -> float:
        total = self.frames_in * self.channel_count
        return (self.packets_completed * event_length) / total if total else 0.0

    def text(self) -> str:
        lines = [
            f"frames in             {self.frames_in} per channel x {self.channel_count} channels",
            f"events captured       {self.total_captured}",
            f"events lost (no slot) {self.total_lost}",
            f"pile-ups marked       {self.total_pileups}",
            f"packets completed     {self.packets_completed}",
            f"resyncs               {self.resyncs}",
        ]
        return "\n".join(lines)

    def csv(self) -> str:
        out = ["channel,captured,lost_no_slot,pileups"]
        for c in range(self.channel_count):
            out.append(f"{c},{self.events_captured[c]},"
                       f"{self.events_lost_no_slot[c]},{self.pileups_marked[c]}")
        return "\n".join(out) + "\n"


class TriggerEngine:
    """Descriptor-pool event capture over a TDM phase stream.

    ``audit`` verifies descriptor conservation after every transition.
    ``auto_evacuate`` models an evacuation domain that is much faster than
    the signal domain: completed captures are immediately emitted to the
    given sink and their descriptors recycled.
    """

    def __init__(self, config: TriggerConfig, audit: bool = False,
                 auto_evacuate: Callable[[EventRecord], None] | None = None):
        self.config = config
        self.audit = audit
        self.auto_evacuate = auto_evacuate
        c = config.channel_count
        self.filter = FilterState(c, config.maw_length, config.maw_gap,
                                  config.phase_quant_bits)
        self._thr_q = config.threshold * config.maw_length * config.quant_scale
        self._norm = config.maw_length * config.quant_scale
        self._enabled = config.enabled_mask()

        hist_len = config.pre_trigger_length + 1
        self._hist = np.zeros((c, hist_len), dtype=np.float64)
        self._hist_pos = np.zeros(c, dtype=np.int64)

        self._y1 = [0] * c
        self._y2 = [0] * c
        self._t = [0] * c  # per-channel sample counter == timestamps
        self._next_channel = 0

        self.descriptors = [EventDescriptor(slot_id=k,
                                            buffer=np.zeros(config.event_length))
                            for k in range(config.slot_count)]
        self.free: deque[EventDescriptor] = deque(self.descriptors)
        self.filled: deque[EventDescriptor] = deque()
        self._active: list[EventDescriptor | None] = [None] * c
        self._store_idx = [0] * c
        self._capture_last = [0] * c
        self._last_timestamp = [-1] * c

        self.stats = TriggerStats(channel_count=c)

    # Descriptor accounting -------------------------------------------------
    def audit_counts(self) -> dict[str, int]:
        counts = {_FREE: 0, _ACTIVE: 0, _FILLED: 0, _EVACUATING: 0}
        for d in self.descriptors:
            counts[d.state] += 1
        return counts

    def check_conservation(self) -> None:
        counts = self.audit_counts()
        if sum(counts.values()) != self.config.slot_count:
            raise HardFault(f"descriptor conservation broken: {counts}")
        if counts[_FREE] != len(self.free) or counts[_FILLED] != len(self.filled):
            raise HardFault(f"descriptor queues inconsistent with states: {counts}")

    def _transition(self, desc: EventDescriptor, expect: str, to: str) -> None:
        if desc.state != expect:
            raise HardFault(f"slot {desc.slot_id}: {desc.state} -> {to} "
                            f"(expected {expect})")
        desc.state = to
        if self.audit:
            self.check_conservation()

    # Signal domain ----------------------------------------------------------
    def _acquire(self, c: int, t: int, y1: int) -> EventDescriptor | None:
        """Fetch a descriptor for a fire at position t-1, or count a loss."""
        if not self.free:
            self.stats.events_lost_no_slot[c] += 1
            return None
        desc = self.free.popleft()
        self._transition(desc, _FREE, _ACTIVE)
        desc.channel = c
        desc.timestamp = t - 1
        desc.trigger_value = y1 / self._norm
        desc.pileup = False
        desc.length = self.config.event_length
        if desc.timestamp <= self._last_timestamp[c]:
            raise HardFault("non-monotone timestamp within a channel")
        self._last_timestamp[c] = desc.timestamp
        self._active[c] = desc
        self._store_idx[c] = self.config.pre_trigger_length
        self._capture_last[c] = desc.timestamp + self.config.event_length \
            - self.config.pre_trigger_length
        self.stats.events_captured[c] += 1
        return desc

    def _complete_capture(self, c: int) -> None:
        desc = self._active[c]
        self._active[c] = None
        self.filled.append(desc)
        self._transition(desc, _ACTIVE, _FILLED)
        self.stats.packets_completed += 1
        if self.auto_evacuate is not None:
            self.auto_evacuate(self._emit(self.filled.pop()))

    def _emit(self, desc: EventDescriptor) -> EventRecord:
        self._transition(desc, _FILLED, _EVACUATING)
        record = EventRecord(channel=desc.channel, timestamp=desc.timestamp,
                             trigger_value=desc.trigger_value, pileup=desc.pileup,
                             samples=desc.buffer.copy())
        self.free.append(desc)
        self._transition(desc, _EVACUATING, _FREE)
        return record

    def process_frame(self, channel: int, phase: float,
                      ramp_index: int | None = None) -> None:
        """Advance one TDM slot.  Channels must arrive in fixed order."""
        if channel != self._next_channel:
            raise StreamOrderError(
                f"expected channel {self._next_channel}, got {channel}")
        self._next_channel = (channel + 1) % self.config.channel_count
        c = channel
        t = self._t[c]
        if ramp_index is not None and ramp_index != t:
            raise StreamOrderError(f"channel {c}: ramp index {ramp_index}, "
                                   f"expected {t}")

        hist_len = self.config.pre_trigger_length + 1
        pos = int(self._hist_pos[c])
        self._hist[c, pos] = phase
        self._hist_pos[c] = (pos + 1) % hist_len

        y0 = self.filter.update_q(c, self.filter.quantize(phase))

        desc = self._active[c]
        if desc is not None:
            desc.buffer[self._store_idx[c]] = phase
            self._store_idx[c] += 1
            if self._store_idx[c] == self.config.event_length:
                self._complete_capture(c)

        y1, y2 = self._y1[c], self._y2[c]
        a1 = abs(y1)
        if a1 >= self._thr_q and abs(y2) < a1 and a1 >= abs(y0) and self._enabled[c]:
            if self._active[c] is not None:
                self._active[c].pileup = True
                self.stats.pileups_marked[c] += 1
            else:
                desc = self._acquire(c, t, y1)
                if desc is not None:
                    pre = self.config.pre_trigger_length
                    hist_len = pre + 1
                    hpos = int(self._hist_pos[c])
                    # ring holds positions t-pre .. t, oldest at hpos; the
                    # pre-trigger slice is t-pre .. t-1
                    idx = (hpos + np.arange(pre)) % hist_len
                    desc.buffer[:pre] = self._hist[c][idx]
                    # the current sample is the first post-trigger sample
                    desc.buffer[self._store_idx[c]] = phase
                    self._store_idx[c] += 1
                    if self._store_idx[c] == self.config.event_length:
                        self._complete_capture(c)

        self._y2[c] = y1
        self._y1[c] = y0
        self._t[c] = t + 1
        if c == self.config.channel_count - 1:
            self.stats.frames_in += 1

    # Evacuation domain -------------------------------------------------------
    def evacuate(self, max_records: int | None = None) -> list[EventRecord]:
        """Drain the filled queue, emitting packets and recycling descriptors."""
        out: list[EventRecord] = []
        while self.filled and (max_records is None or len(out) < max_records):
            desc = self.filled.popleft()
            out.append(self._emit(desc))
        return out

    # Block path ----------------------------------------------------------------
    def process_block(self, phases: np.ndarray) -> None:
        """Process (frames, channels) float phases; bit-equal to frame calls."""
        cfg = self.config
        f, c = phases.shape
        if c != cfg.channel_count:
            raise StreamOrderError(f"block has {c} channels, expected {cfg.channel_count}")
        if self._next_channel != 0:
            raise StreamOrderError("block must start at channel 0 of a frame")
        if f == 0:
            return
        scale = cfg.quant_scale
        length = cfg.maw_length
        gap = cfg.maw_gap
        ring_len = 2 * length + gap
        pre = cfg.pre_trigger_length
        hist_len = pre + 1
        t0 = self._t[0]

        q = np.rint(phases * scale).astype(np.int64)

        fires: list[tuple[int, int, int, int]] = []  # (frame, channel, kind, y1)
        for ch in range(c):
            ext = np.concatenate([np.array(self.filter.tail(ch), dtype=np.int64),
                                  q[:, ch]])
            cs = np.concatenate([[0], np.cumsum(ext)])
            base = ring_len + 1  # cs index of "just after block sample 0"
            j = np.arange(f)
            sum_recent = cs[base + j] - cs[base + j - length]
            sum_gapped = cs[base + j - length - gap] - cs[base + j - 2 * length - gap]
            y = sum_recent - sum_gapped
            y_ext = np.concatenate([[self._y2[ch], self._y1[ch]], y])
            a = np.abs(y_ext)
            fire = (a[1:-1] >= self._thr_q) & (a[:-2] < a[1:-1]) & (a[1:-1] >= a[2:])
            if not self._enabled[ch]:
                fire[:] = False
            for j_fire in np.nonzero(fire)[0]:
                fires.append((int(j_fire), ch, 1, int(y_ext[j_fire + 1])))
            # roll filter state to the end of the block
            self.filter.load_tail(ch, [int(v) for v in ext[-ring_len:]])
            self._y1[ch] = int(y[-1])
            self._y2[ch] = int(y[-2]) if f >= 2 else int(y_ext[1])

        # Extended float history per channel for slice copies: positions
        # t0-hist_len .. t0+f-1.
        hist_prev = np.empty((c, hist_len))
        for ch in range(c):
            pos = int(self._hist_pos[ch])
            hist_prev[ch] = self._hist[ch][(pos + np.arange(hist_len)) % hist_len]
        ext_hist = np.concatenate([hist_prev, phases.T], axis=1)

        def copy_span(ch: int, start_t: int, end_t: int) -> None:
            """Store global positions [start_t, end_t] into the active buffer."""
            if end_t < start_t:
                return
            a0 = start_t - t0 + hist_len
            n = end_t - start_t + 1
            o = self._store_idx[ch]
            self._active[ch].buffer[o:o + n] = ext_hist[ch, a0:a0 + n]
            self._store_idx[ch] = o + n

        # Sample content is position-fixed, so storage can be copied eagerly;
        # only the state-machine decisions (slots, pile-ups, completions) need
        # the exact TDM interleaving, handled by the ordered event loop below.
        heap: list[tuple[int, int, int, int]] = list(fires)
        heapq.heapify(heap)
        last = t0 + f - 1
        for ch in range(c):
            if self._active[ch] is not None:
                end = min(self._capture_last[ch], last)
                copy_span(ch, t0, end)
                if self._capture_last[ch] <= last:
                    heapq.heappush(heap, (self._capture_last[ch] - t0, ch, 0, 0))

        while heap:
            j, ch, kind, y1 = heapq.heappop(heap)
            t = t0 + j
            if kind == 0:  # completion, runs before any fire of the same frame
                self._complete_capture(ch)
                continue
            if self._active[ch] is not None:
                self._active[ch].pileup = True
                self.stats.pileups_marked[ch] += 1
                continue
            if self._acquire(ch, t, y1) is not None:
                self._store_idx[ch] = 0
                copy_span(ch, t - pre, t - 1)  # pre-trigger slice -> buffer[0:pre]
                copy_span(ch, t, min(self._capture_last[ch], last))
                if self._capture_last[ch] <= last:
                    heapq.heappush(heap, (self._capture_last[ch] - t0, ch, 0, 0))

        # Roll history rings and counters.
        for ch in range(c):
            take = min(hist_len, f)
            newest = phases[f - take:, ch]
            pos = int(self._hist_pos[ch])
            idx = (pos + np.arange(take)) % hist_len
            self._hist[ch][idx] = newest
            self._hist_pos[ch] = (pos + take) % hist_len
            self._t[ch] = t0 + f
        self.stats.frames_in += f


def evacuation_thread(engine: TriggerEngine, sink: Callable[[EventRecord], None],
                      stop_event) -> None:
    """Run the evacuation domain until stop_event is set and the queue drains."""
    while True:
        records = engine.evacuate()
        for r in records:
            sink(r)
        if not records:
            if stop_event.is_set() and not engine.filled:
                return
            time.sleep(0.0005)
