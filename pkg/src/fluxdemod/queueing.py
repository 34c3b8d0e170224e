"""Erlang-B buffer sizing and a Monte-Carlo loss-system simulator.

The capture buffer is a pure loss system: an event arriving while all
descriptor slots are busy is dropped, never queued.  Blocking therefore
follows the Erlang-B formula in the offered load E = lambda * tau_c, which
this module evaluates with the numerically stable recurrence, inverts to
find the smallest adequate slot count, and cross-checks with an event-driven
simulation that can also model a serialized evacuation drain.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass
class TrafficModel:
    """Offered-load description for buffer sizing.

    ``event_rate_hz`` is the total arrival rate across all active channels.
    ``active_channels`` = 0 selects the infinite-source limit: arrivals carry
    no channel identity and there are no pile-ups, which is the regime the
    Erlang-B formula describes.  With a finite channel count, arrivals on a
    channel that is still capturing are pile-ups: they occupy no slot and are
    excluded from the loss statistic, mirroring the trigger engine.
    """

    event_rate_hz: float
    event_duration_s: float
    slot_count: int
    evacuation_time_s: float = 0.0
    active_channels: int = 0

    def __post_init__(self):
        if self.event_rate_hz <= 0 or self.event_duration_s <= 0:
            raise ParameterError("event rate and duration must be positive")
        if self.slot_count < 0:
            raise ParameterError("slot_count must be >= 0")
        if self.evacuation_time_s < 0:
            raise ParameterError("evacuation time must be >= 0")
        if self.active_channels < 0:
            raise ParameterError("active_channels must be >= 0")

    @property
    def offered_load_erlang(self) -> float:
        """E = lambda * tau_c, recomputed from the primary fields."""
        return self.event_rate_hz * self.event_duration_s


def erlang_b(offered_load: float, slots: int) -> float:
    """Blocking probability B(E, N) via the stable recurrence.

    B(E, 0) = 1 and B(E, k) = E*B(E, k-1) / (k + E*B(E, k-1)); agrees with
    the direct factorial summation to better than 1e-12 relative error.
    """
    if offered_load <= 0:
        raise ParameterError("offered load must be positive")
    if slots < 0:
        raise ParameterError("slot count must be >= 0")
    b = 1.0
    for k in range(1, slots + 1):
        eb = offered_load * b
        b = eb / (k + eb)
    return b


def min_slots(offered_load: float, max_blocking: float) -> int:
    """Smallest N with B(E, N) <= max_blocking (B is decreasing in N)."""
    if not 0.0 < max_blocking < 1.0:
        raise ParameterError("max_blocking must lie in (0, 1)")
    if offered_load <= 0:
        raise ParameterError("offered load must be positive")
    b = 1.0
    n = 0
    while b > max_blocking:
        n += 1
        eb = offered_load * b
        b = eb / (n + eb)
    return n


@dataclass
class BlockingEstimate:
    loss_fraction: float
    standard_error: float
    arrivals: int
    losses: int
    pileups: int

    def within(self, reference: float, n_sigma: float = 3.0) -> bool:
        return abs(self.loss_fraction - reference) <= n_sigma * self.standard_error


def simulate_blocking(model: TrafficModel, n_events: int, seed: int) -> BlockingEstimate:
    """Event-driven loss simulation.

    Poisson arrivals at the model's total rate are spread uniformly over the
    active channels.  An accepted event holds a slot for the event duration
    and then, when an evacuation time is configured, until a single
    serialized drain (FIFO over capture completions) has copied it out.
    Arrivals that find every slot busy are lost; arrivals on a channel that
    is still capturing are pile-ups and neither take a slot nor count as
    losses.  Returns the measured loss fraction with its binomial standard
    error.
    """
    if n_events < 1:
        raise ParameterError("need at least one event")
    rng = np.random.default_rng(seed)
    lam = model.event_rate_hz
    tau = model.event_duration_s
    t_evac = model.evacuation_time_s

    gaps = rng.exponential(1.0 / lam, size=n_events)
    times = np.cumsum(gaps)
    if model.active_channels > 0:
        channels = rng.integers(0, model.active_channels, size=n_events)
        busy_until = np.zeros(model.active_channels)
    else:
        channels = None

    release_heap: list[float] = []  # slot release times
    drain_free_at = 0.0
    losses = 0
    pileups = 0
    for k in range(n_events):
        t = float(times[k])
        if channels is not None:
            c = int(channels[k])
            if t < busy_until[c]:
                pileups += 1
                continue
        while release_heap and release_heap[0] <= t:
            heapq.heappop(release_heap)
        if len(release_heap) >= model.slot_count:
            losses += 1
            continue
        capture_end = t + tau
        if t_evac > 0.0:
            drain_start = max(capture_end, drain_free_at)
            drain_free_at = drain_start + t_evac
            release = drain_free_at
        else:
            release = capture_end
        heapq.heappush(release_heap, release)
        if channels is not None:
            busy_until[c] = capture_end

    denom = n_events - pileups
    if denom == 0:
        return BlockingEstimate(0.0, 0.0, n_events, losses, pileups)
    p = losses / denom
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / denom)
    return BlockingEstimate(loss_fraction=p, standard_error=se,
                            arrivals=n_events, losses=losses, pileups=pileups)


@dataclass
class SavingsReport:
    offered_load_erlang: float
    capture_target: float
    slots_needed: int
    blocking_at_slots: float
    slots_full_population: int
    memory_saving_fraction: float

    def text(self) -> str:
        lines = [
            f"offered load          E = {self.offered_load_erlang:.6g} erlang",
            f"capture target            {self.capture_target:.6g}",
            f"slots needed          N = {self.slots_needed}",
            f"blocking at N             {self.blocking_at_slots:.6g}"
            f"  (capture {1.0 - self.blocking_at_slots:.6g})",
            f"full population           {self.slots_full_population} slots",
            f"memory saving             {100.0 * self.memory_saving_fraction:.1f} %",
        ]
        return "\n".join(lines)

    def csv(self) -> str:
        head = "E,N,P_b,capture,memory_saving\n"
        row = (f"{self.offered_load_erlang!r},{self.slots_needed},"
               f"{self.blocking_at_slots!r},{(1.0 - self.blocking_at_slots)!r},"
               f"{self.memory_saving_fraction!r}\n")
        return head + row


def savings_report(model: TrafficModel, capture_target: float) -> SavingsReport:
    """Slots needed to meet a capture target, against one slot per channel."""
    if not 0.0 < capture_target < 1.0:
        raise ParameterError("capture target must lie in (0, 1)")
    if model.active_channels < 1:
        raise ParameterError("savings need a finite channel count")
    e = model.offered_load_erlang
    n = min_slots(e, 1.0 - capture_target)
    return SavingsReport(
        offered_load_erlang=e,
        capture_target=capture_target,
        slots_needed=n,
        blocking_at_slots=erlang_b(e, n),
        slots_full_population=model.active_channels,
        memory_saving_fraction=1.0 - n / model.active_channels,
    )
