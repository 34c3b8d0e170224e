"""Figure rendering for the CLI report paths.

Every report that writes delimited data can also render a matplotlib figure
next to it.  Rendering always goes through the Agg backend straight to a
file; nothing here opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 130


def _finish(fig, path) -> str:
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def scene_preview(stream, truth, path, n_ramps: int = 4) -> str:
    """First ramps of channel 0 plus the ground-truth phase timeline."""
    n = stream.header.ramp_length_samples or stream.n_frames
    take = min(n_ramps * n, stream.n_frames)
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(8, 5))
    ax0.plot(np.arange(take), stream.frames[:take, 0], lw=0.7)
    for k in range(0, take + 1, n):
        ax0.axvline(k, color="0.8", lw=0.6, zorder=0)
    ax0.set_xlabel("sample")
    ax0.set_ylabel("raw amplitude")
    ax0.set_title("channel 0, first ramps")
    t = np.arange(truth.phase.shape[0])
    for c in range(min(4, truth.phase.shape[1])):
        ax1.plot(t, truth.phase[:, c], lw=0.8, label=f"ch {c}")
    ax1.set_xlabel("ramp index")
    ax1.set_ylabel("true phase (rad)")
    ax1.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _finish(fig, path)


def phase_timeline(phase_matrix: np.ndarray, path, max_channels: int = 4) -> str:
    fig, ax = plt.subplots(figsize=(8, 3.2))
    t = np.arange(phase_matrix.shape[0])
    for c in range(min(max_channels, phase_matrix.shape[1])):
        ax.plot(t, phase_matrix[:, c], lw=0.7, label=f"ch {c}")
    ax.set_xlabel("ramp index")
    ax.set_ylabel("demodulated phase (rad)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _finish(fig, path)


def event_gallery(records, pre_trigger_length: int, sample_time_s: float,
                  path, max_events: int = 60) -> str:
    """Captured pulses overlaid around their trigger times."""
    fig, ax = plt.subplots(figsize=(8, 3.6))
    shown = 0
    for r in records:
        if shown >= max_events:
            break
        x = (np.arange(r.length) - (pre_trigger_length - 1)) * sample_time_s * 1e3
        ax.plot(x, r.samples, lw=0.6,
                color="C3" if r.pileup else "C0", alpha=0.6)
        shown += 1
    ax.axvline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("time around trigger (ms)")
    ax.set_ylabel("phase (rad)")
    ax.set_title(f"captured events ({shown} shown, pile-ups in red)")
    fig.tight_layout()
    return _finish(fig, path)


def erlang_curve(offered_load: float, slots_needed: int, path,
                 max_slots: int | None = None) -> str:
    from .queueing import erlang_b

    top = max_slots or max(slots_needed + 4, 10)
    ns = np.arange(0, top + 1)
    pb = [erlang_b(offered_load, int(n)) for n in ns]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.semilogy(ns, pb, "o-", ms=4)
    ax.axvline(slots_needed, color="C3", lw=0.9)
    ax.annotate(f"N = {slots_needed}", (slots_needed, pb[slots_needed]),
                textcoords="offset points", xytext=(8, 8), fontsize=9)
    ax.set_xlabel("descriptor slots N")
    ax.set_ylabel("blocking probability")
    ax.set_title(f"offered load E = {offered_load:.4g} erlang")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _finish(fig, path)


def mc_comparison(formula: float, measured: float, se: float, path) -> str:
    fig, ax = plt.subplots(figsize=(4.4, 3.4))
    ax.bar([0], [formula], width=0.6, label="Erlang-B")
    ax.errorbar([1], [measured], yerr=3 * se, fmt="o", color="C3",
                capsize=5, label="simulated (3 SE)")
    ax.set_xticks([0, 1], ["formula", "Monte-Carlo"])
    ax.set_ylabel("loss probability")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _finish(fig, path)
