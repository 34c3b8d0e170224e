"""Command-line front end.

Subcommands wire the library into runnable experiments:

  synth       render a synthetic scene to a sample-stream file plus truth CSVs
  demod       demodulate a sample-stream file into a phase-stream file
  trigger     run event detection over a phase-stream file
  pipeline    fused synth -> demod -> trigger in one process
  erlang      buffer-sizing table from the blocking formula
  mc          Monte-Carlo validation of the blocking formula
  export-csv  dump any stream or event file as CSV

Configuration comes from an INI file (see README) overridden by repeatable
``--set section.key=value`` flags; the resolved configuration is echoed and
written next to the outputs.  Report-producing commands render figures
alongside their CSV output unless --no-figures is given.

Exit codes: 0 success, 2 configuration or parameter error, 3 file-format
error, 4 internal invariant fault.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import plots
from .demod import demodulate_stream, oracle_comparison
from .errors import ConfigError, FormatError, HardFault, ParameterError
from .formats import (EVENT_MAGIC, KIND_PHASE, STREAM_MAGIC, SampleStream,
                      StreamHeader, export_events_csv, export_stream_csv,
                      read_events, read_stream, write_events, write_stream)
from .pipeline import run_pipeline
from .queueing import erlang_b, min_slots, savings_report, simulate_blocking
from .runconfig import RunConfig, load_config
from .sigmodel import gen_scene, truth_events_csv, truth_phase_csv
from .trigger import TriggerEngine

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_FAULT = 4


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(cfg: RunConfig, out: Path | None) -> None:
    text = cfg.resolved_text()
    print("# resolved configuration")
    print(text)
    if out is not None:
        (out / "resolved.cfg").write_text(text)


def _want_figures(cfg: RunConfig, args) -> bool:
    if getattr(args, "no_figures", False):
        return False
    return bool(cfg.get("run", "figures"))


def cmd_synth(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args)
    _echo_config(cfg, out)
    scene = cfg.scene()
    stream, truth = gen_scene(scene)
    stream_path = out / "stream.flxd"
    write_stream(stream_path, stream)
    with open(out / "truth_phase.csv", "w") as f:
        truth_phase_csv(truth, f)
    with open(out / "truth_events.csv", "w") as f:
        truth_events_csv(truth, f)
    if _want_figures(cfg, args) and stream.n_frames:
        plots.scene_preview(stream, truth, out / "scene.png")
    print(f"wrote {stream_path} ({stream.n_frames} frames x "
          f"{stream.header.channel_count} channels)")
    return EXIT_OK


def cmd_demod(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args)
    _echo_config(cfg, out)
    stream = read_stream(args.input)
    h = stream.header
    if cfg.was_set("scene", "channels") and cfg.get("scene", "channels") != h.channel_count:
        raise FormatError(f"stream has {h.channel_count} channels, "
                          f"config says {cfg.get('scene', 'channels')}")
    ramp_length = h.ramp_length_samples
    if ramp_length <= 0:
        ramp_length = cfg.get("scene", "ramp_length")
    dcfg = cfg.demod_config(h.channel_count, h.sample_rate_hz, ramp_length)
    result = demodulate_stream(stream, dcfg, engine="block")
    phase = result.phase_matrix()
    out_path = out / "phase.flxd"
    write_stream(out_path, result.to_stream(h.sample_rate_hz / ramp_length, ramp_length))
    print(f"decimation factor: {ramp_length}")
    print(f"resyncs: {result.total_resyncs}")
    if args.oracle:
        dev = oracle_comparison(stream, dcfg, result)
        print(f"max |phase - oracle|: {dev:.3e} rad")
    if _want_figures(cfg, args) and phase.size:
        plots.phase_timeline(phase, out / "phase.png")
    print(f"wrote {out_path} ({phase.shape[0]} ramps x {phase.shape[1]} channels)")
    return EXIT_OK


def _run_trigger(phase_stream: SampleStream, cfg: RunConfig, out: Path,
                 figures: bool) -> tuple[TriggerEngine, list]:
    tcfg = cfg.trigger_config(phase_stream.header.channel_count)
    engine = TriggerEngine(tcfg)
    records = []
    frames = phase_stream.frames
    block = 1 << 16
    for start in range(0, frames.shape[0], block):
        engine.process_block(np.asarray(frames[start:start + block], dtype=float))
        records.extend(engine.evacuate())
    records.extend(engine.evacuate())

    write_events(out / "events.evt", records)
    (out / "trigger_stats.txt").write_text(engine.stats.text() + "\n")
    (out / "trigger_stats.csv").write_text(engine.stats.csv())
    with open(out / "events.csv", "w") as f:
        export_events_csv(records, f, per_sample=False)
    retained = engine.stats.retained_sample_fraction(tcfg.event_length)
    print(engine.stats.text())
    print(f"retained sample fraction: {retained:.4%} "
          f"(reduction {1.0 - retained:.4%})")
    if figures and records:
        dt = 1.0 / phase_stream.header.sample_rate_hz
        plots.event_gallery(records, tcfg.pre_trigger_length, dt, out / "events.png")
    return engine, records


def cmd_trigger(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args)
    _echo_config(cfg, out)
    stream = read_stream(args.input)
    if stream.header.kind != KIND_PHASE:
        raise FormatError("trigger expects a phase stream (kind 2)")
    _run_trigger(stream, cfg, out, _want_figures(cfg, args))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args)
    _echo_config(cfg, out)
    scene = cfg.scene()
    base = scene.ramps_per_channel()[0]
    dcfg = cfg.demod_config(scene.channel_count, base.sample_rate_hz,
                            base.ramp_length_samples)
    tcfg = cfg.trigger_config(scene.channel_count)
    res = run_pipeline(scene, dcfg, tcfg, threaded=not args.single_thread)

    write_events(out / "events.evt", res.records)
    (out / "trigger_stats.txt").write_text(res.engine.stats.text() + "\n")
    (out / "trigger_stats.csv").write_text(res.engine.stats.csv())
    report = [
        f"raw samples            {res.raw_samples}",
        f"phase samples          {res.phase_samples}",
        f"retained samples       {res.retained_samples}",
        f"decimation factor      {res.decimation_factor():.6g}",
        f"retained fraction      {res.retained_fraction():.6g}",
        f"end-to-end reduction   {res.end_to_end_reduction():.6g}",
    ]
    (out / "pipeline_report.txt").write_text("\n".join(report) + "\n")
    print("\n".join(report))
    if args.throughput:
        print("throughput:")
        for line in res.throughput_lines():
            print("  " + line)
    if _want_figures(cfg, args):
        if res.phase_matrix.size:
            plots.phase_timeline(res.phase_matrix, out / "phase.png")
        if res.records:
            dt = res.stream.header.ramp_length_samples / res.stream.header.sample_rate_hz
            plots.event_gallery(res.records, tcfg.pre_trigger_length, dt,
                                out / "events.png")
    return EXIT_OK


def cmd_erlang(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args)
    _echo_config(cfg, out)
    model = cfg.traffic_model()
    if args.slots is not None:
        pb = erlang_b(model.offered_load_erlang, args.slots)
        print(f"E = {model.offered_load_erlang:.6g} erlang, N = {args.slots}: "
              f"P_b = {pb:.6g} (capture {1 - pb:.6g})")
        (out / "erlang.csv").write_text(
            "E,N,P_b,capture,memory_saving\n"
            f"{model.offered_load_erlang!r},{args.slots},{pb!r},{1 - pb!r},"
            f"{1 - args.slots / model.active_channels!r}\n")
        needed = args.slots
    else:
        rep = savings_report(model, capture_target=args.capture)
        print(rep.text())
        (out / "erlang.csv").write_text(rep.csv())
        needed = rep.slots_needed
    if _want_figures(cfg, args):
        plots.erlang_curve(model.offered_load_erlang, needed, out / "erlang.png")
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args)
    _echo_config(cfg, out)
    model = cfg.traffic_model()
    est = simulate_blocking(model, args.events, seed=cfg.get("run", "seed"))
    pb = erlang_b(model.offered_load_erlang, model.slot_count)
    lines = [
        f"offered load        E = {model.offered_load_erlang:.6g} erlang",
        f"slots               N = {model.slot_count}",
        f"evacuation time     {model.evacuation_time_s:.6g} s",
        f"formula             P_b = {pb:.6g}",
        f"simulated           {est.loss_fraction:.6g} +- {est.standard_error:.2g}"
        f"  ({est.arrivals} arrivals, {est.losses} lost, {est.pileups} pile-ups)",
        f"|difference| / SE   "
        f"{abs(est.loss_fraction - pb) / est.standard_error if est.standard_error else 0.0:.2f}",
    ]
    print("\n".join(lines))
    (out / "mc_report.txt").write_text("\n".join(lines) + "\n")
    (out / "mc_report.csv").write_text(
        "E,N,evacuation_s,P_b_formula,P_b_simulated,SE,arrivals,losses,pileups\n"
        f"{model.offered_load_erlang!r},{model.slot_count},"
        f"{model.evacuation_time_s!r},{pb!r},{est.loss_fraction!r},"
        f"{est.standard_error!r},{est.arrivals},{est.losses},{est.pileups}\n")
    if _want_figures(cfg, args):
        plots.mc_comparison(pb, est.loss_fraction, est.standard_error, out / "mc.png")
    return EXIT_OK


def cmd_export_csv(args) -> int:
    with open(args.input, "rb") as f:
        magic = f.read(4)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        if magic[:4] == STREAM_MAGIC:
            export_stream_csv(read_stream(args.input), sink)
        elif magic[:2] == EVENT_MAGIC:
            records, skipped = read_events(args.input)
            export_events_csv(records, sink, per_sample=not args.headers_only)
            if skipped:
                print(f"skipped {skipped} corrupt record(s)", file=sys.stderr)
        else:
            raise FormatError(f"unrecognized file magic {magic!r}", offset=0)
    finally:
        if args.out:
            sink.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxdemod",
        description="flux-ramp demodulation, event triggering and buffer sizing")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, default=None,
                       help="shorthand for --set run.seed=...")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
        if needs_out:
            p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("synth", help="render a synthetic scene")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("demod", help="demodulate a sample stream file")
    common(p)
    p.add_argument("input", help="input .flxd sample stream")
    p.add_argument("--oracle", action="store_true",
                   help="also run the float reference and report the worst deviation")
    p.set_defaults(func=cmd_demod)

    p = sub.add_parser("trigger", help="event detection over a phase stream file")
    common(p)
    p.add_argument("input", help="input .flxd phase stream")
    p.set_defaults(func=cmd_trigger)

    p = sub.add_parser("pipeline", help="fused synth -> demod -> trigger")
    common(p)
    p.add_argument("--throughput", action="store_true",
                   help="report per-stage samples/s")
    p.add_argument("--single-thread", action="store_true",
                   help="poll evacuation inline instead of a consumer thread")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("erlang", help="buffer sizing table")
    common(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--slots", type=int, default=None,
                       help="report blocking at this slot count")
    group.add_argument("--capture", type=float, default=0.988,
                       help="capture-probability target for the slot search")
    p.set_defaults(func=cmd_erlang)

    p = sub.add_parser("mc", help="Monte-Carlo blocking validation")
    common(p)
    p.add_argument("--events", type=int, default=10 ** 6,
                   help="number of simulated arrivals")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("export-csv", help="dump a stream or event file as CSV")
    p.add_argument("input", help=".flxd or .evt file")
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")
    p.add_argument("--headers-only", action="store_true",
                   help="for event files, one row per event instead of per sample")
    p.set_defaults(func=cmd_export_csv)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None:
        args.set = (args.set or []) + [f"run.seed={args.seed}"]
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except HardFault as exc:
        print(f"internal fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
