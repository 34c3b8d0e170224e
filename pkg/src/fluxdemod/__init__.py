"""Flux-ramp demodulation, event triggering and buffer sizing at desk scale."""

from .demod import (DemodConfig, DemodResult, Demodulator, Nco, PhasePoint,
                    RampAccumulator, accumulate_sample, demodulate_stream,
                    finalize_ramp, nco_step, oracle_comparison, window_weight)
from .errors import (ConfigError, FormatError, HardFault, ParameterError,
                     StreamOrderError, UndefinedPhaseError)
from .formats import (EventRecord, SampleStream, StreamHeader, export_csv,
                      read_events, read_stream, write_events, write_stream)
from .queueing import (TrafficModel, erlang_b, min_slots, savings_report,
                       simulate_blocking)
from .sigmodel import (ChannelScene, PulseSpec, RampSpec, SceneTruth, gen_pulse_train,
                       gen_scene, oracle_demod, render_pulse_train, tone_ramp,
                       two_tone_ramp)
from .trigger import (EventDescriptor, FilterState, TriggerConfig, TriggerEngine,
                      TriggerStats, maw_update, three_point_decision)

__version__ = "0.1.0"
