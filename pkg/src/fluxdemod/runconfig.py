"""Declarative run configuration: INI-style file, CLI overrides, provenance.

A config file has sections [run], [scene], [pulses], [demod], [trigger] and
[traffic]; every key has a typed default below.  Unknown sections or keys are
errors so typos cannot pass silently.  Command-line ``--set section.key=value``
overrides win over the file, and the fully resolved configuration is echoed
to the output directory for provenance.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .errors import ConfigError
from .formats import FMT_F64, FMT_I16
from .sigmodel import ChannelScene, PulseSpec, RampSpec

_BOOLS = {"1": True, "true": True, "yes": True, "on": True,
          "0": False, "false": False, "no": False, "off": False}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOLS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"not a boolean: {text!r}") from None


SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "seed": (int, 0),
        "figures": (_parse_bool, True),
    },
    "scene": {
        "channels": (int, 4),
        "sample_rate_hz": (float, 15_625_000.0),
        "ramp_length": (int, 125),
        "modulation_freq_hz": (float, 500_000.0),
        "amplitude": (float, 12000.0),
        "dc_offset": (float, 2000.0),
        "noise_sigma": (float, 30.0),
        "duration_s": (float, 0.05),
        "static_phase_rad": (float, 0.0),
        "glitch_begin": (int, 0),
        "glitch_end": (int, 0),
        "glitch_amplitude": (float, 0.0),
        "sample_format": (str, "i16"),
    },
    "pulses": {
        "rate_hz": (float, 20.0),
        "rise_s": (float, 10e-6),
        "decay_s": (float, 1e-3),
        "amplitude_rad": (float, 1.0),
    },
    "demod": {
        "window": (str, "rectangular"),
        "trim_begin": (int, 0),
        "trim_end": (int, 0),
        "input_kind": (str, "real"),
        "nco_width_bits": (int, 16),
        "accumulator_width_bits": (int, 48),
    },
    "trigger": {
        "threshold": (float, 0.2),
        "event_length": (int, 437),
        "maw_length": (int, 4),
        "maw_gap": (int, 4),
        "pre_trigger_length": (int, 256),
        "slots": (int, 5),
        "phase_quant_bits": (int, 16),
    },
    "traffic": {
        "event_rate_hz": (float, 400.0),
        "event_duration_s": (float, 3.5e-3),
        "slots": (int, 5),
        "evacuation_time_s": (float, 0.0),
        "channels": (int, 20),
    },
}


@dataclass
class RunConfig:
    values: dict[tuple[str, str], object] = field(default_factory=dict)
    explicit: set = field(default_factory=set)

    @classmethod
    def defaults(cls) -> "RunConfig":
        cfg = cls()
        for sec, keys in SCHEMA.items():
            for key, (_, default) in keys.items():
                cfg.values[(sec, key)] = default
        return cfg

    def _check(self, section: str, key: str) -> tuple:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        return SCHEMA[section][key]

    def set_text(self, section: str, key: str, text: str) -> None:
        parse, _ = self._check(section, key)
        try:
            value = parse(text)
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"bad value for {section}.{key}: {text!r}") from None
        self.values[(section, key)] = value
        self.explicit.add((section, key))

    def get(self, section: str, key: str):
        self._check(section, key)
        return self.values[(section, key)]

    def was_set(self, section: str, key: str) -> bool:
        return (section, key) in self.explicit

    def load_file(self, path: str) -> None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as f:
                parser.read_file(f)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
        for section in parser.sections():
            for key, text in parser.items(section):
                self.set_text(section, key, text)

    def apply_overrides(self, pairs) -> None:
        """Apply ``section.key=value`` strings from the command line."""
        for pair in pairs or ():
            if "=" not in pair or "." not in pair.split("=", 1)[0]:
                raise ConfigError(f"override must look like section.key=value: {pair!r}")
            dotted, text = pair.split("=", 1)
            section, key = dotted.split(".", 1)
            self.set_text(section.strip(), key.strip(), text.strip())

    def resolved_text(self) -> str:
        lines = []
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            for key in SCHEMA[sec]:
                lines.append(f"{key} = {self.values[(sec, key)]}")
            lines.append("")
        return "\n".join(lines)

    # Typed views ------------------------------------------------------------
    def scene(self) -> ChannelScene:
        g = self.get
        fmt_name = str(g("scene", "sample_format")).lower()
        if fmt_name not in ("i16", "f64"):
            raise ConfigError(f"scene.sample_format must be i16 or f64, got {fmt_name!r}")
        pulses = None
        if g("pulses", "rate_hz") > 0:
            pulses = PulseSpec(rise_time_s=g("pulses", "rise_s"),
                               decay_time_s=g("pulses", "decay_s"),
                               amplitude_rad=g("pulses", "amplitude_rad"),
                               event_rate_hz=g("pulses", "rate_hz"))
        ramp = RampSpec(sample_rate_hz=g("scene", "sample_rate_hz"),
                        ramp_length_samples=g("scene", "ramp_length"),
                        modulation_freq_hz=g("scene", "modulation_freq_hz"),
                        amplitude=g("scene", "amplitude"),
                        dc_offset=g("scene", "dc_offset"))
        return ChannelScene(channel_count=g("scene", "channels"),
                            ramp=ramp,
                            pulses=pulses,
                            noise_sigma=g("scene", "noise_sigma"),
                            duration_s=g("scene", "duration_s"),
                            seed=g("run", "seed"),
                            static_phase_rad=g("scene", "static_phase_rad"),
                            glitch_begin=g("scene", "glitch_begin"),
                            glitch_end=g("scene", "glitch_end"),
                            glitch_amplitude=g("scene", "glitch_amplitude"),
                            sample_format=FMT_I16 if fmt_name == "i16" else FMT_F64)

    def demod_config(self, channel_count: int, sample_rate_hz: float,
                     ramp_length: int):
        from .demod import DemodConfig

        g = self.get
        return DemodConfig(channel_count=channel_count,
                           sample_rate_hz=sample_rate_hz,
                           ramp_length_samples=ramp_length,
                           modulation_freq_hz=g("scene", "modulation_freq_hz"),
                           trim_begin=g("demod", "trim_begin"),
                           trim_end=g("demod", "trim_end"),
                           window=g("demod", "window"),
                           input_kind=g("demod", "input_kind"),
                           nco_width_bits=g("demod", "nco_width_bits"),
                           accumulator_width_bits=g("demod", "accumulator_width_bits"))

    def trigger_config(self, channel_count: int):
        from .trigger import TriggerConfig

        g = self.get
        return TriggerConfig(channel_count=channel_count,
                             threshold=g("trigger", "threshold"),
                             event_length=g("trigger", "event_length"),
                             maw_length=g("trigger", "maw_length"),
                             maw_gap=g("trigger", "maw_gap"),
                             pre_trigger_length=g("trigger", "pre_trigger_length"),
                             slot_count=g("trigger", "slots"),
                             phase_quant_bits=g("trigger", "phase_quant_bits"))

    def traffic_model(self):
        from .queueing import TrafficModel

        g = self.get
        return TrafficModel(event_rate_hz=g("traffic", "event_rate_hz"),
                            event_duration_s=g("traffic", "event_duration_s"),
                            slot_count=g("traffic", "slots"),
                            evacuation_time_s=g("traffic", "evacuation_time_s"),
                            active_channels=g("traffic", "channels"))


def load_config(path: str | None, overrides) -> RunConfig:
    cfg = RunConfig.defaults()
    if path:
        cfg.load_file(path)
    cfg.apply_overrides(overrides)
    return cfg
