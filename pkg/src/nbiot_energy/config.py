"""Scenario and timer files.

A scenario file is YAML with one scenario per file::

    rai: 0x200                 # or "RAI-200", 200, Release200
    packet_size_bytes: 20
    transmission_interval: 2 min
    horizon: 10 min
    coverage: good
    ecl: 0
    idle_mode: EdrxThenPsm
    misconfig_replay: null
    profile: bc95-telia        # built-in name or a profile file
    timers:                    # standard timer names, verbatim
      T3324: 60 s
      Inactivity timer: 20 s
    synth:
      noise_stddev_fraction: 0.0
      at_spike_rate_per_min: 0
      seed: 0
      sample_rate_hz: 4000
      supply_voltage_v: 3.6

Relative paths are looked up next to the referring file, then in the
directory named by ``NBIOT_ENERGY_CONFIG_DIR``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .core import (
    DEFAULT_SAMPLE_RATE_HZ,
    DEFAULT_SUPPLY_V,
    Coverage,
    EclLevel,
    PowerProfile,
    RaiFlag,
    TimerConfig,
)
from .profiles import load_profile
from .statemachine import IdleMode, Misconfig, Scenario
from .tracesynth import SynthOptions
from .units import parse_duration_us

__all__ = ["CONFIG_DIR_ENV", "RunConfig", "resolve_path", "load_yaml", "load_timers",
           "load_run_config"]

CONFIG_DIR_ENV = "NBIOT_ENERGY_CONFIG_DIR"

_SCENARIO_KEYS = {"rai", "packet_size_bytes", "transmission_interval", "horizon", "coverage",
                  "ecl", "idle_mode", "misconfig_replay", "allow_any_packet_size", "profile",
                  "timers", "timers_file", "synth"}
_SYNTH_KEYS = {"noise_stddev_fraction", "at_spike_rate_per_min", "at_spike_energy_mJ",
               "at_spike_duration_ms", "seed", "sample_rate_hz", "supply_voltage_v"}


def resolve_path(p: str | Path, relative_to: Path | None = None) -> Path:
    path = Path(p)
    if path.is_absolute() or path.exists():
        return path
    if relative_to is not None and (relative_to / path).exists():
        return relative_to / path
    env = os.environ.get(CONFIG_DIR_ENV)
    if env and (Path(env) / path).exists():
        return Path(env) / path
    raise FileNotFoundError(f"{p}: not found (also looked in ${CONFIG_DIR_ENV})")


def load_yaml(path: Path) -> dict[str, Any]:
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    return data


def load_timers(path: str | Path, base: TimerConfig | None = None) -> TimerConfig:
    data = load_yaml(resolve_path(path))
    return TimerConfig.from_mapping(data.get("timers", data), base)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    timers: TimerConfig
    profile: PowerProfile
    synth: SynthOptions = SynthOptions()
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    supply_voltage_v: float = DEFAULT_SUPPLY_V
    source: dict = field(default_factory=dict, compare=False)


def _profile(spec: str, here: Path) -> PowerProfile:
    try:
        return load_profile(spec)
    except FileNotFoundError:
        return load_profile(resolve_path(spec, here))


def load_run_config(scenario_path: str | Path, *, timers_path: str | Path | None = None,
                    profile: str | None = None, seed: int | None = None) -> RunConfig:
    """Read and validate a scenario file; CLI values override file values."""
    path = resolve_path(scenario_path)
    here = path.parent
    data = load_yaml(path)
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise KeyError(f"{path}: unknown scenario keys {sorted(unknown)}")
    timers = TimerConfig()
    if "timers_file" in data:
        timers = load_timers(resolve_path(data["timers_file"], here))
    if data.get("timers"):
        timers = TimerConfig.from_mapping(data["timers"], timers)
    if timers_path is not None:
        timers = load_timers(timers_path, timers)
    misc = data.get("misconfig_replay")
    sc = Scenario(
        transmission_interval_us=parse_duration_us(data["transmission_interval"]),
        horizon_us=parse_duration_us(data["horizon"]),
        rai=RaiFlag.parse(data.get("rai", 0)),
        packet_size_bytes=int(data.get("packet_size_bytes", 20)),
        coverage=Coverage.parse(data.get("coverage", "good")),
        ecl=EclLevel.parse(data.get("ecl", 0)),
        idle_mode=IdleMode(data.get("idle_mode", "EdrxThenPsm")),
        misconfig_replay=Misconfig(misc) if misc else None,
        allow_any_packet_size=bool(data.get("allow_any_packet_size", False)),
    )
    synth = dict(data.get("synth") or {})
    unknown = set(synth) - _SYNTH_KEYS
    if unknown:
        raise KeyError(f"{path}: unknown synth keys {sorted(unknown)}")
    rate = float(synth.pop("sample_rate_hz", DEFAULT_SAMPLE_RATE_HZ))
    volt = float(synth.pop("supply_voltage_v", DEFAULT_SUPPLY_V))
    if seed is not None:
        synth["seed"] = seed
    prof = _profile(profile or data.get("profile", "bc95-telia"), here)
    return RunConfig(sc, timers, prof, SynthOptions(**synth), rate, volt, source=data)
