"""Domain types shared by every stage: timers, flags, traces, segments, profiles."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .units import US_PER_S, parse_duration_us, us_to_s

__all__ = [
    "RaiFlag",
    "EclLevel",
    "Coverage",
    "SegmentKind",
    "Source",
    "HIGH_POWER_KINDS",
    "TimerConfig",
    "Violation",
    "ValidationResult",
    "validate_timers",
    "CurrentTrace",
    "Segment",
    "check_labeling",
    "merge_adjacent",
    "PowerProfile",
    "DEFAULT_SAMPLE_RATE_HZ",
    "DEFAULT_SUPPLY_V",
]

DEFAULT_SAMPLE_RATE_HZ = 4000.0
# Supply voltage of the measurement rig is not given; 3.6 V is a typical
# NB-IoT module supply and only scales current levels, not energies.
DEFAULT_SUPPLY_V = 3.6


class RaiFlag(enum.Enum):
    None000 = 0x000
    Release200 = 0x200
    ReleaseAfterReply400 = 0x400

    @classmethod
    def parse(cls, value: "str | int | RaiFlag") -> "RaiFlag":
        if isinstance(value, RaiFlag):
            return value
        if isinstance(value, str):
            v = value.strip().lower().removeprefix("rai-").removeprefix("rai")
            if v in cls.__members__:
                return cls[v]
            for m in cls:
                if m.name.lower() == v:
                    return m
            v = v.removeprefix("0x")
            table = {"000": cls.None000, "0": cls.None000, "200": cls.Release200,
                     "400": cls.ReleaseAfterReply400}
            if v in table:
                return table[v]
            raise ValueError(f"unknown RAI flag {value!r}")
        for m in cls:
            if m.value == value:
                return m
        # integers written in decimal, e.g. 200 for 0x200
        table = {0: cls.None000, 200: cls.Release200, 400: cls.ReleaseAfterReply400}
        if value in table:
            return table[value]
        raise ValueError(f"unknown RAI flag {value!r}")


class EclLevel(enum.IntEnum):
    ECL0 = 0
    ECL1 = 1
    ECL2 = 2

    @property
    def target_mcl_db(self) -> int:
        return (144, 154, 164)[self.value]

    @classmethod
    def parse(cls, value: "str | int | EclLevel") -> "EclLevel":
        if isinstance(value, str):
            v = value.strip().upper().replace(" ", "").replace(":", "")
            return cls(int(v.removeprefix("ECL")))
        return cls(int(value))


class Coverage(enum.Enum):
    Good = "good"
    Bad = "bad"

    @classmethod
    def parse(cls, value: "str | Coverage") -> "Coverage":
        if isinstance(value, Coverage):
            return value
        return cls(str(value).strip().lower())


class SegmentKind(enum.Enum):
    Sync = "Sync"
    TxRx = "TxRx"
    InactivityCdrx = "InactivityCdrx"
    Release = "Release"
    EdrxListen = "EdrxListen"
    EdrxSleep = "EdrxSleep"
    PsmDeep = "PsmDeep"
    TauUpdate = "TauUpdate"
    Artifact = "Artifact"
    # coarse two-state labels produced by the Connected/Idle splitter
    Connected = "Connected"
    Idle = "Idle"


class Source(enum.Enum):
    GroundTruth = "GroundTruth"
    Detected = "Detected"


# Phases that stand out of the deep-sleep floor; the detector is scored on these.
HIGH_POWER_KINDS = frozenset({
    SegmentKind.Sync, SegmentKind.TxRx, SegmentKind.InactivityCdrx,
    SegmentKind.Release, SegmentKind.EdrxListen, SegmentKind.TauUpdate,
})


# --------------------------------------------------------------------------- timers

# Standard names of the timers, used verbatim as keys in scenario/timer files.
TIMER_KEYS = {
    "OnDurationTimer": "on_duration_timer_us",
    "DRXcycle": "drx_cycle_us",
    "PTW": "ptw_us",
    "eDRXcycle": "edrx_cycle_us",
    "T3324": "t3324_us",
    "T3412": "t3412_us",
    "Inactivity timer": "inactivity_timer_us",
}
_TIMER_DEFAULT_UNIT = {
    "on_duration_timer_us": "ms",
    "drx_cycle_us": "ms",
    "ptw_us": "s",
    "edrx_cycle_us": "s",
    "t3324_us": "s",
    "t3412_us": "s",
    "inactivity_timer_us": "s",
}

_H = 3_600 * US_PER_S
TIMER_BOUNDS_US = {
    "on_duration_timer_us": (1_000, 200_000),
    "drx_cycle_us": (2_000, 2_560_000),
    "ptw_us": (2_560_000, 40_960_000),
    "edrx_cycle_us": (20_480_000, 10_485_760_000),
    "t3324_us": (2 * US_PER_S, 410 * _H),
    "t3412_us": (2 * US_PER_S, 410 * _H),
    "inactivity_timer_us": (0, 65_536_000),
}


@dataclass(frozen=True)
class TimerConfig:
    """DRX / eDRX / PSM / inactivity timers, all in integer microseconds.

    Construction never fails on out-of-range values; use :func:`validate_timers`
    to obtain the list of violations.
    """

    on_duration_timer_us: int = 200_000
    drx_cycle_us: int = 2_560_000
    ptw_us: int = 2_560_000
    edrx_cycle_us: int = 20_480_000
    t3324_us: int = 60 * US_PER_S
    t3412_us: int = 24 * _H
    inactivity_timer_us: int = 20 * US_PER_S

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise TypeError(f"{f.name} must be integer microseconds, got {v!r}")
            object.__setattr__(self, f.name, int(v))

    @classmethod
    def from_seconds(cls, **kw: float) -> "TimerConfig":
        """Build from keyword seconds, e.g. ``from_seconds(ptw=2.56, t3324=60)``."""
        out = {}
        for k, v in kw.items():
            name = k if k.endswith("_us") else f"{k}_us"
            if name not in TIMER_BOUNDS_US:
                raise TypeError(f"unknown timer {k!r}")
            out[name] = v if k.endswith("_us") else parse_duration_us(v, "s")
        return cls(**out)

    @classmethod
    def from_mapping(cls, data: Mapping[str, object], base: "TimerConfig | None" = None) -> "TimerConfig":
        """Read the standard timer names (``OnDurationTimer``, ``T3324`` ...).

        Values may carry a unit suffix (``"2.56 s"``, ``"200 ms"``, ``"410 h"``);
        bare numbers are ms for OnDurationTimer and DRXcycle, s for the rest.
        """
        out = {}
        for key, value in data.items():
            if key not in TIMER_KEYS:
                raise KeyError(f"unknown timer key {key!r}; expected one of {sorted(TIMER_KEYS)}")
            name = TIMER_KEYS[key]
            out[name] = parse_duration_us(value, _TIMER_DEFAULT_UNIT[name])
        return replace(base or cls(), **out)

    def to_mapping(self) -> dict[str, str]:
        res = {}
        for key, name in TIMER_KEYS.items():
            res[key] = f"{us_to_s(getattr(self, name))!r} s"
        return res

    def seconds(self, name: str) -> float:
        return us_to_s(getattr(self, f"{name}_us" if not name.endswith("_us") else name))


@dataclass(frozen=True)
class Violation:
    field: str
    bound: str
    actual: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> list[str]:
        return [f"{v.field}: {v.actual} violates {v.bound}" for v in self.violations]


def _fmt_s(us: int) -> str:
    return f"{us / US_PER_S:g} s"


def validate_timers(cfg: TimerConfig) -> ValidationResult:
    """Check every inclusive bound and the cross-field orderings."""
    out: list[Violation] = []
    for name, (lo, hi) in TIMER_BOUNDS_US.items():
        v = getattr(cfg, name)
        if v < lo:
            out.append(Violation(name, f">= {_fmt_s(lo)}", _fmt_s(v)))
        elif v > hi:
            out.append(Violation(name, f"<= {_fmt_s(hi)}", _fmt_s(v)))
    if cfg.ptw_us > cfg.edrx_cycle_us:
        out.append(Violation("ptw_us", "<= edrx_cycle", _fmt_s(cfg.ptw_us)))
    if cfg.on_duration_timer_us > cfg.drx_cycle_us:
        out.append(Violation("on_duration_timer_us", "<= drx_cycle", _fmt_s(cfg.on_duration_timer_us)))
    if cfg.t3324_us > cfg.t3412_us:
        out.append(Violation("t3324_us", "<= t3412", _fmt_s(cfg.t3324_us)))
    return ValidationResult(tuple(out))


# --------------------------------------------------------------------------- traces


_VALIDATE_BLOCK = 1 << 22


@dataclass(frozen=True, eq=False)
class CurrentTrace:
    """Uniformly sampled current at a constant supply voltage."""

    samples_a: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    supply_voltage_v: float = DEFAULT_SUPPLY_V
    t0: float = 0.0

    def __post_init__(self):
        if isinstance(self.samples_a, np.memmap) and self.samples_a.dtype == np.float64:
            a = self.samples_a  # disk-backed; validated block by block, never copied
        else:
            a = np.array(self.samples_a, dtype=np.float64)  # private copy
        if a.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not (self.supply_voltage_v > 0 and math.isfinite(self.supply_voltage_v)):
            raise ValueError(f"supply voltage must be positive, got {self.supply_voltage_v}")
        for i in range(0, a.size, _VALIDATE_BLOCK):
            b = a[i:i + _VALIDATE_BLOCK]
            if not np.all(np.isfinite(b)) or b.min() < 0:
                raise ValueError("samples must be finite and non-negative")
        if a.flags.writeable:
            a.setflags(write=False)
        object.__setattr__(self, "samples_a", a)

    def __len__(self) -> int:
        return int(self.samples_a.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def timestamps(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.sample_rate_hz


@dataclass(frozen=True, order=True)
class Segment:
    start_idx: int
    end_idx: int
    kind: SegmentKind = field(compare=False)
    source: Source = field(default=Source.Detected, compare=False)

    def __post_init__(self):
        if not 0 <= self.start_idx < self.end_idx:
            raise ValueError(f"invalid segment bounds [{self.start_idx}, {self.end_idx})")

    @property
    def length(self) -> int:
        return self.end_idx - self.start_idx

    def relabel(self, kind: SegmentKind) -> "Segment":
        return replace(self, kind=kind)


def check_labeling(segments: Sequence[Segment], n: int | None = None) -> None:
    """Raise ValueError unless segments are sorted, non-overlapping and in bounds."""
    prev_end = 0
    for s in segments:
        if s.start_idx < prev_end:
            raise ValueError(f"segments overlap or are unsorted at {s}")
        prev_end = s.end_idx
    if n is not None and prev_end > n:
        raise ValueError(f"segment end {prev_end} beyond trace length {n}")


def merge_adjacent(segments: Iterable[Segment]) -> list[Segment]:
    """Fuse touching segments of the same kind."""
    out: list[Segment] = []
    for s in segments:
        if out and out[-1].kind == s.kind and out[-1].end_idx == s.start_idx:
            out[-1] = replace(out[-1], end_idx=s.end_idx)
        else:
            out.append(s)
    return out


# --------------------------------------------------------------------------- power profile


@dataclass(frozen=True)
class PowerProfile:
    """Current/power levels and phase durations of one module on one network.

    Currents are in mA, powers in µW, energies in mJ. Durations of the
    Connected-state phases live here too because they are module/network
    properties, not timers.
    """

    module_name: str
    psm_power_uW: float
    edrx_sleep_power_uW: float
    edrx_listen_energy_mJ: float
    edrx_listen_duration_ms: float
    sync_current_mA: float
    txrx_current_mA: float
    paging_current_mA: float
    cdrx_sleep_current_mA: float
    release_current_mA: float
    ecl_multipliers: tuple[float, float, float] = (1.0, 1.25, 2.4)
    operator: str = ""
    edrx_listen_energy_bad_mJ: float | None = None
    edrx_listen_duration_bad_ms: float | None = None
    sync_duration_s: float = 1.8
    sync_jitter_s: float = 0.0
    txrx_base_s: float = 0.198
    txrx_per_byte_s: float = 100e-6
    reply_base_s: float = 0.06826
    reply_per_byte_s: float = 1587e-6
    release_duration_s: float = 1.13
    peak_duration_ms: float = 20.0
    peak_factor: float = 2.0
    # False when the network keeps the UE in continuous paging during the inactivity timer
    cdrx_during_inactivity: bool = True

    def __post_init__(self):
        object.__setattr__(self, "ecl_multipliers", tuple(float(m) for m in self.ecl_multipliers))
        positive = [
            "psm_power_uW", "edrx_sleep_power_uW", "edrx_listen_energy_mJ", "edrx_listen_duration_ms",
            "sync_current_mA", "txrx_current_mA", "paging_current_mA", "cdrx_sleep_current_mA",
            "release_current_mA", "sync_duration_s", "txrx_base_s", "release_duration_s",
            "peak_duration_ms", "peak_factor",
        ]
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be > 0, got {v!r}")
        for name in ("txrx_per_byte_s", "reply_base_s", "reply_per_byte_s", "sync_jitter_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("edrx_listen_energy_bad_mJ", "edrx_listen_duration_bad_ms"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0 when given")
        # cDRX sleep draws roughly 90% less than listening
        if self.cdrx_sleep_current_mA > 0.15 * self.paging_current_mA * (1 + 1e-12):
            raise ValueError("cdrx_sleep_current_mA must be <= 0.15 x paging_current_mA")
        m = self.ecl_multipliers
        if len(m) != 3 or m[0] < 1 or not (m[0] <= m[1] <= m[2]):
            raise ValueError(f"ECL multipliers must be >= 1 and non-decreasing, got {m}")

    # listen window parameters depend on coverage
    def listen_energy_mJ(self, coverage: Coverage = Coverage.Good) -> float:
        if coverage is Coverage.Bad and self.edrx_listen_energy_bad_mJ is not None:
            return self.edrx_listen_energy_bad_mJ
        return self.edrx_listen_energy_mJ

    def listen_duration_ms(self, coverage: Coverage = Coverage.Good) -> float:
        if coverage is Coverage.Bad and self.edrx_listen_duration_bad_ms is not None:
            return self.edrx_listen_duration_bad_ms
        return self.edrx_listen_duration_ms

    def listen_current_a(self, coverage: Coverage, voltage_v: float) -> float:
        return self.listen_energy_mJ(coverage) / self.listen_duration_ms(coverage) / voltage_v

    def psm_current_a(self, voltage_v: float) -> float:
        return self.psm_power_uW * 1e-6 / voltage_v

    def edrx_sleep_current_a(self, voltage_v: float) -> float:
        return self.edrx_sleep_power_uW * 1e-6 / voltage_v

    def ecl_multiplier(self, ecl: EclLevel) -> float:
        return self.ecl_multipliers[int(ecl)]

    # phase durations, integer microseconds
    def txrx_duration_us(self, packet_size_bytes: int, ecl: EclLevel) -> int:
        base = self.txrx_base_s + self.txrx_per_byte_s * packet_size_bytes
        return round(base * self.ecl_multiplier(ecl) * US_PER_S)

    def reply_duration_us(self, packet_size_bytes: int) -> int:
        return round((self.reply_base_s + self.reply_per_byte_s * packet_size_bytes) * US_PER_S)

    def sync_duration_us(self) -> int:
        return round(self.sync_duration_s * US_PER_S)

    def release_duration_us(self) -> int:
        return round(self.release_duration_s * US_PER_S)

    def with_overrides(self, **kw) -> "PowerProfile":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["ecl_multipliers"] = list(self.ecl_multipliers)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "PowerProfile":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown profile fields: {sorted(unknown)}")
        kw = dict(data)
        if "ecl_multipliers" in kw:
            kw["ecl_multipliers"] = tuple(kw["ecl_multipliers"])  # type: ignore[arg-type]
        return cls(**kw)  # type: ignore[arg-type]
