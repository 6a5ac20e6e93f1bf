"""Deterministic UE phase scheduler.

A scenario (RAI flag, packet size, transmission interval, coverage, idle mode)
plus timers and a power profile expand into an ordered list of phases that
tile the simulated horizon exactly. All arithmetic is on integer microseconds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import (
    Coverage,
    EclLevel,
    PowerProfile,
    RaiFlag,
    SegmentKind,
    TimerConfig,
    validate_timers,
)
from .units import US_PER_S, us_to_s

__all__ = [
    "IdleMode",
    "Misconfig",
    "Scenario",
    "Phase",
    "PhaseSchedule",
    "ScheduleError",
    "PACKET_SIZES",
    "build_schedule",
    "connected_duration",
    "n_edrx_cycles",
    "cdrx_on_windows",
]

PACKET_SIZES = (12, 20, 128, 256, 512)
TAU_PACKET_BYTES = 20


class IdleMode(enum.Enum):
    PsmOnly = "PsmOnly"
    EdrxThenPsm = "EdrxThenPsm"


class Misconfig(enum.Enum):
    IgnoreRai200EveryOther = "IgnoreRai200EveryOther"
    NoCdrxDuringInactivity = "NoCdrxDuringInactivity"


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    transmission_interval_us: int
    horizon_us: int
    rai: RaiFlag = RaiFlag.None000
    packet_size_bytes: int = 20
    coverage: Coverage = Coverage.Good
    ecl: EclLevel = EclLevel.ECL0
    idle_mode: IdleMode = IdleMode.EdrxThenPsm
    misconfig_replay: Misconfig | None = None
    allow_any_packet_size: bool = False

    def __post_init__(self):
        if self.transmission_interval_us <= 0:
            raise ValueError("transmission interval must be positive")
        if self.horizon_us < self.transmission_interval_us:
            raise ValueError("horizon must be at least one transmission interval")
        if self.packet_size_bytes < 0:
            raise ValueError("packet size must be >= 0")
        if not self.allow_any_packet_size and self.packet_size_bytes not in PACKET_SIZES:
            raise ValueError(f"packet size {self.packet_size_bytes} not in {PACKET_SIZES}; "
                             "set allow_any_packet_size to override")


@dataclass(frozen=True)
class Phase:
    kind: SegmentKind
    duration_us: int
    event: int | None = None
    # "cdrx" or "continuous" for InactivityCdrx; None otherwise
    variant: str | None = None
    # sub-phase layout used to render composite phases (TAU)
    parts: tuple[tuple[SegmentKind, int], ...] = ()


@dataclass(frozen=True)
class PhaseSchedule:
    phases: tuple[Phase, ...]
    horizon_us: int
    n_events: int
    n_edrx_cycles: int
    n_tau: int
    connected_duration_s: float
    edrx_listen_us: int = 0
    coverage: Coverage = Coverage.Good
    timers: TimerConfig = field(default_factory=TimerConfig)
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def total_us(self) -> int:
        return sum(p.duration_us for p in self.phases)

    def boundaries_us(self) -> Iterator[tuple[Phase, int, int]]:
        t = 0
        for p in self.phases:
            yield p, t, t + p.duration_us
            t += p.duration_us

    def count(self, kind: SegmentKind) -> int:
        return sum(1 for p in self.phases if p.kind is kind)

    def to_dict(self) -> dict:
        return {
            "horizon_s": us_to_s(self.horizon_us),
            "n_events": self.n_events,
            "n_edrx_cycles": self.n_edrx_cycles,
            "n_tau": self.n_tau,
            "connected_duration_s": self.connected_duration_s,
            "phases": [
                {"kind": p.kind.value, "start_s": us_to_s(a), "duration_s": us_to_s(p.duration_us),
                 **({"event": p.event} if p.event is not None else {}),
                 **({"variant": p.variant} if p.variant else {})}
                for p, a, _ in self.boundaries_us()
            ],
            **self.meta,
        }


def cdrx_on_windows(duration_us: int, on_us: int, cycle_us: int) -> list[tuple[int, int]]:
    """On-duration windows inside a cDRX period, as (offset, length) in µs.

    Windows are aligned to the end of the period: the release command arrives
    during an on-duration, so the last window closes the inactivity phase.
    Only whole windows are placed.
    """
    if on_us <= 0 or cycle_us <= 0 or duration_us < on_us:
        return []
    out = []
    end = duration_us
    while end - on_us >= 0:
        out.append((end - on_us, on_us))
        end -= cycle_us
    out.reverse()
    return out


def n_edrx_cycles(idle_duration_s: float, t: TimerConfig) -> int:
    """Number of whole eDRX listen/sleep cycles that fit in an idle period."""
    if idle_duration_s < 0:
        raise ValueError("idle duration must be >= 0")
    idle_us = round(idle_duration_s * US_PER_S)
    return _n_cycles_us(idle_us, t)


def _n_cycles_us(idle_us: int, t: TimerConfig) -> int:
    return min(idle_us, t.t3324_us) // t.edrx_cycle_us


def _inactivity_for_event(sc: Scenario, k: int) -> bool:
    if sc.rai is RaiFlag.None000:
        return True
    return (sc.misconfig_replay is Misconfig.IgnoreRai200EveryOther
            and sc.rai is RaiFlag.Release200 and k % 2 == 1)


def _connected_phases(sc: Scenario, t: TimerConfig, profile: PowerProfile, k: int,
                      rng: np.random.Generator | None) -> list[Phase]:
    sync_us = profile.sync_duration_us()
    if profile.sync_jitter_s > 0 and rng is not None:
        jitter = rng.uniform(-profile.sync_jitter_s, profile.sync_jitter_s)
        sync_us = max(1, sync_us + round(jitter * US_PER_S))
    txrx_us = profile.txrx_duration_us(sc.packet_size_bytes, sc.ecl)
    if sc.rai is RaiFlag.ReleaseAfterReply400:
        txrx_us += profile.reply_duration_us(sc.packet_size_bytes)
    phases = [Phase(SegmentKind.Sync, sync_us, k), Phase(SegmentKind.TxRx, txrx_us, k)]
    if _inactivity_for_event(sc, k) and t.inactivity_timer_us > 0:
        continuous = (not profile.cdrx_during_inactivity
                      or sc.misconfig_replay is Misconfig.NoCdrxDuringInactivity)
        phases.append(Phase(SegmentKind.InactivityCdrx, t.inactivity_timer_us, k,
                            variant="continuous" if continuous else "cdrx"))
    phases.append(Phase(SegmentKind.Release, profile.release_duration_us(), k))
    return phases


def connected_duration(sc: Scenario, t: TimerConfig, profile: PowerProfile) -> float:
    """Sync + TxRx + inactivity + release time of one (first) transmission event, seconds."""
    return us_to_s(sum(p.duration_us for p in _connected_phases(sc, t, profile, 0, None)))


def _tau_phase(sc: Scenario, profile: PowerProfile) -> Phase:
    # a TAU costs about as much as a 20-byte uplink released immediately
    parts = (
        (SegmentKind.Sync, profile.sync_duration_us()),
        (SegmentKind.TxRx, profile.txrx_duration_us(TAU_PACKET_BYTES, sc.ecl)),
        (SegmentKind.Release, profile.release_duration_us()),
    )
    return Phase(SegmentKind.TauUpdate, sum(d for _, d in parts), parts=parts)


class _Builder:
    def __init__(self, horizon_us: int):
        self.horizon_us = horizon_us
        self.now = 0
        self.phases: list[Phase] = []

    def emit(self, phase: Phase) -> None:
        d = min(phase.duration_us, self.horizon_us - self.now)
        if d <= 0:
            return
        if d != phase.duration_us:
            phase = Phase(phase.kind, d, phase.event, phase.variant, phase.parts)
        self.phases.append(phase)
        self.now += d


def _idle_content(b: _Builder, length_us: int, sc: Scenario, t: TimerConfig, listen_us: int) -> int:
    """Emit eDRX cycles then deep sleep over ``length_us``; returns cycles emitted."""
    n = 0
    if sc.idle_mode is IdleMode.EdrxThenPsm:
        n = _n_cycles_us(length_us, t)
        pairs, ptw_rest = divmod(t.ptw_us, t.drx_cycle_us)
        for _ in range(n):
            # sleep until the paging time window, then DRX listen/sleep pairs across it
            b.emit(Phase(SegmentKind.EdrxSleep, t.edrx_cycle_us - t.ptw_us))
            for _ in range(pairs):
                b.emit(Phase(SegmentKind.EdrxListen, listen_us))
                b.emit(Phase(SegmentKind.EdrxSleep, t.drx_cycle_us - listen_us))
            b.emit(Phase(SegmentKind.EdrxSleep, ptw_rest))
    b.emit(Phase(SegmentKind.PsmDeep, length_us - n * t.edrx_cycle_us))
    return n


def build_schedule(sc: Scenario, t: TimerConfig, profile: PowerProfile,
                   seed: int | None = 0) -> PhaseSchedule:
    """Expand a scenario into phases covering ``[0, horizon)``.

    Each transmission event is Sync, TxRx, optional InactivityCdrx, Release.
    Idle time is eDRX cycles for up to T3324 (when enabled) followed by deep
    sleep; a TAU is inserted whenever T3412 runs out before the next uplink.
    Uplinks and TAUs both restart the T3412 countdown.
    """
    check = validate_timers(t)
    if not check.ok:
        raise ScheduleError("invalid timers: " + "; ".join(check.describe()))
    rng = np.random.default_rng(seed)
    listen_us = round(profile.listen_duration_ms(sc.coverage) * 1000)
    if sc.idle_mode is IdleMode.EdrxThenPsm and listen_us > t.drx_cycle_us:
        raise ScheduleError("eDRX listen window longer than the DRX cycle")

    interval = sc.transmission_interval_us
    n_events = -(-sc.horizon_us // interval)
    first = _connected_phases(sc, t, profile, 0, None)
    first_us = sum(p.duration_us for p in first)
    if first_us > sc.horizon_us:
        raise ScheduleError(f"horizon {us_to_s(sc.horizon_us)} s cannot fit one "
                            f"transmission event of {us_to_s(first_us)} s")
    if first_us > interval:
        raise ScheduleError(f"transmission interval {us_to_s(interval)} s shorter than "
                            f"the Connected state ({us_to_s(first_us)} s)")

    tau = _tau_phase(sc, profile)
    b = _Builder(sc.horizon_us)
    cycles = taus = 0
    for k in range(n_events):
        for p in _connected_phases(sc, t, profile, k, rng):
            b.emit(p)
        if b.now > (k + 1) * interval:
            raise ScheduleError(f"event {k} overruns the next transmission")
        end = min((k + 1) * interval, sc.horizon_us)
        anchor = b.now
        while True:
            next_tau = anchor + t.t3412_us
            stop = min(end, next_tau)
            cycles += _idle_content(b, stop - anchor, sc, t, listen_us)
            if next_tau >= end:
                break
            if next_tau + tau.duration_us > end:
                # uplink or horizon arrives before the TAU could complete
                b.emit(Phase(SegmentKind.PsmDeep, end - b.now))
                break
            b.emit(tau)
            taus += 1
            anchor = b.now
    assert b.now == sc.horizon_us, (b.now, sc.horizon_us)
    return PhaseSchedule(
        phases=tuple(b.phases),
        horizon_us=sc.horizon_us,
        n_events=n_events,
        n_edrx_cycles=cycles,
        n_tau=taus,
        connected_duration_s=us_to_s(first_us),
        edrx_listen_us=listen_us,
        coverage=sc.coverage,
        timers=t,
        meta={"coverage": sc.coverage.value, "ecl": int(sc.ecl), "rai": f"0x{sc.rai.value:03x}"},
    )
