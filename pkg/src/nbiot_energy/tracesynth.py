"""Render a phase schedule into a sampled current trace with ground-truth labels.

Each phase becomes a flat current level taken from the power profile. TxRx
gets a control peak at each end, the inactivity timer shows cDRX on-duration
bursts, and AT-command polling spikes can be superposed. Rendering is done in
fixed-size chunks so day-long traces never need to sit in memory at once;
noise draws do not depend on the chunk size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .core import (
    DEFAULT_SAMPLE_RATE_HZ,
    DEFAULT_SUPPLY_V,
    Coverage,
    CurrentTrace,
    PowerProfile,
    Segment,
    SegmentKind,
    Source,
)
from .statemachine import PhaseSchedule, cdrx_on_windows
from .units import US_PER_S

__all__ = [
    "SynthOptions",
    "Synthesis",
    "CHUNK_SAMPLES",
    "sample_index",
    "n_samples",
    "truth_segments",
    "phase_levels",
    "spike_segments",
    "render_chunks",
    "synthesize",
    "inject_edrx_listen_bug",
]

CHUNK_SAMPLES = 1 << 20


@dataclass(frozen=True)
class SynthOptions:
    noise_stddev_fraction: float = 0.0
    at_spike_rate_per_min: float = 0.0
    at_spike_energy_mJ: float = 15.0
    at_spike_duration_ms: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.noise_stddev_fraction < 0.5:
            raise ValueError("noise_stddev_fraction must be in [0, 0.5)")
        if self.at_spike_rate_per_min < 0:
            raise ValueError("at_spike_rate_per_min must be >= 0")
        if not self.at_spike_energy_mJ > 0:
            raise ValueError("at_spike_energy_mJ must be > 0")
        if not self.at_spike_duration_ms > 0:
            raise ValueError("at_spike_duration_ms must be > 0")


class Synthesis(NamedTuple):
    trace: CurrentTrace
    truth: list[Segment]
    spikes: list[Segment]


def _check_rate(rate_hz: float) -> None:
    if not (rate_hz > 0 and math.isfinite(rate_hz)):
        raise ValueError(f"sample rate must be > 0, got {rate_hz}")


def sample_index(t_us: int, rate_hz: float) -> int:
    """Sample index of time ``t_us``, rounding half up."""
    if float(rate_hz).is_integer():
        r = int(rate_hz)
        return (2 * t_us * r + US_PER_S) // (2 * US_PER_S)
    return math.floor(t_us * rate_hz / US_PER_S + 0.5)


def n_samples(sched: PhaseSchedule, rate_hz: float) -> int:
    return sample_index(sched.total_us, rate_hz)


def truth_segments(sched: PhaseSchedule, rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> list[Segment]:
    """Schedule phases as sample-index segments; phases shorter than a sample vanish."""
    _check_rate(rate_hz)
    out = []
    for p, a, b in sched.boundaries_us():
        i, j = sample_index(a, rate_hz), sample_index(b, rate_hz)
        if j > i:
            out.append(Segment(i, j, p.kind, Source.GroundTruth))
    return out


def _txrx_pieces(d: int, i_tx: float, profile: PowerProfile) -> list[tuple[int, int, float]]:
    pk = round(profile.peak_duration_ms * 1000)
    hi = profile.peak_factor * i_tx
    if d < 2 * pk:
        return [(0, d, hi)]
    return [(0, pk, hi), (pk, d - pk, i_tx), (d - pk, d, hi)]


def phase_levels(kind: SegmentKind, d: int, profile: PowerProfile, sched: PhaseSchedule,
                 voltage_v: float, variant: str | None = None,
                 parts: Sequence[tuple[SegmentKind, int]] = ()) -> list[tuple[int, int, float]]:
    """Constant-current pieces ``(offset_us, end_us, amps)`` for one phase of length ``d``."""
    mA = 1e-3
    if kind is SegmentKind.TxRx:
        return _txrx_pieces(d, profile.txrx_current_mA * mA, profile)
    if kind is SegmentKind.InactivityCdrx:
        paging = profile.paging_current_mA * mA
        if variant == "continuous":
            return [(0, d, paging)]
        t = sched.timers
        out, at = [], 0
        for off, ln in cdrx_on_windows(d, t.on_duration_timer_us, t.drx_cycle_us):
            if off > at:
                out.append((at, off, profile.cdrx_sleep_current_mA * mA))
            out.append((off, off + ln, paging))
            at = off + ln
        if at < d:
            out.append((at, d, profile.cdrx_sleep_current_mA * mA))
        return out
    if kind is SegmentKind.TauUpdate and parts:
        out, at = [], 0
        for k, dd in parts:
            dd = min(dd, d - at)
            if dd <= 0:
                break
            out += [(at + a, at + b, lvl) for a, b, lvl in phase_levels(k, dd, profile, sched, voltage_v)]
            at += dd
        return out
    level = {
        SegmentKind.Sync: lambda: profile.sync_current_mA * mA,
        SegmentKind.Release: lambda: profile.release_current_mA * mA,
        SegmentKind.TauUpdate: lambda: profile.sync_current_mA * mA,
        SegmentKind.EdrxListen: lambda: profile.listen_current_a(sched.coverage, voltage_v),
        SegmentKind.EdrxSleep: lambda: profile.edrx_sleep_current_a(voltage_v),
        SegmentKind.PsmDeep: lambda: profile.psm_current_a(voltage_v),
    }.get(kind)
    if level is None:
        raise ValueError(f"cannot render phase kind {kind.value}")
    return [(0, d, level())]


def _pieces(sched: PhaseSchedule, profile: PowerProfile, rate_hz: float,
            voltage_v: float) -> Iterator[tuple[int, int, float]]:
    for p, a, _ in sched.boundaries_us():
        for u0, u1, lvl in phase_levels(p.kind, p.duration_us, profile, sched, voltage_v,
                                        p.variant, p.parts):
            i, j = sample_index(a + u0, rate_hz), sample_index(a + u1, rate_hz)
            if j > i:
                yield i, j, lvl


def _spike_plan(n: int, opt: SynthOptions, rate_hz: float, voltage_v: float,
                rng: np.random.Generator) -> tuple[np.ndarray, int, float]:
    width = max(1, round(opt.at_spike_duration_ms * rate_hz / 1000))
    count = round(opt.at_spike_rate_per_min * n / rate_hz / 60)
    if count == 0:
        return np.empty(0, dtype=np.int64), width, 0.0
    slots = n // width
    if count > slots:
        raise ValueError(f"{count} spikes of {width} samples do not fit in {n} samples")
    starts = np.sort(rng.choice(slots, size=count, replace=False)).astype(np.int64) * width
    amp = opt.at_spike_energy_mJ * 1e-3 / (voltage_v * width / rate_hz)
    return starts, width, amp


def spike_segments(sched: PhaseSchedule, opt: SynthOptions,
                   rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
                   voltage_v: float = DEFAULT_SUPPLY_V) -> list[Segment]:
    _check_rate(rate_hz)
    _, spike_ss = np.random.SeedSequence(opt.seed).spawn(2)
    starts, width, _ = _spike_plan(n_samples(sched, rate_hz), opt, rate_hz, voltage_v,
                                   np.random.default_rng(spike_ss))
    return [Segment(int(s), int(s) + width, SegmentKind.Artifact, Source.GroundTruth) for s in starts]


def render_chunks(sched: PhaseSchedule, profile: PowerProfile, opt: SynthOptions = SynthOptions(),
                  rate_hz: float = DEFAULT_SAMPLE_RATE_HZ, voltage_v: float = DEFAULT_SUPPLY_V,
                  chunk_samples: int = CHUNK_SAMPLES) -> Iterator[np.ndarray]:
    """Yield the trace as consecutive float64 arrays of at most ``chunk_samples``."""
    _check_rate(rate_hz)
    if chunk_samples < 1:
        raise ValueError("chunk_samples must be >= 1")
    n = n_samples(sched, rate_hz)
    noise_ss, spike_ss = np.random.SeedSequence(opt.seed).spawn(2)
    noise_rng = np.random.default_rng(noise_ss)
    starts, width, amp = _spike_plan(n, opt, rate_hz, voltage_v, np.random.default_rng(spike_ss))
    pieces = _pieces(sched, profile, rate_hz, voltage_v)
    cur = next(pieces, None)
    for c0 in range(0, n, chunk_samples):
        c1 = min(n, c0 + chunk_samples)
        buf = np.empty(c1 - c0)
        at = c0
        while at < c1:
            i, j, lvl = cur
            k = min(j, c1)
            buf[at - c0:k - c0] = lvl
            at = k
            if k == j:
                cur = next(pieces, None)
        if opt.noise_stddev_fraction > 0:
            buf *= 1.0 + opt.noise_stddev_fraction * noise_rng.standard_normal(buf.size)
            np.maximum(buf, 0.0, out=buf)
        lo, hi = np.searchsorted(starts, [c0 - width + 1, c1])
        for s in starts[lo:hi]:
            a, b = max(s, c0), min(s + width, c1)
            buf[a - c0:b - c0] += amp
        yield buf


def synthesize(sched: PhaseSchedule, profile: PowerProfile, opt: SynthOptions = SynthOptions(),
               rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
               voltage_v: float = DEFAULT_SUPPLY_V) -> Synthesis:
    """Whole trace in memory, plus ground truth and the injected spike positions."""
    _check_rate(rate_hz)
    chunks = list(render_chunks(sched, profile, opt, rate_hz, voltage_v))
    samples = np.concatenate(chunks) if chunks else np.empty(0)
    trace = CurrentTrace(samples, rate_hz, voltage_v)
    return Synthesis(trace, truth_segments(sched, rate_hz),
                     spike_segments(sched, opt, rate_hz, voltage_v))


def inject_edrx_listen_bug(trace: CurrentTrace, segments: Sequence[Segment], extension_ms: float,
                           level_a: float | None = None,
                           select: Sequence[int] | None = None) -> tuple[CurrentTrace, list[Segment]]:
    """Keep the radio awake for ``extension_ms`` after selected listen windows.

    Samples after each chosen EdrxListen segment are raised to ``level_a``
    (default: the listen segment's own median current). Segment labels are
    returned unchanged, so ground truth still ends at the nominal boundary.
    ``select`` picks listen windows by their order among EdrxListen segments.
    """
    if extension_ms < 0:
        raise ValueError("extension_ms must be >= 0")
    listens = [s for s in segments if s.kind is SegmentKind.EdrxListen]
    if not listens:
        raise ValueError("no EdrxListen segment to extend")
    segs = list(segments)
    ext = round(extension_ms * trace.sample_rate_hz / 1000)
    if ext == 0:
        return trace, segs
    chosen = listens if select is None else [listens[i] for i in select]
    x = np.array(trace.samples_a)
    for s in chosen:
        lvl = level_a if level_a is not None else float(np.median(trace.samples_a[s.start_idx:s.end_idx]))
        x[s.end_idx:min(len(x), s.end_idx + ext)] = lvl
    return CurrentTrace(x, trace.sample_rate_hz, trace.supply_voltage_v, trace.t0), segs
