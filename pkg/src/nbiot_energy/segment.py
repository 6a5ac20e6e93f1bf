"""Phase recovery from raw current traces.

The detector works in two passes. A centered moving median splits the trace
into Connected and Idle stretches. Inside each stretch the forward and
backward moving maxima are combined into the smoothed series FSTS, and the
phase edges are where FSTS crosses a per-phase threshold (entry on >=, exit
on <). Thresholds are nearest-rank percentiles of a typical phase.

Everything runs over fixed-size blocks with a halo of context samples, so
the input may be a memory-mapped array much larger than RAM.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d, median_filter

from .core import (
    DEFAULT_SAMPLE_RATE_HZ,
    DEFAULT_SUPPLY_V,
    HIGH_POWER_KINDS,
    Coverage,
    CurrentTrace,
    PowerProfile,
    Segment,
    SegmentKind,
    TimerConfig,
    merge_adjacent,
)
from .statemachine import PhaseSchedule
from .tracesynth import phase_levels

__all__ = [
    "DetectorConfig",
    "Detection",
    "SlidingWindowMax",
    "moving_max_forward",
    "moving_max_backward",
    "fsts",
    "threshold_from_percentile",
    "moving_median",
    "detect_phases",
    "coarse_states",
    "filter_artifacts",
    "segment_trace",
    "match_segments",
    "BLOCK_SAMPLES",
    "PHASE_KINDS",
]

BLOCK_SAMPLES = 1 << 20
# every fine-grained label a detector emits, artifacts aside
PHASE_KINDS = frozenset(SegmentKind) - {SegmentKind.Artifact, SegmentKind.Connected,
                                        SegmentKind.Idle}

# ---------------------------------------------------------------- windowed max

def _as_series(t) -> np.ndarray:
    x = np.asarray(t, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-D series")
    if x.size == 0:
        raise ValueError("empty series")
    return x


def moving_max_forward(t, w: int) -> np.ndarray:
    """out[i] = max(t[i .. min(i+w, n-1)])."""
    x = _as_series(t)
    if w < 1:
        raise ValueError("window must be >= 1")
    k = w + 1
    return maximum_filter1d(x, k, mode="nearest", origin=-(k // 2))


def moving_max_backward(t, w: int) -> np.ndarray:
    """out[i] = max(t[max(0, i-w) .. i])."""
    x = _as_series(t)
    if w < 1:
        raise ValueError("window must be >= 1")
    k = w + 1
    return maximum_filter1d(x, k, mode="nearest", origin=(k - 1) // 2)


class SlidingWindowMax:
    """Streaming backward moving max over the last ``w + 1`` samples.

    A monotonic deque of (index, value) pairs keeps candidate maxima in
    decreasing order, so every sample is pushed and popped at most once.
    State carries across calls to :meth:`push`.
    """

    def __init__(self, w: int):
        if w < 1:
            raise ValueError("window must be >= 1")
        self.w = w
        self._dq: deque[tuple[int, float]] = deque()
        self._i = 0

    def push(self, chunk: Iterable[float]) -> np.ndarray:
        dq, w = self._dq, self.w
        out = []
        for v in chunk:
            v = float(v)
            while dq and dq[-1][1] <= v:
                dq.pop()
            dq.append((self._i, v))
            if dq[0][0] < self._i - w:
                dq.popleft()
            out.append(dq[0][1])
            self._i += 1
        return np.asarray(out, dtype=float)

    @staticmethod
    def forward(t: Sequence[float], w: int, chunk: int = 4096) -> np.ndarray:
        """Forward moving max computed by streaming the reversed series."""
        x = _as_series(t)[::-1]
        s = SlidingWindowMax(w)
        return np.concatenate([s.push(x[i:i + chunk]) for i in range(0, x.size, chunk)])[::-1]


def fsts(mmf, mmb) -> np.ndarray:
    a, b = np.asarray(mmf, dtype=float), np.asarray(mmb, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return np.minimum(a, b)


def threshold_from_percentile(reference, p: float = 0.95) -> float:
    """Nearest-rank percentile: the ceil(p*n)-th smallest sample."""
    x = np.asarray(reference, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty reference")
    if not 0 < p < 1:
        raise ValueError("percentile must be in (0, 1)")
    rank = max(1, math.ceil(round(p * x.size, 9)))
    return float(np.partition(x, rank - 1)[rank - 1])


def moving_median(t, window: int) -> np.ndarray:
    """Centered moving median, edges padded with the nearest sample."""
    x = _as_series(t)
    if window < 1 or window % 2 == 0:
        raise ValueError("median window must be odd and >= 1")
    return median_filter(x, size=window, mode="nearest")


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class DetectorConfig:
    """Detector parameters. Thresholds are in amperes; windows in samples."""

    window_w: int
    coarse_median_window: int
    threshold_percentile: float = 0.95
    min_phase_duration_ms: float = 100.0
    spike_max_duration_ms: float = 50.0
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    # generic threshold for detect_phases; None means a percentile of the trace
    threshold_a: float | None = None
    # per-phase thresholds used by segment_trace
    coarse_threshold_a: float | None = None
    txrx_threshold_a: float | None = None
    paging_threshold_a: float | None = None
    listen_threshold_a: float | None = None
    # samples at or above this are treated as polling spikes and masked
    artifact_level_a: float | None = None
    # (start_idx, end_idx) of the calibration window for percentile thresholds
    calibration_window: tuple[int, int] | None = None
    # eDRX sleep kept after the last listen window of an idle stretch, in
    # samples; the rest of the stretch is deep sleep
    edrx_tail_samples: int = 0

    def __post_init__(self):
        if not 0 < self.threshold_percentile < 1:
            raise ValueError("threshold_percentile must be in (0, 1)")
        if self.window_w < 1 or self.coarse_median_window < 1:
            raise ValueError("windows must be >= 1")
        if self.coarse_median_window % 2 == 0:
            raise ValueError("coarse_median_window must be odd (centered median)")
        if not 0 < self.spike_max_duration_ms < self.min_phase_duration_ms:
            raise ValueError("need 0 < spike_max_duration_ms < min_phase_duration_ms")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample rate must be > 0")
        if self.edrx_tail_samples < 0:
            raise ValueError("edrx_tail_samples must be >= 0")

    def ms_to_samples(self, ms: float) -> int:
        return max(1, round(ms * self.sample_rate_hz / 1000))

    @property
    def spike_max_samples(self) -> int:
        return self.ms_to_samples(self.spike_max_duration_ms)

    @property
    def min_phase_samples(self) -> int:
        return self.ms_to_samples(self.min_phase_duration_ms)

    @classmethod
    def from_profile(cls, profile: PowerProfile, *, coverage: Coverage = Coverage.Good,
                     timers: TimerConfig | None = None,
                     sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
                     voltage_v: float = DEFAULT_SUPPLY_V,
                     coarse_window_s: float = 1.5, **overrides) -> "DetectorConfig":
        """Window from the listen duration, thresholds from rendered typical phases.

        Passing ``calibration_window`` takes the phase thresholds from that
        slice of the trace instead.
        """
        p = overrides.pop("threshold_percentile", 0.95)
        t = timers or TimerConfig()
        sched = PhaseSchedule((), 0, 0, 0, 0, 0.0, coverage=coverage, timers=t)

        def typical(kind: SegmentKind, d_us: int, variant: str | None = None) -> np.ndarray:
            vals = []
            for a, b, lvl in phase_levels(kind, d_us, profile, sched, voltage_v, variant):
                vals.append(np.full(max(1, round((b - a) * sample_rate_hz / 1e6)), lvl))
            return np.concatenate(vals)

        # TxRx reference is the payload plateau; the bracketing peaks are too
        # short to be the "typical" level once the phase outlasts the window
        tx_ref = np.full(16, profile.txrx_current_mA * 1e-3)
        variant = "cdrx" if profile.cdrx_during_inactivity else "continuous"
        listen_us = round(profile.listen_duration_ms(coverage) * 1000)
        connected_min = min(profile.sync_current_mA, profile.release_current_mA,
                            profile.cdrx_sleep_current_mA) * 1e-3
        deep = max(profile.psm_current_a(voltage_v), profile.edrx_sleep_current_a(voltage_v))
        peak = profile.peak_factor * profile.txrx_current_mA * 1e-3
        win = round(coarse_window_s * sample_rate_hz) | 1
        kw = dict(
            window_w=max(1, round(1.5 * listen_us * sample_rate_hz / 1e6)),
            coarse_median_window=win,
            threshold_percentile=p,
            sample_rate_hz=sample_rate_hz,
            coarse_threshold_a=math.sqrt(deep * connected_min),
            txrx_threshold_a=threshold_from_percentile(tx_ref, p),
            paging_threshold_a=threshold_from_percentile(
                typical(SegmentKind.InactivityCdrx, t.inactivity_timer_us or t.drx_cycle_us, variant), p),
            listen_threshold_a=threshold_from_percentile(
                typical(SegmentKind.EdrxListen, listen_us), p),
            artifact_level_a=2.0 * peak,
            # eDRX sleep and PSM draw about the same current, so the end of
            # eDRX is placed by timer bookkeeping: the rest of the DRX cycle
            # plus whatever the paging time window leaves over
            edrx_tail_samples=round((t.drx_cycle_us - listen_us + t.ptw_us % t.drx_cycle_us)
                                    * sample_rate_hz / 1e6),
        )
        if overrides.get("calibration_window") is not None:
            # a user-designated window replaces the rendered phase references
            for name in ("txrx_threshold_a", "paging_threshold_a", "listen_threshold_a"):
                kw[name] = None
        kw.update(overrides)
        return cls(**kw)


# ---------------------------------------------------------------- block engine

def _runs(mask: np.ndarray, offset: int = 0) -> list[tuple[int, int]]:
    d = np.diff(np.concatenate(([0], mask.view(np.int8), [0])))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return [(int(s) + offset, int(e) + offset) for s, e in zip(starts, ends)]


class _RunCollector:
    """Joins runs that continue across block boundaries."""

    def __init__(self):
        self.runs: list[tuple[int, int]] = []

    def add(self, runs: list[tuple[int, int]]) -> None:
        for s, e in runs:
            if self.runs and self.runs[-1][1] == s:
                self.runs[-1] = (self.runs[-1][0], e)
            else:
                self.runs.append((s, e))


def _masked(block: np.ndarray, level: float | None) -> np.ndarray:
    if level is None:
        return block
    out = np.array(block, dtype=float)
    out[out >= level] = 0.0
    return out


def _fsts_runs(x, a: int, b: int, w: int, thresholds: Sequence[float],
               artifact_level: float | None = None,
               block: int = BLOCK_SAMPLES) -> list[list[tuple[int, int]]]:
    """Runs of FSTS >= each threshold, with FSTS confined to ``x[a:b]``."""
    cols = [_RunCollector() for _ in thresholds]
    for c0 in range(a, b, block):
        c1 = min(b, c0 + block)
        h0, h1 = max(a, c0 - w), min(b, c1 + w)
        seg = _masked(np.asarray(x[h0:h1], dtype=float), artifact_level)
        f = fsts(moving_max_forward(seg, w), moving_max_backward(seg, w))[c0 - h0:c1 - h0]
        for col, thr in zip(cols, thresholds):
            col.add(_runs(f >= thr, c0))
    return [c.runs for c in cols]


def _coarse_mask_runs(x, n: int, window: int, thr: float,
                      block: int = BLOCK_SAMPLES) -> list[tuple[int, int]]:
    # median of 2h+1 samples is >= thr iff at least h+1 of them are >= thr
    h = window // 2
    col = _RunCollector()
    for c0 in range(0, n, block):
        c1 = min(n, c0 + block)
        lo, hi = max(0, c0 - h), min(n, c1 + h)
        ind = (np.asarray(x[lo:hi], dtype=float) >= thr).astype(np.int64)
        ind = np.pad(ind, (h - (c0 - lo), h - (hi - c1)), mode="edge")
        cs = np.concatenate(([0], np.cumsum(ind)))
        counts = cs[window:] - cs[:-window]
        col.add(_runs(counts >= h + 1, c0))
    return col.runs


def _raw_runs(x, n: int, level: float, block: int = BLOCK_SAMPLES) -> list[tuple[int, int]]:
    col = _RunCollector()
    for c0 in range(0, n, block):
        c1 = min(n, c0 + block)
        col.add(_runs(np.asarray(x[c0:c1], dtype=float) >= level, c0))
    return col.runs


def _reference(x, n: int, cfg: DetectorConfig) -> np.ndarray:
    if cfg.calibration_window is not None:
        a, b = cfg.calibration_window
        if not 0 <= a < b <= n:
            raise ValueError(f"calibration window {cfg.calibration_window} outside trace")
        return np.asarray(x[a:b], dtype=float)
    return np.asarray(x[:n], dtype=float)


def _series(trace) -> tuple[object, int, float]:
    if isinstance(trace, CurrentTrace):
        return trace.samples_a, len(trace), trace.sample_rate_hz
    x = np.asarray(trace) if not hasattr(trace, "__getitem__") else trace
    return x, len(x), DEFAULT_SAMPLE_RATE_HZ


# ---------------------------------------------------------------- operations

def detect_phases(trace, cfg: DetectorConfig, threshold: float | None = None,
                  kind: SegmentKind = SegmentKind.TxRx) -> list[Segment]:
    """One segment per maximal run of FSTS >= threshold over the whole trace."""
    x, n, _ = _series(trace)
    if n < cfg.window_w:
        raise ValueError(f"trace of {n} samples is shorter than the window ({cfg.window_w})")
    thr = threshold if threshold is not None else cfg.threshold_a
    if thr is None:
        thr = threshold_from_percentile(_reference(x, n, cfg), cfg.threshold_percentile)
    (runs,) = _fsts_runs(x, 0, n, cfg.window_w, [thr])
    return [Segment(s, e, kind) for s, e in runs]


def _coarse_threshold(x, n: int, cfg: DetectorConfig) -> float:
    if cfg.coarse_threshold_a is not None:
        return cfg.coarse_threshold_a
    ref = _reference(x, n, cfg)
    lo = threshold_from_percentile(ref, 0.05)
    hi = threshold_from_percentile(ref, cfg.threshold_percentile)
    return math.sqrt(max(lo, 1e-12) * max(hi, 1e-12))


def coarse_states(trace, cfg: DetectorConfig) -> list[Segment]:
    """Alternating Connected/Idle segments from the thresholded moving median."""
    x, n, _ = _series(trace)
    if n < cfg.coarse_median_window:
        raise ValueError(f"trace of {n} samples is shorter than the median window "
                         f"({cfg.coarse_median_window})")
    thr = _coarse_threshold(x, n, cfg)
    out, at = [], 0
    for s, e in _coarse_mask_runs(x, n, cfg.coarse_median_window, thr):
        if s > at:
            out.append(Segment(at, s, SegmentKind.Idle))
        out.append(Segment(s, e, SegmentKind.Connected))
        at = e
    if at < n:
        out.append(Segment(at, n, SegmentKind.Idle))
    return out


def filter_artifacts(segments: Sequence[Segment], cfg: DetectorConfig) -> list[Segment]:
    """Relabel spike-length high-power segments as Artifact; fold other short ones away.

    A segment shorter than the minimum phase length joins an adjacent
    same-kind segment when there is one, otherwise it is absorbed by its
    preceding (or, at the start, following) neighbour. Total coverage is
    unchanged.
    """
    segs = sorted(segments)
    spike, min_len = cfg.spike_max_samples, cfg.min_phase_samples
    segs = [s.relabel(SegmentKind.Artifact)
            if s.kind in HIGH_POWER_KINDS and s.length < spike else s for s in segs]
    out = list(segs)
    i = 0
    while i < len(out):
        s = out[i]
        if s.kind is SegmentKind.Artifact or s.length >= min_len:
            i += 1
            continue
        prev = out[i - 1] if i > 0 and out[i - 1].end_idx == s.start_idx else None
        nxt = out[i + 1] if i + 1 < len(out) and out[i + 1].start_idx == s.end_idx else None
        same = [nb for nb in (prev, nxt) if nb is not None and nb.kind is s.kind]
        if same:
            i += 1  # merge_adjacent below joins it
            continue
        host = next((nb for nb in (prev, nxt)
                     if nb is not None and nb.kind is not SegmentKind.Artifact), None)
        if host is None:
            i += 1
            continue
        out[i] = s.relabel(host.kind)
        i = max(0, i - 1)
        out = merge_adjacent(out)
    return merge_adjacent(out)


def _overlay(segments: list[Segment], artifacts: list[tuple[int, int]]) -> list[Segment]:
    """Cut artifact intervals out of a tiling and insert them as Artifact segments."""
    if not artifacts:
        return segments
    out: list[Segment] = []
    j = 0
    for s in segments:
        at = s.start_idx
        while j < len(artifacts) and artifacts[j][1] <= at:
            j += 1
        k = j
        while k < len(artifacts) and artifacts[k][0] < s.end_idx:
            a0, a1 = max(artifacts[k][0], at), min(artifacts[k][1], s.end_idx)
            if a0 > at:
                out.append(Segment(at, a0, s.kind, s.source))
            if a1 > a0:
                out.append(Segment(a0, a1, SegmentKind.Artifact, s.source))
            at = max(at, a1)
            if artifacts[k][1] > s.end_idx:
                break
            k += 1
        if at < s.end_idx:
            out.append(Segment(at, s.end_idx, s.kind, s.source))
    return merge_adjacent(out)


@dataclass
class Detection:
    segments: list[Segment]
    coarse: list[Segment]
    artifacts: list[Segment]
    config: DetectorConfig
    thresholds: dict = field(default_factory=dict)


def _required(cfg: DetectorConfig, x, n: int) -> dict[str, float]:
    ref = None
    out = {}
    for name in ("txrx_threshold_a", "paging_threshold_a", "listen_threshold_a"):
        v = getattr(cfg, name)
        if v is None:
            if ref is None:
                ref = _reference(x, n, cfg)
            v = threshold_from_percentile(ref, cfg.threshold_percentile)
        out[name] = v
    out["coarse_threshold_a"] = _coarse_threshold(x, n, cfg)
    return out


def segment_trace(trace, cfg: DetectorConfig, block: int = BLOCK_SAMPLES) -> Detection:
    """Full labeling: coarse split, then per-stretch FSTS phase edges, then artifact cleanup.

    Connected stretches become Sync, TxRx, InactivityCdrx, Release. Idle
    stretches become EdrxSleep and EdrxListen; after the last listen window
    ``edrx_tail_samples`` more are EdrxSleep and the remainder is PsmDeep.
    A TAU cannot be told apart from an uplink by current alone and is
    labeled like one.
    """
    x, n, _ = _series(trace)
    coarse = coarse_states(trace, cfg)
    thr = _required(cfg, x, n)
    w, art = cfg.window_w, cfg.artifact_level_a
    spike = cfg.spike_max_samples
    artifacts = _raw_runs(x, n, art, block) if art is not None else []

    out: list[Segment] = []
    for c in coarse:
        a, b = c.start_idx, c.end_idx
        if c.kind is SegmentKind.Connected:
            tx, pg = _fsts_runs(x, a, b, w, [thr["txrx_threshold_a"], thr["paging_threshold_a"]],
                                art, block)
            tx = [r for r in tx if r[1] - r[0] >= spike]
            if not tx:
                out.append(Segment(a, b, SegmentKind.Sync))
                continue
            s0, s1 = tx[0][0], tx[-1][1]
            if s0 > a:
                out.append(Segment(a, s0, SegmentKind.Sync))
            out.append(Segment(s0, s1, SegmentKind.TxRx))
            # continuous paging abuts TxRx, so clip rather than require a gap
            pg = [(max(s, s1), e) for s, e in pg if e - max(s, s1) >= spike]
            end = s1
            if pg:
                end = pg[-1][1]
                out.append(Segment(s1, end, SegmentKind.InactivityCdrx))
            if end < b:
                out.append(Segment(end, b, SegmentKind.Release))
        else:
            (ls,) = _fsts_runs(x, a, b, w, [thr["listen_threshold_a"]], art, block)
            at = a
            for s, e in ls:
                if s > at:
                    out.append(Segment(at, s, SegmentKind.EdrxSleep))
                out.append(Segment(s, e, SegmentKind.EdrxListen))
                at = e
            if ls and at < b and cfg.edrx_tail_samples:
                tail = min(b, at + cfg.edrx_tail_samples)
                out.append(Segment(at, tail, SegmentKind.EdrxSleep))
                at = tail
            if at < b:
                out.append(Segment(at, b, SegmentKind.PsmDeep))
    segs = filter_artifacts(_overlay(out, artifacts), cfg)
    return Detection(
        segments=segs,
        coarse=coarse,
        artifacts=[s for s in segs if s.kind is SegmentKind.Artifact],
        config=cfg,
        thresholds=thr,
    )


def _bridge_artifacts(segs: list[Segment]) -> list[Segment]:
    # same-kind pieces split only by an artifact count as one phase
    kept = [s for s in segs if s.kind is not SegmentKind.Artifact]
    out: list[Segment] = []
    for s in kept:
        if out and out[-1].kind is s.kind:
            between = [t for t in segs if out[-1].end_idx <= t.start_idx and t.end_idx <= s.start_idx]
            if all(t.kind is SegmentKind.Artifact for t in between):
                out[-1] = Segment(out[-1].start_idx, s.end_idx, s.kind, s.source)
                continue
        out.append(s)
    return out


def match_segments(truth: Sequence[Segment], detected: Sequence[Segment], tol_samples: int,
                   kinds: Iterable[SegmentKind] = PHASE_KINDS) -> dict:
    """One-to-one matching of same-kind segments whose edges are both within tolerance."""
    kinds = frozenset(kinds)
    t = [s for s in _bridge_artifacts(sorted(truth)) if s.kind in kinds]
    d = [s for s in _bridge_artifacts(sorted(detected)) if s.kind in kinds]
    used = [False] * len(d)
    errors = []
    lo = 0
    for ts in t:
        best, best_err = None, None
        while lo < len(d) and d[lo].end_idx < ts.start_idx - tol_samples:
            lo += 1
        for j in range(lo, len(d)):
            ds = d[j]
            if ds.start_idx > ts.end_idx + tol_samples:
                break
            if used[j] or ds.kind is not ts.kind:
                continue
            err = max(abs(ds.start_idx - ts.start_idx), abs(ds.end_idx - ts.end_idx))
            if err <= tol_samples and (best_err is None or err < best_err):
                best, best_err = j, err
        if best is not None:
            used[best] = True
            errors.append(best_err)
    matched = len(errors)
    return {
        "n_truth": len(t),
        "n_detected": len(d),
        "matched": matched,
        "precision": matched / len(d) if d else 1.0,
        "recall": matched / len(t) if t else 1.0,
        "max_boundary_error_samples": max(errors) if errors else 0,
        "mean_boundary_error_samples": float(np.mean(errors)) if errors else 0.0,
        "tolerance_samples": tol_samples,
    }

