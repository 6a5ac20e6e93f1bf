"""Energy accounting: per-segment integration, eDRX cycle energy, battery lifetime."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import reference as ref
from .core import CurrentTrace, Segment, SegmentKind, TIMER_BOUNDS_US
from .units import US_PER_S

__all__ = [
    "SECONDS_PER_YEAR",
    "integrate_energy",
    "EdrxEnergyInputs",
    "edrx_energy",
    "LifetimeInputs",
    "LifetimeReport",
    "lifetime",
    "lifetime_uplink_free",
    "summarize_segments",
    "lifetime_grid_rows",
    "lifetime_grid_csv",
]

SECONDS_PER_YEAR = 365.25 * 86_400
WH_TO_J = 3_600.0


def integrate_energy(trace: CurrentTrace, seg: Segment) -> float:
    """Left-rectangle energy of ``seg`` in joules."""
    if not 0 <= seg.start_idx < seg.end_idx <= len(trace):
        raise IndexError(f"segment [{seg.start_idx}, {seg.end_idx}) outside trace of "
                         f"{len(trace)} samples")
    s = math.fsum(trace.samples_a[seg.start_idx:seg.end_idx])
    return s * trace.supply_voltage_v / trace.sample_rate_hz


@dataclass(frozen=True)
class EdrxEnergyInputs:
    e_listen_mJ: float
    p_sleep_uW: float
    t_sleep_s: float
    n_cycles: int
    t_listen_ms: float | None = None
    p_listen_mW: float | None = None

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v is not None and (not math.isfinite(v) or v < 0):
                raise ValueError(f"{k} must be finite and >= 0, got {v}")
        if self.t_listen_ms is not None and self.p_listen_mW is not None:
            implied = self.p_listen_mW * self.t_listen_ms / 1000
            if not math.isclose(implied, self.e_listen_mJ, rel_tol=1e-3, abs_tol=1e-9):
                raise ValueError(f"listen energy {self.e_listen_mJ} mJ disagrees with "
                                 f"power x time = {implied} mJ")


def edrx_energy(inp: EdrxEnergyInputs) -> float:
    """(E_listen + P_sleep * t_sleep) * N, in joules."""
    return (inp.e_listen_mJ * 1e-3 + inp.p_sleep_uW * 1e-6 * inp.t_sleep_s) * inp.n_cycles


@dataclass(frozen=True)
class LifetimeInputs:
    e_con_J: float
    p_psm_uW: float
    t_ti_s: float
    e_edrx_J: float = 0.0
    battery_J: float = ref.BATTERY_J
    t_tau_s: float | None = None
    # connected time to subtract from the PSM share; zero keeps the full interval
    t_connected_s: float = 0.0

    def __post_init__(self):
        if not self.battery_J > 0:
            raise ValueError("battery capacity must be > 0")
        if not self.t_ti_s > 0:
            raise ValueError("transmission interval must be > 0")
        for k in ("e_con_J", "p_psm_uW", "e_edrx_J", "t_connected_s"):
            v = getattr(self, k)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{k} must be finite and >= 0, got {v}")
        if self.t_connected_s > self.t_ti_s:
            raise ValueError("connected time exceeds the transmission interval")
        if self.t_tau_s is not None and not self.t_tau_s > 0:
            raise ValueError("t_tau must be > 0")

    @classmethod
    def from_battery_wh(cls, battery_wh: float, **kw) -> "LifetimeInputs":
        return cls(battery_J=battery_wh * WH_TO_J, **kw)


@dataclass(frozen=True)
class LifetimeReport:
    lifetime_years: float
    connected_J: float
    edrx_J: float
    psm_J: float
    interval_s: float
    assumptions: tuple[str, ...] = field(default_factory=tuple)

    @property
    def per_interval_J(self) -> float:
        return self.connected_J + self.edrx_J + self.psm_J

    def to_dict(self) -> dict:
        d = asdict(self)
        d["assumptions"] = list(self.assumptions)
        d["per_interval_J"] = self.per_interval_J
        return d


_ASSUMPTIONS = (
    "no battery degradation",
    "fixed transmission interval",
    "year = 365.25 days",
)


def lifetime(inp: LifetimeInputs) -> LifetimeReport:
    """Battery life when every interval costs E_con + E_eDRX + P_psm * t."""
    psm_J = inp.p_psm_uW * 1e-6 * (inp.t_ti_s - inp.t_connected_s)
    denom = inp.e_con_J + inp.e_edrx_J + psm_J
    if denom <= 0:
        raise ZeroDivisionError("no energy is drawn per interval")
    years = inp.battery_J / denom * inp.t_ti_s / SECONDS_PER_YEAR
    notes = _ASSUMPTIONS + (
        ("PSM power applied over the whole interval",) if inp.t_connected_s == 0
        else (f"PSM time reduced by {inp.t_connected_s} s of connected time",))
    return LifetimeReport(years, inp.e_con_J, inp.e_edrx_J, psm_J, inp.t_ti_s, notes)


T3412_MAX_S = TIMER_BOUNDS_US["t3412_us"][1] / US_PER_S


def lifetime_uplink_free(inp: LifetimeInputs) -> LifetimeReport:
    """Lifetime of a device that only wakes for periodic TAU.

    ``e_con_J`` is taken as the cost of one TAU.
    """
    if inp.t_tau_s is None:
        raise ValueError("t_tau_s is required")
    if inp.t_tau_s > T3412_MAX_S:
        raise ValueError(f"t_tau {inp.t_tau_s} s exceeds the T3412 maximum of {T3412_MAX_S} s")
    rep = lifetime(LifetimeInputs(
        e_con_J=inp.e_con_J, p_psm_uW=inp.p_psm_uW, t_ti_s=inp.t_tau_s, e_edrx_J=inp.e_edrx_J,
        battery_J=inp.battery_J, t_connected_s=min(inp.t_connected_s, inp.t_tau_s)))
    return LifetimeReport(rep.lifetime_years, rep.connected_J, rep.edrx_J, rep.psm_J,
                          rep.interval_s, rep.assumptions + ("interval = T_TAU, no uplinks",))


def summarize_segments(trace: CurrentTrace, segments: Sequence[Segment]) -> dict:
    """Per-kind count, energy and duration statistics.

    Artifact rows are reported separately and kept out of ``phase_energy_J``.
    """
    by_kind: dict[SegmentKind, list[tuple[float, float]]] = {}
    for s in segments:
        e = integrate_energy(trace, s)
        by_kind.setdefault(s.kind, []).append((e, s.length / trace.sample_rate_hz))
    rows = {}
    for kind, vals in sorted(by_kind.items(), key=lambda kv: kv[0].value):
        e = np.array([v[0] for v in vals])
        d = np.array([v[1] for v in vals])
        rows[kind.value] = {
            "count": len(vals),
            "energy_J": math.fsum(e),
            "median_energy_J": float(np.median(e)),
            "duration_s": math.fsum(d),
            "median_duration_s": float(np.median(d)),
        }
    phase_total = math.fsum(r["energy_J"] for k, r in rows.items()
                            if k != SegmentKind.Artifact.value)
    return {
        "sample_rate_hz": trace.sample_rate_hz,
        "supply_voltage_v": trace.supply_voltage_v,
        "n_samples": len(trace),
        "kinds": rows,
        "phase_energy_J": phase_total,
        "artifact_energy_J": rows.get(SegmentKind.Artifact.value, {}).get("energy_J", 0.0),
    }


_CONFIGS = ("default", "rai400")


def lifetime_grid_rows(battery_J: float = ref.BATTERY_J) -> list[dict]:
    """Lifetime grid over module, operator, timer config and interval."""
    rows = []
    for module in ref.MODULES:
        for op in ref.OPERATORS:
            e_by_cfg = {
                "default": ref.CONNECTED_DEFAULT_GOOD_J[(module, op)],
                "rai400": ref.CONNECTED_RAI_GOOD_20B_J[(module, op)][1],
            }
            for cfg in _CONFIGS:
                for hours in ref.LIFETIME_INTERVALS_H:
                    rep = lifetime(LifetimeInputs(
                        e_con_J=e_by_cfg[cfg], p_psm_uW=ref.PSM_POWER_UW[module],
                        t_ti_s=hours * 3600.0, battery_J=battery_J))
                    rows.append({
                        "module": module, "operator": op, "config": cfg, "interval_h": hours,
                        "lifetime_years": rep.lifetime_years,
                        "published_years": ref.LIFETIME_GRID_PUBLISHED[(module, op)][cfg][
                            ref.LIFETIME_INTERVALS_H.index(hours)],
                        "accepted": (module, op, cfg, hours) not in ref.LIFETIME_GRID_INCONSISTENT,
                    })
    return rows


def lifetime_grid_csv(battery_J: float = ref.BATTERY_J) -> str:
    """CSV in the reference grid layout: one row per module/operator/config, one column per interval."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    hours = ref.LIFETIME_INTERVALS_H
    w.writerow(["module", "operator", "config"]
               + [f"{h}h_years" for h in hours] + [f"{h}h_published" for h in hours]
               + [f"{h}h_accepted" for h in hours])
    rows = lifetime_grid_rows(battery_J)
    for i in range(0, len(rows), len(hours)):
        grp = rows[i:i + len(hours)]
        w.writerow([grp[0]["module"], grp[0]["operator"], grp[0]["config"]]
                   + [f"{r['lifetime_years']:.2f}" for r in grp]
                   + [f"{r['published_years']:.1f}" for r in grp]
                   + [int(r["accepted"]) for r in grp])
    return buf.getvalue()
