"""Command-line entry point: ``nbiot-energy {simulate,analyze,lifetime,radio}``.

Exit codes: 0 success, 1 domain error (invalid timers, bad trace, ...),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import yaml

from . import reference as ref
from .config import CONFIG_DIR_ENV, load_run_config, load_timers, resolve_path
from .core import Coverage, TimerConfig, validate_timers
from .energy import (
    LifetimeInputs,
    integrate_energy,
    lifetime,
    lifetime_grid_csv,
    lifetime_uplink_free,
    summarize_segments,
)
from .profiles import load_profile
from .radio import (
    EclPolicy,
    NoiseModel,
    noise_floor_cBm,
    rach_attempt_sequence,
    repetitions_for_ecl,
    select_ecl,
    sinr_from_rsrp,
    snr_from_rsrp,
)
from .segment import DetectorConfig, match_segments, segment_trace
from .statemachine import build_schedule
from .traceio import (
    load_trace_memmap,
    parse_column_map,
    read_segments_csv,
    write_segments_csv,
    write_trace_csv,
)
from .tracesynth import render_chunks, truth_segments
from .units import parse_duration_us, parse_power_cbm, us_to_s

log = logging.getLogger("nbiot_energy")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


def _dump_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


# ---------------------------------------------------------------- simulate

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.scenario, timers_path=args.timers, profile=args.profile,
                          seed=args.seed)
    check = validate_timers(cfg.timers)
    if not check.ok:
        for line in check.describe():
            print(f"timer violation: {line}", file=sys.stderr)
        return EXIT_DOMAIN
    synth = cfg.synth
    if args.noise is not None or args.spike_rate is not None:
        synth = replace(synth,
                        **({"noise_stddev_fraction": args.noise} if args.noise is not None else {}),
                        **({"at_spike_rate_per_min": args.spike_rate} if args.spike_rate is not None else {}))
    rate = args.rate or cfg.sample_rate_hz
    sched = build_schedule(cfg.scenario, cfg.timers, cfg.profile, seed=synth.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = write_trace_csv(out / "trace.csv",
                        render_chunks(sched, cfg.profile, synth, rate, cfg.supply_voltage_v),
                        rate, cfg.supply_voltage_v if args.with_voltage else None)
    write_segments_csv(out / "truth.csv", truth_segments(sched, rate))
    doc = sched.to_dict()
    doc.update({
        "sample_rate_hz": rate,
        "supply_voltage_v": cfg.supply_voltage_v,
        "n_samples": n,
        "profile": cfg.profile.module_name + (f"/{cfg.profile.operator}" if cfg.profile.operator else ""),
        "timers": cfg.timers.to_mapping(),
        "seed": synth.seed,
        "noise_stddev_fraction": synth.noise_stddev_fraction,
        "at_spike_rate_per_min": synth.at_spike_rate_per_min,
    })
    _dump_json(doc, out / "schedule.json")
    log.info("wrote %d samples (%.1f s) to %s", n, us_to_s(sched.horizon_us), out)
    return EXIT_OK


# ---------------------------------------------------------------- analyze

def _truth_for(trace_path: Path, explicit: str | None) -> Path | None:
    if explicit:
        return Path(explicit)
    cands = [trace_path.with_name(f"{trace_path.stem}.truth.csv"),
             trace_path.with_name(f"{trace_path.stem}_truth.csv")]
    if trace_path.stem == "trace":
        cands.insert(0, trace_path.with_name("truth.csv"))
    return next((c for c in cands if c.exists()), None)


def _calibration(text: str | None) -> tuple[int, int] | None:
    if not text:
        return None
    a, _, b = text.partition(":")
    return int(a), int(b)


def analyze_file(path: str, opts: dict) -> dict:
    """Analyze one trace file; returns its summary. Runs in a worker process."""
    trace_path = Path(path)
    out = Path(opts["out"])
    prefix = "" if opts["single"] else f"{trace_path.stem}."
    profile = load_profile(opts["profile"])
    timers = load_timers(opts["timers"]) if opts["timers"] else TimerConfig()
    with tempfile.TemporaryDirectory(dir=out) as tmp:
        trace = load_trace_memmap(trace_path, Path(tmp) / "samples.f64",
                                  column_map=parse_column_map(opts["column_map"]),
                                  rate_hz=opts["rate"], voltage_v=opts["voltage"])
        overrides = {k: v for k, v in (
            ("window_w", opts["window_w"]),
            ("threshold_percentile", opts["percentile"]),
            ("min_phase_duration_ms", opts["min_phase_ms"]),
            ("spike_max_duration_ms", opts["spike_max_ms"]),
            ("calibration_window", _calibration(opts["calibration_window"])),
        ) if v is not None}
        cfg = DetectorConfig.from_profile(
            profile, coverage=Coverage.parse(opts["coverage"]), timers=timers,
            sample_rate_hz=trace.sample_rate_hz, voltage_v=trace.supply_voltage_v,
            coarse_window_s=opts["coarse_window_s"], **overrides)
        det = segment_trace(trace, cfg)
        energies = [integrate_energy(trace, s) for s in det.segments]
        write_segments_csv(out / f"{prefix}segments.csv", det.segments, energies)
        summary = {
            "trace": str(trace_path),
            "sample_rate_hz": trace.sample_rate_hz,
            "sample_rate_source": "declared" if opts["rate"] else "inferred",
            "supply_voltage_v": trace.supply_voltage_v,
            "n_samples": len(trace),
            "duration_s": trace.duration_s,
            "detector": {
                "window_w": cfg.window_w,
                "coarse_median_window": cfg.coarse_median_window,
                "threshold_percentile": cfg.threshold_percentile,
                "min_phase_duration_ms": cfg.min_phase_duration_ms,
                "spike_max_duration_ms": cfg.spike_max_duration_ms,
                "edrx_tail_samples": cfg.edrx_tail_samples,
                **det.thresholds,
            },
            "n_connected": sum(1 for c in det.coarse if c.kind.value == "Connected"),
            "n_artifacts": len(det.artifacts),
            "energy": summarize_segments(trace, det.segments),
        }
        truth = _truth_for(trace_path, opts["truth"])
        if truth is not None:
            summary["metrics"] = match_segments(read_segments_csv(truth), det.segments, cfg.window_w)
            summary["metrics"]["truth"] = str(truth)
        del trace
    _dump_json(summary, out / f"{prefix}summary.json")
    return summary


def cmd_analyze(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = {
        "out": str(out), "single": len(args.traces) == 1, "profile": args.profile,
        "timers": args.timers, "coverage": args.coverage, "column_map": args.column_map,
        "rate": args.rate, "voltage": args.voltage, "window_w": args.window_w,
        "percentile": args.percentile, "min_phase_ms": args.min_phase_ms,
        "spike_max_ms": args.spike_max_ms, "coarse_window_s": args.coarse_window_s,
        "calibration_window": args.calibration_window, "truth": args.truth,
    }
    if args.truth and len(args.traces) > 1:
        raise ValueError("--truth applies to a single trace")
    failed = 0
    if len(args.traces) == 1 or args.jobs == 1:
        results = []
        for p in args.traces:
            try:
                results.append(analyze_file(p, opts))
            except (ValueError, KeyError, OSError) as e:
                print(f"error: {e}", file=sys.stderr)
                failed += 1
    else:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(args.traces))) as ex:
            futs = {p: ex.submit(analyze_file, p, opts) for p in args.traces}
            results = []
            for p, f in futs.items():
                try:
                    results.append(f.result())
                except (ValueError, KeyError, OSError) as e:
                    print(f"error: {e}", file=sys.stderr)
                    failed += 1
    for r in results:
        m = r.get("metrics")
        line = f"{r['trace']}: {r['n_samples']} samples, {r['energy']['phase_energy_J']:.6g} J in phases"
        if m:
            line += f", precision={m['precision']:.3f} recall={m['recall']:.3f}"
        print(line)
    return EXIT_DOMAIN if failed else EXIT_OK


# ---------------------------------------------------------------- lifetime

_LIFETIME_JSON_KEYS = {"e_con_J", "p_psm_uW", "t_ti_s", "e_edrx_J", "battery_J", "t_tau_s",
                       "t_connected_s", "battery_Wh"}


def cmd_lifetime(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.reproduce_table8:
        battery = _battery(args, ref.BATTERY_J)
        text = lifetime_grid_csv(battery)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    data: dict = {}
    if args.json:
        data = json.loads(Path(args.json).read_text())
        unknown = set(data) - _LIFETIME_JSON_KEYS
        if unknown:
            raise KeyError(f"unknown lifetime keys {sorted(unknown)}")
        if "battery_Wh" in data:
            data["battery_J"] = data.pop("battery_Wh") * 3600.0
    flags = {
        "e_con_J": args.e_con, "p_psm_uW": args.p_psm, "e_edrx_J": args.e_edrx,
        "t_connected_s": None if args.t_connected is None else us_to_s(parse_duration_us(args.t_connected)),
        "t_tau_s": None if args.t_tau is None else us_to_s(parse_duration_us(args.t_tau, "h")),
        "t_ti_s": None if args.interval is None else us_to_s(parse_duration_us(args.interval, "h")),
    }
    data.update({k: v for k, v in flags.items() if v is not None})
    if args.battery_wh is not None or args.battery_j is not None:
        data["battery_J"] = _battery(args, ref.BATTERY_J)
    if "t_tau_s" in data and "t_ti_s" not in data:
        data["t_ti_s"] = data["t_tau_s"]
    missing = [k for k in ("e_con_J", "p_psm_uW", "t_ti_s") if k not in data]
    if missing:
        flag = {"e_con_J": "--e-con", "p_psm_uW": "--p-psm", "t_ti_s": "--interval"}
        parser.error("missing required input(s): " + ", ".join(flag[k] for k in missing))
    inp = LifetimeInputs(**data)
    rep = lifetime_uplink_free(inp) if inp.t_tau_s is not None else lifetime(inp)
    _dump_json(rep.to_dict(), Path(args.out) if args.out else None)
    return EXIT_OK


def _battery(args: argparse.Namespace, default: float) -> float:
    if args.battery_wh is not None:
        return args.battery_wh * 3600.0
    if args.battery_j is not None:
        return args.battery_j
    return default


# ---------------------------------------------------------------- radio

def _radio_models(args: argparse.Namespace) -> tuple[NoiseModel, EclPolicy]:
    data: dict = {}
    if args.config:
        data = yaml.safe_load(resolve_path(args.config).read_text()) or {}
    noise = dict(data.get("noise", {}))
    policy = dict(data.get("ecl_policy", {}))
    if getattr(args, "bandwidth_hz", None) is not None:
        noise["bandwidth_hz"] = args.bandwidth_hz
    if getattr(args, "interference", None) is not None:
        noise["interference_cBm"] = parse_power_cbm(args.interference)
    if getattr(args, "thr1", None) is not None:
        policy["rsrp_threshold_ecl1_cBm"] = round(parse_power_cbm(args.thr1))
    if getattr(args, "thr2", None) is not None:
        policy["rsrp_threshold_ecl2_cBm"] = round(parse_power_cbm(args.thr2))
    if getattr(args, "max_per_ecl", None) is not None:
        policy["max_preamble_attempts_per_ecl"] = args.max_per_ecl
    return NoiseModel(**noise), EclPolicy(**policy)


def cmd_radio(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    nm, policy = _radio_models(args)
    if args.radio_cmd == "snr-map":
        rows = []
        for r in args.rsrp:
            rsrp = parse_power_cbm(r)
            if nm.interference_cBm is None:
                rows.append({"rsrp_cBm": rsrp, "snr_cB": snr_from_rsrp(round(rsrp), nm)})
            else:
                rows.append({"rsrp_cBm": rsrp, "sinr_cB": sinr_from_rsrp(rsrp, nm)})
        if args.json:
            _dump_json({"noise_floor_cBm": noise_floor_cBm(nm), "rows": rows}, None)
        else:
            for row in rows:
                k = "snr_cB" if "snr_cB" in row else "sinr_cB"
                print(f"{row['rsrp_cBm']:g} cBm -> {row[k]} cB")
        return EXIT_OK
    if args.radio_cmd == "ecl":
        if args.rsrp is None and args.rsrp_at_threshold is None:
            parser.error("radio ecl needs --rsrp or --rsrp-at-threshold")
        if args.rsrp_at_threshold is not None:
            rsrp = (policy.rsrp_threshold_ecl1_cBm if args.rsrp_at_threshold == "ecl1"
                    else policy.rsrp_threshold_ecl2_cBm)
        else:
            rsrp = parse_power_cbm(args.rsrp)
        ecl = select_ecl(rsrp, policy)
        doc = {"rsrp_cBm": rsrp, "ecl": int(ecl), "target_mcl_dB": ecl.target_mcl_db,
               "repetitions": repetitions_for_ecl(ecl, policy)}
        if args.json:
            _dump_json(doc, None)
        else:
            print(f"{rsrp:g} cBm -> ECL{int(ecl)} (MCL {ecl.target_mcl_db} dB, "
                  f"{doc['repetitions']} repetitions)")
        return EXIT_OK
    seq = rach_attempt_sequence(parse_power_cbm(args.rsrp), policy, args.attempts,
                                round(parse_power_cbm(args.p0)))
    rows = [{"attempt": i + 1, "ecl": int(e), "power_cBm": p.power_cBm} for i, (e, p) in enumerate(seq)]
    if args.json:
        _dump_json(rows, None)
    else:
        for r in rows:
            print(f"attempt {r['attempt']}: ECL{r['ecl']} {r['power_cBm']} cBm")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nbiot-energy",
        description="NB-IoT UE energy: trace synthesis, phase detection, lifetime and link budget.",
        epilog=f"Relative config paths are also looked up in ${CONFIG_DIR_ENV}.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", help="synthesize a labeled current trace from a scenario")
    s.add_argument("--scenario", required=True, help="scenario YAML")
    s.add_argument("--timers", help="timer YAML (standard timer names as keys); overrides the scenario")
    s.add_argument("--profile", help="built-in profile name or profile YAML")
    s.add_argument("--seed", type=int)
    s.add_argument("--noise", type=float, help="multiplicative noise std fraction")
    s.add_argument("--spike-rate", type=float, help="AT polling spikes per minute")
    s.add_argument("--rate", type=float, help="sample rate in Hz")
    s.add_argument("--with-voltage", action="store_true", help="add a voltage_v column")
    s.add_argument("--out", default=".", help="output directory")

    a = sub.add_parser("analyze", help="segment trace CSVs and report per-phase energy")
    a.add_argument("traces", nargs="+", help="trace CSV files")
    a.add_argument("--profile", default="bc95-telia",
                   help="profile that sets the window and phase thresholds")
    a.add_argument("--timers", help="timer YAML the device ran with")
    a.add_argument("--coverage", default="good", choices=["good", "bad"])
    a.add_argument("--column-map", help="canonical=source pairs, e.g. current_a='Main current (A)'")
    a.add_argument("--rate", type=float, help="declared sample rate (default: inferred)")
    a.add_argument("--voltage", type=float, help="supply voltage when the file has none")
    a.add_argument("--window-w", type=int, help="FSTS window in samples")
    a.add_argument("--percentile", type=float, help="threshold percentile in (0, 1)")
    a.add_argument("--min-phase-ms", type=float, help="shortest phase kept")
    a.add_argument("--spike-max-ms", type=float, help="longest run labeled Artifact")
    a.add_argument("--coarse-window-s", type=float, default=1.5,
                   help="moving-median window for the Connected/Idle split")
    a.add_argument("--calibration-window",
                   help="start:end sample indices; phase thresholds come from this slice")
    a.add_argument("--truth", help="ground-truth segments CSV (default: sidecar next to the trace)")
    a.add_argument("--jobs", type=int, default=1, help="worker processes for multiple files")
    a.add_argument("--out", default=".", help="output directory")

    lt = sub.add_parser("lifetime", help="battery lifetime for a fixed transmission interval")
    lt.add_argument("--e-con", type=float, help="Connected-state energy per event, J")
    lt.add_argument("--p-psm", type=float, help="PSM power, uW")
    lt.add_argument("--interval", help="transmission interval, e.g. 4h (bare number = hours)")
    lt.add_argument("--e-edrx", type=float, help="eDRX energy per interval, J")
    lt.add_argument("--t-tau", help="TAU period for an uplink-free device, e.g. 7d")
    lt.add_argument("--t-connected", help="connected time subtracted from PSM time")
    bat = lt.add_mutually_exclusive_group()
    bat.add_argument("--battery-wh", type=float)
    bat.add_argument("--battery-j", type=float)
    lt.add_argument("--json", help="inputs as JSON (LifetimeInputs field names)")
    lt.add_argument("--reproduce-table8", action="store_true",
                    help="CSV of the reference lifetime grid recomputed from the medians")
    lt.add_argument("--out", help="output file (default stdout)")

    r = sub.add_parser("radio", help="link-budget helpers")
    r.add_argument("--config", help="YAML with noise: and ecl_policy: sections")
    rs = r.add_subparsers(dest="radio_cmd", required=True)
    sm = rs.add_parser("snr-map", help="SNR (or SINR with interference) from RSRP")
    sm.add_argument("--rsrp", nargs="+", required=True, help="cBm, or with a dBm/cBm suffix")
    sm.add_argument("--bandwidth-hz", type=float)
    sm.add_argument("--interference", help="total interference over the carrier")
    sm.add_argument("--json", action="store_true")
    ec = rs.add_parser("ecl", help="coverage level for an RSRP")
    ec.add_argument("--rsrp")
    ec.add_argument("--rsrp-at-threshold", choices=["ecl1", "ecl2"],
                    help="evaluate exactly at a policy threshold")
    ec.add_argument("--thr1")
    ec.add_argument("--thr2")
    ec.add_argument("--json", action="store_true")
    ra = rs.add_parser("rach", help="preamble (ECL, TxPower) sequence")
    ra.add_argument("--attempts", type=int, required=True)
    ra.add_argument("--p0", default="230", help="initial TxPower, cBm")
    ra.add_argument("--rsrp", default="-700", help="initial RSRP, cBm")
    ra.add_argument("--max-per-ecl", type=int)
    ra.add_argument("--thr1")
    ra.add_argument("--thr2")
    ra.add_argument("--json", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.cmd == "simulate":
            return cmd_simulate(args)
        if args.cmd == "analyze":
            return cmd_analyze(args)
        if args.cmd == "lifetime":
            return cmd_lifetime(args, parser)
        return cmd_radio(args, parser)
    except (ValueError, KeyError, OSError, ZeroDivisionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
