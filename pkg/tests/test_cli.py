import csv
import hashlib
import io
import json
from pathlib import Path

import pytest

from nbiot_energy.cli import main

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def _md5(p: Path) -> str:
    return hashlib.md5(p.read_bytes()).hexdigest()


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_is_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        code, _, _ = _run(capsys, "simulate", "--scenario", SCENARIOS / "rai000-good.yaml",
                          "--seed", 3, "--noise", 0.05, "--out", tmp_path / d)
        assert code == 0
    for name in ("trace.csv", "truth.csv", "schedule.json"):
        assert _md5(tmp_path / "a" / name) == _md5(tmp_path / "b" / name)


def test_rai200_schedule_has_no_inactivity(tmp_path, capsys):
    code, _, _ = _run(capsys, "simulate", "--scenario", SCENARIOS / "rai200-good.yaml",
                      "--out", tmp_path)
    assert code == 0
    sched = json.loads((tmp_path / "schedule.json").read_text())
    kinds = {p["kind"] for p in sched["phases"]}
    assert "InactivityCdrx" not in kinds and "TxRx" in kinds


def test_analyze_round_trip_with_spikes(tmp_path, capsys):
    _run(capsys, "simulate", "--scenario", SCENARIOS / "rai000-good.yaml", "--spike-rate", 1,
         "--seed", 4, "--out", tmp_path)
    code, out, _ = _run(capsys, "analyze", tmp_path / "trace.csv", "--out", tmp_path / "res")
    assert code == 0
    summary = json.loads((tmp_path / "res" / "summary.json").read_text())
    assert summary["metrics"]["precision"] == summary["metrics"]["recall"] == 1.0
    assert summary["n_artifacts"] == 10
    art = summary["energy"]["kinds"]["Artifact"]
    assert art["count"] == 10
    assert art["median_energy_J"] == pytest.approx(0.015, rel=0.01)
    assert summary["energy"]["phase_energy_J"] + summary["energy"]["artifact_energy_J"] == \
        pytest.approx(sum(r["energy_J"] for r in summary["energy"]["kinds"].values()))
    rows = list(csv.DictReader(open(tmp_path / "res" / "segments.csv")))
    assert sum(r["kind"] == "Artifact" for r in rows) == 10


def test_analyze_empty_file_fails(tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("")
    code, _, err = _run(capsys, "analyze", tmp_path / "empty.csv", "--out", tmp_path / "o")
    assert code != 0 and "empty" in err


def test_lifetime_flags_and_units(capsys):
    code, out, _ = _run(capsys, "lifetime", "--e-con", 0.12, "--p-psm", 10.61, "--interval", "4h")
    assert code == 0
    rep = json.loads(out)
    assert rep["lifetime_years"] == pytest.approx(30.110, abs=5e-4)
    _, wh, _ = _run(capsys, "lifetime", "--e-con", 0.12, "--p-psm", 10.61, "--interval", 4,
                    "--battery-wh", 5)
    _, j, _ = _run(capsys, "lifetime", "--e-con", 0.12, "--p-psm", 10.61, "--interval", 4,
                   "--battery-j", 18000)
    assert wh == j == out


def test_lifetime_json_input(tmp_path, capsys):
    p = tmp_path / "in.json"
    p.write_text(json.dumps({"e_con_J": 0.11, "p_psm_uW": 10.61, "t_ti_s": 3600, "t_tau_s": 604800}))
    code, out, _ = _run(capsys, "lifetime", "--json", p)
    assert code == 0
    assert json.loads(out)["lifetime_years"] == pytest.approx(52.853, abs=5e-4)


def test_lifetime_missing_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["lifetime", "--e-con", "0.12"])
    assert e.value.code == 2


def test_reproduce_lifetime_grid(capsys):
    code, out, _ = _run(capsys, "lifetime", "--reproduce-table8")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 8
    n = 0
    for r in rows:
        for h in ("1h", "4h", "24h"):
            if r[f"{h}_accepted"] == "1":
                assert abs(float(r[f"{h}_years"]) - float(r[f"{h}_published"])) <= 0.1
                n += 1
    assert n == 16


def test_radio_commands(capsys):
    code, out, _ = _run(capsys, "radio", "snr-map", "--rsrp", -1000)
    assert code == 0 and "252" in out
    code, out, _ = _run(capsys, "radio", "rach", "--attempts", 3, "--p0", 190)
    assert code == 0
    assert out.splitlines() == ["attempt 1: ECL0 190 cBm", "attempt 2: ECL0 210 cBm",
                                "attempt 3: ECL0 230 cBm"]
    code, out, _ = _run(capsys, "radio", "ecl", "--rsrp-at-threshold", "ecl1")
    assert code == 0 and "ECL0" in out


def test_invalid_timers_exit_1(tmp_path, capsys):
    t = tmp_path / "t.yaml"
    t.write_text("PTW: 41 s\neDRXcycle: 20.48 s\n")
    code, _, err = _run(capsys, "simulate", "--scenario", SCENARIOS / "rai000-good.yaml",
                        "--timers", t, "--out", tmp_path / "o")
    assert code == 1 and "ptw" in err.lower()
