import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbiot_energy.core import (
    TIMER_BOUNDS_US,
    Coverage,
    CurrentTrace,
    EclLevel,
    PowerProfile,
    RaiFlag,
    Segment,
    SegmentKind,
    TimerConfig,
    check_labeling,
    merge_adjacent,
    validate_timers,
)
from nbiot_energy.units import (
    UnitError,
    cb_to_db,
    cbm_to_dbm,
    db_to_cb,
    dbm_to_cbm,
    parse_duration_us,
    parse_power_cbm,
    round_half_away,
    s_to_us,
)

H = 3_600_000_000


# ---------------------------------------------------------------- units

@pytest.mark.parametrize("cbm, dbm", [(230, 23.0), (0, 0.0), (-1252, -125.2)])
def test_cbm_dbm_oracles(cbm, dbm):
    assert cbm_to_dbm(cbm) == dbm
    assert dbm_to_cbm(dbm) == pytest.approx(cbm, abs=1e-9)


def test_cb_db_roundtrip_integer():
    for x in range(-3000, 3001, 7):
        assert db_to_cb(cb_to_db(x)) == pytest.approx(x, abs=1e-9)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan, "3", None])
def test_conversions_reject_non_finite(bad):
    with pytest.raises(UnitError):
        cb_to_db(bad)
    with pytest.raises(UnitError):
        dbm_to_cbm(bad)


@pytest.mark.parametrize("x, r", [(0.5, 1), (-0.5, -1), (1.49, 1), (-2.5, -3), (2.5, 3), (0.0, 0)])
def test_round_half_away(x, r):
    assert round_half_away(x) == r


@pytest.mark.parametrize("text, us", [
    ("2.56 s", 2_560_000), ("200ms", 200_000), ("410 h", 410 * H), ("65.536", 65_536_000),
    ("10485.76 s", 10_485_760_000), ("1 min", 60_000_000), ("7d", 7 * 24 * H), ("15 us", 15),
])
def test_parse_duration(text, us):
    assert parse_duration_us(text) == us


def test_parse_duration_default_unit_and_errors():
    assert parse_duration_us(200, "ms") == 200_000
    for bad in ("fast", "3 fortnights", "-1 s"):
        with pytest.raises(UnitError):
            parse_duration_us(bad)


def test_parse_power():
    assert parse_power_cbm("-100 dBm") == -1000
    assert parse_power_cbm("-1000 cBm") == -1000
    assert parse_power_cbm("-1000") == -1000
    with pytest.raises(UnitError):
        parse_power_cbm("3 W")


def test_s_to_us_exact_for_decimal_bounds():
    assert s_to_us(2.56) == 2_560_000
    assert s_to_us(10485.76) == 10_485_760_000


# ---------------------------------------------------------------- enums

def test_ecl_target_mcl():
    assert [l.target_mcl_db for l in EclLevel] == [144, 154, 164]


@pytest.mark.parametrize("text, flag", [
    ("0x000", RaiFlag.None000), ("RAI-200", RaiFlag.Release200), (0x400, RaiFlag.ReleaseAfterReply400),
    (400, RaiFlag.ReleaseAfterReply400), ("Release200", RaiFlag.Release200), (0, RaiFlag.None000),
])
def test_rai_parse(text, flag):
    assert RaiFlag.parse(text) is flag


# ---------------------------------------------------------------- timers

def _max_timers():
    return TimerConfig(on_duration_timer_us=200_000, drx_cycle_us=2_560_000, ptw_us=40_960_000,
                       edrx_cycle_us=10_485_760_000, t3324_us=410 * H, t3412_us=410 * H,
                       inactivity_timer_us=65_536_000)


def test_all_maximum_timers_accepted():
    assert validate_timers(_max_timers()).ok


def test_zero_inactivity_timer_accepted():
    assert validate_timers(TimerConfig(inactivity_timer_us=0)).ok


def test_ptw_violations_listed():
    res = validate_timers(TimerConfig(ptw_us=41_000_000, edrx_cycle_us=20_480_000))
    assert not res.ok
    fields = [v.field for v in res.violations]
    assert fields.count("ptw_us") == 2
    assert any("edrx_cycle" in v.bound for v in res.violations)


def test_timer_mapping_uses_standard_names():
    t = TimerConfig.from_mapping({"OnDurationTimer": 10, "DRXcycle": "2.56 s", "PTW": "5.12 s",
                                  "Inactivity timer": 0})
    assert t.on_duration_timer_us == 10_000
    assert t.drx_cycle_us == 2_560_000
    assert t.ptw_us == 5_120_000
    assert t.inactivity_timer_us == 0
    back = TimerConfig.from_mapping(t.to_mapping())
    assert back == t
    with pytest.raises(KeyError):
        TimerConfig.from_mapping({"T3325": 1})


_timer_values = {
    name: st.integers(min_value=max(0, lo - 2_000_000), max_value=hi + 2_000_000)
    for name, (lo, hi) in TIMER_BOUNDS_US.items()
}


@settings(max_examples=300, deadline=None)
@given(st.fixed_dictionaries(_timer_values))
def test_validation_iff_bounds_hold(vals):
    cfg = TimerConfig(**vals)
    ok = all(lo <= vals[k] <= hi for k, (lo, hi) in TIMER_BOUNDS_US.items())
    ok = ok and vals["ptw_us"] <= vals["edrx_cycle_us"]
    ok = ok and vals["on_duration_timer_us"] <= vals["drx_cycle_us"]
    ok = ok and vals["t3324_us"] <= vals["t3412_us"]
    assert validate_timers(cfg).ok == ok


# ---------------------------------------------------------------- traces and segments

def test_current_trace_validation():
    with pytest.raises(ValueError):
        CurrentTrace(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        CurrentTrace(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        CurrentTrace(np.ones(3), sample_rate_hz=0)
    t = CurrentTrace(np.ones(8000))
    assert t.duration_s == 2.0
    assert not t.samples_a.flags.writeable


def test_current_trace_copies_input():
    x = np.ones(4)
    t = CurrentTrace(x)
    x[0] = 5
    assert t.samples_a[0] == 1


def test_segment_bounds():
    with pytest.raises(ValueError):
        Segment(3, 3, SegmentKind.Sync)
    with pytest.raises(ValueError):
        Segment(-1, 3, SegmentKind.Sync)


def test_check_labeling():
    segs = [Segment(0, 5, SegmentKind.Sync), Segment(5, 9, SegmentKind.TxRx)]
    check_labeling(segs, 9)
    with pytest.raises(ValueError):
        check_labeling(segs, 8)
    with pytest.raises(ValueError):
        check_labeling(segs[::-1])


kinds = st.sampled_from([SegmentKind.Sync, SegmentKind.TxRx, SegmentKind.PsmDeep])


@given(st.lists(st.tuples(st.integers(1, 50), kinds), min_size=1, max_size=40))
def test_merge_adjacent_preserves_coverage(parts):
    segs, at = [], 0
    for ln, k in parts:
        segs.append(Segment(at, at + ln, k))
        at += ln
    merged = merge_adjacent(segs)
    assert sum(s.length for s in merged) == at
    assert all(a.kind != b.kind for a, b in zip(merged, merged[1:]))
    check_labeling(merged, at)


# ---------------------------------------------------------------- power profile

def _profile(**kw):
    base = dict(module_name="m", psm_power_uW=10, edrx_sleep_power_uW=10, edrx_listen_energy_mJ=6,
                edrx_listen_duration_ms=200, sync_current_mA=5, txrx_current_mA=80,
                paging_current_mA=40, cdrx_sleep_current_mA=6, release_current_mA=2)
    base.update(kw)
    return PowerProfile(**base)


def test_profile_invariants():
    _profile()
    with pytest.raises(ValueError):
        _profile(cdrx_sleep_current_mA=6.01)
    with pytest.raises(ValueError):
        _profile(psm_power_uW=0)
    with pytest.raises(ValueError):
        _profile(ecl_multipliers=(1.0, 2.0, 1.5))
    with pytest.raises(ValueError):
        _profile(ecl_multipliers=(0.9, 1.0, 1.5))


def test_profile_coverage_dependent_listen():
    p = _profile(edrx_listen_energy_bad_mJ=20, edrx_listen_duration_bad_ms=400)
    assert p.listen_energy_mJ(Coverage.Bad) == 20
    assert p.listen_duration_ms(Coverage.Good) == 200
    assert p.listen_current_a(Coverage.Good, 3.0) == pytest.approx(6 / 200 / 3)


def test_profile_dict_roundtrip():
    p = _profile(operator="op")
    assert PowerProfile.from_dict(p.to_dict()) == p
    with pytest.raises(KeyError):
        PowerProfile.from_dict({**p.to_dict(), "bogus": 1})
