from __future__ import annotations

import sys
from typing import NamedTuple

import pytest

from nbiot_energy.core import Coverage, EclLevel, RaiFlag, TimerConfig
from nbiot_energy.profiles import get_profile
from nbiot_energy.statemachine import Scenario, build_schedule

# 10-minute traces, uplink every 2 minutes, eDRX for the first minute of idle
TEMPLATE_TIMERS = TimerConfig(t3324_us=60_000_000)
TEMPLATE_INTERVAL_US = 120_000_000
TEMPLATE_HORIZON_US = 600_000_000


class Template(NamedTuple):
    name: str
    scenario: Scenario


def template_scenarios() -> list[Template]:
    out = []
    for cov, ecl in ((Coverage.Good, EclLevel.ECL0), (Coverage.Bad, EclLevel.ECL2)):
        for rai in RaiFlag:
            sc = Scenario(TEMPLATE_INTERVAL_US, TEMPLATE_HORIZON_US, rai=rai, coverage=cov, ecl=ecl)
            out.append(Template(f"rai{rai.value:03x}-{cov.value}", sc))
    return out


@pytest.fixture
def bc95_telia():
    return get_profile("bc95-telia")


@pytest.fixture
def template_schedule(bc95_telia):
    def make(rai=RaiFlag.None000, coverage=Coverage.Good, ecl=EclLevel.ECL0,
             horizon_us=TEMPLATE_HORIZON_US, profile=None, **kw):
        sc = Scenario(TEMPLATE_INTERVAL_US, horizon_us, rai=rai, coverage=coverage, ecl=ecl, **kw)
        return build_schedule(sc, TEMPLATE_TIMERS, profile or bc95_telia)
    return make


@pytest.fixture
def report(capsys):
    """Print a line past pytest's capture so it shows up in the run log."""
    def emit(line: str) -> None:
        with capsys.disabled():
            sys.stdout.write("\n" + line + "\n")
            sys.stdout.flush()
    return emit
