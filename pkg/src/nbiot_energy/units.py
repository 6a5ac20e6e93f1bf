"""Unit hygiene: centi-decibel conversions and suffix parsing.

Modules report ratios in cB (1 dB = 10 cB) and absolute powers in cBm
(1 dBm = 10 cBm). Durations are carried as integer microseconds so that
timer bounds such as 2.56 s or 65.536 s compare exactly.
"""

from __future__ import annotations

import math
import re
from decimal import ROUND_HALF_UP, Decimal

__all__ = [
    "cb_to_db",
    "db_to_cb",
    "cbm_to_dbm",
    "dbm_to_cbm",
    "round_half_away",
    "parse_duration_us",
    "parse_power_cbm",
    "us_to_s",
    "s_to_us",
    "UnitError",
]

US_PER_S = 1_000_000


class UnitError(ValueError):
    """A value could not be interpreted in the expected unit."""


def _finite(x: float) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise UnitError(f"expected a number, got {x!r}")
    if not math.isfinite(x):
        raise UnitError(f"non-finite value {x!r}")
    return x


def cb_to_db(x: float) -> float:
    return _finite(x) / 10


def db_to_cb(x: float) -> float:
    return _finite(x) * 10


def cbm_to_dbm(x: float) -> float:
    return _finite(x) / 10


def dbm_to_cbm(x: float) -> float:
    return _finite(x) * 10


def round_half_away(x: float) -> int:
    """Round to the nearest integer, ties away from zero."""
    _finite(x)
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def us_to_s(us: int) -> float:
    return us / US_PER_S


def s_to_us(s: float) -> int:
    """Seconds to integer microseconds, exact for decimal inputs like 2.56."""
    _finite(s)
    return int(Decimal(repr(s)).scaleb(6).quantize(Decimal(1), rounding=ROUND_HALF_UP))


_DURATION_SCALE_US = {
    "us": 1,
    "µs": 1,
    "ms": 1_000,
    "s": US_PER_S,
    "sec": US_PER_S,
    "min": 60 * US_PER_S,
    "h": 3_600 * US_PER_S,
    "d": 86_400 * US_PER_S,
}

_NUM_UNIT = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zµ]*)\s*$")


def parse_duration_us(value: str | float | int, default_unit: str = "s") -> int:
    """Parse ``"2.56 s"``, ``"200ms"``, ``"410 h"`` or a bare number.

    Bare numbers are read in ``default_unit``. Returns integer microseconds.
    """
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        number, unit = Decimal(repr(value)), default_unit
    elif isinstance(value, str):
        m = _NUM_UNIT.match(value)
        if not m:
            raise UnitError(f"cannot parse duration {value!r}")
        number, unit = Decimal(m.group(1)), (m.group(2) or default_unit)
    else:
        raise UnitError(f"cannot parse duration {value!r}")
    if unit not in _DURATION_SCALE_US:
        raise UnitError(f"unknown duration unit {unit!r} in {value!r}")
    us = (number * _DURATION_SCALE_US[unit]).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    if us < 0:
        raise UnitError(f"negative duration {value!r}")
    return int(us)


def parse_power_cbm(value: str | float | int) -> float:
    """Parse an absolute power: ``"-100 dBm"``, ``"-1000 cBm"`` or bare cBm."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(_finite(value))
    if not isinstance(value, str):
        raise UnitError(f"cannot parse power {value!r}")
    m = _NUM_UNIT.match(value)
    if not m:
        raise UnitError(f"cannot parse power {value!r}")
    number, unit = float(m.group(1)), m.group(2).lower()
    if unit in ("", "cbm"):
        return number
    if unit == "dbm":
        return dbm_to_cbm(number)
    raise UnitError(f"unknown power unit {m.group(2)!r} in {value!r}")
