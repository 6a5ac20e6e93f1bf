"""Reference medians, used as calibration targets and for reproducing the
lifetime grid.

Modules are the Quectel BC95 and the u-blox SARA-N211; operators are Telenor
and Telia.
"""

from __future__ import annotations

BC95 = "BC95"
SARA = "SARA-N211"
TELENOR = "Telenor"
TELIA = "Telia"

MODULES = (BC95, SARA)
OPERATORS = (TELENOR, TELIA)

# Connected-state energy with default timers (no RAI), good coverage, all packet sizes. [J]
CONNECTED_DEFAULT_GOOD_J = {
    (BC95, TELENOR): 2.39,
    (BC95, TELIA): 0.82,
    (SARA, TELENOR): 4.17,
    (SARA, TELIA): 1.27,
}

# Same, poor coverage, split by ECL 0/1/2. [J]
CONNECTED_DEFAULT_BAD_J = {
    (BC95, TELENOR): (2.71, 2.80, 4.04),
    (BC95, TELIA): (0.88, 1.03, 3.44),
    (SARA, TELENOR): (4.15, 4.10, 5.50),
    (SARA, TELIA): (1.28, 1.40, 3.77),
}

# 20-byte packet with RAI, good coverage: (RAI-200, RAI-400). [J]
CONNECTED_RAI_GOOD_20B_J = {
    (BC95, TELENOR): (0.12, 0.17),
    (BC95, TELIA): (0.11, 0.12),
    (SARA, TELENOR): (0.27, 0.31),
    (SARA, TELIA): (0.31, 0.33),
}

# Median deep-sleep power. [µW]
PSM_POWER_UW = {BC95: 10.61, SARA: 9.35}
EDRX_SLEEP_POWER_UW = {BC95: 10.36, SARA: 10.01}

# eDRX listening window: (energy mJ, duration ms) keyed by (coverage, module, operator).
EDRX_LISTEN = {
    ("bad", BC95, TELENOR): (21.4, 470.2),
    ("bad", BC95, TELIA): (24.6, 476.7),
    ("bad", SARA, TELENOR): (33.7, 536.5),
    ("bad", SARA, TELIA): (39.1, 552.2),
    ("good", BC95, TELENOR): (6.4, 215.0),
    ("good", BC95, TELIA): (6.3, 215.2),
    ("good", SARA, TELENOR): (10.3, 224.5),
    ("good", SARA, TELIA): (10.1, 222.8),
}
# Values seen while the listen-overrun firmware bug was still frequent.
EDRX_LISTEN_BUGGY = {("good", SARA, TELENOR): (20.0, 300.0)}

# Median Connected-state duration, good coverage, BC95 on Telenor. [s]
CONNECTED_DURATION_S = {
    ("rai200", 20): 3.13,
    ("rai400", 20): 3.23,
    ("rai200", 512): 3.12,
    ("rai400", 512): 4.06,
}

# AT metadata query cost. [mJ]
AT_QUERY_ENERGY_MJ = 15.0

# 5 Wh battery.
BATTERY_J = 18000.0

LIFETIME_INTERVALS_H = (1, 4, 24)

# Reference lifetime grid, years: {(module, operator): {config: (1h, 4h, 24h)}}
LIFETIME_GRID_PUBLISHED = {
    (BC95, TELENOR): {"default": (0.8, 3.2, 9.9), "rai400": (6.1, 25.5, 45.4)},
    (BC95, TELIA): {"default": (2.4, 8.5, 13.0), "rai400": (6.4, 30.1, 47.6)},
    (SARA, TELENOR): {"default": (0.5, 1.9, 6.0), "rai400": (6.0, 18.5, 44.1)},
    (SARA, TELIA): {"default": (1.6, 5.9, 5.7), "rai400": (5.9, 17.7, 43.3)},
}

# Cells that the lifetime formula does not reproduce from the tabulated medians.
# Default-timer 24 h column, and the 1 h RAI-400 column.
LIFETIME_GRID_INCONSISTENT = frozenset(
    {(m, o, "default", 24) for m in MODULES for o in OPERATORS}
    | {(m, o, "rai400", 1) for m in MODULES for o in OPERATORS}
)
