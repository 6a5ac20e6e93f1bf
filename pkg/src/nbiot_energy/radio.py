"""Link-budget helpers: noise floor, SNR/SINR from RSRP, ECL choice and the RACH ramp.

Everything is in integer centi-units (cB, cBm). Intermediate maths runs in
floating point and is rounded half away from zero once at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import EclLevel
from .units import round_half_away

__all__ = [
    "NoiseModel",
    "EclPolicy",
    "TxPowerState",
    "NB_SUBCARRIERS",
    "TX_POWER_MIN_CBM",
    "TX_POWER_MAX_CBM",
    "TX_POWER_STEP_CBM",
    "MAX_REPETITIONS",
    "noise_floor_cBm",
    "snr_from_rsrp",
    "sinr_from_rsrp",
    "select_ecl",
    "rach_attempt_sequence",
    "repetitions_for_ecl",
]

NB_SUBCARRIERS = 12
TX_POWER_MIN_CBM = -290
TX_POWER_MAX_CBM = 230
TX_POWER_STEP_CBM = 20
MAX_REPETITIONS = 2048


@dataclass(frozen=True)
class NoiseModel:
    thermal_density_cBm_per_Hz: float = -1740.0
    receiver_nf_cB: float = 70.0
    bandwidth_hz: float = 15_000.0
    interference_cBm: float | None = None

    def __post_init__(self):
        if not (self.bandwidth_hz > 0 and math.isfinite(self.bandwidth_hz)):
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth_hz}")
        for v in (self.thermal_density_cBm_per_Hz, self.receiver_nf_cB):
            if not math.isfinite(v):
                raise ValueError("noise model constants must be finite")
        if self.interference_cBm is not None and not math.isfinite(self.interference_cBm):
            raise ValueError("interference must be finite")


def _noise_cBm(nm: NoiseModel, bandwidth_hz: float) -> float:
    return nm.thermal_density_cBm_per_Hz + 100.0 * math.log10(bandwidth_hz) + nm.receiver_nf_cB


def _lin(cbm: float) -> float:
    return 10.0 ** (cbm / 100.0)


def noise_floor_cBm(nm: NoiseModel = NoiseModel()) -> int:
    """Thermal noise plus receiver noise figure over the model bandwidth."""
    return round_half_away(_noise_cBm(nm, nm.bandwidth_hz))


def snr_from_rsrp(rsrp_cBm: int, nm: NoiseModel = NoiseModel()) -> int:
    """Per-subcarrier SNR in cB, assuming no interference."""
    if nm.interference_cBm is not None:
        raise ValueError("interference is set; use sinr_from_rsrp")
    return round_half_away(rsrp_cBm) - noise_floor_cBm(nm)


def sinr_from_rsrp(rsrp_cBm: float, nm: NoiseModel = NoiseModel()) -> int:
    """SINR over the 12-subcarrier carrier: 12*RSRP / (I_tot + N_tot), in cB.

    ``interference_cBm`` is the total interference over the carrier.
    """
    if not math.isfinite(rsrp_cBm):
        raise ValueError("rsrp must be finite")
    signal = NB_SUBCARRIERS * _lin(rsrp_cBm)
    noise = _lin(_noise_cBm(nm, NB_SUBCARRIERS * nm.bandwidth_hz))
    interf = 0.0 if nm.interference_cBm is None else _lin(nm.interference_cBm)
    return round_half_away(100.0 * math.log10(signal / (interf + noise)))


@dataclass(frozen=True)
class EclPolicy:
    """Coverage-class policy.

    The default thresholds are estimates read off operator RSRP/ECL
    distributions; operators do not publish them. Repetition counts for
    ECL1/ECL2 are free choices, not measured values.
    """

    rsrp_threshold_ecl1_cBm: int = -1000
    rsrp_threshold_ecl2_cBm: int = -1150
    max_preamble_attempts_per_ecl: int = 5
    repetitions_ecl0: int = 1
    repetitions_ecl1: int = 8
    max_repetitions: int = 128

    def __post_init__(self):
        if not self.rsrp_threshold_ecl2_cBm < self.rsrp_threshold_ecl1_cBm:
            raise ValueError("ECL2 threshold must be below the ECL1 threshold")
        if self.max_preamble_attempts_per_ecl < 1:
            raise ValueError("max_preamble_attempts_per_ecl must be >= 1")
        reps = (self.repetitions_ecl0, self.repetitions_ecl1, self.max_repetitions)
        if reps[0] < 1 or any(b < a for a, b in zip(reps, reps[1:])):
            raise ValueError(f"repetitions must be >= 1 and non-decreasing, got {reps}")
        if self.max_repetitions > MAX_REPETITIONS:
            raise ValueError(f"max_repetitions capped at {MAX_REPETITIONS}")


@dataclass(frozen=True)
class TxPowerState:
    power_cBm: int

    def __post_init__(self):
        p = self.power_cBm
        if not (TX_POWER_MIN_CBM <= p <= TX_POWER_MAX_CBM) or p % 10:
            raise ValueError(f"tx power {p} cBm outside [{TX_POWER_MIN_CBM}, "
                             f"{TX_POWER_MAX_CBM}] or off the 10 cBm grid")


def select_ecl(rsrp_cBm: float, policy: EclPolicy = EclPolicy()) -> EclLevel:
    """ECL from RSRP; a value exactly on a threshold takes the better level."""
    if rsrp_cBm >= policy.rsrp_threshold_ecl1_cBm:
        return EclLevel.ECL0
    if rsrp_cBm >= policy.rsrp_threshold_ecl2_cBm:
        return EclLevel.ECL1
    return EclLevel.ECL2


def rach_attempt_sequence(initial_rsrp_cBm: float, policy: EclPolicy,
                          attempts_until_success: int,
                          p0_cBm: int = TX_POWER_MAX_CBM) -> list[tuple[EclLevel, TxPowerState]]:
    """(ECL, TxPower) used on each preamble attempt, last one succeeding.

    Power starts at ``p0_cBm`` and climbs 20 cBm per failure up to the
    maximum. After ``max_preamble_attempts_per_ecl`` failures in one class
    the UE moves up a class (staying at ECL2 once there) at maximum power.
    """
    if attempts_until_success < 1:
        raise ValueError("attempts_until_success must be >= 1")
    TxPowerState(p0_cBm)
    ecl = select_ecl(initial_rsrp_cBm, policy)
    power = p0_cBm
    out = []
    in_class = 0
    for _ in range(attempts_until_success):
        if in_class == policy.max_preamble_attempts_per_ecl:
            ecl = EclLevel(min(ecl + 1, EclLevel.ECL2))
            power = TX_POWER_MAX_CBM
            in_class = 0
        elif in_class:
            power = min(power + TX_POWER_STEP_CBM, TX_POWER_MAX_CBM)
        out.append((ecl, TxPowerState(power)))
        in_class += 1
    return out


def repetitions_for_ecl(level: EclLevel, policy: EclPolicy = EclPolicy()) -> int:
    return (policy.repetitions_ecl0, policy.repetitions_ecl1, policy.max_repetitions)[EclLevel(level)]
