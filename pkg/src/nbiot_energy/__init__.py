"""NB-IoT UE energy toolkit: phase scheduler, trace synthesis, phase detection, lifetime."""

from .core import (
    Coverage,
    CurrentTrace,
    EclLevel,
    PowerProfile,
    RaiFlag,
    Segment,
    SegmentKind,
    Source,
    TimerConfig,
    validate_timers,
)
from .energy import (
    EdrxEnergyInputs,
    LifetimeInputs,
    LifetimeReport,
    edrx_energy,
    integrate_energy,
    lifetime,
    lifetime_uplink_free,
    summarize_segments,
)
from .profiles import PROFILES, get_profile, load_profile
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
from .segment import (
    DetectorConfig,
    coarse_states,
    detect_phases,
    filter_artifacts,
    fsts,
    match_segments,
    moving_max_backward,
    moving_max_forward,
    segment_trace,
    threshold_from_percentile,
)
from .statemachine import IdleMode, Misconfig, PhaseSchedule, Scenario, build_schedule
from .tracesynth import SynthOptions, inject_edrx_listen_bug, synthesize
from .units import cb_to_db, cbm_to_dbm, db_to_cb, dbm_to_cbm

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
