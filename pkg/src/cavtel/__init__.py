"""Trajectory simulator for cavity-decay teleportation with retry insurance."""

from .params import PROFILES, PhysicalParams, desk_params, reference_params
from .protocol import (
    ABORT_SPONTANEOUS,
    ABORT_STRAY_CLICK,
    EXHAUSTED,
    INVALID,
    SUCCESS_FINAL_CLICK,
    SUCCESS_FINAL_SILENT,
    SUCCESS_OUTCOMES,
    ProtocolRecord,
    make_backend,
    run_protocol,
)
from .pulses import PulseTimes, solve_pulse_times
from .spaces import Register, SiteShape, SparseOp

__version__ = "0.1.0"

__all__ = [
    "PROFILES",
    "PhysicalParams",
    "desk_params",
    "reference_params",
    "ProtocolRecord",
    "make_backend",
    "run_protocol",
    "PulseTimes",
    "solve_pulse_times",
    "Register",
    "SiteShape",
    "SparseOp",
    "SUCCESS_FINAL_CLICK",
    "SUCCESS_FINAL_SILENT",
    "SUCCESS_OUTCOMES",
    "ABORT_SPONTANEOUS",
    "ABORT_STRAY_CLICK",
    "INVALID",
    "EXHAUSTED",
    "__version__",
]
