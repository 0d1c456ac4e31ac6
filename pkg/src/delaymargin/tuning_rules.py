"""PI gain sets produced by classical tuning rules for the BL3056 loop.

Values are stored exactly as printed, in the printed scalings (kp in 1e-3,
ki in 1e-6).  The printed ``tau_iw`` column is in milliseconds while
``kp/ki`` of the printed gains gives the same digits in seconds, so the
integral gain has to be read per millisecond for the table to be
self-consistent.  :data:`KI_PER_MS` is that reading and the default;
:data:`KI_LITERAL` keeps the literal SI value.
"""
from __future__ import annotations

from dataclasses import dataclass

from .bldc import PiParams

KI_PER_MS = "per_ms"
KI_LITERAL = "literal"


@dataclass(frozen=True)
class TuningRow:
    rule: str
    objective: str  # "vendor", "load" or "setpoint"
    kp_e3: float
    ki_e6: float
    tau_iw_ms: float
    tau_max_ms: float

    def pi(self, ki_units: str = KI_PER_MS) -> PiParams:
        kp = self.kp_e3 * 1e-3
        ki = self.ki_e6 * 1e-6
        if ki_units == KI_PER_MS:
            ki *= 1e3
        elif ki_units != KI_LITERAL:
            raise ValueError(f"unknown ki interpretation {ki_units!r}")
        return PiParams(kp, ki)


TUNING_TABLE: tuple[TuningRow, ...] = (
    TuningRow("TI", "vendor", 0.122, 0.366, 333.0, 4274.0),
    TuningRow("CHR-load", "load", 1.024, 65.43, 15.65, 12.8),
    TuningRow("ISE-load", "load", 0.669, 20.10, 33.28, 18.9),
    TuningRow("ISTE-load", "load", 0.527, 26.87, 19.61, 16.7),
    TuningRow("Z-N", "setpoint", 1.536, 117.9, 13.03, 5.2),
    TuningRow("CHR-sp", "setpoint", 1.024, 142.5, 7.188, 8.3),
    TuningRow("ISE-sp", "setpoint", 1.566, 132.0, 11.87, 4.9),
    TuningRow("ISTE-sp", "setpoint", 1.158, 134.3, 8.624, 7.5),
    TuningRow("IAE-sp", "setpoint", 1.160, 135.9, 8.532, 7.4),
    TuningRow("ITAE-sp", "setpoint", 1.472, 135.9, 10.83, 5.3),
)

CALIBRATION_RULE = "CHR-load"


def row(rule: str) -> TuningRow:
    for r in TUNING_TABLE:
        if r.rule == rule:
            return r
    raise KeyError(rule)


@dataclass(frozen=True)
class OperatingCase:
    rule: str
    rpm: float
    tau_total_ms: float
    stable: bool
    phase_margin_deg: float


# stability-flag table under two shaft speeds
OPERATING_TABLE: tuple[OperatingCase, ...] = (
    OperatingCase("TI", 6000, 3.7, True, 82.7),
    OperatingCase("TI", 1000, 12.0, True, 82.1),
    OperatingCase("CHR-load", 6000, 3.7, True, 42.4),
    OperatingCase("CHR-load", 1000, 12.0, True, 9.87),
    OperatingCase("ISE-load", 6000, 3.7, True, 59.9),
    OperatingCase("ISE-load", 1000, 12.0, True, 46.6),
    OperatingCase("Z-N", 6000, 3.7, True, 24.8),
    OperatingCase("Z-N", 1000, 12.0, False, -35.2),
)
