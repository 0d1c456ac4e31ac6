"""Simulation scenarios shared by the transient and acceptance tests."""

from delaymargin.bldc import BL3056, LoopParams, OperatingPoint, calibrate_vdc
from delaymargin.ddesim import SimConfig
from delaymargin.tuning_rules import CALIBRATION_RULE, row

BASE_LOOP = LoopParams(Vdc=24.0, kf=1.0, tau_f=3.48e-3, tau_s=1e-3)


def calibrated_loop() -> LoopParams:
    ref = row(CALIBRATION_RULE)
    return BASE_LOOP.replace(Vdc=calibrate_vdc(BL3056, ref.pi(), BASE_LOOP, ref.tau_max_ms * 1e-3))


def speed(rpm: float) -> float:
    return OperatingPoint.from_rpm(rpm).omega_r


def delay_at(rpm: float) -> float:
    return OperatingPoint.from_rpm(rpm).tau_total(BASE_LOOP.tau_s)


# name -> (rule, rpm, SimConfig); every run starts at rest unless stated
SCENARIOS = {
    "ti_step_1000rpm": ("TI", 1000, SimConfig(dt=1e-5, t_end=20.0, target=speed(1000))),
    "chr_load_step_6000rpm": ("CHR-load", 6000, SimConfig(dt=1e-5, t_end=0.5, target=speed(6000))),
    "ise_load_step_6000rpm": ("ISE-load", 6000, SimConfig(dt=1e-5, t_end=1.0, target=speed(6000))),
    "zn_step_6000rpm": ("Z-N", 6000, SimConfig(dt=1e-5, t_end=0.5, target=speed(6000))),
    "chr_load_torque_6000rpm": (
        "CHR-load", 6000,
        SimConfig(dt=1e-5, t_end=0.5, input="load_step", target=5e-3, t0=0.05, initial_speed=speed(6000)),
    ),
}


def step_metrics(time, y, start, target):
    """Overshoot fraction and 10-90 % rise time of a step response."""
    u = (y - start) / (target - start)
    overshoot = max(0.0, float(u.max()) - 1.0)
    t10 = time[int((u >= 0.1).argmax())]
    t90 = time[int((u >= 0.9).argmax())]
    return overshoot, float(t90 - t10)


def is_oscillatory(y, target, tol=1e-6):
    """True when the error changes sign more than once."""
    e = y - target
    e = e[abs(e) > tol * abs(target)]
    signs = (e[1:] > 0) != (e[:-1] > 0)
    return int(signs.sum()) > 1


