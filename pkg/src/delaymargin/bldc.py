"""BLDC speed loop: parameters, delay bookkeeping and characteristic equations.

The motor is the averaged two-phase model (current and shaft speed); the
loop is PI controller -> PWM stage (static gain ``Vdc``) -> motor -> low-pass
speed filter, with every transport delay lumped into ``tau_total`` on the
feedback path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .margin import tau_max
from .polynomial import RealPolynomial
from .rtds import QuasiPolynomial

RPM_TO_RAD_S = 2.0 * math.pi / 60.0
KE_UNITS = ("V_per_rpm", "V_s_per_rad")

S = RealPolynomial([0.0, 1.0])
ONE = RealPolynomial([1.0])


def _lag(tc: float) -> RealPolynomial:
    """``tc*s + 1``"""
    return RealPolynomial([1.0, tc])


def ke_to_si(value: float, unit: str) -> float:
    if unit == "V_s_per_rad":
        return float(value)
    if unit == "V_per_rpm":
        return float(value) / RPM_TO_RAD_S
    raise ValueError(f"unknown back-EMF constant unit {unit!r}; expected one of {KE_UNITS}")


@dataclass(frozen=True)
class MotorParams:
    """Motor constants in SI units (``ke`` in V*s/rad)."""

    R: float
    L: float
    J: float
    ke: float
    kt: Optional[float] = None
    Bm: float = 0.0

    def __post_init__(self):
        for name in ("R", "L", "J", "ke"):
            if not getattr(self, name) > 0:
                raise ValueError(f"motor parameter {name} must be positive")
        if self.Bm < 0:
            raise ValueError("viscous friction Bm must be non-negative")
        if self.kt is None:
            object.__setattr__(self, "kt", self.ke)
        elif not self.kt > 0:
            raise ValueError("motor parameter kt must be positive")

    @classmethod
    def with_ke_unit(cls, *, R, L, J, ke, ke_unit, kt=None, Bm=0.0) -> MotorParams:
        return cls(R=R, L=L, J=J, ke=ke_to_si(ke, ke_unit), kt=kt, Bm=Bm)

    @property
    def tau_elec(self) -> float:
        return self.L / self.R

    @property
    def tau_mech(self) -> float:
        return self.R * self.J / self.ke ** 2


# Table I motor, J = 16 g*cm^2
BL3056 = MotorParams.with_ke_unit(R=2.3, L=0.56e-3, J=16.0e-7, ke=0.00234, ke_unit="V_per_rpm", kt=0.0223)


@dataclass(frozen=True)
class PiParams:
    kp: float
    ki: float

    def __post_init__(self):
        if not self.kp > 0 or not self.ki > 0:
            raise ValueError("PI gains kp and ki must be positive")

    @property
    def tau_iw(self) -> float:
        return self.kp / self.ki

    def scaled(self, factor: float) -> PiParams:
        return PiParams(self.kp * factor, self.ki * factor)


@dataclass(frozen=True)
class LoopParams:
    Vdc: float
    kf: float
    tau_f: float
    tau_s: float
    tau_pwm: Optional[float] = None

    def __post_init__(self):
        if not self.Vdc > 0:
            raise ValueError("Vdc must be positive")
        if not self.tau_f > 0:
            raise ValueError("tau_f must be positive")
        if not self.tau_s > 0:
            raise ValueError("tau_s must be positive")

    @property
    def omega_f(self) -> float:
        return 1.0 / self.tau_f

    def replace(self, **kw) -> LoopParams:
        d = dict(Vdc=self.Vdc, kf=self.kf, tau_f=self.tau_f, tau_s=self.tau_s, tau_pwm=self.tau_pwm)
        d.update(kw)
        return LoopParams(**d)


def hall_delay(omega_r: float) -> float:
    """Hall-sensor delay: one sixth of an electrical revolution at ``omega_r`` rad/s."""
    if not omega_r > 0:
        raise ValueError("rotational speed must be positive")
    return 2.0 * math.pi / (6.0 * omega_r)


def total_delay(tau_s: float, tau_h: float) -> float:
    # PI and LPF sampling delays plus the Hall delay, no rounding to whole samples
    if tau_s < 0 or tau_h < 0:
        raise ValueError("delays must be non-negative")
    return 2.0 * tau_s + tau_h


@dataclass(frozen=True)
class OperatingPoint:
    omega_r: float

    def __post_init__(self):
        if not self.omega_r > 0:
            raise ValueError("rotational speed must be positive")

    @classmethod
    def from_rpm(cls, rpm: float) -> OperatingPoint:
        return cls(rpm * RPM_TO_RAD_S)

    @property
    def rpm(self) -> float:
        return self.omega_r / RPM_TO_RAD_S

    @property
    def tau_h(self) -> float:
        return hall_delay(self.omega_r)

    def tau_total(self, tau_s: float) -> float:
        return total_delay(tau_s, self.tau_h)


@dataclass(frozen=True)
class LoopGains:
    k_s: float
    k_l: float
    k_m: float
    k_n: float

    @classmethod
    def from_params(cls, m: MotorParams, pi: PiParams, lp: LoopParams) -> LoopGains:
        return cls(
            k_s=pi.kp * lp.Vdc / m.ke,
            k_l=pi.kp * m.ke * lp.kf * lp.Vdc / m.R,
            k_m=pi.tau_iw * m.ke ** 2 / m.R,
            k_n=m.Bm * pi.tau_iw,
        )


def ce_load(m: MotorParams, pi: PiParams, lp: LoopParams) -> QuasiPolynomial:
    """Load-disturbance characteristic quasi-polynomial (delay = ``tau_total``)."""
    g = LoopGains.from_params(m, pi, lp)
    f = _lag(lp.tau_f)
    p0 = S * g.k_m * f + S * g.k_n * _lag(m.tau_elec) * _lag(m.tau_mech) * f
    p1 = g.k_l * _lag(pi.tau_iw)
    return QuasiPolynomial([p0, p1])


def motor_lag(m: MotorParams) -> RealPolynomial:
    """Denominator of the voltage-to-speed transfer function, unit DC gain."""
    return RealPolynomial([1.0, m.tau_mech, m.tau_mech * m.tau_elec])


def ce_setpoint(
    m: MotorParams,
    pi: PiParams,
    lp: LoopParams,
    tau_l: Optional[float] = None,
    lag: Optional[RealPolynomial] = None,
) -> QuasiPolynomial:
    """Set-point tracking characteristic quasi-polynomial.

    The motor enters through a lag factor: ``tau_l*s + 1`` with ``tau_l``
    defaulting to the mechanical time constant, or any polynomial passed as
    ``lag`` (for instance :func:`motor_lag`).
    """
    if lag is None:
        lag = _lag(m.tau_mech if tau_l is None else tau_l)
    g = LoopGains.from_params(m, pi, lp)
    p0 = pi.tau_iw * S * lag * _lag(lp.tau_f)
    p1 = g.k_s * _lag(pi.tau_iw)
    return QuasiPolynomial([p0, p1])


def ce_loop(m: MotorParams, pi: PiParams, lp: LoopParams) -> QuasiPolynomial:
    """Exact characteristic quasi-polynomial of the averaged loop.

    Keeps inductance, inertia, friction and a torque constant distinct from
    the back-EMF constant; this is the loop :mod:`delaymargin.ddesim` integrates.
    """
    motor = RealPolynomial([m.R, m.L]) * RealPolynomial([m.Bm, m.J]) + m.kt * m.ke
    p0 = pi.tau_iw * S * _lag(lp.tau_f) * motor
    p1 = pi.kp * lp.Vdc * lp.kf * m.kt * _lag(pi.tau_iw)
    return QuasiPolynomial([p0 * (1.0 / (m.kt * m.ke)), p1 * (1.0 / (m.kt * m.ke))])


@dataclass(frozen=True)
class TransferBlock:
    """``num/den * exp(-s * delay_multiplicity * tau_s)``"""

    num: RealPolynomial
    den: RealPolynomial
    delay_multiplicity: int = 0

    def __call__(self, s, tau_s: float = 0.0):
        return self.num(s) / self.den(s) * np.exp(-s * self.delay_multiplicity * tau_s)


def loop_transfer_blocks(
    m: MotorParams, pi: PiParams, lp: LoopParams, explicit_mech: bool = False
) -> dict[str, TransferBlock]:
    blocks = {
        "H_p": TransferBlock(pi.kp * _lag(pi.tau_iw), pi.tau_iw * S, 1),
        "H_PWM": (
            TransferBlock(RealPolynomial([lp.Vdc]), _lag(lp.tau_pwm))
            if lp.tau_pwm
            else TransferBlock(RealPolynomial([lp.Vdc]), ONE)
        ),
        "H_elec": TransferBlock(RealPolynomial([1.0 / m.R]), _lag(m.tau_elec)),
        "H_m": TransferBlock(RealPolynomial([1.0 / m.ke]), motor_lag(m)),
        "H_LPF": TransferBlock(RealPolynomial([lp.kf]), _lag(lp.tau_f), 1),
    }
    if explicit_mech:
        if m.Bm == 0:
            raise ValueError("H_mech needs Bm > 0 (1/Bm is singular); use H_m instead")
        blocks["H_mech"] = TransferBlock(RealPolynomial([1.0 / m.Bm]), _lag(m.J / m.Bm))
    return blocks


def setpoint_loop_qp(blocks: dict[str, TransferBlock]) -> QuasiPolynomial:
    """Closed-loop denominator ``den + num*exp(-s tau_total)`` of the set-point loop."""
    num = ONE
    den = ONE
    for name in ("H_p", "H_PWM", "H_m", "H_LPF"):
        num = num * blocks[name].num
        den = den * blocks[name].den
    return QuasiPolynomial([den, num])


def calibrate_vdc(
    m: MotorParams,
    pi: PiParams,
    lp: LoopParams,
    target_tau_max: float,
    bracket: tuple[float, float] = (0.1, 1.0e4),
) -> float:
    """Bus voltage for which the load-disturbance loop has the given delay margin."""

    def gap(log_v: float) -> float:
        qp = ce_load(m, pi, lp.replace(Vdc=math.exp(log_v)))
        return math.log(tau_max(qp).tau_max / target_tau_max)

    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    return math.exp(brentq(gap, lo, hi, xtol=1e-12, rtol=1e-12))
