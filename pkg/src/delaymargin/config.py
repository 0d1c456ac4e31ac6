"""YAML input files for the command-line front end.

An analysis file looks like::

    motor:
      R: 2.3
      L: 0.56e-3
      J: 16.0e-7
      ke: 0.00234
      ke_unit: V_per_rpm      # or V_s_per_rad
      kt: 0.0223              # optional, defaults to ke
      Bm: 0.0
    pi:
      kp: 1.024e-3
      ki: 65.43e-3
    loop:
      Vdc: 24.0
      kf: 1.0
      tau_f: 3.48e-3          # or omega_f, never both
      tau_s: 1.0e-3
    operating:
      omega_r_rpm: 6000
    options:
      ladder_depth: 4
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .bldc import KE_UNITS, LoopParams, MotorParams, OperatingPoint, PiParams
from .ddesim import SimConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MotorSection(_Strict):
    R: float = Field(gt=0)
    L: float = Field(gt=0)
    J: float = Field(gt=0)
    ke: float = Field(gt=0)
    ke_unit: Literal[KE_UNITS]  # type: ignore[valid-type]
    kt: Optional[float] = Field(default=None, gt=0)
    Bm: float = Field(default=0.0, ge=0)

    def build(self) -> MotorParams:
        return MotorParams.with_ke_unit(R=self.R, L=self.L, J=self.J, ke=self.ke,
                                        ke_unit=self.ke_unit, kt=self.kt, Bm=self.Bm)


class PiSection(_Strict):
    kp: float = Field(gt=0)
    ki: float = Field(gt=0)

    def build(self) -> PiParams:
        return PiParams(self.kp, self.ki)


class LoopSection(_Strict):
    Vdc: float = Field(gt=0)
    kf: float = Field(gt=0)
    tau_f: Optional[float] = Field(default=None, gt=0)
    omega_f: Optional[float] = Field(default=None, gt=0)
    tau_s: float = Field(gt=0)
    tau_pwm: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _one_filter_constant(self):
        if (self.tau_f is None) == (self.omega_f is None):
            raise ValueError("give exactly one of tau_f / omega_f")
        return self

    def build(self) -> LoopParams:
        tau_f = self.tau_f if self.tau_f is not None else 1.0 / self.omega_f
        return LoopParams(Vdc=self.Vdc, kf=self.kf, tau_f=tau_f, tau_s=self.tau_s, tau_pwm=self.tau_pwm)


class OperatingSection(_Strict):
    omega_r_rpm: float = Field(gt=0)

    def build(self) -> OperatingPoint:
        return OperatingPoint.from_rpm(self.omega_r_rpm)


class OptionsSection(_Strict):
    ladder_depth: int = Field(default=4, ge=1)
    tau_l: Optional[float] = Field(default=None, gt=0)
    oracle_rel_tol: float = Field(default=0.01, gt=0, lt=0.5)
    validate_tolerance: float = Field(default=0.15, gt=0)


class AnalysisConfig(_Strict):
    motor: MotorSection
    pi: Optional[PiSection] = None
    loop: LoopSection
    operating: Optional[OperatingSection] = None
    options: OptionsSection = OptionsSection()

    def motor_params(self) -> MotorParams:
        return self.motor.build()

    def loop_params(self) -> LoopParams:
        return self.loop.build()

    def pi_params(self) -> PiParams:
        if self.pi is None:
            raise ConfigError("pi: section required for this command")
        return self.pi.build()

    def operating_point(self) -> OperatingPoint:
        if self.operating is None:
            raise ConfigError("operating: section required for this command")
        return self.operating.build()


class KpGrid(_Strict):
    min: float = Field(gt=0)
    max: float = Field(gt=0)
    points: int = Field(ge=1)
    scale: Literal["log", "linear"] = "log"

    @model_validator(mode="after")
    def _ordered(self):
        if self.points > 1 and not self.min < self.max:
            raise ValueError("kp_grid needs min < max")
        return self

    def values(self) -> list[float]:
        if self.points == 1:
            return [self.min]
        if self.scale == "log":
            a, b = math.log10(self.min), math.log10(self.max)
            return [10 ** (a + (b - a) * i / (self.points - 1)) for i in range(self.points)]
        return [self.min + (self.max - self.min) * i / (self.points - 1) for i in range(self.points)]


class SweepSpec(_Strict):
    kp_grid: KpGrid
    tau_iw_multipliers: list[float] = Field(min_length=1)
    omega_f_values: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _positive(self):
        if any(v <= 0 for v in self.tau_iw_multipliers + self.omega_f_values):
            raise ValueError("tau_iw_multipliers and omega_f_values must be positive")
        return self


class SimSpec(_Strict):
    dt: float = Field(gt=0)
    t_end: float = Field(gt=0)
    input: Literal["setpoint_step", "load_step"] = "setpoint_step"
    target: Optional[float] = None
    target_rpm: Optional[float] = None
    t0: float = Field(default=0.0, ge=0)
    initial_speed: float = 0.0
    tau_total: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _one_target(self):
        if (self.target is None) == (self.target_rpm is None):
            raise ValueError("give exactly one of target / target_rpm")
        if self.target_rpm is not None and self.input != "setpoint_step":
            raise ValueError("target_rpm only applies to setpoint_step")
        return self

    def build(self) -> SimConfig:
        target = self.target if self.target is not None else OperatingPoint.from_rpm(self.target_rpm).omega_r
        return SimConfig(dt=self.dt, t_end=self.t_end, input=self.input, target=target,
                         t0=self.t0, initial_speed=self.initial_speed)


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def _load(model, path: Union[str, Path]):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {_format_errors(exc)}") from exc


def load_analysis(path) -> AnalysisConfig:
    return _load(AnalysisConfig, path)


def load_sweep(path) -> SweepSpec:
    return _load(SweepSpec, path)


def load_sim(path) -> SimSpec:
    return _load(SimSpec, path)
