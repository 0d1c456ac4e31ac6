"""Fixed-step simulation of linear delay differential equations.

Systems are brought to the form

    x'(t) = A0 x(t) + sum_k Ad[k] x(t - delays[k]) + c(t)

with ``c`` switching once from ``c_before`` to ``c_after`` at ``t_on``.  The
integrator is classical RK4; delayed states between grid points come from
cubic Hermite interpolation on a ring buffer of past states and slopes.  The
history before ``t = 0`` is the initial state held constant.

The module also provides a brute-force stability oracle: bisection on the
delay, with each verdict taken from the exponential growth rate of the
response envelope.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, TextIO, Union

import numpy as np
from numba import njit
from scipy.signal import find_peaks

from .bldc import LoopParams, MotorParams, PiParams
from .rtds import DelaySystem, QuasiPolynomial

TRACE_HEADER = ("time_s", "speed_rad_s", "current_a", "control_v")
DIVERGENCE_LIMIT = 1e150
GROWTH_THRESHOLD = 1e-4  # 1/s
RESOLUTION_FACTOR = 20


class SimulationDiverged(RuntimeError):
    def __init__(self, t: float):
        super().__init__(f"simulation diverged at t={t:.6g}")
        self.t = t


class BracketInvalid(ValueError):
    pass


# -- ring buffer primitives, shared by HistoryBuffer and the kernel ----------

@njit(cache=True)
def _ring_push(xs, fs, count, x, f):
    slot = count % xs.shape[0]
    xs[slot, :] = x
    fs[slot, :] = f
    return count + 1


@njit(cache=True)
def _ring_lookup(xs, fs, count, x0, dt, t, out):
    """Hermite-interpolated state at time ``t`` into ``out``."""
    n = xs.shape[1]
    if t <= 0.0:
        for i in range(n):
            out[i] = x0[i]
        return
    u = t / dt
    g = int(math.floor(u))
    th = u - g
    if g + 1 >= count:
        # t sits on the newest sample (only reached when th == 0)
        g = count - 2
        th = 1.0
    m = xs.shape[0]
    a = g % m
    b = (g + 1) % m
    h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th)
    h10 = th * (1.0 - th) * (1.0 - th)
    h01 = th * th * (3.0 - 2.0 * th)
    h11 = th * th * (th - 1.0)
    for i in range(n):
        out[i] = h00 * xs[a, i] + h10 * dt * fs[a, i] + h01 * xs[b, i] + h11 * dt * fs[b, i]


@dataclass
class HistoryBuffer:
    """Ring of the most recent ``(state, slope)`` samples on a uniform grid.

    Sample ``g`` belongs to time ``g * dt``; times before zero return the
    initial state.
    """

    x0: np.ndarray
    dt: float
    span: float
    xs: np.ndarray = field(init=False)
    fs: np.ndarray = field(init=False)
    count: int = field(init=False, default=0)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        size = int(math.ceil(self.span / self.dt)) + 3
        self.xs = np.zeros((size, self.x0.size))
        self.fs = np.zeros((size, self.x0.size))

    @property
    def capacity(self) -> int:
        return self.xs.shape[0]

    def push(self, x, f) -> None:
        self.count = _ring_push(self.xs, self.fs, self.count, np.asarray(x, float), np.asarray(f, float))

    def oldest_time(self) -> float:
        return max(0, self.count - self.capacity) * self.dt

    def lookup(self, t: float) -> np.ndarray:
        if t > 0 and self.count < 2:
            raise ValueError("history has fewer than two samples")
        if t > (self.count - 1) * self.dt + 1e-12 * self.dt:
            raise ValueError(f"t={t} lies beyond the newest sample")
        if 0 < t < self.oldest_time():
            raise ValueError(f"t={t} has left the ring buffer")
        out = np.empty(self.x0.size)
        _ring_lookup(self.xs, self.fs, self.count, self.x0, self.dt, t, out)
        return out


@njit(cache=True)
def _rhs(A0, Ad, delays, c, x, t, xs, fs, count, x0, dt, tmp, out):
    n = x.shape[0]
    for i in range(n):
        acc = c[i]
        for j in range(n):
            acc += A0[i, j] * x[j]
        out[i] = acc
    for k in range(delays.shape[0]):
        _ring_lookup(xs, fs, count, x0, dt, t - delays[k], tmp)
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += Ad[k, i, j] * tmp[j]
            out[i] += acc


@njit(cache=True)
def _integrate(A0, Ad, delays, c_before, c_after, t_on, x0, dt, nsteps, ring_size, limit):
    n = x0.shape[0]
    X = np.empty((nsteps + 1, n))
    xs = np.zeros((ring_size, n))
    fs = np.zeros((ring_size, n))
    count = 0
    x = x0.copy()
    X[0, :] = x
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    xt = np.empty(n)
    for step in range(nsteps):
        t = step * dt
        # one input level per step keeps the switch time on the grid
        c = c_after if t >= t_on else c_before
        _rhs(A0, Ad, delays, c, x, t, xs, fs, count, x0, dt, tmp, k1)
        count = _ring_push(xs, fs, count, x, k1)
        for i in range(n):
            xt[i] = x[i] + 0.5 * dt * k1[i]
        _rhs(A0, Ad, delays, c, xt, t + 0.5 * dt, xs, fs, count, x0, dt, tmp, k2)
        for i in range(n):
            xt[i] = x[i] + 0.5 * dt * k2[i]
        _rhs(A0, Ad, delays, c, xt, t + 0.5 * dt, xs, fs, count, x0, dt, tmp, k3)
        for i in range(n):
            xt[i] = x[i] + dt * k3[i]
        _rhs(A0, Ad, delays, c, xt, t + dt, xs, fs, count, x0, dt, tmp, k4)
        bad = False
        for i in range(n):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not (abs(x[i]) < limit):
                bad = True
        X[step + 1, :] = x
        if bad:
            return X, step + 1
    return X, -1


@dataclass(frozen=True)
class LinearDDE:
    A0: np.ndarray
    Ad: np.ndarray  # (K, n, n)
    delays: np.ndarray  # (K,)
    c_before: np.ndarray
    c_after: np.ndarray
    t_on: float = 0.0

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    def folded(self) -> LinearDDE:
        """Merge zero-delay couplings into ``A0``."""
        keep = self.delays > 0
        A0 = self.A0 + self.Ad[~keep].sum(axis=0) if np.any(~keep) else self.A0
        return LinearDDE(A0, self.Ad[keep], self.delays[keep], self.c_before, self.c_after, self.t_on)


def integrate(sys: LinearDDE, x0, dt: float, t_end: float) -> tuple[np.ndarray, np.ndarray, Optional[float]]:
    """Integrate ``sys`` on ``[0, t_end]``.

    Returns ``(t, X, t_diverged)``; when the state blows up the arrays stop at
    the offending step and ``t_diverged`` is its time.
    """
    sys = sys.folded()
    x0 = np.asarray(x0, dtype=float).ravel()
    if sys.delays.size and sys.delays.min() < 2 * dt:
        raise ValueError("step too coarse: every delay must span at least two steps")
    nsteps = int(round(t_end / dt))
    span = float(sys.delays.max()) if sys.delays.size else 0.0
    ring = int(math.ceil(span / dt)) + 3
    Ad = sys.Ad if sys.Ad.size else np.zeros((0, sys.n, sys.n))
    X, bad = _integrate(
        np.ascontiguousarray(sys.A0, dtype=float),
        np.ascontiguousarray(Ad, dtype=float),
        np.ascontiguousarray(sys.delays, dtype=float),
        np.asarray(sys.c_before, dtype=float),
        np.asarray(sys.c_after, dtype=float),
        float(sys.t_on),
        x0,
        float(dt),
        nsteps,
        ring,
        DIVERGENCE_LIMIT,
    )
    if bad >= 0:
        X = X[: bad + 1]
        t = np.arange(bad + 1) * dt
        return t, X, bad * dt
    return np.arange(nsteps + 1) * dt, X, None


# -- model builders -----------------------------------------------------------

def qp_to_dde(qp: QuasiPolynomial, tau: float) -> LinearDDE:
    """Companion-form DDE whose characteristic function is ``qp``.

    State is ``(y, y', ..., y^(d-1))`` with ``d = deg p_0``.
    """
    p0 = qp.terms[0]
    d = p0.degree
    if d < 1 or not qp.is_retarded():
        raise ValueError("companion realisation needs a retarded quasi-polynomial with deg p_0 >= 1")
    a = p0.lead
    A0 = np.zeros((d, d))
    A0[np.arange(d - 1), np.arange(1, d)] = 1.0
    A0[-1, :] = -np.array(p0.coeffs[:d]) / a
    K = qp.n
    Ad = np.zeros((K, d, d))
    for k, p in enumerate(qp.terms[1:]):
        Ad[k, -1, : len(p)] = -np.array(p.coeffs) / a
    delays = tau * np.arange(1, K + 1, dtype=float)
    zero = np.zeros(d)
    return LinearDDE(A0, Ad, delays, zero, zero)


def delay_system_to_dde(sys: DelaySystem, tau: float) -> LinearDDE:
    zero = np.zeros(sys.n)
    return LinearDDE(sys.A0, sys.A1[None, :, :], np.array([tau]), zero, zero)


@dataclass(frozen=True)
class BldcLoop:
    """Parameter bundle for the averaged BLDC speed loop."""

    motor: MotorParams
    pi: PiParams
    loop: LoopParams


# state order for the loop model
I_CUR, I_SPEED, I_FILT, I_INT = range(4)


def bldc_dde(loop: BldcLoop, tau_total: float, ref_before: float, ref_after: float,
             load_before: float = 0.0, load_after: float = 0.0, t_on: float = 0.0) -> LinearDDE:
    """States ``(current, speed, filtered speed, PI integrator)``.

    The PI output ``kp*e + integrator`` drives the bus voltage through the
    static PWM gain; the speed reaches the filter ``tau_total`` late.
    """
    m, pi, lp = loop.motor, loop.pi, loop.loop
    A0 = np.zeros((4, 4))
    A0[I_CUR, I_CUR] = -m.R / m.L
    A0[I_CUR, I_SPEED] = -m.ke / m.L
    A0[I_CUR, I_FILT] = -lp.Vdc * pi.kp / m.L
    A0[I_CUR, I_INT] = lp.Vdc / m.L
    A0[I_SPEED, I_CUR] = m.kt / m.J
    A0[I_SPEED, I_SPEED] = -m.Bm / m.J
    A0[I_FILT, I_FILT] = -1.0 / lp.tau_f
    A0[I_INT, I_FILT] = -pi.ki
    Ad = np.zeros((1, 4, 4))
    Ad[0, I_FILT, I_SPEED] = lp.kf / lp.tau_f

    def forcing(ref, load):
        c = np.zeros(4)
        c[I_CUR] = lp.Vdc * pi.kp * ref / m.L
        c[I_SPEED] = -load / m.J
        c[I_INT] = pi.ki * ref
        return c

    return LinearDDE(A0, Ad, np.array([tau_total]), forcing(ref_before, load_before),
                     forcing(ref_after, load_after), t_on)


def bldc_equilibrium(loop: BldcLoop, speed: float, load: float = 0.0) -> tuple[np.ndarray, float]:
    """Steady state holding ``speed`` under ``load``; returns ``(x, reference)``."""
    m, lp = loop.motor, loop.loop
    current = (m.Bm * speed + load) / m.kt
    voltage = m.R * current + m.ke * speed
    x = np.zeros(4)
    x[I_CUR] = current
    x[I_SPEED] = speed
    x[I_FILT] = lp.kf * speed
    x[I_INT] = voltage / lp.Vdc
    return x, lp.kf * speed


# -- public simulation API --------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_end: float
    input: str = "setpoint_step"  # or "load_step"
    target: float = 0.0  # rad/s for setpoint_step, N*m for load_step
    t0: float = 0.0
    initial_speed: float = 0.0
    closed_loop: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 50 * self.dt:
            raise ValueError("t_end must cover at least 50 steps")
        if self.input not in ("setpoint_step", "load_step"):
            raise ValueError(f"unknown input kind {self.input!r}")

    def check_resolution(self, motor: MotorParams, loop: LoopParams, tau_total: float) -> None:
        scales = [x for x in (motor.tau_elec, loop.tau_f, tau_total) if x > 0]
        limit = min(scales) / RESOLUTION_FACTOR
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={self.dt:.3g} too coarse; must be <= {limit:.3g}")


@dataclass(frozen=True)
class Trace:
    time: np.ndarray
    speed: np.ndarray
    current: np.ndarray
    control: np.ndarray

    def __len__(self) -> int:
        return len(self.time)

    @classmethod
    def empty(cls) -> Trace:
        z = np.zeros(0)
        return cls(z, z, z, z)


def simulate(m: MotorParams, pi: PiParams, lp: LoopParams, tau_total: float, cfg: SimConfig) -> Trace:
    """Response of the delayed speed loop to a set-point or load step.

    The loop starts in equilibrium at ``cfg.initial_speed``; the step is
    applied at ``cfg.t0``.

    Raises
    ------
    SimulationDiverged
        If the state leaves the representable range.
    """
    cfg.check_resolution(m, lp, tau_total)
    loop = BldcLoop(m, pi, lp)
    x0, ref0 = bldc_equilibrium(loop, cfg.initial_speed)
    if cfg.input == "setpoint_step":
        ref1, load1 = cfg.target * lp.kf, 0.0
    else:
        ref1, load1 = ref0, cfg.target
    dde = bldc_dde(loop, tau_total, ref0, ref1, 0.0, load1, cfg.t0)
    if not cfg.closed_loop:
        A0 = dde.A0.copy()
        A0[I_CUR, I_FILT] = A0[I_CUR, I_INT] = 0.0
        zero_c = np.zeros(4)
        zero_c[1] = dde.c_after[1]
        dde = LinearDDE(A0, np.zeros_like(dde.Ad), dde.delays, np.zeros(4), zero_c if cfg.input == "load_step" else np.zeros(4), cfg.t0)
    t, X, bad = integrate(dde, x0, cfg.dt, cfg.t_end)
    if bad is not None:
        raise SimulationDiverged(bad)
    ref = np.where(t >= cfg.t0, ref1, ref0)
    if cfg.closed_loop:
        control = lp.Vdc * (pi.kp * (ref - X[:, I_FILT]) + X[:, I_INT])
    else:
        control = np.zeros_like(t)
    return Trace(t, X[:, I_SPEED].copy(), X[:, I_CUR].copy(), control)


def _write_trace(trace: Trace, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for row in zip(trace.time, trace.speed, trace.current, trace.control):
        w.writerow([repr(float(v)) for v in row])


def export_trace(trace: Trace, path: Union[str, Path, TextIO]) -> None:
    """Write ``trace`` as CSV to a path or an open text stream."""
    if hasattr(path, "write"):
        _write_trace(trace, path)
        return
    with open(path, "w", newline="") as fh:
        _write_trace(trace, fh)


def read_trace(path: Union[str, Path]) -> Trace:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        rows = [[float(v) for v in line] for line in r]
    if not rows:
        return Trace.empty()
    a = np.array(rows)
    return Trace(a[:, 0], a[:, 1], a[:, 2], a[:, 3])


# -- stability oracle --------------------------------------------------------

def envelope_rate(t: np.ndarray, y: np.ndarray) -> float:
    """Exponential growth rate of ``|y|`` peaks over the second half of the record."""
    half = t[-1] / 2.0
    sel = t >= half
    tt, yy = t[sel], np.abs(y[sel])
    peaks, _ = find_peaks(yy)
    if len(peaks) >= 4:
        pt, pv = tt[peaks], yy[peaks]
    else:
        # non-oscillatory tail: block maxima stand in for peaks
        blocks = np.array_split(np.arange(len(tt)), 8)
        pt = np.array([tt[b[np.argmax(yy[b])]] for b in blocks])
        pv = np.array([yy[b].max() for b in blocks])
    ok = pv > 1e-280
    if ok.sum() < 3:
        return -math.inf
    slope = np.polyfit(pt[ok], np.log(pv[ok]), 1)[0]
    return float(slope)


SystemLike = Union[QuasiPolynomial, DelaySystem, BldcLoop]


@dataclass(frozen=True)
class OracleSettings:
    dt: float
    t_end: float


def _timescale(system: SystemLike) -> float:
    """Fastest natural time constant of the delay-free system."""
    if isinstance(system, BldcLoop):
        return min(system.motor.tau_elec, system.loop.tau_f)
    if isinstance(system, DelaySystem):
        lam = np.linalg.eigvals(system.A0 + system.A1)
        lam = np.concatenate([lam, np.linalg.eigvals(system.A0)])
    else:
        lam = np.concatenate([system.delay_free().roots(), system.terms[0].roots()])
    mag = np.abs(lam[np.abs(lam) > 0])
    return 1.0 / mag.max() if mag.size else 1.0


def default_settings(system: SystemLike, tau_lo: float, tau_hi: float) -> OracleSettings:
    ts = _timescale(system)
    dt = min(tau_lo / 40.0, ts / RESOLUTION_FACTOR)
    t_end = 400.0 * tau_hi
    return OracleSettings(dt, t_end)


def _observe(system: SystemLike, tau: float, settings: OracleSettings) -> tuple[np.ndarray, np.ndarray, Optional[float]]:
    if isinstance(system, QuasiPolynomial):
        dde = qp_to_dde(system, tau)
        x0 = np.zeros(dde.n)
        x0[0] = 1.0
        t, X, bad = integrate(dde, x0, settings.dt, settings.t_end)
        return t, X[:, 0], bad
    if isinstance(system, DelaySystem):
        dde = delay_system_to_dde(system, tau)
        t, X, bad = integrate(dde, np.ones(system.n), settings.dt, settings.t_end)
        return t, X.sum(axis=1), bad
    if isinstance(system, BldcLoop):
        dde = bldc_dde(system, tau, 0.0, 0.0)
        x0 = np.zeros(4)
        x0[I_SPEED] = 1.0
        t, X, bad = integrate(dde, x0, settings.dt, settings.t_end)
        return t, X[:, I_SPEED], bad
    raise TypeError(f"unsupported system type {type(system).__name__}")


def is_unstable(system: SystemLike, tau: float, settings: OracleSettings,
                threshold: float = GROWTH_THRESHOLD) -> bool:
    t, y, bad = _observe(system, tau, settings)
    if bad is not None:
        return True
    return envelope_rate(t, y) > threshold


@dataclass(frozen=True)
class OracleResult:
    tau_star: float
    bracket: tuple[float, float]
    evaluations: int
    settings: OracleSettings


def oracle_search(
    system: SystemLike,
    tau_lo: float,
    tau_hi: float,
    rel_tol: float = 0.01,
    settings: Optional[OracleSettings] = None,
    threshold: float = GROWTH_THRESHOLD,
) -> OracleResult:
    """Locate the destabilising delay by simulation and bisection.

    ``tau_lo`` must give a bounded response and ``tau_hi`` a growing one.

    Raises
    ------
    BracketInvalid
        When both ends of the bracket give the same verdict.
    """
    if not 0 < tau_lo < tau_hi:
        raise ValueError("need 0 < tau_lo < tau_hi")
    settings = settings or default_settings(system, tau_lo, tau_hi)
    lo_bad = is_unstable(system, tau_lo, settings, threshold)
    hi_bad = is_unstable(system, tau_hi, settings, threshold)
    evals = 2
    if lo_bad == hi_bad:
        verdict = "unstable" if lo_bad else "stable"
        raise BracketInvalid(f"bracket invalid: both ends {verdict} ({tau_lo:.6g}, {tau_hi:.6g})")
    lo, hi = tau_lo, tau_hi
    while (hi - lo) > rel_tol * lo:
        mid = 0.5 * (lo + hi)
        evals += 1
        if is_unstable(system, mid, settings, threshold):
            hi = mid
        else:
            lo = mid
    return OracleResult(0.5 * (lo + hi), (lo, hi), evals, settings)


def stability_oracle(system: SystemLike, tau_lo: float, tau_hi: float, rel_tol: float = 0.01) -> float:
    """Destabilising delay found by :func:`oracle_search`, in seconds."""
    return oracle_search(system, tau_lo, tau_hi, rel_tol).tau_star
