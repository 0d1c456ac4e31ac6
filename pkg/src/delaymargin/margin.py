"""Maximum stable delay of a retarded quasi-polynomial.

The transcendental factor ``exp(-s tau)`` is replaced by the bilinear form
``(1 - sT)/(1 + sT)``, which is exact on the imaginary axis.  The resulting
polynomial in ``s`` has coefficients polynomial in ``T``; a Routh array built
over those coefficients exposes every ``T`` at which a root sits on the
imaginary axis, and each such ``T`` maps back to a ladder of delays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import convolve2d

from .polynomial import RationalFunction, RealPolynomial, real_roots
from .rtds import QuasiPolynomial, qp_delay_derivatives, qp_eval

DEFAULT_LADDER_DEPTH = 4
POLE_REJECT_RTOL = 1e-8
MAX_ABS_T = 1e6
STABLE_MARGIN = 1e-9
CROSSING_RTOL = 1e-6


class DelayMarginError(Exception):
    """Base class for failures of the delay-margin procedure."""


class DegenerateRouthRow(DelayMarginError):
    def __init__(self, row: int, power: int):
        super().__init__(f"degenerate Routh row {row} (s^{power}): first-column entry is identically zero")
        self.row = row
        self.power = power


class DelayFreeUnstable(DelayMarginError):
    def __init__(self, max_real: float):
        super().__init__(f"delay-free system unstable (max Re(root) = {max_real:.6g})")
        self.max_real = max_real


class NonSimpleCrossing(DelayMarginError):
    pass


@dataclass(frozen=True)
class BivariateST:
    """``sum_j q_j(T) s^j``; ``s_coeffs[j]`` is ``q_j``."""

    s_coeffs: tuple[RealPolynomial, ...]

    @property
    def degree(self) -> int:
        return len(self.s_coeffs) - 1

    def __call__(self, s, T):
        acc = 0.0 * s
        for q in reversed(self.s_coeffs):
            acc = acc * s + q(T)
        return acc


@dataclass(frozen=True)
class RouthTable:
    """Routh array whose entries are rational functions of ``T``.

    ``rows[r]`` belongs to ``s**(degree - r)``; the last row is ``s**1``.
    """

    rows: tuple[tuple[RationalFunction, ...], ...]
    degree: int

    def row_for_power(self, power: int) -> tuple[RationalFunction, ...]:
        return self.rows[self.degree - power]

    def first_column(self) -> list[RationalFunction]:
        return [row[0] for row in self.rows]

    def evaluate(self, T: float) -> list[list[float]]:
        return [[float(e(T)) for e in row] for row in self.rows]


@dataclass(frozen=True)
class CriticalPoint:
    T_cr: float
    omega_cr: float
    tau_ladder: tuple[float, ...]
    root_tendency: int

    @property
    def tau_cr(self) -> float:
        return self.tau_ladder[0]


@dataclass(frozen=True)
class RejectedCandidate:
    T: float
    reason: str


@dataclass(frozen=True)
class DelayMarginResult:
    critical_points: tuple[CriticalPoint, ...]
    tau_max: float
    stable_delay_free: bool
    t_cr: tuple[float, ...] = ()
    rejected: tuple[RejectedCandidate, ...] = ()

    @property
    def delay_independent(self) -> bool:
        return math.isinf(self.tau_max)


def rekasius_transform(qp: QuasiPolynomial) -> BivariateST:
    """Substitute ``exp(-s tau) -> (1 - sT)/(1 + sT)`` and clear denominators.

    Returns ``sum_k p_k(s) (1 - sT)^k (1 + sT)^(n - k)`` grouped by powers of s.
    """
    if qp.terms[0].is_zero:
        raise ValueError("not a retarded-type quasi-polynomial")
    n = qp.n
    # bivariate arrays indexed [power of s, power of T]
    minus = np.array([[1.0, 0.0], [0.0, -1.0]])
    plus = np.array([[1.0, 0.0], [0.0, 1.0]])
    total = np.zeros((1, 1))
    for k, p in enumerate(qp.terms):
        if p.is_zero:
            continue
        term = p.array().reshape(-1, 1)
        for _ in range(k):
            term = convolve2d(term, minus)
        for _ in range(n - k):
            term = convolve2d(term, plus)
        shape = (max(total.shape[0], term.shape[0]), max(total.shape[1], term.shape[1]))
        grown = np.zeros(shape)
        grown[: total.shape[0], : total.shape[1]] += total
        grown[: term.shape[0], : term.shape[1]] += term
        total = grown
    qs = [RealPolynomial(total[j, :]) for j in range(total.shape[0])]
    while len(qs) > 1 and qs[-1].is_zero:
        qs.pop()
    return BivariateST(tuple(qs))


def build_routh(b: BivariateST) -> RouthTable:
    N = b.degree
    if N < 2:
        raise ValueError("Routh array needs degree >= 2 in s")
    q = [RationalFunction.lift(c) for c in b.s_coeffs]
    zero = RationalFunction.lift(RealPolynomial())
    rows = [
        tuple(q[j] for j in range(N, -1, -2)),
        tuple(q[j] for j in range(N - 1, -1, -2)),
    ]
    for r in range(2):
        if rows[r][0].is_zero:
            raise DegenerateRouthRow(r, N - r)
    for r in range(2, N):
        upper, prev = rows[r - 2], rows[r - 1]
        width = (N - r) // 2 + 1
        lead = prev[0]
        entries = []
        for i in range(width):
            a = upper[i + 1] if i + 1 < len(upper) else zero
            c = prev[i + 1] if i + 1 < len(prev) else zero
            entries.append((lead * a - upper[0] * c) / lead)
        if entries[0].is_zero:
            raise DegenerateRouthRow(r, N - r)
        rows.append(tuple(entries))
    return RouthTable(tuple(rows), N)


def _magnitude_scale(p: RealPolynomial, x: float) -> float:
    return sum(abs(c) * abs(x) ** i for i, c in enumerate(p.coeffs))


def tau_ladder(omega: float, T: float, depth: int = DEFAULT_LADDER_DEPTH) -> tuple[float, ...]:
    """Non-negative delays mapped from ``T`` at crossing frequency ``omega``.

    Branch chosen so the first member lies in ``[0, 2 pi / omega)``.
    """
    theta = math.atan(omega * T)
    if theta < 0:
        theta += math.pi
    base = 2.0 * theta / omega
    step = 2.0 * math.pi / omega
    return tuple(base + l * step for l in range(depth))


def critical_points(
    table: RouthTable,
    qp: QuasiPolynomial,
    ladder_depth: int = DEFAULT_LADDER_DEPTH,
) -> tuple[list[CriticalPoint], list[float], list[RejectedCandidate]]:
    """Imaginary-axis crossings read off the ``s^1`` and ``s^2`` Routh rows.

    Returns ``(points, t_cr, rejected)`` where ``t_cr`` lists every non-zero
    real root of the ``s^1`` numerator before filtering.
    """
    v11 = table.row_for_power(1)[0]
    s2 = table.row_for_power(2)
    if v11.num.degree < 1:
        return [], [], []
    roots = real_roots(v11.num)
    span = max((abs(T) for T in roots), default=1.0)
    # T = 0 is the delay-free point itself, not a crossing
    t_cr = [T for T in roots if abs(T) > 1e-12 * span]
    points: list[CriticalPoint] = []
    rejected: list[RejectedCandidate] = []
    for T in t_cr:
        if abs(T) > MAX_ABS_T:
            rejected.append(RejectedCandidate(T, "|T| too large"))
            continue
        den_scale = _magnitude_scale(v11.den, T)
        if abs(v11.den(T)) < POLE_REJECT_RTOL * den_scale:
            rejected.append(RejectedCandidate(T, "pole collision"))
            continue
        a = s2[0]
        c = s2[1] if len(s2) > 1 else RationalFunction.lift(RealPolynomial())
        if abs(a.den(T)) < POLE_REJECT_RTOL * _magnitude_scale(a.den, T) or abs(a.num(T)) == 0.0:
            rejected.append(RejectedCandidate(T, "pole collision"))
            continue
        w2 = float(c(T) / a(T))
        if not w2 > 0.0:
            rejected.append(RejectedCandidate(T, "omega^2 <= 0"))
            continue
        omega = math.sqrt(w2)
        ladder = tau_ladder(omega, T, ladder_depth)
        scale = sum(abs(p(1j * omega)) for p in qp.terms)
        if abs(qp_eval(qp, 1j * omega, ladder[0])) > CROSSING_RTOL * scale:
            rejected.append(RejectedCandidate(T, "not an imaginary-axis root"))
            continue
        rt = root_tendency(qp, omega, ladder[0])
        points.append(CriticalPoint(T, omega, ladder, rt))
    return points, t_cr, rejected


def root_tendency(qp: QuasiPolynomial, omega: float, tau: float) -> int:
    """Direction in which the root at ``j omega`` crosses as the delay grows.

    ``+1`` means into the right half plane.  Uses implicit differentiation,
    ``ds/dtau = -(dCE/dtau)/(dCE/ds)``.
    """
    s = 1j * omega
    d_s, d_tau = qp_delay_derivatives(qp, s, tau)
    scale = sum(abs(p.derivative()(s)) + abs(p(s)) * (1 + k * tau) for k, p in enumerate(qp.terms))
    if abs(d_s) < 1e-12 * scale:
        raise NonSimpleCrossing(f"non-simple crossing root at omega={omega:.6g}, tau={tau:.6g}")
    rate = -d_tau / d_s
    return 1 if rate.real > 0 else -1


def delay_free_stable(qp: QuasiPolynomial) -> tuple[bool, float]:
    p = qp.delay_free()
    if p.degree < 1:
        return (not p.is_zero), -math.inf
    r = p.roots()
    worst = float(np.max(r.real))
    return worst < -STABLE_MARGIN, worst


def tau_max(qp: QuasiPolynomial, ladder_depth: int = DEFAULT_LADDER_DEPTH) -> DelayMarginResult:
    """Smallest delay at which a root crosses into the right half plane.

    Returns ``inf`` as ``tau_max`` when the system is stable for every delay,
    and also when no term carries the delay at all.

    Raises
    ------
    DelayFreeUnstable
        If the system has a delayed term and is not stable at zero delay.
    """
    qp = qp.trimmed()
    stable, worst = delay_free_stable(qp)
    if not qp.has_delay:
        # nothing for the delay to act on
        return DelayMarginResult((), math.inf, stable)
    if not stable:
        raise DelayFreeUnstable(worst)
    if not qp.is_retarded():
        raise ValueError("not a retarded-type quasi-polynomial: a delayed term reaches the top degree")
    table = build_routh(rekasius_transform(qp))
    points, t_cr, rejected = critical_points(table, qp, ladder_depth)
    destabilizing = [cp.tau_cr for cp in points if cp.root_tendency > 0]
    tmax = min(destabilizing) if destabilizing else math.inf
    return DelayMarginResult(tuple(points), tmax, True, tuple(t_cr), tuple(rejected))
