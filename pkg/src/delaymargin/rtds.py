"""Retarded time-delay systems and their characteristic quasi-polynomials."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.signal import convolve2d

from .polynomial import RealPolynomial, as_polynomial

MAX_EXPANSION_ORDER = 8


@dataclass(frozen=True)
class DelaySystem:
    """``x'(t) = A0 x(t) + A1 x(t - tau) + B u(t)`` with one commensurate delay."""

    A0: np.ndarray
    A1: np.ndarray
    B: Optional[np.ndarray] = None
    tau: float = 0.0

    def __post_init__(self):
        A0 = np.atleast_2d(np.asarray(self.A0, dtype=float))
        A1 = np.atleast_2d(np.asarray(self.A1, dtype=float))
        if A0.shape[0] != A0.shape[1] or A1.shape[0] != A1.shape[1]:
            raise ValueError(f"state matrices must be square, got {A0.shape} and {A1.shape}")
        if A0.shape != A1.shape:
            raise ValueError(f"A0 and A1 dimensions differ: {A0.shape} vs {A1.shape}")
        if self.tau < 0:
            raise ValueError("delay must be non-negative")
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "A1", A1)
        if self.B is not None:
            B = np.atleast_2d(np.asarray(self.B, dtype=float))
            if B.shape[0] != A0.shape[0]:
                raise ValueError("B must have one row per state")
            object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    @property
    def delayed_rank(self) -> int:
        # informational only
        return int(np.linalg.matrix_rank(self.A1))


@dataclass(frozen=True)
class QuasiPolynomial:
    """``CE(s, tau) = sum_k p_k(s) exp(-s k tau)``; ``terms[k]`` is ``p_k``."""

    terms: tuple[RealPolynomial, ...] = field(default_factory=tuple)

    def __init__(self, terms: Sequence):
        t = tuple(as_polynomial(p) for p in terms)
        if not t or t[0].is_zero:
            raise ValueError("not a retarded-type quasi-polynomial: p_0 is zero")
        object.__setattr__(self, "terms", t)

    @property
    def n(self) -> int:
        """Highest power of the delay factor carried by ``terms``."""
        return len(self.terms) - 1

    @property
    def has_delay(self) -> bool:
        return any(not p.is_zero for p in self.terms[1:])

    def trimmed(self) -> QuasiPolynomial:
        """Copy without trailing all-zero delay terms."""
        t = list(self.terms)
        while len(t) > 1 and t[-1].is_zero:
            t.pop()
        return QuasiPolynomial(t)

    def delay_free(self) -> RealPolynomial:
        out = RealPolynomial()
        for p in self.terms:
            out = out + p
        return out

    def is_retarded(self) -> bool:
        d0 = self.terms[0].degree
        return all(p.degree < d0 for p in self.terms[1:])

    def __call__(self, s, tau: float):
        return qp_eval(self, s, tau)


def qp_eval(qp: QuasiPolynomial, s, tau: float):
    if tau < 0:
        raise ValueError("delay must be non-negative")
    z = np.exp(-s * tau)
    acc = 0.0 * s
    zk = 1.0 + 0.0 * s
    for p in qp.terms:
        acc = acc + p(s) * zk
        zk = zk * z
    return acc


def qp_delay_derivatives(qp: QuasiPolynomial, s: complex, tau: float) -> tuple[complex, complex]:
    """Partial derivatives ``(dCE/ds, dCE/dtau)`` at ``(s, tau)``."""
    if tau < 0:
        raise ValueError("delay must be non-negative")
    d_s = 0.0j
    d_tau = 0.0j
    for k, p in enumerate(qp.terms):
        e = np.exp(-s * k * tau)
        ps = p(s)
        d_s += (p.derivative()(s) - k * tau * ps) * e
        d_tau += -s * k * ps * e
    return complex(d_s), complex(d_tau)


# -- bivariate helpers: arrays indexed [power of s, power of z] ---------------

def _bmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return convolve2d(a, b)


def _badd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    shape = (max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1]))
    out = np.zeros(shape)
    out[: a.shape[0], : a.shape[1]] += a
    out[: b.shape[0], : b.shape[1]] += b
    return out


def _bivariate_det(entries: list[list[np.ndarray]]) -> np.ndarray:
    """Determinant of a matrix of bivariate polynomials.

    Row-wise Laplace expansion memoised over the set of remaining columns, so
    the cost is O(2^n n) multiplications instead of n!.
    """
    n = len(entries)

    @lru_cache(maxsize=None)
    def minor(row: int, cols: int) -> np.ndarray:
        if row == n:
            return np.ones((1, 1))
        acc = np.zeros((1, 1))
        sign = 1.0
        for c in range(n):
            if not cols & (1 << c):
                continue
            e = entries[row][c]
            if np.any(e):
                acc = _badd(acc, sign * _bmul(e, minor(row + 1, cols & ~(1 << c))))
            sign = -sign
        return acc

    return minor(0, (1 << n) - 1)


def characteristic_qp(sys: DelaySystem) -> QuasiPolynomial:
    """Expand ``det(sI - A0 - A1 z)`` and collect powers of ``z = exp(-s tau)``."""
    n = sys.n
    if n > MAX_EXPANSION_ORDER:
        raise ValueError(f"system order {n} exceeds the expansion limit {MAX_EXPANSION_ORDER}")
    entries = []
    for i in range(n):
        row = []
        for j in range(n):
            e = np.zeros((2, 2))
            e[0, 0] = -sys.A0[i, j]
            e[0, 1] = -sys.A1[i, j]
            if i == j:
                e[1, 0] = 1.0
            row.append(e)
        entries.append(row)
    d = _bivariate_det(entries)
    full = np.zeros((n + 1, n + 1))
    full[: d.shape[0], : d.shape[1]] = d[: n + 1, : n + 1]
    return QuasiPolynomial([RealPolynomial(full[:, k]) for k in range(n + 1)])
