"""Dense real polynomials, rational functions and root finding.

Coefficients are stored in ascending order of degree.  Everything here is an
immutable value; arithmetic returns new objects.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npp

# Coefficients left over by cancellation are dropped when they fall below this
# fraction of the operand coefficients that produced them.
STRIP_RTOL = 1e-12
CLUSTER_RADIUS = 1e-8


def _strip_exact(coeffs: Iterable[float]) -> tuple[float, ...]:
    c = [float(x) for x in coeffs]
    while c and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class RealPolynomial:
    """Univariate polynomial with real coefficients, ascending degree.

    The zero polynomial has an empty coefficient tuple and degree -1.
    """

    coeffs: tuple[float, ...] = ()

    def __init__(self, coeffs: Iterable[float] = ()):
        c = _strip_exact(np.asarray(list(coeffs), dtype=float).ravel())
        if any(not np.isfinite(x) for x in c):
            raise ValueError("polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, value: float) -> RealPolynomial:
        return cls([value])

    @classmethod
    def monomial(cls, degree: int, value: float = 1.0) -> RealPolynomial:
        return cls([0.0] * degree + [value])

    @classmethod
    def from_roots(cls, roots: Sequence[complex], lead: float = 1.0) -> RealPolynomial:
        c = npp.polyfromroots(list(roots))
        if np.iscomplexobj(c):
            c = c.real
        return cls(lead * c)

    # -- basic properties ---------------------------------------------------
    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def lead(self) -> float:
        return self.coeffs[-1] if self.coeffs else 0.0

    @property
    def scale(self) -> float:
        """Largest coefficient magnitude (0 for the zero polynomial)."""
        return max((abs(x) for x in self.coeffs), default=0.0)

    def array(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=float)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __repr__(self) -> str:
        return f"RealPolynomial({list(self.coeffs)!r})"

    # -- arithmetic -----------------------------------------------------------
    def _combine(self, other: RealPolynomial, sign: float) -> RealPolynomial:
        other = as_polynomial(other)
        n = max(len(self), len(other))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self)] = self.coeffs
        b[: len(other)] = other.coeffs
        out = a + sign * b
        # Only the high-degree tail is cleaned: a leftover that is tiny next to
        # the operands it came from is cancellation residue, not a coefficient.
        ref = np.maximum(np.abs(a), np.abs(b))
        k = n
        while k > 0 and abs(out[k - 1]) <= STRIP_RTOL * ref[k - 1]:
            k -= 1
        return RealPolynomial(out[:k])

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return as_polynomial(other)._combine(self, -1.0)

    def __neg__(self) -> RealPolynomial:
        return RealPolynomial([-x for x in self.coeffs])

    def __mul__(self, other):
        other = as_polynomial(other)
        if self.is_zero or other.is_zero:
            return RealPolynomial()
        return RealPolynomial(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __pow__(self, k: int) -> RealPolynomial:
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        out = RealPolynomial([1.0])
        for _ in range(k):
            out = out * self
        return out

    def derivative(self) -> RealPolynomial:
        return RealPolynomial([i * c for i, c in enumerate(self.coeffs)][1:])

    def __call__(self, x):
        """Horner evaluation; accepts real/complex scalars or numpy arrays."""
        if self.is_zero:
            return np.zeros_like(x) if isinstance(x, np.ndarray) else 0.0
        acc = self.coeffs[-1] + 0 * x
        for c in reversed(self.coeffs[:-1]):
            acc = acc * x + c
        return acc

    def roots(self) -> np.ndarray:
        return poly_roots(self)

    def allclose(self, other: RealPolynomial, rtol: float = 1e-9, atol: float = 0.0) -> bool:
        other = as_polynomial(other)
        n = max(len(self), len(other))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self)] = self.coeffs
        b[: len(other)] = other.coeffs
        return bool(np.allclose(a, b, rtol=rtol, atol=atol))


def as_polynomial(p) -> RealPolynomial:
    if isinstance(p, RealPolynomial):
        return p
    if np.isscalar(p):
        return RealPolynomial([p])
    return RealPolynomial(p)


def poly_arith(a: RealPolynomial, b: RealPolynomial, kind: str) -> RealPolynomial:
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    raise ValueError(f"unknown polynomial operation {kind!r}")


def poly_derivative(p: RealPolynomial) -> RealPolynomial:
    return p.derivative()


def poly_eval(p: RealPolynomial, x):
    return p(x)


def poly_roots(p: RealPolynomial) -> np.ndarray:
    """All complex roots of ``p`` (companion-matrix eigenvalues).

    Raises
    ------
    ValueError
        For the zero polynomial.
    """
    if p.is_zero:
        raise ValueError("roots of zero polynomial undefined")
    if p.degree == 0:
        return np.zeros(0, dtype=complex)
    c = p.array()
    # exact zero roots are peeled off so the eigenproblem stays well scaled
    nz = 0
    while c[nz] == 0.0:
        nz += 1
    r = npp.polyroots(c[nz:]) if len(c) - nz > 1 else np.zeros(0)
    r = np.concatenate([np.zeros(nz, dtype=complex), np.asarray(r, dtype=complex)])
    return _polish(p, r)


def _polish(p: RealPolynomial, roots: np.ndarray, steps: int = 3) -> np.ndarray:
    # A few Newton steps per root, kept only where they reduce the residual.
    dp = p.derivative()
    out = roots.copy()
    with np.errstate(all="ignore"):
        for i, z in enumerate(roots):
            best, best_res = z, abs(p(z))
            for _ in range(steps):
                d = dp(z)
                if d == 0:
                    break
                z = z - p(z) / d
                res = abs(p(z))
                if not np.isfinite(res):
                    break
                if res < best_res:
                    best, best_res = z, res
            out[i] = best
    return out


@dataclass(frozen=True)
class RealRoot:
    value: float
    multiplicity: int = 1


def real_roots(
    p: RealPolynomial,
    imag_tol: float = 1e-6,
    with_multiplicity: bool = False,
):
    """Real roots of ``p`` in ascending order.

    A root counts as real when ``|imag| <= imag_tol * (1 + |re|)``.  Roots
    closer than the cluster radius are merged; so are neighbours that together
    form a multiple root (``p'`` vanishes at their midpoint), because a root of
    multiplicity m only resolves to about eps**(1/m).
    """
    roots = poly_roots(p)
    cand = sorted(r.real for r in roots if abs(r.imag) <= imag_tol * (1.0 + abs(r.real)))
    clusters: list[list[float]] = []
    dp = p.derivative()
    for x in cand:
        if clusters:
            prev = clusters[-1]
            mid = 0.5 * (prev[-1] + x)
            gap = abs(x - prev[-1])
            if gap <= CLUSTER_RADIUS * (1.0 + abs(x)) or (
                gap <= 1e-4 * (1.0 + abs(x)) and _is_multiple(p, dp, mid)
            ):
                prev.append(x)
                continue
        clusters.append([x])
    out = [RealRoot(float(np.mean(c)), len(c)) for c in clusters]
    if with_multiplicity:
        return out
    return [r.value for r in out]


def _is_multiple(p: RealPolynomial, dp: RealPolynomial, x: float) -> bool:
    scale = sum(abs(c) * abs(x) ** i for i, c in enumerate(dp.coeffs)) or 1.0
    return abs(dp(x)) <= 1e-6 * scale


@dataclass(frozen=True)
class RationalFunction:
    """Quotient ``num/den`` of real polynomials.

    No common factors are ever cancelled.  Entries that share a denominator
    are combined over that denominator instead of multiplying denominators.
    """

    num: RealPolynomial
    den: RealPolynomial = RealPolynomial([1.0])

    def __post_init__(self):
        object.__setattr__(self, "num", as_polynomial(self.num))
        object.__setattr__(self, "den", as_polynomial(self.den))
        if self.den.is_zero:
            raise ZeroDivisionError("rational function with zero denominator")

    @classmethod
    def lift(cls, x) -> RationalFunction:
        if isinstance(x, RationalFunction):
            return x
        return cls(as_polynomial(x), RealPolynomial([1.0]))

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    def __call__(self, x):
        return self.num(x) / self.den(x)

    def __add__(self, other):
        other = RationalFunction.lift(other)
        if self.den == other.den:
            return RationalFunction(self.num + other.num, self.den)
        return RationalFunction(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.num, self.den)

    def __sub__(self, other):
        return self + (-RationalFunction.lift(other))

    def __rsub__(self, other):
        return RationalFunction.lift(other) - self

    def __mul__(self, other):
        other = RationalFunction.lift(other)
        if other.den == RealPolynomial([1.0]):
            return RationalFunction(self.num * other.num, self.den)
        if self.den == RealPolynomial([1.0]):
            return RationalFunction(self.num * other.num, other.den)
        return RationalFunction(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = RationalFunction.lift(other)
        if other.is_zero:
            raise ZeroDivisionError("division by the zero rational function")
        return RationalFunction(self.num * other.den, self.den * other.num)

    def __repr__(self) -> str:
        return f"RationalFunction(num={list(self.num.coeffs)!r}, den={list(self.den.coeffs)!r})"
