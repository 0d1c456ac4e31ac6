"""Delay margins of retarded time-delay systems and of a delayed BLDC speed loop."""
from .margin import DelayFreeUnstable, DelayMarginError, DelayMarginResult, tau_max
from .polynomial import RationalFunction, RealPolynomial
from .rtds import DelaySystem, QuasiPolynomial, characteristic_qp

__version__ = "0.1.0"

__all__ = [
    "DelayFreeUnstable",
    "DelayMarginError",
    "DelayMarginResult",
    "DelaySystem",
    "QuasiPolynomial",
    "RationalFunction",
    "RealPolynomial",
    "characteristic_qp",
    "tau_max",
]
