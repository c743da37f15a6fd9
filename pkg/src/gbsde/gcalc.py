"""Scalar generator of the volatility-band heat equation and related
analytic helpers.

The band [sigma_low, sigma_high] induces the one-dimensional sublinear
generator

    G(a) = (sigma_high^2 * a_plus - sigma_low^2 * a_minus) / 2,

which equals the worst-case form sup over v in [sigma_low, sigma_high]
of v^2 a / 2 (the objective is linear in v^2, so an endpoint always
attains the sup).
"""

import math
from dataclasses import dataclass

from .errors import Error


@dataclass(frozen=True)
class GCoefficients:
    """Volatility band; requires 0 < sigma_low <= sigma_high."""

    sigma_low: float
    sigma_high: float

    def __post_init__(self):
        lo, hi = self.sigma_low, self.sigma_high
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise Error("volatility band must be finite")
        if not 0.0 < lo <= hi:
            raise Error(
                f"volatility band requires 0 < sigma_low <= sigma_high, got ({lo}, {hi})"
            )

    @property
    def lo2(self) -> float:
        return self.sigma_low * self.sigma_low

    @property
    def hi2(self) -> float:
        return self.sigma_high * self.sigma_high


def g_eval(coeffs: GCoefficients, a: float) -> float:
    """Closed-form generator value G(a).

    Monotone nondecreasing, positively homogeneous, and subadditive in
    ``a``; G(a) - G(b) >= sigma_low^2 (a - b) / 2 for a >= b.
    """
    if not math.isfinite(a):
        raise Error(f"g_eval requires finite input, got {a!r}")
    return 0.5 * (coeffs.hi2 * max(a, 0.0) - coeffs.lo2 * max(-a, 0.0))


def hjb_sup_form(coeffs: GCoefficients, a: float) -> float:
    """Worst-case control form: max over v in {sigma_low, sigma_high}
    of v^2 a / 2.  Agrees with :func:`g_eval` to machine precision."""
    if not math.isfinite(a):
        raise Error(f"hjb_sup_form requires finite input, got {a!r}")
    return max(0.5 * coeffs.lo2 * a, 0.5 * coeffs.hi2 * a)


def reverse_holder_threshold(q: float) -> float:
    """Threshold phi(q) = sqrt(1 + q^-2 log((2q-1)/(2(q-1)))) - 1.

    Defined for q > 1; positive, strictly decreasing, and -> 0 as
    q -> infinity.  A stochastic exponential whose integrand's BMO norm
    lies below phi(q) satisfies a q-th power reverse Hoelder inequality
    uniformly over the scenario family.
    """
    if not (math.isfinite(q) and q > 1.0):
        raise Error(f"reverse_holder_threshold requires q > 1, got {q!r}")
    # (2q-1)/(2(q-1)) = 1 + 1/(2(q-1)); log1p/expm1 keep the tail accurate
    u = math.log1p(1.0 / (2.0 * (q - 1.0))) / (q * q)
    return math.expm1(0.5 * math.log1p(u))
