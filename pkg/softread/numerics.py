"""Special functions, adaptive quadrature and scalar concave maximization."""
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special
from scipy.integrate import quad
from scipy.optimize import bisect

from .config import (
    DEFAULT_ABS_TOL,
    DEFAULT_CONCAVE_TOL,
    DEFAULT_MAX_SUBDIVISIONS,
    DEFAULT_REL_TOL,
)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class NumericalError(RuntimeError):
    """A numerical procedure failed to produce a trustworthy result."""


class IntegrationError(NumericalError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float, abs_error: float):
        super().__init__(f"{message} (best estimate {estimate!r} +/- {abs_error:.3g})")
        self.estimate = estimate
        self.abs_error = abs_error


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for adaptive quadrature."""
    relative_tolerance: float = DEFAULT_REL_TOL
    absolute_tolerance: float = DEFAULT_ABS_TOL
    max_subdivisions: int = DEFAULT_MAX_SUBDIVISIONS

    def __post_init__(self):
        if not (self.relative_tolerance > 0 and self.absolute_tolerance > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


def erfc(x: float) -> float:
    """Complementary error function."""
    return float(special.erfc(x))


def normal_cdf(x):
    """Standard normal cdf, vectorized."""
    return special.ndtr(x)


def normal_log_pdf(x, mean, variance):
    """Log density of N(mean, variance), vectorized."""
    x = np.asarray(x, dtype=float)
    return -0.5 * (x - mean) ** 2 / variance - 0.5 * np.log(variance) - LOG_SQRT_2PI


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if a <= 0 or b <= 0:
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    return float(special.betainc(a, b, x))


def integrate(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    spec: Optional[QuadratureSpec] = None,
    *,
    center: float = 0.0,
    scale: float = 1.0,
    points: Optional[Sequence[float]] = None,
) -> float:
    """Integrate f over [lower, upper] by adaptive Gauss-Kronrod subdivision.

    Infinite bounds are mapped onto (-1, 1) with x = center + scale * artanh(t),
    dx = scale / (1 - t^2) dt. `scale` should be of the order of the integrand's
    effective half-width. `points` marks known kinks (finite ranges only).

    Raises IntegrationError, carrying the best estimate, when max_subdivisions
    is exhausted before the tolerance is met.
    """
    spec = spec or QuadratureSpec()
    if not lower < upper:
        raise ValueError(f"need lower < upper, got [{lower}, {upper}]")

    if math.isfinite(lower) and math.isfinite(upper):
        integrand, a, b = f, lower, upper
    else:
        if scale <= 0:
            raise ValueError("scale must be positive")
        a = -1.0 if lower == -math.inf else math.tanh((lower - center) / scale)
        b = 1.0 if upper == math.inf else math.tanh((upper - center) / scale)
        points = None

        def integrand(t: float) -> float:
            x = center + scale * math.atanh(t)
            if not math.isfinite(x):
                return 0.0
            value = f(x) * scale / (1.0 - t * t)
            return value if math.isfinite(value) else 0.0

    result = quad(
        integrand,
        a,
        b,
        epsabs=spec.absolute_tolerance,
        epsrel=spec.relative_tolerance,
        limit=spec.max_subdivisions,
        points=points,
        full_output=1,
    )
    value, abs_error = float(result[0]), float(result[1])
    if len(result) > 3:
        raise IntegrationError(str(result[3]).splitlines()[0], value, abs_error)
    return value


def maximize_concave(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    tol: float = DEFAULT_CONCAVE_TOL,
    derivative: Optional[Callable[[float], float]] = None,
) -> tuple[float, float]:
    """Maximize a concave function on [lower, upper].

    With an analytic derivative the maximizer is found by bisection on the
    derivative sign; otherwise by golden-section search. A boundary point is
    returned exactly when the derivative keeps one sign on the interval.

    Returns (argmax, max).
    """
    if lower > upper:
        raise ValueError(f"empty interval [{lower}, {upper}]")
    if lower == upper:
        return lower, f(lower)

    if derivative is None:
        return _golden_section(f, lower, upper, tol)

    if not derivative(lower) > 0:
        return lower, f(lower)
    if not derivative(upper) < 0:
        return upper, f(upper)
    x = float(bisect(derivative, lower, upper, xtol=tol))
    return x, f(x)


def _golden_section(f, lower, upper, tol):
    a, b = lower, upper
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)

    x = 0.5 * (a + b)
    fx = f(x)
    # Boundary maxima: golden section only approaches them
    for edge in (lower, upper):
        fe = f(edge)
        if fe >= fx:
            x, fx = edge, fe
    return x, fx
