"""Small numerical helpers shared by the model, bounds and mc modules."""

from __future__ import annotations

import math
import warnings
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import NumericalError

QUAD_ABS_TOL = 1e-10
GOLDEN_TOL = 1e-8
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def quad(f: Callable[[float], float], a: float, b: float, *, epsabs: float = QUAD_ABS_TOL,
         epsrel: float = 1e-12, points: Sequence[float] | None = None, limit: int = 200,
         error: type[Exception] = NumericalError) -> float:
    """Adaptive quadrature that raises instead of warning on failure."""
    if a == b:
        return 0.0
    kwargs = {"epsabs": epsabs, "epsrel": epsrel, "limit": limit}
    if points is not None and math.isfinite(a) and math.isfinite(b):
        lo, hi = min(a, b), max(a, b)
        pts = [p for p in points if lo < p < hi]
        if pts:
            kwargs["points"] = pts
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(f, a, b, **kwargs)
        except integrate.IntegrationWarning as exc:
            # accept a result whose own error estimate still meets the tolerance
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                value, abserr = integrate.quad(f, a, b, **kwargs)
            if not (math.isfinite(value) and abserr <= max(epsabs, epsrel * abs(value)) * 10):
                raise error(f"quadrature over [{a}, {b}] did not converge: {exc}") from None
        except (ZeroDivisionError, OverflowError, ArithmeticError) as exc:
            raise error(f"quadrature over [{a}, {b}] failed: {exc}") from exc
    if not math.isfinite(value):
        raise error(f"quadrature over [{a}, {b}] is not finite")
    return value


def gauss_legendre(f: Callable[[np.ndarray], np.ndarray], a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """20-point Gauss-Legendre integral of a vectorised ``f`` over each [a_i, b_i]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    y = mid[..., None] + half[..., None] * _GL_NODES
    return half * (f(y) @ _GL_WEIGHTS)


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = GOLDEN_TOL) -> tuple[float, float]:
    """Minimise ``f`` on [a, b]; returns (argmin, min)."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol * max(1.0, abs(c) + abs(d)) * 0.5:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def tail_trend(values: Sequence[float], window: int = 8) -> int:
    """Classify a sequence of probes taken geometrically toward an endpoint.

    Returns +1 if the values diverge upward, -1 if downward and 0 when they
    look bounded.  Divergence means the last ``window`` values are strictly
    monotone and the steps are not shrinking (geometric mean of successive
    step ratios >= 0.95), which separates ``log`` or power growth from
    convergence to a finite limit.  A final infinite probe counts as
    divergence in its own direction; fewer than ``window`` probes never do.
    """
    v = np.asarray(values, dtype=float)[-window:]
    if np.any(np.isnan(v)):
        return 0
    if np.isposinf(v[-1]):
        return 1
    if np.isneginf(v[-1]):
        return -1
    if not np.all(np.isfinite(v)) or v.size < window:
        return 0
    steps = np.diff(v)
    if np.all(steps > 0):
        sign = 1
    elif np.all(steps < 0):
        sign = -1
    else:
        return 0
    ratios = np.abs(steps[1:]) / np.abs(steps[:-1])
    if np.exp(np.mean(np.log(ratios))) >= 0.95:
        return sign
    return 0
