"""Transition kernels of the reference processes.

Case A uses Brownian motion.  Case B uses the Bessel process of real
dimension ``d >= 3``, ``dR = (d-1)/(2R) dt + dW``, whose density is

    p(t, x, w) = w (w/x)^eta / t * exp(-(x^2 + w^2)/(2t)) * I_eta(x w / t),

with ``eta = d/2 - 1``.  It is evaluated with the exponentially scaled
Bessel function so that ``x w / t`` can be large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._numerics import quad
from .errors import InputError, UnsupportedOperationError

SERIES_LIMIT = 30.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _series_log_terms(order: float, z: float):
    # log of (z/2)^(order+2k) / (k! Gamma(order+k+1))
    log_half = math.log(0.5 * z)
    k = 0
    while True:
        yield (order + 2 * k) * log_half - math.lgamma(k + 1.0) - math.lgamma(order + k + 1.0)
        k += 1


def bessel_i_series(order: float, z: float, scaled: bool = False) -> float:
    """Ascending power series for I_order(z) (optionally times exp(-z))."""
    if z == 0.0:
        return _at_zero(order)
    shift = z if scaled else 0.0
    terms = []
    peak = -math.inf
    for k, log_term in enumerate(_series_log_terms(order, z)):
        terms.append(log_term)
        peak = max(peak, log_term)
        if k > 0.5 * z + 2 and log_term < peak - 40.0:
            break
    total = math.fsum(math.exp(lt - peak) for lt in terms)
    return math.exp(peak - shift) * total


def bessel_i_asymptotic(order: float, z: float, scaled: bool = False) -> float:
    """Large-argument expansion e^z / sqrt(2 pi z) * sum (-1)^k a_k(order) / z^k."""
    mu = 4.0 * order * order
    term = 1.0
    total = 1.0
    for k in range(1, 200):
        new = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        if abs(new) >= abs(term) or new == 0.0:
            break
        term = new
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    log_prefix = -0.5 * math.log(z) - _LOG_SQRT_2PI
    if scaled:
        return math.exp(log_prefix) * total
    if z > 700.0:
        return math.inf
    return math.exp(z + log_prefix) * total


def _at_zero(order: float) -> float:
    if order == 0.0:
        return 1.0
    return 0.0 if order > 0 else math.inf


def bessel_i(order: float, z: float, scaled: bool = False) -> float:
    """Modified Bessel function of the first kind, I_order(z), for order >= -1/2, z >= 0.

    With ``scaled=True`` returns ``exp(-z) * I_order(z)``, which stays finite
    for large ``z``.
    """
    order = float(order)
    z = float(z)
    if order < -0.5:
        raise InputError(f"order must be >= -0.5, got {order}")
    if not z >= 0.0 or math.isinf(z):
        raise InputError(f"argument must be finite and >= 0, got {z}")
    if z <= SERIES_LIMIT:
        return bessel_i_series(order, z, scaled)
    return bessel_i_asymptotic(order, z, scaled)


@dataclass(frozen=True)
class ReferenceKernel:
    """Reference process: ``ReferenceKernel.brownian()`` or ``ReferenceKernel.bessel(d)``."""

    kind: str
    d: float | None = None

    def __post_init__(self):
        if self.kind == "brownian":
            if self.d is not None:
                raise InputError("Brownian kernel takes no dimension")
        elif self.kind == "bessel":
            if self.d is None or not self.d >= 3.0 or not math.isfinite(self.d):
                raise InputError(f"Bessel dimension must satisfy d >= 3, got {self.d}")
            object.__setattr__(self, "d", float(self.d))
        else:
            raise InputError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def brownian(cls) -> "ReferenceKernel":
        return cls("brownian")

    @classmethod
    def bessel(cls, d: float) -> "ReferenceKernel":
        return cls("bessel", d)

    @property
    def eta(self) -> float:
        if self.kind != "bessel":
            raise UnsupportedOperationError("eta is only defined for the Bessel kernel")
        return 0.5 * self.d - 1.0

    @property
    def case_tag(self) -> str:
        return "A" if self.kind == "brownian" else "B"

    def drift(self, y):
        """Drift of the reference SDE."""
        if self.kind == "brownian":
            return np.zeros_like(np.asarray(y, dtype=float)) if np.ndim(y) else 0.0
        return 0.5 * (self.d - 1.0) / y


def _check_args(kernel: ReferenceKernel, t: float, x: float, w: float) -> None:
    if not t > 0 or not math.isfinite(t):
        raise InputError(f"time must be positive and finite, got {t}")
    if kernel.kind == "bessel":
        if not x > 0:
            raise InputError(f"Bessel kernel needs x > 0, got {x}")
        if not w >= 0:
            raise InputError(f"Bessel kernel needs w >= 0, got {w}")


def _bessel_density(eta: float, t: float, x: float, w: float) -> float:
    if w == 0.0:
        return 0.0
    if math.isinf(w):
        return 0.0
    z = x * w / t
    log_pref = math.log(w) + eta * math.log(w / x) - math.log(t) - (x - w) ** 2 / (2.0 * t)
    return math.exp(log_pref) * bessel_i(eta, z, scaled=True)


def ref_density(kernel: ReferenceKernel, t: float, x: float, w):
    """Transition density of the reference process from ``x`` to ``w`` in time ``t``."""
    if np.ndim(w):
        return np.array([ref_density(kernel, t, x, float(wi)) for wi in np.ravel(w)]).reshape(np.shape(w))
    t, x, w = float(t), float(x), float(w)
    _check_args(kernel, t, x, w)
    if kernel.kind == "brownian":
        return math.exp(-((w - x) ** 2) / (2.0 * t) - 0.5 * math.log(t) - _LOG_SQRT_2PI)
    return _bessel_density(kernel.eta, t, x, w)


def ref_cdf(kernel: ReferenceKernel, t: float, x: float, w):
    """P(Y_t <= w | Y_0 = x) for the reference process."""
    if np.ndim(w):
        return np.array([ref_cdf(kernel, t, x, float(wi)) for wi in np.ravel(w)]).reshape(np.shape(w))
    t, x, w = float(t), float(x), float(w)
    if kernel.kind == "brownian":
        _check_args(kernel, t, x, 0.0)
        return 0.5 * math.erfc(-(w - x) / math.sqrt(2.0 * t))
    if w <= 0.0:
        _check_args(kernel, t, x, 0.0)
        return 0.0
    _check_args(kernel, t, x, w)
    eta = kernel.eta
    sd = math.sqrt(t)
    # the mass sits within a few sd of max(x, sqrt(t)); integrate the far tail separately
    centre = max(x, sd)
    cut = centre + 40.0 * sd
    pts = [max(centre + k * sd, 1e-300) for k in range(-8, 9)]

    def dens(z):
        return _bessel_density(eta, t, x, z)

    if w <= cut:
        return min(1.0, quad(dens, 0.0, w, epsabs=1e-11, points=pts))
    upper_tail = quad(dens, cut, w, epsabs=1e-13) if math.isfinite(w) else quad(dens, cut, math.inf, epsabs=1e-13)
    return min(1.0, quad(dens, 0.0, cut, epsabs=1e-11, points=pts) + upper_tail)


def ref_crossing_density(kernel: ReferenceKernel, t: float, x: float, level: float, w):
    """w-density of {max of the path on [0, t] >= level, endpoint <= w}, Brownian only.

    When ``level < max(x, w)`` the maximum condition is implied and the plain
    transition density is returned.
    """
    if kernel.kind != "brownian":
        raise UnsupportedOperationError("crossing densities are only available for the Brownian kernel")
    if np.ndim(w):
        return np.array([ref_crossing_density(kernel, t, x, level, float(wi))
                         for wi in np.ravel(w)]).reshape(np.shape(w))
    t, x, level, w = float(t), float(x), float(level), float(w)
    _check_args(kernel, t, x, w)
    if level < max(x, w):
        return ref_density(kernel, t, x, w)
    return math.exp(-((2.0 * level - x - w) ** 2) / (2.0 * t) - 0.5 * math.log(t) - _LOG_SQRT_2PI)
