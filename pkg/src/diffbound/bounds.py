"""Girsanov-functional bounds for transition functions.

For a unit-diffusion process with drift ``mu`` and a reference process ``Y``
(Brownian motion in case A, Bessel(d) in case B) define

    G(y)  = integral of mu(z) [- (d-1)/(2z)] dz
    h(y)  = mu'(y) + mu(y)^2 [- (d-1)(d-3)/(4 y^2)]
    L, M  = ess sup h, ess inf h

Then ``exp(-tL/2) <= p_X(t,x,w) / (exp(G(w)-G(x)) p_Y(t,x,w)) <= exp(-tM/2)``
and analogous statements hold for distribution functions and for the
density of the endpoint on the event that the path crossed a level.

L and M are estimated on a grid with golden-section refinement plus a tail
probe toward each endpoint.  A numerically estimated M can sit slightly
above the true infimum, which makes the upper bound approximate; pass
analytic values through :meth:`LMEstimate.with_overrides` when rigour
matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._numerics import GOLDEN_TOL, gauss_legendre, golden_section, tail_trend
from .errors import InputError, NumericalError, UnsupportedOperationError
from .model import TransformedDiffusion
from .reference import ReferenceKernel, ref_cdf, ref_crossing_density, ref_density

DEFAULT_GRID = 2001
_TAIL_PROBES = 16


@dataclass(frozen=True)
class LMEstimate:
    """Essential extrema of the N-integrand.

    ``L`` may be +inf and ``M`` -inf.  ``arg_L``/``arg_M`` locate the
    extremum; for a divergence they hold the endpoint it diverges toward.
    """

    L: float
    M: float
    arg_L: float
    arg_M: float
    domain: tuple[float, float]
    grid_n: int
    source: str = "grid"

    def __post_init__(self):
        if self.M > self.L:
            raise InputError(f"M={self.M} exceeds L={self.L}")

    def with_overrides(self, L: float | None = None, M: float | None = None) -> "LMEstimate":
        """Replace estimated extrema by known analytic values."""
        if L is None and M is None:
            return self
        changes = {"source": "override" if L is not None and M is not None else "partial-override"}
        if L is not None:
            changes.update(L=float(L), arg_L=math.nan)
        if M is not None:
            changes.update(M=float(M), arg_M=math.nan)
        return replace(self, **changes)


@dataclass(frozen=True)
class BoundResult:
    """Bounds at one query point.

    For densities ``lower = exp(-tL/2 + g_delta) * ref_value`` (and the same
    for ``upper`` with M).  Distribution bounds also carry the range of
    ``G(y) - G(x)`` used and the upper bound before clamping to 1.
    """

    lower: float
    upper: float
    ref_value: float
    g_delta: float
    lm: LMEstimate
    degenerate_lower: bool
    degenerate_upper: bool
    upper_raw: float | None = None
    g_range: tuple[float, float] | None = None

    @property
    def flags(self) -> str:
        out = []
        if self.degenerate_lower:
            out.append("degenerate_lower")
        if self.degenerate_upper:
            out.append("degenerate_upper")
        if self.upper_raw is not None and self.upper_raw > self.upper:
            out.append("clamped_upper")
        return "|".join(out)


def _check_kernel(td: TransformedDiffusion, kernel: ReferenceKernel) -> None:
    if kernel.case_tag != td.case.tag:
        raise InputError(
            f"a {kernel.kind} reference kernel does not match a case-{td.case.tag} diffusion"
        )


def _check_interior(td: TransformedDiffusion, *points: float) -> None:
    for p in points:
        if not (td.case.lower < p < td.case.upper):
            raise InputError(f"{p} is not an interior point of the diffusion interval")


def g_delta(td: TransformedDiffusion, kernel: ReferenceKernel, x: float, w: float) -> float:
    """G(w) - G(x); the anchor of G cancels."""
    _check_kernel(td, kernel)
    _check_interior(td, x, w)
    value = td.mu_integral(float(x), float(w))
    if kernel.kind == "bessel":
        value -= 0.5 * (kernel.d - 1.0) * math.log(w / x)
    return value


def g_delta_many(td: TransformedDiffusion, kernel: ReferenceKernel, x: float, ws) -> np.ndarray:
    """Vectorised G(w) - G(x) by cumulative Gauss-Legendre over the sorted points.

    Non-interior or non-finite entries of ``ws`` give NaN.
    """
    _check_kernel(td, kernel)
    _check_interior(td, x)
    ws = np.asarray(ws, dtype=float)
    ok = np.isfinite(ws) & (ws > td.case.lower)
    if not np.any(ok):
        return np.full(ws.shape, np.nan)
    vals = ws[ok]
    lo, hi = min(vals.min(), x), max(vals.max(), x)
    if td.case.tag == "B":
        fill = np.geomspace(lo, hi, 2001)
    else:
        fill = np.linspace(lo, hi, 2001)
    kinks = [k for k in td.kinks if lo < k < hi]
    nodes = np.unique(np.concatenate([vals, [x], fill, kinks]))
    cells = gauss_legendre(td.mu_unchecked, nodes[:-1], nodes[1:])
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    at = np.searchsorted(nodes, vals)
    base = cum[np.searchsorted(nodes, x)]
    out = np.full(ws.shape, np.nan)
    delta = cum[at] - base
    if kernel.kind == "bessel":
        delta -= 0.5 * (kernel.d - 1.0) * np.log(vals / x)
    out[ok] = delta
    return out


def _n_terms(td: TransformedDiffusion, kernel: ReferenceKernel, y, checked: bool):
    if checked:
        mu, dmu = td.mu(y), td.dmu(y)
    else:
        mu, dmu = td.mu_unchecked(y), td.dmu_unchecked(y)
    with np.errstate(over="ignore", invalid="ignore"):
        square = mu * mu
        centrifugal = 0.0
        if kernel.kind == "bessel":
            centrifugal = 0.25 * (kernel.d - 1.0) * (kernel.d - 3.0) / (np.asarray(y, dtype=float) ** 2)
    return dmu, square, centrifugal


def n_integrand(td: TransformedDiffusion, kernel: ReferenceKernel, y, *, checked: bool = True):
    """h(y) = mu'(y) + mu(y)^2, minus (d-1)(d-3)/(4y^2) in case B."""
    _check_kernel(td, kernel)
    dmu, square, centrifugal = _n_terms(td, kernel, y, checked)
    with np.errstate(over="ignore", invalid="ignore"):
        h = dmu + square - centrifugal
    return float(h) if np.ndim(y) == 0 else h


def _reliable_prefix(td, kernel, probes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """h at the probes, cut at the first probe where cancellation swamps the value."""
    with np.errstate(all="ignore"):
        dmu, square, centrifugal = _n_terms(td, kernel, probes, False)
        h = dmu + square - centrifugal
        scale = np.abs(dmu) + np.abs(square) + np.abs(centrifugal)
        noisy = np.finfo(float).eps * scale > 1e-9 * np.maximum(1.0, np.abs(h))
    noisy &= np.isfinite(h)
    stop = int(np.argmax(noisy)) if np.any(noisy) else len(probes)
    return probes[:stop], np.atleast_1d(h)[:stop]


def default_domain(case_tag: str, x: float = 0.0, t: float = 1.0) -> tuple[float, float]:
    r = max(10.0, abs(x) + 10.0 * math.sqrt(t))
    if case_tag == "A":
        return (-r, r)
    return (1e-4 * r, r)


def estimate_lm(td: TransformedDiffusion, kernel: ReferenceKernel, domain: tuple[float, float] | None = None,
                n: int = DEFAULT_GRID, refine_tol: float = GOLDEN_TOL, *, x: float = 0.0,
                t: float = 1.0) -> LMEstimate:
    """Estimate L = sup h and M = inf h.

    With ``domain=None`` the default search box is used and h is also probed
    geometrically toward both endpoints of the diffusion interval, so that
    divergence is reported as L = +inf or M = -inf.  An explicit ``domain``
    restricts the extrema to that closed range and skips the tail probes.
    """
    _check_kernel(td, kernel)
    restricted = domain is not None
    lo, hi = domain if restricted else default_domain(td.case.tag, x, t)
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        if lo == hi and restricted:
            hi = lo
        else:
            raise InputError(f"empty search domain [{lo}, {hi}]")
    if not (td.case.lower < lo and hi < td.case.upper):
        raise InputError(f"search domain [{lo}, {hi}] is not inside the diffusion interval")
    if lo == hi:
        grid = np.array([lo])
    elif td.case.tag == "B" and hi / lo > 10.0:
        grid = np.geomspace(lo, hi, n)
    else:
        grid = np.linspace(lo, hi, n)
    h = n_integrand(td, kernel, grid, checked=False)
    h = np.atleast_1d(h)
    if not np.all(np.isfinite(h)):
        bad = grid[~np.isfinite(h)][0]
        raise NumericalError(f"N-integrand is not finite at y={bad}")

    def h_scalar(y):
        v = n_integrand(td, kernel, y, checked=False)
        return v if math.isfinite(v) else math.nan

    def refine(i: int, sign: float) -> tuple[float, float]:
        # sign=+1 refines a minimum, -1 a maximum
        best_y, best_v = grid[i], h[i]
        if len(grid) == 1:
            return best_y, best_v
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        y, v = golden_section(lambda u: sign * h_scalar(u), a, b, refine_tol)
        v = sign * v
        if math.isfinite(v) and sign * v < sign * best_v:
            return y, v
        return best_y, best_v

    arg_M, M = refine(int(np.argmin(h)), 1.0)
    arg_L, L = refine(int(np.argmax(h)), -1.0)

    if not restricted:
        ends = []
        if td.case.tag == "A":
            ends.append((-math.inf, lo * 2.0 ** np.arange(1, _TAIL_PROBES + 1)))
        else:
            ends.append((0.0, lo * 2.0 ** -np.arange(1, _TAIL_PROBES + 1, dtype=float)))
        ends.append((math.inf, hi * 2.0 ** np.arange(1, _TAIL_PROBES + 1)))
        for endpoint, probes in ends:
            probes, values = _reliable_prefix(td, kernel, probes)
            if values.size == 0:
                continue
            trend = tail_trend(values) if values.size >= 8 else 0
            if trend > 0:
                L, arg_L = math.inf, endpoint
            elif trend < 0:
                M, arg_M = -math.inf, endpoint
            finite = np.isfinite(values)
            if np.any(finite):
                fv, fp = values[finite], probes[finite]
                if trend <= 0 and math.isfinite(L) and fv.max() > L:
                    L, arg_L = float(fv.max()), float(fp[np.argmax(fv)])
                if trend >= 0 and math.isfinite(M) and fv.min() < M:
                    M, arg_M = float(fv.min()), float(fp[np.argmin(fv)])
    return LMEstimate(float(L), float(M), float(arg_L), float(arg_M), (lo, hi), len(grid))


def _scaled(exponent: float, ref_value: float) -> float:
    if ref_value == 0.0:
        return 0.0
    try:
        return math.exp(exponent) * ref_value
    except OverflowError:
        return math.inf


def density_bounds(td: TransformedDiffusion, kernel: ReferenceKernel, t: float, x: float, w: float,
                   lm: LMEstimate) -> BoundResult:
    """Lower and upper bounds for the transition density p_X(t, x, w)."""
    if not t > 0:
        raise InputError(f"time must be positive, got {t}")
    gd = g_delta(td, kernel, x, w)
    p = ref_density(kernel, t, x, w)
    degenerate_lower = math.isinf(lm.L)
    degenerate_upper = math.isinf(lm.M)
    lower = 0.0 if degenerate_lower else _scaled(-0.5 * t * lm.L + gd, p)
    upper = math.inf if degenerate_upper else _scaled(-0.5 * t * lm.M + gd, p)
    return BoundResult(lower, upper, p, gd, lm, degenerate_lower, degenerate_upper)


def asymptotic_density(td: TransformedDiffusion, kernel: ReferenceKernel, t: float, x: float, w: float) -> float:
    """Small-time approximation exp(G(w) - G(x)) p_Y(t, x, w).

    Its relative error is at most exp(t max(|L|, |M|)/2) - 1, so it is only a
    uniform approximation when L and M are finite.
    """
    if not t > 0:
        raise InputError(f"time must be positive, got {t}")
    return _scaled(g_delta(td, kernel, x, w), ref_density(kernel, t, x, w))


def _g_extrema(td: TransformedDiffusion, kernel: ReferenceKernel, x: float, w: float, t: float,
               tail: bool, n: int) -> tuple[float, float]:
    """inf and sup of G(y) - G(x) over (lower endpoint, w] or [w, upper endpoint)."""
    r = max(10.0, abs(x) + 10.0 * math.sqrt(t))
    if tail:
        grid = np.linspace(w, w + r, n)
        probes = w + r * 2.0 ** np.arange(1, _TAIL_PROBES + 1)
    elif td.case.tag == "A":
        grid = np.linspace(w - r, w, n)
        probes = w - r * 2.0 ** np.arange(1, _TAIL_PROBES + 1)
    else:
        start = min(w, 1e-4 * r)
        grid = np.geomspace(start, w, n) if start < w else np.array([w])
        probes = start * 2.0 ** -np.arange(1, _TAIL_PROBES + 1, dtype=float)
    vals = g_delta_many(td, kernel, x, grid)
    gw = g_delta(td, kernel, x, w)
    vals[np.argmin(np.abs(grid - w))] = gw
    if not np.all(np.isfinite(vals)):
        raise NumericalError("G is not finite on the distribution-bound search range")
    with np.errstate(all="ignore"):
        tail_vals = g_delta_many(td, kernel, x, probes)
    trend = tail_trend(tail_vals)

    def exact(y):
        try:
            return g_delta(td, kernel, x, y)
        except (NumericalError, InputError):
            return math.nan

    def refine(i: int, sign: float) -> float:
        best = vals[i]
        if len(grid) < 3:
            return best
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        _, v = golden_section(lambda y: sign * exact(y), a, b)
        v = sign * v
        return v if math.isfinite(v) and sign * v < sign * best else best

    g_min = refine(int(np.argmin(vals)), 1.0)
    g_max = refine(int(np.argmax(vals)), -1.0)
    finite = tail_vals[np.isfinite(tail_vals)]
    if trend < 0:
        g_min = -math.inf
    elif finite.size:
        g_min = min(g_min, float(finite.min()))
    if trend > 0:
        g_max = math.inf
    elif finite.size:
        g_max = max(g_max, float(finite.max()))
    return g_min, g_max


def distribution_bounds(td: TransformedDiffusion, kernel: ReferenceKernel, t: float, x: float, w: float,
                        lm: LMEstimate, tail: bool = False, n: int = 801) -> BoundResult:
    """Bounds for P_X(t, x, w) = P(X_t <= w), or for P(X_t > w) when ``tail``.

    The upper bound is clamped to 1; the unclamped value is ``upper_raw``.
    """
    if not t > 0:
        raise InputError(f"time must be positive, got {t}")
    _check_interior(td, x, w)
    g_min, g_max = _g_extrema(td, kernel, x, w, t, tail, n)
    if tail:
        if kernel.kind == "brownian":
            prob = 0.5 * math.erfc((w - x) / math.sqrt(2.0 * t))
        else:
            prob = 1.0 - ref_cdf(kernel, t, x, w)
    else:
        prob = ref_cdf(kernel, t, x, w)
    degenerate_lower = math.isinf(lm.L)
    degenerate_upper = math.isinf(lm.M)
    if degenerate_lower or g_min == -math.inf:
        lower = 0.0
    else:
        lower = _scaled(g_min - 0.5 * t * lm.L, prob)
    if degenerate_upper or g_max == math.inf:
        upper_raw = math.inf if prob > 0 else 0.0
    else:
        upper_raw = _scaled(g_max - 0.5 * t * lm.M, prob)
    return BoundResult(lower, min(1.0, upper_raw), prob, g_delta(td, kernel, x, w), lm,
                       degenerate_lower, degenerate_upper, upper_raw=upper_raw, g_range=(g_min, g_max))


def crossing_density_bounds(td: TransformedDiffusion, kernel: ReferenceKernel, t: float, x: float,
                            level: float, w: float, lm: LMEstimate) -> BoundResult:
    """Bounds for the w-density of {max_{s<=t} X_s >= level, X_t <= w} (case A only).

    When the paths of interest stay inside a known range, passing an ``lm``
    estimated over that range tightens both bounds.
    """
    if td.case.tag != "A" or kernel.kind != "brownian":
        raise UnsupportedOperationError("crossing bounds are only available for diffusions on the real line")
    if not t > 0:
        raise InputError(f"time must be positive, got {t}")
    gd = g_delta(td, kernel, x, w)
    eta = ref_crossing_density(kernel, t, x, level, w)
    degenerate_lower = math.isinf(lm.L)
    degenerate_upper = math.isinf(lm.M)
    lower = 0.0 if degenerate_lower else _scaled(-0.5 * t * lm.L + gd, eta)
    upper = math.inf if degenerate_upper else _scaled(-0.5 * t * lm.M + gd, eta)
    return BoundResult(lower, upper, eta, gd, lm, degenerate_lower, degenerate_upper)


def upper_bound_for_d(td: TransformedDiffusion, d: float, t: float, x: float, w: float | Sequence[float],
                      objective: str = "point", lm_domain: tuple[float, float] | None = None) -> float:
    """The quantity minimised by :func:`optimize_d` for one Bessel dimension.

    ``objective="point"`` gives the upper density bound at ``w``;
    ``"integrated"`` the trapezoidal integral of the upper bound over the
    grid ``w``.
    """
    kernel = ReferenceKernel.bessel(d)
    lm = estimate_lm(td, kernel, lm_domain, x=x, t=t)
    if objective == "point":
        return density_bounds(td, kernel, t, x, float(w), lm).upper
    if objective == "integrated":
        ws = np.asarray(w, dtype=float)
        if ws.ndim != 1 or ws.size < 2:
            raise InputError("integrated objective needs a grid of at least two w values")
        ups = np.array([density_bounds(td, kernel, t, x, wi, lm).upper for wi in ws])
        if not np.all(np.isfinite(ups)):
            return math.inf
        return float(np.sum(0.5 * (ups[1:] + ups[:-1]) * np.diff(ws)))
    raise InputError(f"unknown objective {objective!r}")


def optimize_d(td: TransformedDiffusion, t: float, x: float, w, objective: str = "point",
               d_range: tuple[float, float] = (3.0, 12.0), scan: int = 37,
               lm_domain: tuple[float, float] | None = None) -> float:
    """Bessel dimension in ``d_range`` minimising the upper bound (case B only).

    A uniform scan locates the best cell, which golden-section search then
    refines.  Ties go to the smaller dimension.
    """
    if td.case.tag != "B":
        raise UnsupportedOperationError("the reference dimension only exists for diffusions on (0, inf)")
    d_lo, d_hi = float(d_range[0]), float(d_range[1])
    if not 3.0 <= d_lo <= d_hi:
        raise InputError(f"d_range must satisfy 3 <= lo <= hi, got {d_range}")

    def f(d: float) -> float:
        try:
            v = upper_bound_for_d(td, d, t, x, w, objective, lm_domain)
        except NumericalError:
            return math.inf
        return v if not math.isnan(v) else math.inf

    if d_lo == d_hi:
        return d_lo
    ds = np.linspace(d_lo, d_hi, scan)
    vals = np.array([f(d) for d in ds])
    i = int(np.argmin(vals))
    best_d, best_v = float(ds[i]), float(vals[i])
    if math.isfinite(best_v):
        a, b = ds[max(i - 1, 0)], ds[min(i + 1, scan - 1)]
        d_star, v_star = golden_section(f, float(a), float(b), 1e-6)
        if v_star < best_v:
            best_d = d_star
    return best_d
