"""Diffusion models and the transform to unit diffusion coefficient.

A :class:`DiffusionSpec` describes ``dU = nu(U) dt + sigma(U) dW`` on an
interval.  :func:`build_transformed` maps it through

    F(v) = integral of 1/sigma(u) du from the anchor to v

to ``dX = mu(X) dt + dW`` with ``mu = (nu/sigma - sigma'/2) o F^{-1}``.  If
the image of the lower endpoint is finite the transform is translated so
that it maps to 0; the transformed interval is then ``(0, inf)`` (case B,
Bessel reference).  An image equal to the whole line is case A (Brownian
reference).  Anything else is rejected.

The user is responsible for non-explosiveness and for absolute continuity
of ``nu`` and ``sigma'``; neither is checked.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import expr as ex
from ._numerics import QUAD_ABS_TOL, gauss_legendre, quad, tail_trend
from .errors import (
    InputError,
    NumericalError,
    OutOfRangeError,
    SingularCoefficientError,
    UnsupportedIntervalError,
)

INVERSE_TOL = 1e-9
_BLOCK_NODES = 48
_BLOCK_WIDTH = 0.5      # x-width of inverse-table blocks on the real line
_TINY_X = 2.0 ** -30    # below this (half line) invert point by point


@dataclass(frozen=True)
class IntervalCase:
    """Which reference process applies: ``"A"`` (whole line) or ``"B"`` (half line)."""

    tag: str

    def __post_init__(self):
        if self.tag not in ("A", "B"):
            raise InputError(f"interval case must be 'A' or 'B', not {self.tag!r}")

    @property
    def lower(self) -> float:
        return -math.inf if self.tag == "A" else 0.0

    @property
    def upper(self) -> float:
        return math.inf

    def contains(self, y) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(np.all((y > self.lower) & (y < self.upper)))


CASE_A = IntervalCase("A")
CASE_B = IntervalCase("B")


def _parse_endpoint(value) -> float:
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf"):
            return math.inf
        if text == "-inf":
            return -math.inf
        raise InputError(f"interval endpoint must be numeric, 'inf' or '-inf', not {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"interval endpoint must be numeric, 'inf' or '-inf', not {value!r}")
    return float(value)


def _interior_samples(lo: float, hi: float, n: int = 64) -> np.ndarray:
    if math.isfinite(lo) and math.isfinite(hi):
        return np.linspace(lo, hi, n + 2)[1:-1]
    if math.isfinite(lo):
        return lo + np.geomspace(1e-6, 1e6, n)
    if math.isfinite(hi):
        return hi - np.geomspace(1e-6, 1e6, n)
    half = np.geomspace(1e-6, 1e6, n // 2)
    return np.concatenate([-half[::-1], [0.0], half])


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """Original process ``dU = drift(U) dt + diffusion(U) dW`` on ``interval``.

    ``anchor`` is the lower limit of the transform integral; it defaults to
    ``x0`` when given, otherwise to a point inside the interval.  The bounds
    only use differences of G, so the anchor does not affect them.
    """

    drift: ex.Node
    diffusion: ex.Node
    interval: tuple[float, float] = (-math.inf, math.inf)
    params: Mapping[str, float] = field(default_factory=dict)
    x0: float | None = None
    anchor: float | None = None

    def __post_init__(self):
        lo, hi = (float(v) for v in self.interval)
        if not lo < hi:
            raise InputError(f"empty interval ({lo}, {hi})")
        object.__setattr__(self, "interval", (lo, hi))
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        missing = (ex.parameters(self.drift) | ex.parameters(self.diffusion)) - set(self.params)
        if missing:
            raise InputError(f"unbound parameters: {', '.join(sorted(missing))}")
        if self.x0 is not None and not lo < self.x0 < hi:
            raise InputError(f"x0={self.x0} is not inside ({lo}, {hi})")
        if self.anchor is None:
            object.__setattr__(self, "anchor", self._default_anchor())
        if not lo < self.anchor < hi:
            raise InputError(f"anchor={self.anchor} is not inside ({lo}, {hi})")
        sigma = ex.compile_expr(self.diffusion, self.params, strict=False)
        values = sigma(_interior_samples(lo, hi))
        if not np.all(np.isfinite(values) & (values > 0)):
            raise InputError("diffusion coefficient must be finite and positive inside the interval")

    def _default_anchor(self) -> float:
        lo, hi = self.interval
        if self.x0 is not None:
            return float(self.x0)
        if math.isfinite(lo) and math.isfinite(hi):
            return 0.5 * (lo + hi)
        if math.isfinite(lo):
            return lo + 1.0
        if math.isfinite(hi):
            return hi - 1.0
        return 0.0

    @classmethod
    def from_strings(cls, drift: str, diffusion: str, interval=(-math.inf, math.inf),
                     params: Mapping[str, float] | None = None, x0: float | None = None,
                     anchor: float | None = None) -> "DiffusionSpec":
        return cls(ex.parse(drift), ex.parse(diffusion),
                   tuple(_parse_endpoint(v) for v in interval), dict(params or {}), x0, anchor)

    @classmethod
    def from_json(cls, doc: Mapping) -> "DiffusionSpec":
        """Build from a model document with fields drift, diffusion, params, interval, x0."""
        if not isinstance(doc, Mapping):
            raise InputError("model document must be a JSON object")
        unknown = set(doc) - {"drift", "diffusion", "params", "interval", "x0"}
        if unknown:
            raise InputError(f"unknown model fields: {', '.join(sorted(unknown))}")
        for key in ("drift", "diffusion", "interval"):
            if key not in doc:
                raise InputError(f"model is missing field {key!r}")
        interval = doc["interval"]
        if not isinstance(interval, (list, tuple)) or len(interval) != 2:
            raise InputError("interval must be a two-element array")
        params = doc.get("params", {})
        if not isinstance(params, Mapping):
            raise InputError("params must be an object")
        for name, value in params.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InputError(f"parameter {name!r} must be numeric")
        x0 = doc.get("x0")
        if x0 is not None and (isinstance(x0, bool) or not isinstance(x0, (int, float))):
            raise InputError("x0 must be numeric")
        return cls.from_strings(str(doc["drift"]), str(doc["diffusion"]), interval, params, x0)

    def to_json(self) -> dict:
        def endpoint(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        doc = {
            "drift": ex.to_string(self.drift),
            "diffusion": ex.to_string(self.diffusion),
            "params": dict(self.params),
            "interval": [endpoint(v) for v in self.interval],
        }
        if self.x0 is not None:
            doc["x0"] = self.x0
        return doc


def load_model(path: str | Path) -> DiffusionSpec:
    """Read a JSON model file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"model file {path} is not valid JSON: {exc}") from exc
    return DiffusionSpec.from_json(doc)


class Lamperti:
    """The map F and its inverse for one :class:`DiffusionSpec`.

    F is anchored at ``spec.anchor`` and, when the image of the lower
    endpoint is finite, shifted so that the lower endpoint maps to 0.
    """

    def __init__(self, spec: DiffusionSpec):
        self.spec = spec
        self.y0 = float(spec.anchor)
        self._sigma = ex.compile_expr(spec.diffusion, spec.params)
        self._sigma_raw = ex.compile_expr(spec.diffusion, spec.params, strict=False)
        self._lock = threading.Lock()
        self._blocks: dict[int, _InverseBlock] = {}
        self._inv_cache: dict[float, float] = {}
        lo, hi = spec.interval
        if not ex.depends_on_variable(spec.diffusion):
            self.scale = float(self._sigma(self.y0))
            image_lo = (lo - self.y0) / self.scale
            image_hi = (hi - self.y0) / self.scale
        else:
            self.scale = None
            image_lo = self._endpoint_image(lo, -1)
            image_hi = self._endpoint_image(hi, +1)
        if math.isinf(image_lo) and math.isinf(image_hi):
            self.case = CASE_A
            self.offset = 0.0
        elif math.isfinite(image_lo) and math.isinf(image_hi):
            self.case = CASE_B
            self.offset = -image_lo
        else:
            raise UnsupportedIntervalError(
                f"transformed interval ({image_lo}, {image_hi}) is neither the real line "
                "nor a translate of (0, inf)"
            )
        self.lower = lo

    def _inv_sigma(self, u: float) -> float:
        return 1.0 / self._sigma(u)

    def _raw(self, a: float, b: float, epsabs: float = QUAD_ABS_TOL) -> float:
        points = None
        lo, hi = min(a, b), max(a, b)
        if math.isfinite(lo) and math.isfinite(hi) and hi - lo > 64.0:
            # geometric breakpoints keep long ranges accurate
            base = max(1.0, abs(self.y0))
            steps = base * 2.0 ** np.arange(0, 80)
            cand = np.concatenate([self.y0 + steps, self.y0 - steps])
            points = [float(p) for p in cand if lo < p < hi]
        return quad(self._inv_sigma, a, b, epsabs=epsabs, points=points, error=SingularCoefficientError)

    def _endpoint_image(self, end: float, direction: int) -> float:
        """Integral of 1/sigma from the anchor to ``end``; +-inf if it diverges."""
        y0 = self.y0
        if math.isinf(end):
            scale = max(1.0, abs(y0))
            probes = y0 + direction * scale * 2.0 ** np.arange(1, 41)
        else:
            probes = end + (y0 - end) * 2.0 ** -np.arange(1, 61, dtype=float)
        partial = []
        total = 0.0
        prev = y0
        for p in probes:
            try:
                total += self._raw(prev, float(p))
            except NumericalError:
                return direction * math.inf
            partial.append(total)
            prev = float(p)
        if tail_trend(partial) != 0:
            return direction * math.inf
        if math.isinf(end):
            try:
                return self._raw(y0, end)
            except NumericalError:
                return direction * math.inf
        try:
            return self._raw(y0, end)
        except NumericalError:
            return partial[-1]

    # -- forward -----------------------------------------------------------

    def F(self, v: float) -> float:
        lo, hi = self.spec.interval
        if not lo < v < hi:
            raise OutOfRangeError(f"{v} is not inside the diffusion interval ({lo}, {hi})")
        if self.scale is not None:
            return (v - self.y0) / self.scale + self.offset
        if self.case.tag == "B" and v < self.y0:
            # short integral from the endpoint is more accurate than offset minus a long one
            # relative accuracy only: the value itself may be far below 1e-10
            return self._raw(lo, v, epsabs=0.0)
        return self.offset + self._raw(self.y0, v)

    # -- inverse -----------------------------------------------------------

    def F_inv(self, x: float) -> float:
        """Scalar inverse: geometric bracket expansion from the anchor, then
        Newton's method (F' = 1/sigma) safeguarded by bisection."""
        x = float(x)
        if not self.case.lower < x < math.inf:
            raise OutOfRangeError(f"{x} is outside the image of the transform")
        if self.scale is not None:
            return self.y0 + (x - self.offset) * self.scale
        cached = self._inv_cache.get(x)
        if cached is not None:
            return cached
        lo, hi = self.spec.interval
        y0 = self.y0
        f0 = self.F(y0)
        if x == f0:
            return y0
        step = max(1.0, abs(y0))
        a = b = None
        fa = fb = math.nan
        if x > f0:
            a, fa = y0, f0
            for k in range(1, 200):
                cand = y0 + step * 2.0**k if math.isinf(hi) else hi - (hi - y0) * 2.0**-k
                if cand >= hi or not math.isfinite(cand):
                    break
                fc = self.F(cand)
                if fc >= x:
                    b, fb = cand, fc
                    break
                a, fa = cand, fc
        else:
            b, fb = y0, f0
            for k in range(1, 200):
                cand = y0 - step * 2.0**k if math.isinf(lo) else lo + (y0 - lo) * 2.0**-k
                if cand <= lo or not math.isfinite(cand):
                    break
                fc = self.F(cand)
                if fc <= x:
                    a, fa = cand, fc
                    break
                b, fb = cand, fc
        if a is None or b is None:
            raise OutOfRangeError(f"{x} is outside the image of the transform")
        v = self._newton(x, a, b, fa, fb)
        if abs(self.F(v) - x) > INVERSE_TOL * max(1.0, abs(x)):
            raise NumericalError(f"could not invert the transform at {x}")
        self._inv_cache[x] = v
        return v

    def _newton(self, x: float, a: float, b: float, fa: float, fb: float) -> float:
        # start from the secant point; fall back to bisection when Newton leaves [a, b]
        v = a + (x - fa) * (b - a) / (fb - fa) if fb > fa else 0.5 * (a + b)
        if not a < v < b:
            v = 0.5 * (a + b)
        for _ in range(200):
            r = self.F(v) - x
            if r == 0.0:
                return v
            if r > 0:
                b = v
            else:
                a = v
            try:
                nxt = v - r * self._sigma(v)
            except (NumericalError, InputError):
                nxt = math.nan
            if not a < nxt < b:
                nxt = 0.5 * (a + b)
            if abs(nxt - v) <= 4.0 * np.finfo(float).eps * abs(v) or b - a <= 4.0 * np.finfo(float).eps * abs(b):
                return nxt
            v = nxt
        return v

    def F_inv_array(self, x) -> np.ndarray:
        """Vectorised inverse; NaN outside the image.

        The image is cut into fixed blocks (dyadic on the half line, width
        0.5 on the real line), each with its own interpolation table built on
        first use.  Because the blocks do not depend on the query, results
        are reproducible bit for bit regardless of call history, and agree
        with :meth:`F_inv` to about 1e-13.
        """
        x = np.asarray(x, dtype=float)
        if self.scale is not None:
            out = self.y0 + (x - self.offset) * self.scale
            return np.where(x > self.case.lower, out, np.nan)
        out = np.full(x.shape, np.nan)
        ok = np.isfinite(x) & (x > self.case.lower)
        if not np.any(ok):
            return out
        xs = x[ok]
        res = np.empty(xs.shape)
        if self.case.tag == "B":
            tiny = xs < _TINY_X
            for i in np.flatnonzero(tiny):
                res[i] = self._safe_scalar_inverse(xs[i])
            ids = np.frexp(xs)[1].astype(np.int64)
            ids[tiny] = np.iinfo(np.int64).min
        else:
            tiny = np.zeros(xs.shape, dtype=bool)
            ids = np.floor(xs / _BLOCK_WIDTH).astype(np.int64)
        for key in np.unique(ids[~tiny]):
            sel = ids == key
            res[sel] = self._block(int(key))(xs[sel])
        out[ok] = res
        return out

    def _safe_scalar_inverse(self, x: float) -> float:
        try:
            return self.F_inv(x)
        except (NumericalError, InputError):
            return math.nan

    def _block(self, key: int) -> "_InverseBlock":
        block = self._blocks.get(key)
        if block is None:
            with self._lock:
                block = self._blocks.get(key)
                if block is None:
                    if self.case.tag == "B":
                        lo, hi = math.ldexp(1.0, key - 1), math.ldexp(1.0, key)
                    else:
                        lo, hi = key * _BLOCK_WIDTH, (key + 1) * _BLOCK_WIDTH
                    block = _InverseBlock(self, lo, hi)
                    self._blocks[key] = block
        return block


class _InverseBlock:
    """Cubic Hermite table of F^{-1} on [x_lo, x_hi] with a Newton polish."""

    def __init__(self, lam: Lamperti, x_lo: float, x_hi: float):
        v_lo, v_hi = lam.F_inv(x_lo), lam.F_inv(x_hi)
        nodes = np.linspace(v_lo, v_hi, _BLOCK_NODES)
        sigma = lam._sigma_raw
        cells = gauss_legendre(lambda u: 1.0 / sigma(u), nodes[:-1], nodes[1:])
        values = x_lo + np.concatenate([[0.0], np.cumsum(cells)])
        if not np.all(np.diff(values) > 0):
            raise NumericalError("transform is not strictly increasing on an inverse-table block")
        self.nodes = nodes
        self.values = values
        self.slopes = sigma(nodes)
        self.sigma = sigma

    def __call__(self, x: np.ndarray) -> np.ndarray:
        i = np.clip(np.searchsorted(self.values, x, side="right") - 1, 0, len(self.nodes) - 2)
        v0, v1 = self.nodes[i], self.nodes[i + 1]
        f0, f1 = self.values[i], self.values[i + 1]
        # cubic Hermite start (dv/dx = sigma) then one Newton polish
        hx = f1 - f0
        s = (x - f0) / hx
        s2, s3 = s * s, s * s * s
        v = ((2 * s3 - 3 * s2 + 1) * v0 + (s3 - 2 * s2 + s) * hx * self.slopes[i]
             + (-2 * s3 + 3 * s2) * v1 + (s3 - s2) * hx * self.slopes[i + 1])
        v = np.clip(v, v0, v1)
        fv = f0 + gauss_legendre(lambda u: 1.0 / self.sigma(u), v0, v)
        return np.clip(v - (fv - x) * self.sigma(v), v0, v1)


class TransformedDiffusion:
    """Unit-diffusion process ``dX = mu(X) dt + dW`` on the case-A or case-B interval.

    ``mu`` and ``dmu`` accept floats or arrays.  The ``*_unchecked`` variants
    return NaN instead of raising on domain violations (for grids and
    simulation).
    """

    def __init__(self, mu: Callable, dmu: Callable, case: IntervalCase, provenance: str, *,
                 mu_unchecked: Callable | None = None, dmu_unchecked: Callable | None = None,
                 drift_expr: ex.Node | None = None,
                 params: Mapping[str, float] | None = None, spec: DiffusionSpec | None = None,
                 lamperti: Lamperti | None = None, x0: float | None = None,
                 mu_integral: Callable[[float, float], float] | None = None,
                 kinks: tuple[float, ...] = ()):
        self.mu = mu
        self.dmu = dmu
        self.case = case
        self.provenance = provenance
        self.mu_unchecked = mu_unchecked or mu
        self.dmu_unchecked = dmu_unchecked or dmu
        self.drift_expr = drift_expr
        self.params = dict(params or {})
        self.spec = spec
        self.lamperti = lamperti
        self.x0 = x0
        self.kinks = kinks
        self._mu_integral = mu_integral

    def __repr__(self) -> str:
        drift = ex.to_string(self.drift_expr) if self.drift_expr is not None else "?"
        return f"TransformedDiffusion(case={self.case.tag}, {self.provenance}, drift={drift})"

    def mu_integral(self, x: float, w: float) -> float:
        """Integral of mu from x to w."""
        if self._mu_integral is not None:
            return self._mu_integral(x, w)
        return quad(lambda z: float(self.mu(z)), x, w, points=self.kinks)

    @classmethod
    def from_drift(cls, drift: str | ex.Node, params: Mapping[str, float] | None = None,
                   case: IntervalCase | str = CASE_A, x0: float | None = None) -> "TransformedDiffusion":
        """Unit-diffusion process given directly by its drift expression."""
        node = ex.parse(drift) if isinstance(drift, str) else drift
        params = dict(params or {})
        case = case if isinstance(case, IntervalCase) else IntervalCase(case)
        missing = ex.parameters(node) - set(params)
        if missing:
            raise InputError(f"unbound parameters: {', '.join(sorted(missing))}")
        mu = ex.compile_expr(node, params)
        dmu = ex.compile_expr(ex.differentiate(node), params)
        samples = _interior_samples(case.lower, case.upper)
        values = ex.compile_expr(node, params, strict=False)(samples)
        if not np.all(np.isfinite(values)):
            raise InputError("drift must be finite inside the diffusion interval")
        return cls(mu, dmu, case, "direct",
                   mu_unchecked=ex.compile_expr(node, params, strict=False),
                   dmu_unchecked=ex.compile_expr(ex.differentiate(node), params, strict=False),
                   drift_expr=node, params=params, x0=x0, kinks=_kink_points(node, params))


def _kink_points(node: ex.Node, params: Mapping[str, float]) -> tuple[float, ...]:
    """Kinks of min/max/abs whose switching argument is affine in y (for quadrature breakpoints)."""
    found = []

    def affine_root(a: ex.Node, b: ex.Node):
        f = ex.compile_expr(ex.Sub(a, b), params, strict=False)
        f0, f1 = f(0.0), f(1.0)
        slope = f1 - f0
        if slope != 0 and math.isfinite(slope) and abs(f(2.0) - (f0 + 2 * slope)) < 1e-12 * (1 + abs(f0)):
            found.append(-f0 / slope)

    def walk(n: ex.Node):
        if isinstance(n, (ex.Min, ex.Max)):
            affine_root(n.left, n.right)
        elif isinstance(n, ex.Call) and n.name == "abs":
            affine_root(n.arg, ex.ZERO)
        elif isinstance(n, ex.IfLe):
            affine_root(n.a, n.b)
        for c in ex._children(n):
            walk(c)

    walk(node)
    return tuple(sorted(set(found)))


def lamperti_F(spec: DiffusionSpec, v: float) -> float:
    """Unit-diffusion coordinate of the original state ``v``."""
    return Lamperti(spec).F(v)


def lamperti_F_inv(spec: DiffusionSpec, x: float) -> float:
    """Original state whose transform is ``x``."""
    return Lamperti(spec).F_inv(x)


def build_transformed(spec: DiffusionSpec) -> TransformedDiffusion:
    """Compose ``mu = (nu/sigma - sigma'/2) o F^{-1}`` and classify the interval."""
    lam = Lamperti(spec)
    g_node = ex.Sub(ex.Div(spec.drift, spec.diffusion),
                    ex.Mul(ex.Const(0.5), ex.differentiate(spec.diffusion)))
    g = ex.compile_expr(g_node, spec.params)
    g_raw = ex.compile_expr(g_node, spec.params, strict=False)
    dg_raw = ex.compile_expr(ex.differentiate(g_node), spec.params, strict=False)
    sigma = ex.compile_expr(spec.diffusion, spec.params)
    sigma_raw = lam._sigma_raw
    case = lam.case

    def _check(y):
        if not case.contains(y):
            raise OutOfRangeError(f"point outside the transformed interval {case}")

    def mu_unchecked(y):
        scalar = np.ndim(y) == 0
        v = lam.F_inv_array(np.atleast_1d(np.asarray(y, dtype=float)))
        out = g_raw(v)
        return float(out[0]) if scalar else out

    def dmu_unchecked(y):
        scalar = np.ndim(y) == 0
        v = lam.F_inv_array(np.atleast_1d(np.asarray(y, dtype=float)))
        out = dg_raw(v) * sigma_raw(v)
        return float(out[0]) if scalar else out

    def _strict(f):
        def wrapped(y):
            _check(y)
            out = f(y)
            if not np.all(np.isfinite(out)):
                raise NumericalError("drift is not finite at a requested point")
            return out

        return wrapped

    def mu_integral(x: float, w: float) -> float:
        # substitute z = F(v): dz = dv / sigma(v)
        _check([x, w])
        vx, vw = lam.F_inv(x), lam.F_inv(w)
        return quad(lambda v: g(v) / sigma(v), vx, vw)

    x0 = lam.F(spec.x0) if spec.x0 is not None else None
    return TransformedDiffusion(_strict(mu_unchecked), _strict(dmu_unchecked), case, "composed",
                                mu_unchecked=mu_unchecked, dmu_unchecked=dmu_unchecked,
                                drift_expr=g_node,
                                params=spec.params, spec=spec, lamperti=lam, x0=x0,
                                mu_integral=mu_integral)
