"""Monte Carlo oracle: predictor-corrector paths, KDE, and the Girsanov identity.

Paths are generated in fixed blocks of ``CHUNK`` paths.  Block ``k`` draws
its Brownian increments from a Philox stream keyed by ``(seed, k)`` in
path-major order, so path ``i`` always sees the same increments whatever the
number of paths, threads or scheduling.  Results are therefore bit-identical
for a given seed.

The barrier is monitored at the grid times only, which biases crossing
frequencies downward by roughly a shift of the barrier by
``0.5826 * sqrt(dt)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .bounds import g_delta_many, n_integrand
from .errors import InputError
from .model import TransformedDiffusion
from .reference import ReferenceKernel

CHUNK = 4096
_MAX_RESAMPLE = 100
_KERNEL_L2 = 1.0 / (2.0 * math.sqrt(math.pi))


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    n_steps: int
    t: float
    x: float
    seed: int = 0
    barrier: float | None = None

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise InputError(f"n_paths must be a positive integer, got {self.n_paths}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InputError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not self.t > 0 or not math.isfinite(self.t):
            raise InputError(f"t must be positive, got {self.t}")
        if not math.isfinite(self.x):
            raise InputError("x must be finite")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InputError("seed must be an integer in [0, 2**64)")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True, eq=False)
class SimResult:
    """Endpoints (NaN for excluded paths), crossing flags and log-weights."""

    endpoints: np.ndarray
    crossed: np.ndarray | None
    log_weights: np.ndarray | None
    n_excluded: int
    config: SimConfig


@dataclass(frozen=True)
class Event:
    """Endpoint event ``lower <= X_t < upper`` (``X_t <= upper`` when ``closed``)."""

    lower: float = -math.inf
    upper: float = math.inf
    closed: bool = False

    def indicator(self, x: np.ndarray) -> np.ndarray:
        upper_ok = x <= self.upper if self.closed else x < self.upper
        return (x >= self.lower) & upper_ok


def endpoint_le(w: float) -> Event:
    return Event(-math.inf, float(w), closed=True)


def endpoint_in(a: float, b: float) -> Event:
    if not a < b:
        raise InputError(f"empty event interval [{a}, {b})")
    return Event(float(a), float(b))


def worker_count() -> int:
    env = os.environ.get("DIFFBOUND_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"DIFFBOUND_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return max(1, min(8, os.cpu_count() or 1))


def _rng(seed: int, chunk: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk, stream])))


def _run_chunk(drift: Callable, positive: bool, cfg: SimConfig, chunk: int, m: int,
               h: Callable | None) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    dt = cfg.t / cfg.n_steps
    sq = math.sqrt(dt)
    increments = _rng(cfg.seed, chunk, 0).standard_normal((m, cfg.n_steps))
    aux = _rng(cfg.seed, chunk, 1)
    X = np.full(m, float(cfg.x))
    dead = np.zeros(m, dtype=bool)
    crossed = X >= cfg.barrier if cfg.barrier is not None else None
    N = np.zeros(m) if h is not None else None
    h_prev = h(X) if h is not None else None
    with np.errstate(all="ignore"):
        for k in range(cfg.n_steps):
            dw = increments[:, k] * sq
            m0 = drift(X)
            Xp = X + m0 * dt + dw
            Xn = X + 0.5 * (drift(Xp) + m0) * dt + dw
            if positive:
                # resample increments that would leave (0, inf)
                redo = ~dead & ((Xp <= 0) | (Xn <= 0))
                for _ in range(_MAX_RESAMPLE):
                    if not redo.any():
                        break
                    idx = np.flatnonzero(redo)
                    dwr = aux.standard_normal(idx.size) * sq
                    xp = X[idx] + m0[idx] * dt + dwr
                    xn = X[idx] + 0.5 * (drift(xp) + m0[idx]) * dt + dwr
                    Xp[idx], Xn[idx] = xp, xn
                    redo[idx] = (xp <= 0) | (xn <= 0)
                dead |= redo
            dead |= ~np.isfinite(Xn)
            X = np.where(dead, np.nan, Xn)
            if crossed is not None:
                crossed |= X >= cfg.barrier
            if h is not None:
                h_new = h(X)
                N += 0.5 * (h_prev + h_new) * dt
                h_prev = h_new
    if N is not None:
        N = np.where(dead, np.nan, N)
    return X, crossed, N


def _simulate(drift: Callable, positive: bool, cfg: SimConfig,
              h: Callable | None = None) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    sizes = [min(CHUNK, cfg.n_paths - start) for start in range(0, cfg.n_paths, CHUNK)]
    jobs = [(drift, positive, cfg, k, m, h) for k, m in enumerate(sizes)]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _run_chunk(*a), jobs))
    else:
        parts = [_run_chunk(*a) for a in jobs]
    X = np.concatenate([p[0] for p in parts])
    crossed = np.concatenate([p[1] for p in parts]) if cfg.barrier is not None else None
    N = np.concatenate([p[2] for p in parts]) if h is not None else None
    return X, crossed, N


def simulate_paths(td: TransformedDiffusion, cfg: SimConfig) -> SimResult:
    """Simulate ``dX = mu(X) dt + dW`` with the predictor-corrector scheme

        X_pred = X + mu(X) dt + dW
        X_next = X + (mu(X_pred) + mu(X)) dt / 2 + dW

    For diffusions on (0, inf) an increment that would take either stage to
    a non-positive value is redrawn.  Paths whose drift becomes non-finite
    are excluded (NaN endpoint) and counted in ``n_excluded``.
    """
    positive = td.case.tag == "B"
    if positive and not cfg.x > 0:
        raise InputError("start point must be positive for a diffusion on (0, inf)")
    X, crossed, _ = _simulate(td.mu_unchecked, positive, cfg)
    return SimResult(X, crossed, None, int(np.count_nonzero(np.isnan(X))), cfg)


def crossing_frequency(result: SimResult) -> tuple[float, float]:
    """Fraction of retained paths that reached the barrier, with its standard error."""
    if result.crossed is None:
        raise InputError("simulation was run without a barrier")
    keep = ~np.isnan(result.endpoints)
    n = int(keep.sum())
    if n == 0:
        raise InputError("no retained paths")
    p = float(np.count_nonzero(result.crossed[keep])) / n
    return p, math.sqrt(p * (1.0 - p) / n)


def kde_density(samples, w):
    """Gaussian KDE with Silverman's bandwidth 1.06 * sd * n^(-1/5).

    Returns ``(estimate, stderr)`` where the standard error is the
    asymptotic ``sqrt(f * R(K) / (n h))`` with ``R(K) = 1/(2 sqrt(pi))``.
    NaN samples are ignored.
    """
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    n = x.size
    if n < 100:
        raise InputError(f"KDE needs at least 100 samples, got {n}")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise InputError("KDE needs a sample with positive variance")
    bw = 1.06 * sd * n ** -0.2
    ws = np.atleast_1d(np.asarray(w, dtype=float))
    est = np.empty(ws.shape)
    block = max(1, 2_000_000 // n)
    for i in range(0, ws.size, block):
        u = (ws[i:i + block, None] - x[None, :]) / bw
        est[i:i + block] = np.exp(-0.5 * u * u).sum(axis=1) / (n * bw * math.sqrt(2.0 * math.pi))
    se = np.sqrt(est * _KERNEL_L2 / (n * bw))
    if np.ndim(w) == 0:
        return float(est[0]), float(se[0])
    return est, se


def reference_paths(td: TransformedDiffusion, kernel: ReferenceKernel, cfg: SimConfig) -> SimResult:
    """Simulate the reference process and attach Girsanov log-weights
    ``G(X_t) - G(x) - N(t)/2`` (N by the trapezoidal rule along each path)."""
    if kernel.case_tag != td.case.tag:
        raise InputError("reference kernel does not match the diffusion interval")
    positive = kernel.kind == "bessel"
    if positive and not cfg.x > 0:
        raise InputError("start point must be positive for a diffusion on (0, inf)")

    def h(y):
        return n_integrand(td, kernel, y, checked=False)

    X, crossed, N = _simulate(kernel.drift, positive, cfg, h)
    log_w = g_delta_many(td, kernel, cfg.x, X) - 0.5 * N
    bad = ~np.isfinite(log_w)
    X = np.where(bad, np.nan, X)
    log_w = np.where(bad, np.nan, log_w)
    return SimResult(X, crossed, log_w, int(np.count_nonzero(bad)), cfg)


def girsanov_check(td: TransformedDiffusion, kernel: ReferenceKernel, t: float, x: float,
                   event: Event, cfg: SimConfig) -> tuple[float, float]:
    """Estimate P_x(X_t in event) as the weighted reference-process expectation.

    ``cfg`` supplies path count, steps and seed; its ``t`` and ``x`` are
    replaced by the arguments.  Returns ``(estimate, stderr)``.
    """
    cfg = replace(cfg, t=float(t), x=float(x))
    res = reference_paths(td, kernel, cfg)
    keep = ~np.isnan(res.endpoints)
    n = int(keep.sum())
    if n < 2:
        raise InputError("too few retained paths")
    values = np.where(event.indicator(res.endpoints[keep]), np.exp(res.log_weights[keep]), 0.0)
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)
