"""Command-line front end.

All positions (``--x``, ``--w-*``, ``--level``) are in the unit-diffusion
coordinates of the transformed process.  A model's own ``x0`` is mapped
through the transform and used when ``--x`` is omitted.

Every command that writes ``--out PATH`` also writes ``PATH.manifest.json``;
``diffbound replay PATH.manifest.json`` recomputes the output and checks it
byte for byte.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (asymptotic_density, crossing_density_bounds, density_bounds, distribution_bounds,
                     estimate_lm, g_delta, optimize_d)
from .catalog import BUILTINS, BuiltinModel, get_builtin
from .errors import DiffboundError, InputError, NumericalError, UnsupportedOperationError
from .mc import SimConfig, crossing_frequency, kde_density, simulate_paths
from .model import build_transformed, load_model
from .reference import ReferenceKernel, ref_density

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
DEFAULT_D = 3.0


def fmt(v) -> str:
    """17 significant digits; blank for missing values."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def make_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid ``start + k*step``, robust to float rounding of the count."""
    if not step > 0:
        raise InputError(f"grid step must be positive, got {step}")
    if stop < start:
        raise InputError(f"grid end {stop} is below its start {start}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(count)]


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


# -- model resolution ------------------------------------------------------

class _Resolved:
    def __init__(self, source: dict, builtin: BuiltinModel | None, td):
        self.source = source
        self.builtin = builtin
        self.td = td


def _resolve_model(source: dict) -> _Resolved:
    if "example" in source:
        b = get_builtin(source["example"])
        return _Resolved({"example": b.label}, b, b.transformed())
    path = Path(source["path"])
    spec = load_model(path)
    return _Resolved({"path": str(path.resolve())}, None, build_transformed(spec))


def _model_source(args) -> dict:
    if args.example:
        return {"example": args.example}
    if args.model:
        return {"path": args.model}
    raise InputError("one of --model or --example is required")


def _start(res: _Resolved, x: float | None) -> float:
    if x is not None:
        return float(x)
    if res.td.x0 is None:
        raise InputError("--x is required because the model has no x0")
    return float(res.td.x0)


def _w_grid(p: dict) -> list[float]:
    if p.get("w") is not None:
        return [float(p["w"])]
    if p.get("w_from") is None or p.get("w_to") is None or p.get("w_step") is None:
        raise InputError("give --w or all of --w-from, --w-to, --w-step")
    return make_grid(p["w_from"], p["w_to"], p["w_step"])


def _t_grid(p: dict) -> list[float]:
    if p.get("t") is not None:
        t = [float(p["t"])]
    elif None not in (p.get("t_from"), p.get("t_to"), p.get("t_step")):
        t = make_grid(p["t_from"], p["t_to"], p["t_step"])
    else:
        raise InputError("give --t or all of --t-from, --t-to, --t-step")
    if not all(v > 0 and math.isfinite(v) for v in t):
        raise InputError("times must be positive")
    return t


def _kernel(res: _Resolved, p: dict, t: float, x: float, ws: list[float]) -> ReferenceKernel:
    if res.td.case.tag == "A":
        if p.get("d") is not None or p.get("optimize_d"):
            raise InputError("--d and --optimize-d only apply to diffusions on (0, inf)")
        return ReferenceKernel.brownian()
    if p.get("d") is None:
        if p.get("optimize_d"):
            objective = "point" if len(ws) == 1 else "integrated"
            target = ws[0] if len(ws) == 1 else ws
            p["d"] = optimize_d(res.td, t, x, target, objective, lm_domain=_lm_range(p))
        else:
            p["d"] = DEFAULT_D
    return ReferenceKernel.bessel(float(p["d"]))


def _lm_range(p: dict):
    r = p.get("lm_range")
    return None if r is None else (float(r[0]), float(r[1]))


def _lm(res: _Resolved, kernel: ReferenceKernel, p: dict, x: float, t: float):
    lm = estimate_lm(res.td, kernel, _lm_range(p), x=x, t=t)
    lm = lm.with_overrides(p.get("L"), p.get("M"))
    p["L_used"], p["M_used"] = lm.L, lm.M
    return lm


# -- commands: each returns (header, rows) and may add resolved values to p --

def _run_bound_density(res: _Resolved, p: dict):
    t = _t_grid(p)[0]
    x = p["x"] = _start(res, p.get("x"))
    ws = _w_grid(p)
    kernel = _kernel(res, p, t, x, ws)
    lm = _lm(res, kernel, p, x, t)
    exact = res.builtin.exact_density if res.builtin else None
    rows = []
    for w in ws:
        b = density_bounds(res.td, kernel, t, x, w, lm)
        rows.append([w, b.lower, b.upper, b.ref_value, b.g_delta,
                     exact(t, x, w) if exact else None, b.flags])
    return ["w", "lower", "upper", "ref_value", "g_delta", "exact", "flags"], rows


def _run_bound_cdf(res: _Resolved, p: dict):
    t = _t_grid(p)[0]
    x = p["x"] = _start(res, p.get("x"))
    ws = _w_grid(p)
    kernel = _kernel(res, p, t, x, ws)
    lm = _lm(res, kernel, p, x, t)
    tail = bool(p.get("tail"))
    exact = res.builtin.exact_cdf if res.builtin else None
    rows = []
    for w in ws:
        b = distribution_bounds(res.td, kernel, t, x, w, lm, tail=tail)
        ex_val = None
        if exact:
            ex_val = exact(t, x, w)
            ex_val = 1.0 - ex_val if tail else ex_val
        rows.append([w, b.lower, b.upper, b.upper_raw, b.ref_value, b.g_delta, ex_val, b.flags])
    return ["w", "lower", "upper", "upper_raw", "ref_value", "g_delta", "exact", "flags"], rows


def _run_bound_crossing(res: _Resolved, p: dict):
    ts = _t_grid(p)
    x = p["x"] = _start(res, p.get("x"))
    ws = _w_grid(p)
    if p.get("level") is None:
        raise InputError("--level is required")
    level = float(p["level"])
    if res.td.case.tag != "A":
        raise UnsupportedOperationError("crossing bounds are only available for diffusions on the real line")
    kernel = _kernel(res, p, max(ts), x, ws)
    lm = _lm(res, kernel, p, x, max(ts))
    exact = res.builtin.exact_crossing if res.builtin else None
    rows = []
    for t in ts:
        for w in ws:
            b = crossing_density_bounds(res.td, kernel, t, x, level, w, lm)
            ex_val = None
            if exact:
                try:
                    ex_val = exact(t, x, level, w)
                except InputError:
                    ex_val = None
            rows.append([t, w, b.lower, b.upper, b.ref_value, b.g_delta, ex_val, b.flags])
    return ["t", "w", "lower", "upper", "ref_value", "g_delta", "exact", "flags"], rows


def _run_asymptotic(res: _Resolved, p: dict):
    t = _t_grid(p)[0]
    x = p["x"] = _start(res, p.get("x"))
    ws = _w_grid(p)
    kernel = _kernel(res, p, t, x, ws)
    lm = _lm(res, kernel, p, x, t)
    spread = max(abs(lm.L), abs(lm.M))
    rel_bound = math.expm1(0.5 * t * spread) if math.isfinite(spread) else math.inf
    exact = res.builtin.exact_density if res.builtin else None
    rows = []
    for w in ws:
        approx = asymptotic_density(res.td, kernel, t, x, w)
        rows.append([w, approx, ref_density(kernel, t, x, w), g_delta(res.td, kernel, x, w),
                     exact(t, x, w) if exact else None, rel_bound])
    return ["w", "approx", "ref_value", "g_delta", "exact", "rel_error_bound"], rows


def _run_simulate(res: _Resolved, p: dict):
    t = _t_grid(p)[0]
    x = p["x"] = _start(res, p.get("x"))
    cfg = SimConfig(p["n"], p["steps"], t, x, seed=p["seed"], barrier=p.get("barrier"))
    sim = simulate_paths(res.td, cfg)
    samples = sim.endpoints[np.isfinite(sim.endpoints)]
    if p.get("w") is None and p.get("w_from") is None:
        if samples.size == 0:
            raise NumericalError("every simulated path was excluded")
        lo, hi = np.quantile(samples, [0.001, 0.999])
        ws = list(np.linspace(lo, hi, 121))
    else:
        ws = _w_grid(p)
    est, se = kde_density(samples, np.asarray(ws, dtype=float))
    exact = res.builtin.exact_density if res.builtin else None
    rows = [[w, e, s, exact(t, x, w) if exact else None] for w, e, s in zip(ws, est, se)]
    p["n_excluded"] = sim.n_excluded
    if cfg.barrier is not None:
        freq, fse = crossing_frequency(sim)
        rows.append(["crossing_frequency", freq, fse, None])
    return ["w", "density", "stderr", "exact"], rows


COMMANDS = {
    "bound-density": _run_bound_density,
    "bound-cdf": _run_bound_cdf,
    "bound-crossing": _run_bound_crossing,
    "asymptotic": _run_asymptotic,
    "simulate": _run_simulate,
}

_PARAM_KEYS = ("t", "t_from", "t_to", "t_step", "x", "w", "w_from", "w_to", "w_step", "level", "d",
               "optimize_d", "lm_range", "L", "M", "tail", "n", "steps", "seed", "barrier")


def _execute(command: str, source: dict, params: dict) -> tuple[str, dict, dict]:
    res = _resolve_model(source)
    p = dict(params)
    header, rows = COMMANDS[command](res, p)
    text = _csv_text(header, rows)
    return text, res.source, p


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return fmt(v)
    return v


def _write_outputs(command: str, source: dict, resolved: dict, text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out_path = Path(out)
    out_path.write_bytes(text.encode())
    manifest = {
        "command": command,
        "model": source,
        "parameters": {k: _json_safe(v) for k, v in resolved.items()},
        "seed": resolved.get("seed"),
        "output": str(out_path.resolve()),
        "sha256": hashlib.sha256(text.encode()).hexdigest(),
        "version": __version__,
    }
    Path(str(out_path) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _replay_params(resolved: dict) -> dict:
    # a chosen d is replayed as a fixed d so the optimiser is not rerun
    p = dict(resolved)
    for key in ("L_used", "M_used", "n_excluded"):
        p.pop(key, None)
    if p.get("d") is not None:
        p["optimize_d"] = False
    return p


def cmd_replay(manifest_path: str, out: str | None) -> int:
    try:
        manifest = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read manifest {manifest_path}: {exc}") from exc
    for key in ("command", "model", "parameters", "sha256"):
        if key not in manifest:
            raise InputError(f"manifest is missing {key!r}")
    if manifest["command"] not in COMMANDS:
        raise InputError(f"manifest names unknown command {manifest['command']!r}")
    text, _, _ = _execute(manifest["command"], manifest["model"], _replay_params(manifest["parameters"]))
    digest = hashlib.sha256(text.encode()).hexdigest()
    if out is not None:
        Path(out).write_bytes(text.encode())
    if digest != manifest["sha256"]:
        print(f"replay differs from the recorded output ({digest} != {manifest['sha256']})", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"replay reproduced {manifest.get('output', '')} (sha256 {digest})")
    return EXIT_OK


def cmd_examples() -> int:
    for name in BUILTINS:
        b = BUILTINS[name]()
        spec = b.spec
        lo, hi = spec.interval
        exact = "exact density" if b.exact_density else "no closed form"
        print(f"{b.label}")
        print(f"    {b.description}")
        print(f"    drift: {spec.drift}   diffusion: {spec.diffusion}   interval: ({lo:g}, {hi:g})")
        print(f"    {exact}; {b.source}")
    return EXIT_OK


def _add_model_args(sp: argparse.ArgumentParser) -> None:
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--model", metavar="PATH", help="JSON model file")
    g.add_argument("--example", metavar="NAME", help="built-in model, e.g. ou, 'trunc-ou(c=1)', feller")


def _add_grid_args(sp: argparse.ArgumentParser, times: bool = False) -> None:
    sp.add_argument("--t", type=float, help="time horizon")
    if times:
        sp.add_argument("--t-from", type=float)
        sp.add_argument("--t-to", type=float)
        sp.add_argument("--t-step", type=float)
    sp.add_argument("--x", type=float, help="start point (defaults to the model's x0)")
    sp.add_argument("--w", type=float, help="single end point")
    sp.add_argument("--w-from", type=float)
    sp.add_argument("--w-to", type=float)
    sp.add_argument("--w-step", type=float)


def _add_bound_args(sp: argparse.ArgumentParser) -> None:
    dg = sp.add_mutually_exclusive_group()
    dg.add_argument("--d", type=float, help=f"Bessel reference dimension (default {DEFAULT_D:g})")
    dg.add_argument("--optimize-d", action="store_true", help="choose d minimising the upper bound")
    sp.add_argument("--lm-range", type=float, nargs=2, metavar=("LO", "HI"),
                    help="restrict the search for L and M to [LO, HI]")
    sp.add_argument("--L", type=float, help="known value of L (overrides the estimate)")
    sp.add_argument("--M", type=float, help="known value of M (overrides the estimate)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffbound", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "bound-density": "lower/upper bounds for the transition density",
        "bound-cdf": "bounds for the transition distribution function",
        "bound-crossing": "bounds for the barrier-crossing density",
        "asymptotic": "small-time density approximation",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        _add_model_args(sp)
        _add_grid_args(sp, times=name == "bound-crossing")
        _add_bound_args(sp)
        if name == "bound-cdf":
            sp.add_argument("--tail", action="store_true", help="bound P(X_t > w) instead")
        if name == "bound-crossing":
            sp.add_argument("--level", type=float, help="barrier level")
        sp.add_argument("--out", metavar="PATH", help="CSV output (default stdout)")
    sp = sub.add_parser("simulate", help="Monte Carlo density estimate")
    _add_model_args(sp)
    _add_grid_args(sp)
    sp.add_argument("--n", type=int, default=100_000, help="number of paths")
    sp.add_argument("--steps", type=int, default=100, help="time steps per path")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--barrier", type=float, help="report the discrete-monitoring crossing frequency")
    sp.add_argument("--out", metavar="PATH")
    sub.add_parser("examples", help="list the built-in models")
    sp = sub.add_parser("replay", help="recompute an output from its manifest and compare")
    sp.add_argument("manifest")
    sp.add_argument("--out", metavar="PATH", help="also write the recomputed CSV here")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "examples":
            return cmd_examples()
        if args.command == "replay":
            return cmd_replay(args.manifest, args.out)
        params = {k: getattr(args, k) for k in _PARAM_KEYS if hasattr(args, k)}
        if params.get("lm_range") is not None:
            params["lm_range"] = list(params["lm_range"])
        text, source, resolved = _execute(args.command, _model_source(args), params)
        _write_outputs(args.command, source, resolved, text, args.out)
        return EXIT_OK
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, DiffboundError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
