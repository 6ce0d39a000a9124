"""Built-in example models with closed-form exact transition functions.

Exact functions take transformed coordinates (unit diffusion), matching
what the bounds are stated for.

``ou``
    dX = -X dt + dW.
``trunc-ou(c)``
    Drift clamped to [-c, c]: ``max(-c, min(c, -y))``.  No closed form.
``feller(p, q, r)``
    dV = (pV + q) dt + sqrt(2 r V) dW on (0, inf), transformed by
    Z = sqrt(2V/r).  Its exact density is the square-root-diffusion
    density (Giorno et al. 1986), pushed forward to Z.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .errors import InputError
from .model import DiffusionSpec, TransformedDiffusion, build_transformed
from .reference import bessel_i


def _ou_var(t: float) -> float:
    return -0.5 * math.expm1(-2.0 * t)


def ou_density(t: float, x: float, w: float) -> float:
    var = _ou_var(t)
    return math.exp(-((w - x * math.exp(-t)) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def ou_cdf(t: float, x: float, w: float) -> float:
    return 0.5 * math.erfc(-(w - x * math.exp(-t)) / math.sqrt(2.0 * _ou_var(t)))


def ou_crossing_density(t: float, x: float, level: float, w: float) -> float:
    """w-density of {max X >= level, X_t <= w} for the OU process; level 0 only.

    By symmetry of the OU process about 0 and the strong Markov property at
    the first hitting time of 0, for x, w <= 0 this equals p(t, x, -w).
    """
    if level != 0.0:
        raise InputError("the exact OU crossing density is only registered for level 0")
    if max(x, w) > level:
        return ou_density(t, x, w)
    return ou_density(t, x, -w)


def feller_density_v(t: float, v0: float, v: float, p: float, q: float, r: float) -> float:
    """Transition density of dV = (pV + q) dt + sqrt(2rV) dW from v0 to v."""
    if v <= 0.0:
        return 0.0
    nu = q / r - 1.0
    if p == 0.0:
        c = 1.0 / (r * t)
        growth = 1.0
    else:
        growth = math.exp(p * t)
        c = p / (r * math.expm1(p * t))
    m = v0 * growth
    z = 2.0 * c * math.sqrt(v * m)
    log_pref = math.log(c) - c * (v + m) + z + 0.5 * nu * math.log(v / m)
    return math.exp(log_pref) * bessel_i(nu, z, scaled=True)


def feller_density(t: float, x: float, w: float, p: float, q: float, r: float) -> float:
    """Density of Z_t = sqrt(2 V_t / r) at w given Z_0 = x."""
    if w <= 0.0:
        return 0.0
    return feller_density_v(t, 0.5 * r * x * x, 0.5 * r * w * w, p, q, r) * r * w


def feller_mu(y: float, p: float, q: float, r: float) -> float:
    """Closed-form drift of the transformed Feller process."""
    return 0.5 * p * y + (q / r - 0.5) / y


@dataclass(frozen=True, eq=False)
class BuiltinModel:
    name: str
    params: Mapping[str, float]
    spec: DiffusionSpec
    description: str
    exact_density: Callable[[float, float, float], float] | None = None
    exact_cdf: Callable[[float, float, float], float] | None = None
    exact_crossing: Callable[[float, float, float, float], float] | None = None
    source: str = ""
    _td: list = field(default_factory=list, repr=False)

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.name}({inner})"

    def transformed(self) -> TransformedDiffusion:
        if not self._td:
            self._td.append(build_transformed(self.spec))
        return self._td[0]


def ou() -> BuiltinModel:
    spec = DiffusionSpec.from_strings("-y", "1", anchor=0.0)
    return BuiltinModel("ou", {}, spec, "Ornstein-Uhlenbeck dX = -X dt + dW",
                        ou_density, ou_cdf, ou_crossing_density,
                        source="Gaussian transition; crossing density by reflection about 0")


def trunc_ou(c: float = 1.0) -> BuiltinModel:
    if not c > 0:
        raise InputError(f"truncation level must be positive, got {c}")
    spec = DiffusionSpec.from_strings("max(-c, min(c, -y))", "1", params={"c": c}, anchor=0.0)
    return BuiltinModel("trunc-ou", {"c": float(c)}, spec,
                        "OU drift clamped to [-c, c]", source="bounds and simulation only")


def feller(p: float = 1.0, q: float = 2.5, r: float = 1.0) -> BuiltinModel:
    if not r > 0:
        raise InputError(f"r must be positive, got {r}")
    if not q / r >= 0.5:
        raise InputError("feller needs q/r >= 1/2")
    spec = DiffusionSpec.from_strings("p*y + q", "sqrt(2*r*y)", (0.0, "inf"),
                                      {"p": p, "q": q, "r": r})
    pp, qq, rr = float(p), float(q), float(r)
    return BuiltinModel(
        "feller", {"p": pp, "q": qq, "r": rr}, spec,
        "dV = (pV + q) dt + sqrt(2rV) dW, transformed by Z = sqrt(2V/r)",
        lambda t, x, w: feller_density(t, x, w, pp, qq, rr),
        source="Giorno et al. (1986), pushed forward to Z",
    )


BUILTINS: dict[str, Callable[..., BuiltinModel]] = {
    "ou": ou,
    "trunc-ou": trunc_ou,
    "feller": feller,
}

_SIGNATURES = {"ou": (), "trunc-ou": ("c",), "feller": ("p", "q", "r")}
_CALL = re.compile(r"^\s*([a-z][a-z\-]*)\s*(?:\((.*)\))?\s*$")


def get_builtin(text: str) -> BuiltinModel:
    """Resolve ``"ou"``, ``"trunc-ou(c=2)"``, ``"trunc-ou(2)"``, ``"feller(p=1,q=2.5,r=1)"``..."""
    m = _CALL.match(text)
    if m is None or m.group(1) not in BUILTINS:
        raise InputError(f"unknown example {text!r}; choose from {', '.join(BUILTINS)}")
    name, inner = m.group(1), m.group(2)
    kwargs: dict[str, float] = {}
    if inner and inner.strip():
        names = _SIGNATURES[name]
        for i, part in enumerate(inner.split(",")):
            key, sep, value = part.partition("=")
            if not sep:
                key, value = (names[i] if i < len(names) else "?"), part
            key = key.strip()
            if key not in names:
                raise InputError(f"{name} has no parameter {key!r}")
            try:
                kwargs[key] = float(value)
            except ValueError:
                raise InputError(f"parameter {key} must be numeric, got {value.strip()!r}") from None
    return BUILTINS[name](**kwargs)
