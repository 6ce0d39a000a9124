from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from diffbound.catalog import (BUILTINS, feller_density, feller_density_v, get_builtin, ou_cdf,
                               ou_crossing_density, ou_density)
from diffbound.errors import InputError


def test_exactly_three_builtins():
    assert sorted(BUILTINS) == ["feller", "ou", "trunc-ou"]


@pytest.mark.parametrize("text, label", [
    ("ou", "ou"), ("trunc-ou", "trunc-ou(c=1)"), ("trunc-ou(2)", "trunc-ou(c=2)"),
    ("trunc-ou(c=0.5)", "trunc-ou(c=0.5)"), ("feller", "feller(p=1,q=2.5,r=1)"),
    ("feller(q=3)", "feller(p=1,q=3,r=1)"),
])
def test_labels(text, label):
    assert get_builtin(text).label == label


@pytest.mark.parametrize("text", ["cir", "trunc-ou(k=2)", "trunc-ou(-1)", "feller(q=0.1)", "ou(x"])
def test_bad_names(text):
    with pytest.raises(InputError):
        get_builtin(text)


def test_truncated_drift_expression():
    assert str(get_builtin("trunc-ou").spec.drift) == "max(-c, min(c, -y))"


def test_ou_closed_forms():
    var = (1 - math.exp(-2)) / 2
    assert ou_density(1.0, 0.0, 0.5) == pytest.approx(stats.norm.pdf(0.5, scale=math.sqrt(var)), rel=1e-13)
    assert ou_cdf(1.0, 0.0, 0.5) == pytest.approx(stats.norm.cdf(0.5, scale=math.sqrt(var)), rel=1e-13)
    assert ou_crossing_density(1.0, -0.5, 0.0, -0.5) == pytest.approx(ou_density(1.0, -0.5, 0.5))
    with pytest.raises(InputError):
        ou_crossing_density(1.0, -0.5, 1.0, -0.5)


def test_feller_density_matches_noncentral_chi_square():
    # 2 c V_t is noncentral chi-square with 2 q / r degrees of freedom
    p, q, r, t, v0 = 1.0, 2.5, 1.0, 0.5, 0.125
    c = p / (r * math.expm1(p * t))
    m = v0 * math.exp(p * t)
    for v in (0.05, 0.4, 1.3, 3.0):
        ref = 2 * c * stats.ncx2.pdf(2 * c * v, 2 * q / r, 2 * c * m)
        assert feller_density_v(t, v0, v, p, q, r) == pytest.approx(ref, rel=1e-10)


def test_feller_density_normalised():
    total = integrate.quad(lambda w: feller_density(0.5, 0.5, w, 1.0, 2.5, 1.0), 0, np.inf)[0]
    assert total == pytest.approx(1.0, abs=1e-9)


def test_feller_zero_p_limit():
    a = feller_density_v(0.7, 0.3, 0.9, 0.0, 2.0, 1.0)
    b = feller_density_v(0.7, 0.3, 0.9, 1e-7, 2.0, 1.0)
    assert a == pytest.approx(b, rel=1e-5)
