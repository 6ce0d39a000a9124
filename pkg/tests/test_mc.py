from __future__ import annotations

import math

import numpy as np
import pytest

from diffbound.catalog import ou_cdf
from diffbound.errors import InputError
from diffbound.mc import (SimConfig, crossing_frequency, endpoint_in, endpoint_le, girsanov_check,
                          kde_density, reference_paths, simulate_paths)
from diffbound.reference import ReferenceKernel

BM = ReferenceKernel.brownian()
N = 100_000


@pytest.mark.parametrize("kwargs", [dict(n_paths=0), dict(n_steps=0), dict(t=0.0), dict(t=-1.0),
                                    dict(seed=-1), dict(x=math.inf)])
def test_config_validation(kwargs):
    base = dict(n_paths=10, n_steps=10, t=1.0, x=0.0)
    base.update(kwargs)
    with pytest.raises(InputError):
        SimConfig(**base)


def test_brownian_moments(zero_drift):
    r = simulate_paths(zero_drift, SimConfig(N, 10, 1.0, 0.0, seed=11))
    assert r.endpoints.shape == (N,)
    assert abs(r.endpoints.mean()) <= 3 / math.sqrt(N)
    assert abs(r.endpoints.var(ddof=1) - 1.0) <= 3 * math.sqrt(2 / N)


def test_ou_variance(ou):
    r = simulate_paths(ou, SimConfig(N, 100, 1.0, 0.0, seed=12))
    exact = -0.5 * math.expm1(-2.0)
    se = exact * math.sqrt(2 / N)
    # O(dt^2) bias of the trapezoidal scheme is far below the noise here
    assert abs(r.endpoints.var(ddof=1) - exact) <= 3 * se + 1e-3


def test_ou_variance_converges_with_steps(ou):
    exact = -0.5 * math.expm1(-2.0)
    errors = []
    for steps in (1, 2, 4, 8):
        r = simulate_paths(ou, SimConfig(200_000, steps, 1.0, 0.0, seed=13))
        errors.append(abs(r.endpoints.var(ddof=1) - exact))
    se = exact * math.sqrt(2 / 200_000)
    for a, b in zip(errors, errors[1:]):
        assert b <= a + 3 * se


def test_barrier_frequency(zero_drift):
    r = simulate_paths(zero_drift, SimConfig(N, 100, 1.0, -0.5, seed=14, barrier=0.0))
    p, se = crossing_frequency(r)
    continuous = math.erfc(0.5 / math.sqrt(2))
    # discrete monitoring acts like a barrier raised by 0.5826 sqrt(dt)
    shifted = math.erfc((0.5 + 0.5826 * math.sqrt(0.01)) / math.sqrt(2))
    assert p <= continuous
    assert abs(p - shifted) <= 3 * se + 2e-3


def test_crossing_needs_barrier(zero_drift):
    r = simulate_paths(zero_drift, SimConfig(100, 5, 1.0, 0.0))
    with pytest.raises(InputError):
        crossing_frequency(r)


def test_determinism(ou, monkeypatch):
    cfg = SimConfig(10_000, 20, 1.0, 0.3, seed=99, barrier=0.5)
    monkeypatch.setenv("DIFFBOUND_THREADS", "1")
    a = simulate_paths(ou, cfg)
    monkeypatch.setenv("DIFFBOUND_THREADS", "4")
    b = simulate_paths(ou, cfg)
    np.testing.assert_array_equal(a.endpoints, b.endpoints)
    np.testing.assert_array_equal(a.crossed, b.crossed)
    c = simulate_paths(ou, SimConfig(5_000, 20, 1.0, 0.3, seed=99, barrier=0.5))
    np.testing.assert_array_equal(a.endpoints[:5_000], c.endpoints)
    d = simulate_paths(ou, SimConfig(10_000, 20, 1.0, 0.3, seed=100, barrier=0.5))
    assert not np.array_equal(a.endpoints, d.endpoints)


def test_positive_paths_stay_positive(feller):
    r = simulate_paths(feller, SimConfig(4_000, 50, 1.0, 0.2, seed=3))
    assert r.n_excluded == 0
    assert np.all(r.endpoints > 0)


def test_kde_standard_normal():
    x = np.random.default_rng(5).standard_normal(N)
    est, se = kde_density(x, 0.0)
    assert abs(est - 1 / math.sqrt(2 * math.pi)) <= 3 * se + 1e-3


def test_kde_errors():
    with pytest.raises(InputError):
        kde_density(np.arange(99.0), 0.0)
    with pytest.raises(InputError):
        kde_density(np.ones(500), 0.0)


def test_kde_vector():
    x = np.random.default_rng(6).standard_normal(1_000)
    est, se = kde_density(x, [0.0, 1.0])
    assert est.shape == se.shape == (2,)
    assert kde_density(x, 1.0)[0] == pytest.approx(est[1])


def test_zero_drift_weights_are_one(zero_drift):
    r = reference_paths(zero_drift, BM, SimConfig(2_000, 20, 1.0, 0.0, seed=1))
    assert np.all(r.log_weights == 0.0)
    est, se = girsanov_check(zero_drift, BM, 1.0, 0.0, endpoint_le(0.5), SimConfig(N, 10, 1, 0, seed=2))
    assert abs(est - 0.5 * math.erfc(-0.5 / math.sqrt(2))) <= 3 * se


def test_girsanov_ou_symmetric(ou):
    est, se = girsanov_check(ou, BM, 1.0, 0.0, endpoint_le(0.0), SimConfig(N, 100, 1, 0, seed=21))
    assert abs(est - 0.5) <= 3 * se


def test_girsanov_ou_cdf(ou):
    est, se = girsanov_check(ou, BM, 1.0, 0.0, endpoint_le(0.5), SimConfig(N, 100, 1, 0, seed=22))
    assert abs(est - ou_cdf(1.0, 0.0, 0.5)) <= 3 * se


def test_girsanov_agrees_with_direct_simulation(ou):
    event = endpoint_in(-0.3, 0.6)
    est, se = girsanov_check(ou, BM, 0.8, 0.2, event, SimConfig(N, 100, 1, 0, seed=31))
    r = simulate_paths(ou, SimConfig(N, 100, 0.8, 0.2, seed=32))
    hits = event.indicator(r.endpoints)
    p = hits.mean()
    se_direct = math.sqrt(p * (1 - p) / N)
    assert abs(est - p) <= 4 * math.hypot(se, se_direct)


def test_event_validation():
    with pytest.raises(InputError):
        endpoint_in(1.0, 1.0)
    e = endpoint_le(0.5)
    assert list(e.indicator(np.array([0.4, 0.5, 0.6]))) == [True, True, False]
    f = endpoint_in(0.0, 0.5)
    assert list(f.indicator(np.array([0.0, 0.5]))) == [True, False]
