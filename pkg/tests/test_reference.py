from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, special

from diffbound.errors import InputError, UnsupportedOperationError
from diffbound.reference import (ReferenceKernel, bessel_i, bessel_i_asymptotic, bessel_i_series,
                                 ref_cdf, ref_crossing_density, ref_density)

BM = ReferenceKernel.brownian()


def reflection_bessel3(t, x, w):
    return (w / x) / math.sqrt(2 * math.pi * t) * (math.exp(-(w - x) ** 2 / (2 * t))
                                                  - math.exp(-(w + x) ** 2 / (2 * t)))


def test_bessel_i_values():
    assert bessel_i(0.0, 0.0) == 1.0
    assert bessel_i(0.5, 1.0) == pytest.approx(math.sqrt(2 / math.pi) * math.sinh(1.0), rel=1e-14)
    assert bessel_i(0.5, 1.0) == pytest.approx(0.9376748, abs=1e-7)
    scaled = bessel_i(0.5, 700.0, scaled=True)
    assert scaled == pytest.approx(math.sqrt(2 / (700 * math.pi)) * (1 - math.exp(-1400)) / 2, rel=1e-13)


@pytest.mark.parametrize("order", [0.0, 0.35, 0.5, 1.0, 1.85, 3.0, 7.5])
@pytest.mark.parametrize("z", [1e-3, 0.5, 4.0, 29.0, 31.0, 120.0, 900.0])
def test_bessel_i_against_scipy(order, z):
    assert bessel_i(order, z, scaled=True) == pytest.approx(special.ive(order, z), rel=1e-12)


def test_bessel_band_agreement():
    for order in np.linspace(0.5, 3.0, 6):
        for z in np.linspace(25, 35, 11):
            s = bessel_i_series(order, z, scaled=True)
            a = bessel_i_asymptotic(order, z, scaled=True)
            assert abs(s - a) <= 1e-9 * abs(s)


def test_bessel_domain():
    with pytest.raises(InputError):
        bessel_i(-1.0, 1.0)
    with pytest.raises(InputError):
        bessel_i(0.5, -1.0)


def test_kernel_validation():
    with pytest.raises(InputError):
        ReferenceKernel.bessel(2.5)
    assert ReferenceKernel.bessel(4.7).eta == pytest.approx(1.35)


def test_brownian_density_and_cdf():
    assert ref_density(BM, 1.0, 0.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert ref_cdf(BM, 2.0, 0.3, 0.3) == 0.5
    assert ref_cdf(BM, 1.0, 0.0, 1.96) == pytest.approx(0.9750021, abs=1e-7)


def test_bessel3_reflection_form():
    k = ReferenceKernel.bessel(3.0)
    assert ref_density(k, 1.0, 1.0, 1.0) == pytest.approx(reflection_bessel3(1.0, 1.0, 1.0), rel=1e-12)
    for t in np.linspace(0.1, 2.0, 7):
        for x in np.linspace(0.2, 3.0, 7):
            for w in np.linspace(0.2, 3.0, 7):
                assert ref_density(k, t, x, w) == pytest.approx(reflection_bessel3(t, x, w), rel=1e-10)


@pytest.mark.parametrize("d", [3.0, 4.7, 6.0])
def test_bessel_normalisation(d):
    k = ReferenceKernel.bessel(d)
    total, _ = integrate.quad(lambda z: ref_density(k, 0.5, 1.0, z), 0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_brownian_normalisation():
    total, _ = integrate.quad(lambda z: ref_density(BM, 0.7, 0.2, z), -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_bessel_cdf():
    k = ReferenceKernel.bessel(3.0)
    assert ref_cdf(k, 1.0, 1.0, 1e6) == pytest.approx(1.0, abs=1e-6)
    assert ref_cdf(k, 1.0, 1.0, 0.0) == 0.0
    closed = integrate.quad(lambda z: reflection_bessel3(1.0, 1.0, z), 0, 1.5)[0]
    assert ref_cdf(k, 1.0, 1.0, 1.5) == pytest.approx(closed, abs=1e-9)


def test_crossing_kernel():
    assert ref_crossing_density(BM, 1.0, -0.5, 0.0, -0.5) == pytest.approx(0.2419707, abs=1e-7)
    assert ref_crossing_density(BM, 1.0, 0.0, 0.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert ref_crossing_density(BM, 1.0, 0.0, 1.0, 0.0) == pytest.approx(math.exp(-2) / math.sqrt(2 * math.pi))
    assert ref_crossing_density(BM, 1.0, 0.0, 0.0, 0.0) == pytest.approx(0.3989423, abs=1e-7)
    # implied event: level below the endpoint
    assert ref_crossing_density(BM, 1.0, 0.0, -1.0, 0.5) == ref_density(BM, 1.0, 0.0, 0.5)
    with pytest.raises(UnsupportedOperationError):
        ref_crossing_density(ReferenceKernel.bessel(3), 1.0, 1.0, 2.0, 1.0)


def test_crossing_below_density():
    for t in (0.1, 1.0, 3.0):
        for x in (-2.0, -0.5, 0.0):
            for w in (-2.0, -0.3, 0.0):
                for level in (0.0, 0.5):
                    assert ref_crossing_density(BM, t, x, level, w) <= ref_density(BM, t, x, w) * (1 + 1e-15)


def test_invalid_arguments():
    with pytest.raises(InputError):
        ref_density(BM, 0.0, 0.0, 0.0)
    with pytest.raises(InputError):
        ref_density(ReferenceKernel.bessel(3), 1.0, -1.0, 1.0)
