import math

import numpy as np
import pytest

from shemoments.errors import PoleError
from shemoments.special import (MittagLefflerParams, gamma_fn, log_mittag_leffler,
                                ml_asymptotic_log, ml_series_log, mittag_leffler, normal_cdf,
                                switch_discrepancy, upper_incomplete_gamma)

# oracle values from 30-digit mpmath quadrature and series summation
COSH_1 = 1.54308063481524377847790562076
ML_15_1_AT_3 = 5.40461071590103021812123028667
ML_075_05_AT_2 = 26.388697429462510207922173072
GAMMA_UPPER_M05_1 = 0.178147711781560690192582318168
GAMMA_UPPER_M15_03 = 2.23873937937964659831766267045
PHI_1 = 0.841344746068542948585232545632
PHI_M25 = 0.00620966532577613516697810457419


def test_ml_exponential_case():
    assert mittag_leffler(MittagLefflerParams(1.0, 1.0), 1.0) == pytest.approx(math.e, rel=1e-12)


def test_ml_zero_argument():
    assert mittag_leffler(MittagLefflerParams(0.5, 1.0), 0.0) == pytest.approx(1.0, abs=1e-15)


def test_ml_cosh_case():
    assert mittag_leffler(MittagLefflerParams(2.0, 1.0), 1.0) == pytest.approx(COSH_1, rel=1e-12)


@pytest.mark.parametrize("alpha,beta,z,expected", [(1.5, 1.0, 3.0, ML_15_1_AT_3),
                                                   (0.75, 0.5, 2.0, ML_075_05_AT_2)])
def test_ml_series_values(alpha, beta, z, expected):
    assert mittag_leffler(MittagLefflerParams(alpha, beta), z) == pytest.approx(expected, rel=1e-10)


def test_ml_half_branches_agree_at_50():
    prm = MittagLefflerParams(0.5, 1.0)
    ls, la = ml_series_log(prm, 50.0), ml_asymptotic_log(prm, 50.0)
    assert abs(math.expm1(la - ls)) < 1e-4
    # E_{1/2,1}(z) = exp(z^2) erfc(-z)
    assert log_mittag_leffler(prm, 50.0) == pytest.approx(2500 + math.log(2.0), rel=1e-12)


def test_ml_matches_exp_on_range():
    prm = MittagLefflerParams(1.0, 1.0)
    for z in np.linspace(-10, 30, 41):
        assert mittag_leffler(prm, z) == pytest.approx(math.exp(z), rel=1e-10)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 1.0, 1.5, 1.9])
def test_ml_monotone(alpha):
    prm = MittagLefflerParams(alpha, 1.0)
    vals = [log_mittag_leffler(prm, z) for z in np.linspace(0, 60, 121)]
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75, 1.0])
def test_ml_growth_rate(alpha):
    prm = MittagLefflerParams(alpha, 1.0)
    c = 0.7
    t = np.geomspace(1e2, 1e4, 9)
    lg = np.array([log_mittag_leffler(prm, c * s ** alpha) for s in t])
    slope = np.polyfit(t, lg, 1)[0]
    assert slope == pytest.approx(c ** (1 / alpha), rel=0.02)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.9, 1.4])
def test_switch_blending(alpha):
    assert switch_discrepancy(MittagLefflerParams(alpha, 1.0)) < 1e-4


def test_ml_rejects_bad_alpha():
    with pytest.raises(ValueError):
        MittagLefflerParams(0.0, 1.0)


def test_upper_gamma_values():
    assert upper_incomplete_gamma(1.0, 2.0) == pytest.approx(math.exp(-2.0), rel=1e-13)
    assert upper_incomplete_gamma(0.5, 1e-14) == pytest.approx(math.sqrt(math.pi), rel=1e-6)
    assert upper_incomplete_gamma(-0.5, 1.0) == pytest.approx(GAMMA_UPPER_M05_1, rel=1e-10)
    assert upper_incomplete_gamma(-1.5, 0.3) == pytest.approx(GAMMA_UPPER_M15_03, rel=1e-10)


def test_gamma_reflection_and_poles():
    assert gamma_fn(-0.5) == pytest.approx(-2 * math.sqrt(math.pi), rel=1e-13)
    with pytest.raises(PoleError):
        gamma_fn(-2.0)


def test_normal_cdf():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(40.0) == 1.0
    assert abs(normal_cdf(1.0) - PHI_1) < 1e-12
    assert abs(normal_cdf(-2.5) - PHI_M25) < 1e-12
