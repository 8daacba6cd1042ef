import math

import numpy as np
import pytest
from scipy import integrate

from shemoments.errors import (ConfigError, DimensionMismatch, NonpositiveTime, NotPointwise,
                               SingularAtOrigin)
from shemoments.kernels import (Atoms, BoxIndicator, Cauchy, Constant, Density, DiracAt, HeatParams,
                                LebesgueScaled, OrnsteinUhlenbeck, Poisson, Riesz, TabulatedRadial,
                                WhiteNoise1D, eval_f, gauss_factor, h1_of_t, heat_kernel, j0, k_of_t,
                                kernel_from_config)

CATALOG = [Riesz(0.5, 1), Riesz(1.0, 3), OrnsteinUhlenbeck(2, 1, 2), OrnsteinUhlenbeck(1, 2, 3),
           Poisson(dim=3), Cauchy(dim=2), Constant(2.0, 1), BoxIndicator(1.0, 2),
           TabulatedRadial((0.0, 0.5, 2.0), (1.0, 0.6, 0.0), dim=2)]


def test_eval_f_examples():
    assert eval_f(Constant(1.0, 2), [3.0, -1.0]) == 1.0
    assert eval_f(Riesz(1.0, 3), [2.0, 0.0, 0.0]) == pytest.approx(0.5)
    assert eval_f(OrnsteinUhlenbeck(2, 1, 2), [0.6, 0.8]) == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_eval_f_errors():
    with pytest.raises(SingularAtOrigin):
        eval_f(Riesz(1.0, 3), [0.0, 0.0, 0.0])
    with pytest.raises(NotPointwise):
        eval_f(WhiteNoise1D(), 0.3)


@pytest.mark.parametrize("kernel", CATALOG, ids=lambda k: k.describe())
def test_f_symmetric_and_nonnegative(kernel):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, kernel.dim))
    fx, fm = eval_f(kernel, x), eval_f(kernel, -x)
    assert np.array_equal(fx, fm)
    assert np.all(fx >= 0)


def test_kernel_invariants():
    with pytest.raises(ValueError):
        Riesz(1.0, 1)
    with pytest.raises(ValueError):
        OrnsteinUhlenbeck(2.5, 1.0, 1)
    with pytest.raises(ValueError):
        OrnsteinUhlenbeck(2.0, 0.0, 1)
    with pytest.raises(ValueError):
        WhiteNoise1D(dim=2)


def test_heat_kernel_examples():
    assert heat_kernel(HeatParams(1.0, 1), 1 / (2 * math.pi), 0.0) == pytest.approx(1.0)
    assert heat_kernel(HeatParams(2.0, 2), 1.0, [1.0, 1.0]) == pytest.approx(math.exp(-0.5) / (4 * math.pi))
    p = HeatParams(0.7, 2)
    mass = integrate.dblquad(lambda a, b: heat_kernel(p, 0.3, [a, b]), -8, 8, -8, 8)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(NonpositiveTime):
        heat_kernel(p, 0.0, [0.0, 0.0])


def test_gauss_factor():
    p = HeatParams(1.0, 2)
    assert gauss_factor(p, 3.0, [0.0, 0.0]) == 1.0
    assert gauss_factor(p, 1.0, [1.0, 0.0]) == pytest.approx(math.exp(-1.0))
    x, t = [0.4, -1.1], 0.8
    half, quarter = HeatParams(0.5, 2), HeatParams(0.25, 2)
    assert gauss_factor(half, t, x) ** 2 == pytest.approx(gauss_factor(quarter, t, x), rel=1e-14)


def test_k_examples():
    ts = np.geomspace(1e-3, 1e2, 11)
    assert np.all(k_of_t(Constant(1.0, 3), HeatParams(1.0, 3), ts) == 1.0)
    p = HeatParams(1.7, 1)
    assert np.allclose(k_of_t(WhiteNoise1D(), p, ts), (2 * math.pi * p.nu * ts) ** -0.5, rtol=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_ou_k_against_direct_quadrature(d):
    # E exp(-|B_t|^2) from a 1-D Gaussian integral raised to the d-th power
    p = HeatParams(0.8, d)
    for t in (0.01, 0.5, 7.0):
        s = math.sqrt(p.nu * t)
        one = integrate.quad(lambda z: math.exp(-z * z) * math.exp(-z * z / (2 * s * s))
                             / math.sqrt(2 * math.pi) / s, -np.inf, np.inf, epsabs=0, epsrel=1e-13)[0]
        assert float(k_of_t(OrnsteinUhlenbeck(2, 1, d), p, t)) == pytest.approx(one ** d, rel=1e-10)


@pytest.mark.parametrize("kernel", [Riesz(0.5, 3), Riesz(1.5, 3), OrnsteinUhlenbeck(2, 1, 3),
                                    Cauchy(dim=2), BoxIndicator(0.7, 1)], ids=lambda k: k.describe())
def test_k_quadrature_matches_closed(kernel):
    p = HeatParams(1.3, kernel.dim)
    ts = np.geomspace(1e-3, 1e2, 7)
    q = k_of_t(kernel, p, ts, method="quadrature")
    assert np.allclose(q, k_of_t(kernel, p, ts, method="closed"), rtol=1e-6, atol=0)


@pytest.mark.parametrize("kernel", CATALOG + [WhiteNoise1D()], ids=lambda k: k.describe())
def test_k_nonincreasing(kernel):
    p = HeatParams(1.0, kernel.dim)
    k = np.asarray(k_of_t(kernel, p, np.geomspace(1e-3, 1e3, 25)))
    assert np.all(np.diff(k) <= 1e-12 * k[:-1])


def test_h1_table_matches_closed_form():
    # Poisson has no closed h_1: compare the table with quadrature of k
    k, p = Poisson(dim=3), HeatParams(1.0, 3)
    direct = integrate.quad(lambda s: float(k_of_t(k, p, s)), 0, 2.0, epsrel=1e-11)[0]
    assert float(h1_of_t(k, p, 2.0)) == pytest.approx(direct, rel=1e-6)


def test_j0_examples():
    p = HeatParams(1.0, 2)
    assert j0(DiracAt((0.0, 0.0), dim=2), p, 0.5, [0.0, 0.0]) == pytest.approx(1 / (2 * math.pi * 0.5))
    assert j0(LebesgueScaled(1.0, dim=2), p, 3.0, [4.0, 1.0]) == 1.0
    p1 = HeatParams(1.0, 1)
    mu = Atoms(((-1.0,), (1.0,)), (0.5, 0.5))
    for x in (-0.3, 0.0, 2.0):
        ref = 0.5 * heat_kernel(p1, 0.4, x + 1) + 0.5 * heat_kernel(p1, 0.4, x - 1)
        assert j0(mu, p1, 0.4, x) == pytest.approx(ref, rel=1e-14)


def test_j0_density_mass_conservation():
    p = HeatParams(1.0, 1)
    mu = Density(lambda z: np.ones(np.shape(z)[:-1]) if np.ndim(z) > 1 else 1.0, (-1.0,), (1.0,))
    ref = integrate.quad(lambda z: heat_kernel(p, 0.3, 0.5 - z), -1, 1)[0]
    assert j0(mu, p, 0.3, 0.5) == pytest.approx(ref, rel=1e-8)


def test_j0_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        j0(DiracAt((0.0,)), HeatParams(1.0, 2), 1.0, [0.0, 0.0])


def test_config_parsing(tmp_path):
    assert kernel_from_config({"variant": "riesz", "alpha": "0.5", "dim": "3"}) == Riesz(0.5, 3)
    assert kernel_from_config({"variant": "OU", "c": "2", "dim": "2"}) == OrnsteinUhlenbeck(2.0, 2.0, 2)
    table = tmp_path / "f.csv"
    table.write_text("radius,value\n0,1\n1,0.5\n2,0\n")
    k = kernel_from_config({"variant": "tabulated", "table_path": str(table), "dim": "1"})
    assert eval_f(k, 0.5) == pytest.approx(0.75)
    assert eval_f(k, 3.0) == 0.0
    with pytest.raises(ConfigError):
        kernel_from_config({"variant": "riesz", "alpah": "1"})
    with pytest.raises(ConfigError):
        kernel_from_config({"variant": "nope"})
