import math

import numpy as np
import pytest
from scipy.special import ndtr

from shemoments.errors import DivergentIntegral, GridMismatch
from shemoments.kernels import HeatParams, Riesz, k_of_t
from shemoments.quadrature import (SingularWeight, TimeGrid, convolve_on_grid, integrate_singular,
                                   monotone_limit, radial_integral, solve_volterra)


def test_time_grid():
    g = TimeGrid(2.0, 8)
    assert g.dt == 0.25
    assert g.nodes[0] == 0 and g.nodes[-1] == 2.0 and np.all(np.diff(g.nodes) > 0)
    assert g.index_of(0.5) == 2
    with pytest.raises(GridMismatch):
        g.index_of(0.3)
    assert TimeGrid.with_density(1.0, 101).n_steps % 2 == 0


def test_singular_weight_validation():
    with pytest.raises(ValueError):
        SingularWeight(-1.0)


def test_integrate_singular_examples():
    assert integrate_singular(lambda s: 1.0, 0.0, 1.0, SingularWeight(-0.5)) == pytest.approx(2.0, rel=1e-12)
    assert integrate_singular(lambda s: s, 0.0, 2.0, SingularWeight(0.0)) == pytest.approx(2.0, rel=1e-12)


def test_integrate_singular_riesz_h1():
    p = HeatParams(1.0, 3)
    k = Riesz(1.0, 3)
    C = float(k_of_t(k, p, 1.0))
    val = integrate_singular(lambda s: float(k_of_t(k, p, s)) * math.sqrt(s), 0.0, 1.0, -0.5)
    assert val == pytest.approx(2.0 * C, rel=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_radial_gaussian_mass(d):
    prof = lambda r: (2 * math.pi) ** (-d / 2) * np.exp(-np.asarray(r) ** 2 / 2)
    assert radial_integral(prof, lambda r: 1.0, d) == pytest.approx(1.0, rel=1e-10)


def test_radial_riesz_against_heat_kernel():
    d, t = 3, 0.7
    G = lambda r: (2 * math.pi * t) ** (-d / 2) * np.exp(-np.asarray(r) ** 2 / (2 * t))
    val = radial_integral(lambda r: np.asarray(r, dtype=float) ** -1.0, G, d, origin_exponent=-1.0)
    assert val == pytest.approx(float(k_of_t(Riesz(1.0, 3), HeatParams(1.0, 3), t)), rel=1e-9)


def test_box_indicator_against_gaussian():
    a, t = 1.3, 0.4
    G = lambda r: (2 * math.pi * t) ** -0.5 * np.exp(-np.asarray(r) ** 2 / (2 * t))
    box = lambda r: (np.asarray(r) <= a).astype(float)
    val = radial_integral(box, G, 1, breakpoints=[a])
    assert val == pytest.approx(2 * ndtr(a / math.sqrt(t)) - 1, rel=1e-10)


def test_radial_divergent_tail():
    with pytest.raises(DivergentIntegral):
        radial_integral(lambda r: 1.0 / (1 + np.asarray(r)), lambda r: 1.0, 1)


def test_convolution_examples():
    g = TimeGrid(2.0, 64)
    t = g.nodes
    one = np.ones_like(t)
    assert np.allclose(convolve_on_grid(g, one, one), t, atol=1e-14)
    assert np.allclose(convolve_on_grid(g, one, one, SingularWeight(-0.5)), 2 * np.sqrt(t), atol=1e-13)
    twice = convolve_on_grid(g, one, convolve_on_grid(g, one, one))
    assert np.allclose(twice, t ** 2 / 2, atol=1e-8)


def test_convolution_linear_and_monotone():
    g = TimeGrid(1.0, 32)
    rng = np.random.default_rng(0)
    a, b, c = rng.random((3, 33))
    lhs = convolve_on_grid(g, a, 2 * b + 3 * c)
    assert np.allclose(lhs, 2 * convolve_on_grid(g, a, b) + 3 * convolve_on_grid(g, a, c))
    assert np.all(convolve_on_grid(g, a, b, SingularWeight(-0.3)) >= 0)


def test_convolution_grid_mismatch():
    g = TimeGrid(1.0, 8)
    with pytest.raises(GridMismatch):
        convolve_on_grid(g, np.ones(9), np.ones(10))


def test_grid_refinement_within_error_estimate():
    g = TimeGrid(1.0, 64)
    t = g.nodes
    left = np.exp(-t)
    right = np.cos(t)
    c, err = convolve_on_grid(g, left, right, SingularWeight(-0.5), return_error=True)
    fine = convolve_on_grid(TimeGrid(1.0, 128), np.exp(-TimeGrid(1.0, 128).nodes),
                            np.cos(TimeGrid(1.0, 128).nodes), SingularWeight(-0.5))[::2]
    assert np.all(np.abs(fine - c) <= 2 * err + 1e-14)


def test_volterra_exponential():
    g = TimeGrid(2.0, 256)
    H = solve_volterra(g, np.ones(257), 0.0, 1.5)
    assert np.allclose(H, np.exp(1.5 * g.nodes), rtol=1e-4)


def test_monotone_limit():
    conv = monotone_limit(lambda k: 1 - 2.0 ** -k)
    assert not conv.divergent and conv.value == pytest.approx(1.0, rel=1e-8)
    assert monotone_limit(lambda k: float(k)).divergent
