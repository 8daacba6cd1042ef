import math
import warnings

import numpy as np
import pytest

from shemoments.errors import DimensionMismatch, GridMismatch, TruncationWarning
from shemoments.kernels import Constant, HeatParams, OrnsteinUhlenbeck
from shemoments.moments import L0, L1_exact
from shemoments.rhd import (FunctionField, GaussianPair, Lattice, L_discrete, discrete_rhd,
                            lattice_gauss)

KERN = OrnsteinUhlenbeck(2, 1, 1)
P = HeatParams(1.0, 1)


def test_lattice_nodes_symmetric():
    lat = Lattice(6.0, 64)
    np.testing.assert_allclose(lat.nodes, -lat.nodes[::-1], atol=1e-14)
    assert lat.dx == pytest.approx(0.1875)
    assert lat.nodes[lat.index_of(lat.nodes[10])] == lat.nodes[10]
    with pytest.raises(GridMismatch):
        lat.index_of(0.0)


def test_lattice_gauss_unit_mass():
    lat = Lattice(6.0, 64)
    for t in (1e-4, 0.01, 1.0):
        for shift in (0.0, 0.5 * lat.dx):
            row = lattice_gauss(P, lat, t, lat.nodes + shift)
            # normalized on the infinite lattice; only the tail beyond +-L is missing
            tail = math.erfc((lat.half_width - lat.dx) / math.sqrt(2 * P.nu * t))
            assert row.sum() == pytest.approx(1.0, abs=tail + 1e-12)


def test_zero_field_gives_zero():
    lat = Lattice(6.0, 32)
    zero = FunctionField(lat, lambda t, x, xp, y: 0.0 * x * xp)
    out = discrete_rhd(GaussianPair(lat, P), zero, KERN, P, n_time=8)
    assert np.all(out.slice(1.0, 0.0) == 0.0)


def test_L1_matches_exact_reduction():
    lat = Lattice(6.0, 64)
    L1 = L_discrete(1, KERN, P, lat, n_time=64)
    for x, xp, y in ((lat.nodes[32], lat.nodes[32], 0.0), (lat.nodes[28], lat.nodes[36], 0.5),
                     (lat.nodes[36], lat.nodes[30], -0.75)):
        assert L1.at(1.0, x, xp, y) == pytest.approx(L1_exact(KERN, P, 1.0, x, xp, y), rel=2e-3)


def test_constant_kernel_L1_is_t_L0():
    lat = Lattice(6.0, 48)
    kern = Constant(1.0, 1)
    L1 = L_discrete(1, kern, P, lat, n_time=32)
    x = lat.nodes[20]
    xp = lat.nodes[27]
    assert L1.at(1.0, x, xp, 0.3) == pytest.approx(float(L0(P, 1.0, x, xp)), rel=5e-3)


def test_truncation_warning_on_small_lattice():
    lat = Lattice(1.0, 16)
    out = discrete_rhd(GaussianPair(lat, P), GaussianPair(lat, P), KERN, P, n_time=4)
    with pytest.warns(TruncationWarning):
        out.slice(1.0, 0.0)


def test_no_warning_on_wide_lattice():
    lat = Lattice(8.0, 32)
    out = discrete_rhd(GaussianPair(lat, P), GaussianPair(lat, P), KERN, P, n_time=4)
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationWarning)
        out.slice(1.0, 0.0)


def test_mismatched_lattices_rejected():
    with pytest.raises(GridMismatch):
        discrete_rhd(GaussianPair(Lattice(6.0, 32), P), GaussianPair(Lattice(6.0, 64), P), KERN, P)


def test_only_one_dimension():
    q = HeatParams(1.0, 2)
    lat = Lattice(6.0, 16)
    with pytest.raises(DimensionMismatch):
        discrete_rhd(GaussianPair(lat, q), GaussianPair(lat, q), OrnsteinUhlenbeck(2, 1, 2), q)


def test_slices_are_memoized_and_symmetric():
    lat = Lattice(6.0, 32)
    L1 = L_discrete(1, KERN, P, lat, n_time=16)
    a = L1.slice(1.0, 0.0)
    assert L1.slice(1.0, 0.0) is a
    # y = 0 with an even kernel: symmetric under x <-> x'
    np.testing.assert_allclose(a, a.T, rtol=1e-12, atol=1e-300)
    assert math.isfinite(a.max()) and a.min() >= 0
