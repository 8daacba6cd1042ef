"""Brute-force discretization of the convolution operator in d = 1.

For fields h, w of (t, x, x'; y),

    (h |> w)(t, x, x'; y) = int_0^t ds int int dz dz' h(t-s, x-z, x'-z'; y-(z-z'))
                             w(s, z, z'; y) f(y-(z-z')).

The time integral uses the midpoint rule and the space integrals a uniform
symmetric lattice.  Fields are evaluated slice by slice: ``field.slice(t, y)``
is the (n, n) array of values at lattice points (x_i, x'_j).  Heat-kernel
factors are normalized to unit mass on the lattice so that narrow Gaussians
near the ends of the time interval act as point masses instead of aliasing.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, GridMismatch, TruncationWarning
from .kernels import CorrelationKernel, HeatParams, eval_f

BOUNDARY_MASS_TOL = 1e-6


@dataclass(frozen=True)
class Lattice:
    """n nodes symmetric about 0 with spacing 2 L / n."""

    half_width: float
    n: int = 64

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n) - (self.n - 1) / 2.0) * self.dx

    def index_of(self, x: float) -> int:
        i = int(round(x / self.dx + (self.n - 1) / 2.0))
        if not (0 <= i < self.n) or abs(self.nodes[i] - x) > 1e-9 * max(1.0, abs(x)):
            raise GridMismatch(f"{x} is not a lattice node")
        return i


def lattice_gauss(p: HeatParams, lat: Lattice, t: float, a: np.ndarray) -> np.ndarray:
    """dx G(t, a) renormalized to unit mass on the shifted infinite lattice of a."""
    dx = lat.dx
    a = np.asarray(a, dtype=float)
    frac = np.mod(np.round(a / dx, 9), 1.0)
    out = np.empty(a.shape)
    sd = math.sqrt(p.nu * t)
    m = np.arange(-int(40 * sd / dx) - 2, int(40 * sd / dx) + 3)
    for fr in np.unique(frac):
        mass = np.sum(np.exp(-((m + fr) * dx) ** 2 / (2 * p.nu * t)))
        sel = frac == fr
        out[sel] = np.exp(-a[sel] ** 2 / (2 * p.nu * t)) / mass
    return out


class GridField:
    """A function of (t, x, x'; y) sampled on lattice slices."""

    lattice: Lattice

    def slice(self, t: float, y: float) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class FunctionField(GridField):
    """Field given by a vectorized callable func(t, x, x', y)."""

    lattice: Lattice
    func: Callable

    def slice(self, t, y):
        x = self.lattice.nodes
        return np.broadcast_to(np.asarray(self.func(t, x[:, None], x[None, :], y), dtype=float),
                               (x.size, x.size)).copy()


@dataclass
class GaussianPair(GridField):
    """L_0(t, x, x'; y) = G(t, x) G(t, x') (offset-free, separable)."""

    lattice: Lattice
    p: HeatParams

    def matrix(self, t: float, rows: np.ndarray | None = None) -> np.ndarray:
        """A[i, k] = dx G(t, row_i - z_k) with lattice normalization."""
        x = self.lattice.nodes if rows is None else rows
        z = self.lattice.nodes
        return lattice_gauss(self.p, self.lattice, t, x[:, None] - z[None, :])

    def slice(self, t, y):
        x = self.lattice.nodes
        g = lattice_gauss(self.p, self.lattice, t, x) / self.lattice.dx
        return np.outer(g, g)


@dataclass
class RhdField(GridField):
    """Lazy h |> w with midpoint time quadrature of ``n_time`` nodes per interval."""

    h: GridField
    w: GridField
    kernel: CorrelationKernel
    p: HeatParams
    n_time: int = 64
    lattice: Lattice = field(init=False)
    _memo: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.h.lattice != self.w.lattice:
            raise GridMismatch("fields live on different lattices")
        self.lattice = self.h.lattice

    def _offset_f(self, y: float) -> np.ndarray:
        z = self.lattice.nodes
        return np.asarray(eval_f(self.kernel, y - (z[:, None] - z[None, :])), dtype=float)

    def slice(self, t, y):
        key = (round(float(t), 14), round(float(y), 14))
        if key not in self._memo:
            _warn_boundary(self.p, self.lattice, t)
            if isinstance(self.h, GaussianPair):
                val = self._gaussian_left(t, y)
            elif (isinstance(self.h, RhdField) and isinstance(self.h.h, GaussianPair)
                  and isinstance(self.h.w, GaussianPair)):
                val = self._nested_left(t, y)
            else:
                raise NotImplementedError("left factor must be L_0 or L_0 |> L_0")
            self._memo[key] = val
        return self._memo[key]

    def _gaussian_left(self, t, y):
        n = self.n_time
        ds = t / n
        F = self._offset_f(y)
        out = np.zeros((self.lattice.n, self.lattice.n))
        for j in range(n):
            s = (j + 0.5) * ds
            A = self.h.matrix(t - s)
            M = self.w.slice(s, y) * F
            out += A @ M @ A.T
        return out * ds

    def _nested_left(self, t, y):
        # ((L0 |> L0) |> v): substitute p = z + zeta in the inner lattice sum, so the
        # offset of the inner f becomes y - (p - p') and both sums are matrix products
        n, n_in = self.n_time, self.h.n_time
        g = self.h.h
        F = self._offset_f(y)
        out = np.zeros((self.lattice.n, self.lattice.n))
        ds = t / n
        for j in range(n):
            s = (j + 0.5) * ds
            M = self.w.slice(s, y) * F
            tau = t - s
            dsp = tau / n_in
            for i in range(n_in):
                sp = (i + 0.5) * dsp
                B = g.matrix(sp)
                Q = B @ M @ B.T
                A = g.matrix(tau - sp)
                out += dsp * (A @ (Q * F) @ A.T)
        return out * ds

    def at(self, t: float, x: float, xp: float, y: float) -> float:
        i, j = self.lattice.index_of(x), self.lattice.index_of(xp)
        return float(self.slice(t, y)[i, j])


def _warn_boundary(p: HeatParams, lat: Lattice, t: float):
    lost = math.erfc(lat.half_width / math.sqrt(2 * p.nu * t))
    if lost > BOUNDARY_MASS_TOL:
        warnings.warn(f"heat-kernel mass {lost:.2e} beyond the lattice at t={t}", TruncationWarning,
                      stacklevel=3)


def discrete_rhd(h: GridField, w: GridField, kernel: CorrelationKernel, p: HeatParams,
                 n_time: int = 64) -> RhdField:
    """h |> w as a lazily evaluated field (d = 1)."""
    if p.dim != 1 or kernel.dim != 1:
        raise DimensionMismatch("the discrete operator is implemented for d = 1")
    return RhdField(h, w, kernel, p, n_time)


def L_discrete(n: int, kernel: CorrelationKernel, p: HeatParams, lattice: Lattice,
               n_time: int = 64) -> GridField:
    """L_n = L_0 |> L_{n-1} built from the discrete operator."""
    L = GaussianPair(lattice, p)
    out: GridField = L
    for _ in range(n):
        out = discrete_rhd(L, out, kernel, p, n_time)
    return out
