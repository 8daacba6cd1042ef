"""The h_n family, the series H and H*, and two-point second-moment bounds.

``h_n(t, y) = int_0^t h_{n-1}(s, y) k(t-s) T_{nu/4}(t-s, y) ds`` with h_0 = 1 is
computed on a uniform TimeGrid by product integration against the
singular part of k.  The generating series ``H(t, y; gamma) = sum gamma^n h_n``
controls upper and lower envelopes for E[u(t,x) u(t,x')].
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import ive

from .errors import DimensionMismatch, TruncationNotConverged, TruncationWarning, UnsupportedMeasure
from .kernels import (Atoms, BoxIndicator, Cauchy, Constant, CorrelationKernel, Density, DiracAt,
                      HeatParams, InitialMeasure, LebesgueScaled, OrnsteinUhlenbeck, WhiteNoise1D,
                      _check_time, gauss_factor, h1_of_t, h1_offset, heat_kernel, j0,
                      k_of_t, k_smooth)
from .quadrature import ProductRule, TimeGrid, integrate_singular, radial_integral

DEFAULT_ORDER = 64
MAX_ORDER = 4096
SERIES_RTOL = 1e-8
GRID_RTOL = 1e-5
MAX_GRID_STEPS = 8192
LOWER_CONSTANT_BASE = 2.0 * math.sqrt(3.0)


def lower_constant(d: int) -> float:
    """kappa = (2 sqrt 3)^{-d}, the coupling reduction in the lower envelope."""
    return LOWER_CONSTANT_BASE ** (-d)


def _point(y, d: int) -> tuple:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (d,):
        raise DimensionMismatch(f"offset must have {d} coordinates")
    return tuple(float(c) for c in y)


_K_CACHE: dict = {}


def k_on_grid(kernel: CorrelationKernel, p: HeatParams, grid: TimeGrid) -> np.ndarray:
    """k(u) u^{-e} at the grid nodes (memoized; k does not depend on the offset)."""
    key = (kernel, p, grid)
    if key not in _K_CACHE:
        if len(_K_CACHE) > 256:
            _K_CACHE.clear()
        _K_CACHE[key] = np.asarray(k_smooth(kernel, p, grid.nodes), dtype=float)
    return _K_CACHE[key]


def _left_factor(kernel, p, grid, y) -> np.ndarray:
    left = k_on_grid(kernel, p, grid).copy()
    r2 = sum(c * c for c in y)
    if r2 > 0:
        u = grid.nodes
        with np.errstate(divide="ignore", over="ignore"):
            left *= np.where(u > 0, np.exp(-4.0 * r2 / (p.nu * np.where(u > 0, u, 1.0))), 0.0)
    return left


# --- HFamily ------------------------------------------------------------------------


@dataclass
class HFamily:
    """Values h_n(t_j, y) for n = 0..N on a TimeGrid (row n, column j)."""

    kernel: CorrelationKernel
    p: HeatParams
    y: tuple
    grid: TimeGrid
    values: np.ndarray
    _rule: ProductRule | None = field(default=None, repr=False, compare=False)
    # Richardson pair: raw values on this grid and the family on the doubled grid
    _raw: np.ndarray | None = field(default=None, repr=False, compare=False)
    _fine: "HFamily | None" = field(default=None, repr=False, compare=False)

    @property
    def order(self) -> int:
        return self.values.shape[0] - 1

    def row(self, n: int) -> np.ndarray:
        return self.values[n]

    def at(self, n: int, t: float) -> float:
        return float(self.values[n, self.grid.index_of(t)])

    def rule(self) -> ProductRule:
        if self._rule is None:
            self._rule = ProductRule(self.grid, _left_factor(self.kernel, self.p, self.grid, self.y),
                                     self.kernel.k_exponent())
        return self._rule

    def extend(self, order: int) -> "HFamily":
        """Append rows up to ``order`` in place; returns self."""
        if order <= self.order:
            return self
        rule = self.rule()
        rows = list(self.values if self._raw is None else self._raw)
        for _ in range(self.order, order):
            rows.append(rule.apply(rows[-1]))
        if self._fine is None:
            self.values = np.vstack(rows)
        else:
            self._raw = np.vstack(rows)
            self._fine.extend(order)
            self.values = (4.0 * self._fine.values[:, ::2] - self._raw) / 3.0
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "t", "value"])
        t = self.grid.nodes
        for n, row in enumerate(self.values):
            for tj, v in zip(t, row):
                w.writerow([n, repr(float(tj)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, kernel: CorrelationKernel, p: HeatParams, y=None) -> "HFamily":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["n", "t", "value"]:
            raise ValueError("expected header n,t,value")
        data = np.array([[float(c) for c in r] for r in rows[1:] if r])
        n_max = int(data[:, 0].max())
        ts = np.unique(data[:, 1])
        grid = TimeGrid(float(ts[-1]), len(ts) - 1)
        values = np.zeros((n_max + 1, len(ts)))
        idx = np.rint(data[:, 1] / grid.dt).astype(int)
        values[data[:, 0].astype(int), idx] = data[:, 2]
        y = _point(np.zeros(p.dim) if y is None else y, p.dim)
        return cls(kernel, p, y, grid, values)


def compute_h_family(kernel: CorrelationKernel, p: HeatParams, y, grid: TimeGrid,
                     order: int = DEFAULT_ORDER, *, richardson: bool = False) -> HFamily:
    """h_0..h_order at offset ``y`` on ``grid`` by iterated product integration.

    With ``richardson`` (only for kernels with bounded k) the family is also
    computed on a grid twice as fine and the O(dt^2) error of the product
    rule is extrapolated away at the nodes of ``grid``.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if kernel.dim != p.dim:
        raise DimensionMismatch("kernel and heat parameters disagree on d")
    y = _point(y, p.dim)
    fam = HFamily(kernel, p, y, grid, np.ones((1, grid.n_steps + 1)))
    fam.extend(order)
    if richardson:
        if kernel.k_exponent() != 0:
            raise ValueError("Richardson extrapolation needs a bounded k")
        fine = HFamily(kernel, p, y, TimeGrid(grid.t_max, 2 * grid.n_steps),
                       np.ones((1, 2 * grid.n_steps + 1))).extend(order)
        fam._raw = fam.values
        fam._fine = fine
        fam.values = (4.0 * fine.values[:, ::2] - fam._raw) / 3.0
    return fam


# --- series -------------------------------------------------------------------------


def _series_at(fam: HFamily, gamma: float, j) -> tuple[np.ndarray, np.ndarray]:
    """Partial sums and geometric tail bounds at column(s) ``j``."""
    n = np.arange(fam.order + 1, dtype=float)
    vals = fam.values[:, np.atleast_1d(j)]
    # in logs: gamma^n overflows long before h_n underflows to zero
    with np.errstate(divide="ignore", over="ignore"):
        terms = np.where(vals > 0, np.exp(n[:, None] * math.log(gamma) + np.log(np.where(vals > 0, vals, 1.0))),
                         0.0)
    total = terms.sum(axis=0)
    last, prev = terms[-1], terms[-2]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(prev > 0, last / prev, 0.0)
        bound = np.where(last == 0, 0.0, np.where(r < 1, last * r / (1 - r), np.inf))
    return total, bound


def H_series(fam: HFamily, gamma: float, t: float, *, rtol: float = SERIES_RTOL,
             max_order: int = MAX_ORDER) -> tuple[float, float]:
    """H(t, y; gamma) from the family, with a tail bound; extends the family as needed.

    The tail beyond order N is bounded geometrically by the ratio of the last
    two retained terms.  Raises TruncationNotConverged if the bound stays above
    ``rtol`` relative at ``max_order``.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    j = fam.grid.index_of(t)
    if gamma == 0:
        return 1.0, 0.0
    while True:
        total, bound = _series_at(fam, gamma, j)
        total, bound = float(total[0]), float(bound[0])
        if bound <= rtol * total:
            return total, bound
        if fam.order >= max_order:
            raise TruncationNotConverged(
                f"H series not converged at t={t}: value {total:.6g}, tail bound {bound:.3g}",
                value=total, bound=bound)
        fam.extend(min(2 * fam.order, max_order))


def H_series_nodes(fam: HFamily, gamma: float, *, rtol: float = SERIES_RTOL,
                   max_order: int = MAX_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """H at every grid node, with per-node tail bounds."""
    cols = np.arange(fam.grid.n_steps + 1)
    if gamma == 0:
        return np.ones(cols.size), np.zeros(cols.size)
    while True:
        total, bound = _series_at(fam, gamma, cols)
        if np.all(bound <= rtol * total):
            return total, bound
        if fam.order >= max_order:
            k = int(np.argmax(bound / total))
            raise TruncationNotConverged(
                f"H series not converged at t={fam.grid.nodes[k]}", value=float(total[k]),
                bound=float(bound[k]))
        fam.extend(min(2 * fam.order, max_order))


def H_refined(kernel: CorrelationKernel, p: HeatParams, gamma: float, t: float, y=None, *,
              rtol: float = GRID_RTOL, max_steps: int = MAX_GRID_STEPS) -> float:
    """H(t, y; gamma) with the time grid doubled until successive values agree to ``rtol``.

    The product rule error grows with the order n, so a grid that resolves
    h_1 well can still be coarse for H when large orders dominate.  Once three
    levels exist, Aitken extrapolation of the sequence is also tried and
    accepted when two consecutive extrapolants agree.  Emits a
    TruncationWarning and returns the best value if ``max_steps`` is reached.
    """
    y = np.zeros(p.dim) if y is None else y
    if gamma == 0:
        return 1.0
    grid = TimeGrid.with_density(t)
    vals: list[float] = []
    ext: list[float] = []
    while True:
        val = H_series(compute_h_family(kernel, p, y, grid), gamma, t)[0]
        vals.append(val)
        if len(vals) >= 2 and abs(vals[-1] - vals[-2]) <= rtol * val:
            return val
        if len(vals) >= 3:
            d1, d2 = vals[-2] - vals[-3], vals[-1] - vals[-2]
            r = d1 / d2 if d2 != 0 else math.inf
            # only extrapolate once the error ratio looks algebraic (between dt and dt^3)
            ext.append(val + d2 / (r - 1) if 1.5 < r < 10 else math.nan)
            if len(ext) >= 2 and abs(ext[-1] - ext[-2]) <= rtol * abs(ext[-1]):
                return ext[-1]
        if 2 * grid.n_steps > max_steps:
            best, prev = val, (vals[-2] if len(vals) > 1 else math.inf)
            if len(ext) >= 2 and math.isfinite(ext[-1]) and math.isfinite(ext[-2]):
                best, prev = ext[-1], ext[-2]
            rel = abs(best - prev) / best
            warnings.warn(f"H(t={t}) changed by {rel:.2e} at the finest grid ({grid.n_steps} steps)",
                          TruncationWarning, stacklevel=2)
            return best
        grid = TimeGrid(grid.t_max, 2 * grid.n_steps)


def _h1_at(kernel, p, t, y) -> np.ndarray:
    if sum(c * c for c in y) == 0:
        return np.asarray(h1_of_t(kernel, p, t), dtype=float)
    return np.array([h1_offset(kernel, p, float(s), y) for s in np.atleast_1d(t)])


def log_H_star(kernel: CorrelationKernel, p: HeatParams, gamma: float, t: float, y=None,
               *, stop_run: int = 10, chunk: int = 256) -> float:
    """log sum_n gamma^n h_1(t/n, y)^n, summed until terms stay below 1e-16 of the max."""
    y = _point(np.zeros(p.dim) if y is None else y, p.dim)
    if gamma == 0 or t == 0:
        return 0.0
    logs = [0.0]
    best = 0.0
    below = 0
    n0 = 1
    lg = math.log(gamma)
    cutoff = math.log(1e-16)
    while below < stop_run:
        n = np.arange(n0, n0 + chunk, dtype=float)
        h = _h1_at(kernel, p, t / n, y)
        with np.errstate(divide="ignore"):
            lt = n * (lg + np.log(h))
        for v in lt:
            logs.append(float(v))
            if v > best:
                best = float(v)
                below = 0
            elif v < best + cutoff:
                below += 1
                if below >= stop_run:
                    break
            else:
                below = 0
        n0 += chunk
    arr = np.array(logs)
    m = arr.max()
    return float(m + math.log(np.sum(np.exp(arr - m))))


def H_star(kernel: CorrelationKernel, p: HeatParams, gamma: float, t: float, y=None) -> float:
    """sum_n gamma^n h_1(t/n, y)^n (the n = 0 term is 1)."""
    return math.exp(log_H_star(kernel, p, gamma, t, y))


# --- kernels L_0, L_1 and the envelopes --------------------------------------------


def L0(p: HeatParams, t: float, x, xp) -> float:
    """G(t, x) G(t, x')."""
    return heat_kernel(p, t, x) * heat_kernel(p, t, xp)


def smoothed_f(kernel: CorrelationKernel, p: HeatParams, tau: float, m) -> float:
    """int f(z) G(tau, z + m) dz: the correlation smoothed by the heat kernel at shift m."""
    d = p.dim
    m = np.atleast_1d(np.asarray(m, dtype=float))
    r2 = float(np.sum(m * m))
    if isinstance(kernel, Constant):
        return kernel.level
    if isinstance(kernel, WhiteNoise1D):
        return float(heat_kernel(p, tau, m[0]))
    if isinstance(kernel, OrnsteinUhlenbeck) and kernel.alpha == 2:
        s = 1.0 + 2.0 * kernel.c * p.nu * tau
        return s ** (-d / 2) * math.exp(-kernel.c * r2 / s)
    if r2 == 0:
        return float(k_of_t(kernel, p, tau))
    if not kernel.radial:
        out = 1.0
        for mi in m:
            out *= _smoothed_factor(kernel, p, tau, mi)
        return out
    var = p.nu * tau
    rho = math.sqrt(r2)
    if d == 1:
        return _smoothed_1d(kernel.f_radial, kernel.origin_exponent(), var, rho)
    v = d / 2 - 1

    def w(r):
        # Gaussian averaged over the sphere of radius r:
        # exp(-(r^2 + rho^2)/(2 var)) Gamma(d/2) (2/q)^v I_v(q), q = r rho / var
        q = r * rho / var
        ang = math.gamma(d / 2) * (2.0 / q) ** v * ive(v, q) if q > 0 else math.exp(-q)
        return (2 * math.pi * var) ** (-d / 2) * ang * math.exp(-(r - rho) ** 2 / (2 * var))

    return radial_integral(kernel.f_radial, w, d, scale=math.sqrt(var),
                           breakpoints=[rho, kernel.length_scale() or 1.0],
                           origin_exponent=kernel.origin_exponent())


def _smoothed_1d(f_radial, e0, var, m) -> float:
    sd = math.sqrt(var)
    g = lambda z: float(f_radial(abs(z))) * math.exp(-(z + m) ** 2 / (2 * var))
    pts = sorted({-m, 0.0})
    lo, hi = min(pts) - 40 * sd, max(pts) + 40 * sd
    edges = [lo] + pts + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        if e0 < 0 and (a == 0.0 or b == 0.0):
            # |z|^{e0} singularity at the origin endpoint
            if b == 0.0:
                total += integrate_singular(lambda s: g(-s) * s ** (-e0) if s > 0 else 0.0,
                                            0.0, -a, e0)
            else:
                total += integrate_singular(lambda s: g(s) * s ** (-e0) if s > 0 else 0.0,
                                            0.0, b, e0)
        else:
            total += integrate.quad(g, a, b, epsabs=0.0, epsrel=1e-11, limit=200)[0]
    return total / math.sqrt(2 * math.pi * var)


def _smoothed_factor(kernel, p, tau, m) -> float:
    var = p.nu * tau
    sd = math.sqrt(var)
    if isinstance(kernel, BoxIndicator):
        a = kernel.a
        return 0.5 * (math.erf((a - m) / (sd * math.sqrt(2))) + math.erf((a + m) / (sd * math.sqrt(2))))
    g = lambda z: float(kernel.f_factor(z)) * math.exp(-(z + m) ** 2 / (2 * var))
    lo, hi = -m - 40 * sd, -m + 40 * sd
    pts = [q for q in (0.0, -m) if lo < q < hi]
    val = integrate.quad(g, lo, hi, points=pts or None, epsabs=0.0, epsrel=1e-11, limit=200)[0]
    return val / math.sqrt(2 * math.pi * var)


def L1_exact(kernel: CorrelationKernel, p: HeatParams, t: float, x, xp, y) -> float:
    """L_1(t, x, x'; y) reduced to a one-dimensional time integral.

    G(t,x) G(t,x') int_0^t ds int f(z) G(2 s (t-s)/t, z + y - (s/t)(x - x')) dz.
    """
    _check_time(t)
    d = p.dim
    x, xp, y = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, xp, y))
    if not (x.size == xp.size == y.size == d):
        raise DimensionMismatch("points must lie in R^d")
    if isinstance(kernel, Constant):
        return L0(p, t, x, xp) * kernel.level * t
    diff = x - xp

    def inner(s):
        tau = 2.0 * s * (t - s) / t
        if tau <= 0:
            return 0.0
        return smoothed_f(kernel, p, tau, y - (s / t) * diff)

    e = kernel.k_exponent()
    half = 0.5 * t
    # near either end tau -> 0; with a zero shift the inner factor behaves like tau^e
    e_lo = e if np.all(y == 0) else 0.0
    e_hi = e if np.all(y - diff == 0) else 0.0
    lo = integrate_singular(lambda s: inner(s) * s ** (-e_lo) if s > 0 else 0.0, 0.0, half, e_lo)
    hi = integrate_singular(lambda u: inner(t - u) * u ** (-e_hi) if u > 0 else 0.0, 0.0, half, e_hi)
    return L0(p, t, x, xp) * (lo + hi)


def K_upper(kernel: CorrelationKernel, p: HeatParams, lam: float, t: float, x, xp,
            fam: HFamily | None = None) -> float:
    """Upper envelope of lam^{-2} K_lam: L_0(t,x,x') H(t; 2 lam^2).

    Without ``fam`` the time grid is refined until H settles (see H_refined).
    """
    if fam is None:
        return L0(p, t, x, xp) * H_refined(kernel, p, 2.0 * lam * lam, t)
    return L0(p, t, x, xp) * H_series(fam, 2.0 * lam * lam, t)[0]


def K_lower(kernel: CorrelationKernel, p: HeatParams, lam: float, t: float, x, xp, y,
            fam: HFamily | None = None) -> float:
    """Lower envelope of lam^{-2} K_lam: L_0 T_nu(t, x-x') H(t/2, y; kappa lam^2)."""
    x, xp = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, xp))
    gam = lower_constant(p.dim) * lam * lam
    if fam is None:
        h = H_refined(kernel, p, gam, 0.5 * t, y)
    else:
        h = H_series(fam, gam, 0.5 * t)[0]
    return L0(p, t, x, xp) * gauss_factor(p, t, x - xp) * h


# --- two-point bounds ----------------------------------------------------------------


@dataclass(frozen=True)
class MomentBound:
    lower: float
    upper: float
    t: float
    x: tuple
    x_prime: tuple
    lam_lower: float
    lam_upper: float
    mode: str

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower * (1 - slack) <= value <= self.upper * (1 + slack)


class OffsetTable:
    """H(t_half, |y|; gamma) on a radial grid, interpolated (H decreases in |y|)."""

    def __init__(self, kernel, p, t_half: float, gamma: float, r_max: float, n: int = 41,
                 steps_per_unit: int = 256):
        self.r_max = float(r_max)
        grid = TimeGrid.with_density(t_half, steps_per_unit)
        # Chebyshev-like clustering towards r = 0 where H varies most
        rs = self.r_max * (1 - np.cos(np.linspace(0, math.pi / 2, n)))
        vals = []
        for r in rs:
            y = np.zeros(p.dim)
            y[0] = r
            fam = compute_h_family(kernel, p, y, grid, 16)
            vals.append(H_series(fam, gamma, t_half)[0])
        self.r = rs
        self.h = np.maximum.accumulate(np.array(vals)[::-1])[::-1]
        self._interp = PchipInterpolator(rs, self.h)

    def __call__(self, r):
        r = np.minimum(np.asarray(r, dtype=float), self.r_max)
        return self._interp(r)


def two_point_bounds(mu: InitialMeasure, kernel: CorrelationKernel, p: HeatParams, lip: float,
                     Lip: float, t: float, x, xp, *, steps_per_unit: int = 256) -> MomentBound:
    """Envelope [lower, upper] on E[u(t,x) u(t,x')] for mu >= 0.

    upper = J_0(t,x) J_0(t,x') H(t; 2 Lip^2), from the offset-free upper envelope.
    lower = J_1 + int int mu mu L_0 T_nu (H(t/2, z'-z; kappa lip^2) - 1), which
    keeps the exact n = 0 term L_0 and bounds the n >= 1 terms from below.
    """
    if not (0 <= lip <= Lip):
        raise ValueError("need 0 <= lip <= Lip")
    if mu.dim != p.dim or kernel.dim != p.dim:
        raise DimensionMismatch("measure, kernel and heat parameters disagree on d")
    _check_time(t)
    d = p.dim
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    zero = np.zeros(d)
    j1 = float(j0(mu, p, t, x if d > 1 else x[0])) * float(j0(mu, p, t, xp if d > 1 else xp[0]))

    if Lip == 0:
        upper = j1
    else:
        upper = j1 * H_refined(kernel, p, 2.0 * Lip * Lip, t, zero)

    gam = lower_constant(d) * lip * lip
    if lip == 0:
        lower = j1
    else:
        lower = j1 + _lower_excess(mu, kernel, p, gam, t, x, xp, steps_per_unit)
    mode = "exact_linear" if lip == Lip else "envelope"
    return MomentBound(lower=float(lower), upper=float(upper), t=float(t), x=tuple(x),
                       x_prime=tuple(xp), lam_lower=float(lip), lam_upper=float(Lip), mode=mode)


def _pair_weight(p, t, x, xp, z, zp):
    """L_0(t, x-z, x'-z') T_nu(t, (x-z)-(x'-z')) for arrays of source points."""
    a = x[None, :] - z
    b = xp[None, :] - zp
    return np.atleast_1d(heat_kernel(p, t, a if p.dim > 1 else a[:, 0])
                         * heat_kernel(p, t, b if p.dim > 1 else b[:, 0])
                         * gauss_factor(p, t, (a - b) if p.dim > 1 else (a - b)[:, 0]))


def _lower_excess(mu, kernel, p, gam, t, x, xp, steps_per_unit) -> float:
    d = p.dim
    th = 0.5 * t
    if isinstance(mu, (DiracAt, Atoms)):
        pts, w = mu.atoms()
        grid = TimeGrid.with_density(th, steps_per_unit)
        cache = {}
        total = 0.0
        for i in range(len(w)):
            for j in range(len(w)):
                y = pts[j] - pts[i]
                key = round(float(np.sum(y * y)), 12)
                if key not in cache:
                    yy = np.zeros(d)
                    yy[0] = math.sqrt(key)
                    fam = compute_h_family(kernel, p, yy, grid, 16)
                    cache[key] = H_series(fam, gam, th)[0]
                wt = _pair_weight(p, t, x, xp, pts[i][None, :], pts[j][None, :])[0]
                total += w[i] * w[j] * wt * (cache[key] - 1.0)
        return total
    if isinstance(mu, LebesgueScaled):
        if d > 3:
            raise UnsupportedMeasure("flat initial data supported for d <= 3")
        # z, z' integrate out: V = (x-z) - (x'-z') ~ N(0, 2 nu t), and
        # E[T_nu(t, V) g(V)] = 5^{-d/2} E[g(W)] with W ~ N(0, 2 nu t / 5)
        n = {1: 24, 2: 12, 3: 8}[d]
        gx, gw = np.polynomial.hermite_e.hermegauss(n)
        gw = gw / math.sqrt(2 * math.pi)
        sd = math.sqrt(2 * p.nu * t / 5)
        mesh = np.stack(np.meshgrid(*([gx] * d), indexing="ij"), -1).reshape(-1, d) * sd
        wts = np.prod(np.stack(np.meshgrid(*([gw] * d), indexing="ij"), -1).reshape(-1, d), axis=1)
        shifts = (xp - x)[None, :] + mesh
        r = np.linalg.norm(shifts, axis=1)
        table = OffsetTable(kernel, p, th, gam, float(r.max()) * 1.01 + 1e-12,
                            steps_per_unit=steps_per_unit)
        return mu.C ** 2 * 5.0 ** (-d / 2) * float(np.sum(wts * (table(r) - 1.0)))
    if isinstance(mu, Density):
        if d > 3:
            raise UnsupportedMeasure("density initial data supported for d <= 3")
        n = {1: 48, 2: 16, 3: 8}[d]
        z, w = mu.nodes(n)
        diffs = z[None, :, :] - z[:, None, :]
        r = np.linalg.norm(diffs, axis=2)
        table = OffsetTable(kernel, p, th, gam, float(r.max()) * 1.01 + 1e-12,
                            steps_per_unit=steps_per_unit)
        hz = table(r) - 1.0
        a = x[None, :] - z
        b = xp[None, :] - z
        ga = heat_kernel(p, t, a if d > 1 else a[:, 0])
        gb = heat_kernel(p, t, b if d > 1 else b[:, 0])
        dd = a[:, None, :] - b[None, :, :]
        tn = np.exp(-np.sum(dd * dd, axis=2) / (p.nu * t))
        wt = (w * ga)[:, None] * (w * gb)[None, :] * tn
        return float(np.sum(wt * hz))
    raise UnsupportedMeasure(f"unsupported measure {type(mu).__name__}")
