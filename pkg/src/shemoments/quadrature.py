"""Integration utilities: singular endpoints, radial reduction, product integration.

The time-convolution pattern ``c(t) = int_0^t phi(u) r(t - u) du`` with a
left factor ``phi(u) = u^e * l(u)`` (``e`` in (-1, 0], ``l`` smooth) is
handled by product integration: ``l(u) r(t - u)`` is interpolated
piecewise-linearly and the exact moments of ``u^e`` against the hat
functions are used as weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve
from scipy.special import gamma as _gamma

from .errors import DivergentIntegral, GridMismatch, ToleranceNotMet

DEFAULT_STEPS_PER_UNIT = 512


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return d * math.pi ** (d / 2) / _gamma(1 + d / 2)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t_max] with ``n_steps`` intervals."""

    t_max: float
    n_steps: int

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")

    @classmethod
    def with_density(cls, t_max: float, steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
                     min_steps: int = 64) -> "TimeGrid":
        """Grid with about ``steps_per_unit`` steps per unit time; n_steps is even."""
        n = max(min_steps, int(math.ceil(t_max * steps_per_unit)))
        n += n % 2
        return cls(float(t_max), n)

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_steps + 1)

    def index_of(self, t: float, rtol: float = 1e-9) -> int:
        j = int(round(t / self.dt))
        if j < 0 or j > self.n_steps or abs(j * self.dt - t) > rtol * max(1.0, abs(t)):
            raise GridMismatch(f"t={t} is not a node of {self}")
        return j

    def coarsen(self) -> "TimeGrid":
        if self.n_steps % 2:
            raise GridMismatch("cannot coarsen a grid with an odd number of steps")
        return TimeGrid(self.t_max, self.n_steps // 2)


@dataclass(frozen=True)
class SingularWeight:
    """Endpoint factor ``(s - a)^exponent``."""

    exponent: float = 0.0

    def __post_init__(self):
        if not self.exponent > -1:
            raise ValueError("exponent must exceed -1 for integrability")


# --- 1-D adaptive integration -------------------------------------------------


def integrate_singular(g: Callable[[float], float], a: float, b: float,
                       w: SingularWeight | float = SingularWeight(0.0), *,
                       points: Sequence[float] = (), epsrel: float = 1e-10,
                       limit: int = 400, return_error: bool = False):
    """Integrate ``g(s) (s - a)^e`` over (a, b].

    The substitution ``s = a + L v^{1/(1+e)}`` turns the integrand into
    ``L^{1+e}/(1+e) g(a + L v^{1/(1+e)})`` on [0, 1], removing the
    endpoint power exactly.
    """
    e = w.exponent if isinstance(w, SingularWeight) else float(w)
    if not e > -1:
        raise ValueError("exponent must exceed -1")
    L = b - a
    if L == 0:
        return (0.0, 0.0) if return_error else 0.0
    p = 1.0 / (1.0 + e)
    pref = L ** (1.0 + e) / (1.0 + e)
    vpts = sorted({((q - a) / L) ** (1.0 + e) for q in points if a < q < b})

    def h(v):
        return g(a + L * v**p)

    val, err = integrate.quad(h, 0.0, 1.0, points=vpts or None, epsabs=0.0,
                              epsrel=epsrel, limit=limit)
    val *= pref
    err *= abs(pref)
    if err > max(1e-10, 1e-8 * abs(val)):
        raise ToleranceNotMet(f"error {err:.3g} exceeds tolerance for result {val:.6g}",
                              estimate=val, error=err)
    return (val, err) if return_error else val


def radial_integral(f_radial: Callable, weight: Callable, d: int, *, scale: float = 1.0,
                    origin_exponent: float = 0.0, breakpoints: Sequence[float] = (),
                    max_doublings: int = 200, epsrel: float = 1e-10) -> float:
    """Compute the integral over R^d of ``f(|z|) w(|z|)``.

    Reduced to ``S_d int_0^inf f(r) w(r) r^{d-1} dr``.  ``origin_exponent``
    declares ``f(r) ~ r^{origin_exponent}`` at 0 (e.g. ``-alpha`` for Riesz)
    so the origin is treated as an endpoint power.  Integration starts on
    [0, r1] with r1 the smallest of ``scale`` and the breakpoints, then
    proceeds over [R, 2R] until past every breakpoint and a piece no longer
    changes the total.
    """
    S = sphere_area(d)
    e = d - 1 + origin_exponent
    if not e > -1:
        raise DivergentIntegral("integrand is not integrable at the origin")
    marks = sorted(q for q in list(breakpoints) + [scale] if q and q > 0)
    r1 = marks[0]
    r_last = marks[-1]

    def g0(r):
        return f_radial(r) * weight(r) * (r ** (-origin_exponent) if origin_exponent else 1.0)

    try:
        total = integrate_singular(g0, 0.0, r1, e, epsrel=epsrel)
    except ToleranceNotMet as exc:
        total = exc.estimate

    def h(r):
        return f_radial(r) * weight(r) * r ** (d - 1)

    R = r1
    for _ in range(max_doublings):
        inner = [q for q in marks if R < q < 2 * R]
        piece, _ = integrate.quad(h, R, 2 * R, points=inner or None, epsabs=0.0,
                                  epsrel=epsrel, limit=200)
        total += piece
        R *= 2
        if R >= r_last and (abs(piece) <= 1e-15 * abs(total) or (piece == 0 and total == 0)):
            return S * total
    raise DivergentIntegral("tail of the radial integral did not stabilize")


def integrate_log(h: Callable[[float], float], lo: float, hi: float, *, epsrel: float = 1e-10,
                  n_pieces: int | None = None, n_gauss: int | None = None) -> float:
    """Integrate ``h(x) dx`` over [lo, hi] with lo > 0 in the variable log x.

    Useful for integrands spread over many decades.  With ``n_gauss`` each
    piece uses a fixed Gauss-Legendre rule instead of adaptive quadrature,
    which suits smooth integrands whose values carry quadrature noise.
    """
    a, b = math.log(lo), math.log(hi)
    n = n_pieces or max(1, int(math.ceil((b - a) / 2.0)))
    edges = np.linspace(a, b, n + 1)
    total = 0.0
    if n_gauss:
        gx, gw = np.polynomial.legendre.leggauss(n_gauss)
        for u0, u1 in zip(edges[:-1], edges[1:]):
            u = u0 + 0.5 * (gx + 1) * (u1 - u0)
            total += 0.5 * (u1 - u0) * sum(wi * h(math.exp(ui)) * math.exp(ui) for ui, wi in zip(u, gw))
        return total
    for u0, u1 in zip(edges[:-1], edges[1:]):
        total += integrate.quad(lambda u: h(math.exp(u)) * math.exp(u), u0, u1,
                                epsabs=0.0, epsrel=epsrel, limit=200)[0]
    return total


# --- product integration on a uniform grid ------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def hat_moments(n: int, dt: float, exponent: float) -> tuple[np.ndarray, np.ndarray]:
    """Moments of ``u^e`` against the half-hats at nodes ``m dt``, m = 0..n.

    Returns ``(vp, vm)`` with ``vp[m] = int_{m dt}^{(m+1) dt} u^e ((m+1) dt - u)/dt du``
    and ``vm[m] = int_{(m-1) dt}^{m dt} u^e (u - (m-1) dt)/dt du`` (``vm[0] = 0``).
    """
    e = float(exponent)
    m = np.arange(n + 1, dtype=float)
    if e == 0.0:
        vp = np.full(n + 1, 0.5)
        vm = np.full(n + 1, 0.5)
        vm[0] = 0.0
        return vp * dt, vm * dt
    vp = np.empty(n + 1)
    vm = np.zeros(n + 1)
    vp[0] = 1.0 / ((1 + e) * (2 + e))
    # (m + s)^e is smooth for m >= 1, so 16-point Gauss-Legendre is exact to rounding
    vp[1:] = ((m[1:, None] + _GL_X[None, :]) ** e * (1 - _GL_X)[None, :]) @ _GL_W
    if n >= 1:
        vm[1] = 1.0 / (2 + e)
    if n >= 2:
        vm[2:] = ((m[2:, None] - 1 + _GL_X[None, :]) ** e * _GL_X[None, :]) @ _GL_W
    scale = dt ** (1 + e)
    return vp * scale, vm * scale


@dataclass(frozen=True)
class ProductRule:
    """Weights of ``c_j = int_0^{t_j} u^e l(u) r(t_j - u) du`` on a TimeGrid."""

    grid: TimeGrid
    left: np.ndarray
    exponent: float = 0.0
    omega: np.ndarray = field(init=False, repr=False)
    corner: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        left = np.asarray(self.left, dtype=float)
        if left.shape != (self.grid.n_steps + 1,):
            raise GridMismatch("left factor is not sampled on the grid")
        vp, vm = hat_moments(self.grid.n_steps, self.grid.dt, self.exponent)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "omega", (vp + vm) * left)
        object.__setattr__(self, "corner", vp * left)

    def apply(self, right: np.ndarray) -> np.ndarray:
        right = np.asarray(right, dtype=float)
        if right.shape != self.omega.shape:
            raise GridMismatch("right factor is not sampled on the grid")
        n = right.size
        # direct summation keeps full relative accuracy for tiny values
        c = np.convolve(self.omega, right)[:n] - self.corner * right[0]
        c[0] = 0.0
        return c


def convolve_on_grid(grid: TimeGrid, left, right, weight: SingularWeight | None = None,
                     return_error: bool = False):
    """Product-integration convolution ``int_0^t u^e l(u) r(t-u) du`` at every node.

    ``left`` holds the smooth part ``l`` at the nodes and ``weight`` the power
    ``u^e``.  With ``return_error`` an error estimate from the grid with
    every other node is returned as well (requires even n_steps).
    """
    e = weight.exponent if weight is not None else 0.0
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    n1 = grid.n_steps + 1
    if left.shape != (n1,) or right.shape != (n1,):
        raise GridMismatch("inputs must be sampled on the same grid")
    c = ProductRule(grid, left, e).apply(right)
    if not return_error:
        return c
    coarse = ProductRule(grid.coarsen(), left[::2], e).apply(right[::2])
    est_even = np.abs(c[::2] - coarse) / 3.0
    err = np.interp(grid.nodes, grid.nodes[::2], est_even)
    return c, err


def solve_volterra(grid: TimeGrid, left, exponent: float, gamma: float, forcing=1.0, *,
                   shift: float = 0.0, block: int = 64) -> np.ndarray:
    """Solve ``H = F + gamma * (phi * H)`` with the product rule of :class:`ProductRule`.

    Divide-and-conquer with FFT convolutions across blocks gives
    O(n log^2 n) work.  ``shift`` (sigma) returns ``exp(-sigma t) H(t)``, which
    keeps fast-growing solutions inside floating-point range.
    """
    n1 = grid.n_steps + 1
    t = grid.nodes
    rule = ProductRule(grid, left, exponent)
    damp = np.exp(-shift * t)
    a = rule.omega * damp
    b = rule.corner * damp
    F = np.broadcast_to(np.asarray(forcing, dtype=float), (n1,)) * damp
    H = np.zeros(n1)
    acc = np.zeros(n1)
    denom = 1.0 - gamma * a[0]
    if denom <= 0:
        raise ValueError("time step too coarse for the implicit product rule")

    def leaf(lo, hi):
        for j in range(lo, hi):
            if j == 0:
                H[0] = F[0]
                continue
            s = acc[j]
            if j > lo:
                s += float(np.dot(a[j - lo:0:-1], H[lo:j]))
            H[j] = (F[j] + gamma * (s - b[j] * H[0])) / denom

    def solve(lo, hi):
        if hi - lo <= block:
            leaf(lo, hi)
            return
        mid = (lo + hi) // 2
        solve(lo, mid)
        conv = fftconvolve(H[lo:mid], a[: hi - lo])
        acc[mid:hi] += conv[mid - lo: hi - lo]
        solve(mid, hi)

    solve(0, n1)
    return H


# --- monotone limits and divergence detection ---------------------------------


@dataclass(frozen=True)
class LimitResult:
    value: float
    divergent: bool
    steps: int
    reason: str


def monotone_limit(seq: Callable[[int], float], k0: int = 0, k_max: int = 60, *,
                   cap: float = 1e12, growth: float = 0.01, rtol: float = 1e-9,
                   ratio_divergent: float = 0.97, run_length: int = 6) -> LimitResult:
    """Limit of a nondecreasing sequence ``seq(k)`` (k = k0, k0+1, ...).

    Divergence is declared when the value exceeds ``cap`` while still growing
    by more than ``growth`` per step, or when ``run_length`` consecutive
    increment ratios stay at or above ``ratio_divergent`` (increments that do
    not shrink, as for logarithmic growth).  Convergence is declared when the
    increment is negligible, or when the increment ratio has settled so the
    geometric tail can be added.
    """
    vals = [float(seq(k0))]
    ratios = []
    for k in range(k0 + 1, k_max + 1):
        v = float(seq(k))
        vals.append(v)
        if not math.isfinite(v):
            return LimitResult(math.inf, True, k, "non-finite value")
        d1 = vals[-1] - vals[-2]
        if v > cap and d1 > growth * abs(v):
            return LimitResult(math.inf, True, k, "cap exceeded while growing")
        if abs(d1) <= rtol * abs(v):
            return LimitResult(v, False, k, "increment negligible")
        if len(vals) < 3:
            continue
        d0 = vals[-2] - vals[-3]
        if d0 <= 0 or d1 <= 0:
            continue
        r = d1 / d0
        ratios.append(r)
        if len(ratios) >= run_length and min(ratios[-run_length:]) >= ratio_divergent:
            return LimitResult(math.inf, True, k, "increments do not decay")
        if len(ratios) >= 3 and r < ratio_divergent:
            r1, r2 = ratios[-2], ratios[-3]
            if abs(r - r1) < 2e-3 and abs(r1 - r2) < 4e-3:
                tail = d1 * r / (1 - r)
                if tail <= 1e-2 * abs(v):
                    return LimitResult(v + tail, False, k, "geometric tail added")
    last = ratios[-1] if ratios else 0.0
    if last >= ratio_divergent:
        return LimitResult(math.inf, True, k_max, "undecided at k_max; increments not decaying")
    tail = (vals[-1] - vals[-2]) * last / (1 - last) if last > 0 else 0.0
    return LimitResult(vals[-1] + tail, False, k_max, "k_max reached")
