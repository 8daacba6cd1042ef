"""Correlation kernels, heat kernel, k(t), h_1(t) and the homogeneous solution J_0.

Closed forms for k(t) = E f(B_t), with B_t ~ N(0, nu t I_d), follow directly
from that definition.  Kernels without a closed form fall back to radial (or
coordinate-wise) quadrature of f against the heat kernel.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import erfcx, gammaln, ndtr

from .errors import (ConfigError, DimensionMismatch, DivergentIntegral, NonpositiveTime,
                     NotPointwise, QuadratureFailure, SingularAtOrigin)
from .quadrature import radial_integral, sphere_area
from .special import gamma_fn, upper_incomplete_gamma

MAX_QUADRATURE_DIM = 6


@dataclass(frozen=True)
class HeatParams:
    nu: float
    dim: int = 1

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")


def _sqnorm(x, d: int):
    """Squared Euclidean norm of point(s) ``x``; the last axis holds coordinates.

    In d = 1 plain scalars and 1-D arrays of scalars are accepted as points.
    """
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x * x
    if x.shape[-1] != d:
        raise DimensionMismatch(f"expected points in R^{d}, got shape {x.shape}")
    return np.sum(x * x, axis=-1)


def _check_time(t):
    if np.any(np.asarray(t) <= 0):
        raise NonpositiveTime("t must be positive")


def heat_kernel(p: HeatParams, t, x):
    """G(t, x) = (2 pi nu t)^{-d/2} exp(-|x|^2 / (2 nu t))."""
    _check_time(t)
    t = np.asarray(t, dtype=float)
    r2 = _sqnorm(x, p.dim)
    out = (2 * math.pi * p.nu * t) ** (-p.dim / 2) * np.exp(-r2 / (2 * p.nu * t))
    return float(out) if np.ndim(out) == 0 else out


def gauss_factor(p: HeatParams, t, x):
    """T_nu(t, x) = exp(-|x|^2 / (nu t))."""
    _check_time(t)
    out = np.exp(-_sqnorm(x, p.dim) / (p.nu * np.asarray(t, dtype=float)))
    return float(out) if np.ndim(out) == 0 else out


# --- kernels ------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationKernel:
    """Base class; subclasses fix the variant, its parameters and ``dim``."""

    # radial kernels depend on |x| only; product kernels factor over coordinates
    radial = True
    pointwise = True
    nonneg_definite = True

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")

    @property
    def name(self) -> str:
        return type(self).__name__

    def describe(self) -> str:
        return self.name

    # exponent e with k(t) ~ t^e as t -> 0
    def k_exponent(self) -> float:
        return 0.0

    # exponent of f(r) at r -> 0 (radial kernels)
    def origin_exponent(self) -> float:
        return 0.0

    def length_scale(self) -> float | None:
        return 1.0

    def f_radial(self, r):
        raise NotPointwise(f"{self.name} has no radial profile")

    def f_factor(self, x):
        raise NotPointwise(f"{self.name} is not a product kernel")

    def f(self, x):
        x = np.asarray(x, dtype=float)
        if self.radial:
            return self.f_radial(np.sqrt(_sqnorm(x, self.dim)))
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            return self.f_factor(x)
        return np.prod(self.f_factor(x), axis=-1)

    def k_closed(self, t, nu):
        return None

    def k_factor_closed(self, t, nu):
        """One-coordinate factor of k for product kernels, when known."""
        return None

    def h1_closed(self, t, nu):
        return None

    def h1_limit_closed(self, nu):
        return None

    def upsilon_closed(self, beta):
        return None

    def spectral_radial(self, rho):
        """Spectral density as a function of |xi| (radial kernels), if known."""
        return None

    def spectral_factor(self, xi):
        """One-coordinate spectral density (product kernels), if known."""
        return None

    def spectral_origin_exponent(self) -> float:
        return 0.0

    def k_ball_normalized(self, t, nu):
        """k(t) as obtained when the radial reduction uses the unit-ball volume
        pi^{d/2}/Gamma(1+d/2) instead of the sphere area; None when not applicable."""
        return None


@dataclass(frozen=True)
class Riesz(CorrelationKernel):
    alpha: float = 1.0
    dim: int = 3

    def __post_init__(self):
        super().__post_init__()
        if not (0 < self.alpha < min(2, self.dim)):
            raise ValueError(f"Riesz requires 0 < alpha < min(2, d); got alpha={self.alpha}, d={self.dim}")

    def describe(self):
        return f"Riesz(alpha={self.alpha:g}, d={self.dim})"

    def k_exponent(self):
        return -self.alpha / 2

    def origin_exponent(self):
        return -self.alpha

    def length_scale(self):
        return None

    def f_radial(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r == 0):
            raise SingularAtOrigin("Riesz kernel is singular at the origin")
        return r ** (-self.alpha)

    def k_constant(self, nu: float) -> float:
        """C with k(t) = C t^{-alpha/2}, from E|B_t|^{-alpha} and the chi-square moments."""
        a, d = self.alpha, self.dim
        return nu ** (-a / 2) * 2 ** (-a / 2) * math.exp(gammaln((d - a) / 2) - gammaln(d / 2))

    def k_closed(self, t, nu):
        return self.k_constant(nu) * np.asarray(t, dtype=float) ** (-self.alpha / 2)

    def h1_closed(self, t, nu):
        a = 1 - self.alpha / 2
        return self.k_constant(nu) * np.asarray(t, dtype=float) ** a / a

    def h1_limit_closed(self, nu):
        return math.inf

    def upsilon_closed(self, beta):
        # (1/2) int e^{-beta t/2} C_1 t^{-alpha/2} dt
        a = self.alpha
        return 0.5 * self.k_constant(1.0) * gamma_fn(1 - a / 2) * (np.asarray(beta, dtype=float) / 2) ** (a / 2 - 1)

    def spectral_radial(self, rho):
        a, d = self.alpha, self.dim
        c = math.pi ** (d / 2) * 2 ** (d - a) * gamma_fn((d - a) / 2) / gamma_fn(a / 2)
        return c * np.asarray(rho, dtype=float) ** (a - d)

    def spectral_origin_exponent(self):
        return self.alpha - self.dim

    def k_ball_normalized(self, t, nu):
        a, d = self.alpha, self.dim
        C = nu ** (-a / 2) * 2 ** (-1 - a / 2) * gamma_fn((d - a) / 2) / gamma_fn(1 + d / 2)
        return C * np.asarray(t, dtype=float) ** (-a / 2)


@dataclass(frozen=True)
class OrnsteinUhlenbeck(CorrelationKernel):
    """f(x) = exp(-c |x|^alpha)."""

    alpha: float = 2.0
    c: float = 1.0
    dim: int = 1

    def __post_init__(self):
        super().__post_init__()
        if not (0 < self.alpha <= 2):
            raise ValueError("OrnsteinUhlenbeck requires 0 < alpha <= 2")
        if not self.c > 0:
            raise ValueError("OrnsteinUhlenbeck requires c > 0")

    def describe(self):
        return f"OrnsteinUhlenbeck(alpha={self.alpha:g}, c={self.c:g}, d={self.dim})"

    def length_scale(self):
        return self.c ** (-1 / self.alpha)

    def f_radial(self, r):
        return np.exp(-self.c * np.asarray(r, dtype=float) ** self.alpha)

    def _gaussian(self):
        return self.alpha == 2.0

    def k_closed(self, t, nu):
        if not self._gaussian():
            return None
        return (1 + 2 * self.c * nu * np.asarray(t, dtype=float)) ** (-self.dim / 2)

    def h1_closed(self, t, nu):
        if not self._gaussian():
            return None
        d, c = self.dim, self.c
        s = 1 + 2 * c * nu * np.asarray(t, dtype=float)
        if d == 1:
            return (np.sqrt(s) - 1) / (c * nu)
        if d == 2:
            return np.log(s) / (2 * c * nu)
        return (1 - s ** (1 - d / 2)) / (c * nu * (d - 2))

    def h1_limit_closed(self, nu):
        if not self._gaussian():
            return None
        return math.inf if self.dim <= 2 else 1.0 / (self.c * nu * (self.dim - 2))

    def upsilon_closed(self, beta):
        if not self._gaussian():
            return None
        d, c = self.dim, self.c
        b = np.asarray(beta, dtype=float) / (4 * c)
        return np.exp(b) * b ** (d / 2 - 1) * upper_incomplete_gamma(1 - d / 2, b) / (4 * c)

    def spectral_radial(self, rho):
        if not self._gaussian():
            return None
        c, d = self.c, self.dim
        return (math.pi / c) ** (d / 2) * np.exp(-np.asarray(rho, dtype=float) ** 2 / (4 * c))

    def k_ball_normalized(self, t, nu):
        if not self._gaussian():
            return None
        return self.k_closed(t, nu) / self.dim


@dataclass(frozen=True)
class Poisson(CorrelationKernel):
    """f(x) = (1 + |x|^2)^{-(d+1)/2}."""

    dim: int = 3

    def describe(self):
        return f"Poisson(d={self.dim})"

    def f_radial(self, r):
        return (1 + np.asarray(r, dtype=float) ** 2) ** (-(self.dim + 1) / 2)

    def spectral_radial(self, rho):
        d = self.dim
        return math.pi ** ((d + 1) / 2) / gamma_fn((d + 1) / 2) * np.exp(-np.asarray(rho, dtype=float))


@dataclass(frozen=True)
class Cauchy(CorrelationKernel):
    """f(x) = prod_j (1 + x_j^2)^{-1}."""

    dim: int = 3
    radial = False

    def describe(self):
        return f"Cauchy(d={self.dim})"

    def f_factor(self, x):
        return 1.0 / (1 + np.asarray(x, dtype=float) ** 2)

    def k_factor_closed(self, t, nu):
        # E[1/(1 + s^2 Z^2)] = sqrt(pi/(2 s^2)) erfcx(1/sqrt(2 s^2)), s^2 = nu t
        v = nu * np.asarray(t, dtype=float)
        return np.sqrt(math.pi / (2 * v)) * erfcx(1 / np.sqrt(2 * v))

    def k_closed(self, t, nu):
        return self.k_factor_closed(t, nu) ** self.dim

    def spectral_factor(self, xi):
        return math.pi * np.exp(-np.abs(np.asarray(xi, dtype=float)))


@dataclass(frozen=True)
class Constant(CorrelationKernel):
    level: float = 1.0
    dim: int = 1

    def __post_init__(self):
        super().__post_init__()
        if not self.level > 0:
            raise ValueError("Constant kernel level must be positive")

    def describe(self):
        return f"Constant(level={self.level:g}, d={self.dim})"

    def length_scale(self):
        return None

    def f_radial(self, r):
        return np.full(np.shape(r), self.level, dtype=float)

    def k_closed(self, t, nu):
        return np.full(np.shape(t), self.level, dtype=float)

    def h1_closed(self, t, nu):
        return self.level * np.asarray(t, dtype=float)

    def h1_limit_closed(self, nu):
        return math.inf

    def upsilon_closed(self, beta):
        # spectral measure level (2 pi)^d delta_0
        return self.level / np.asarray(beta, dtype=float)


@dataclass(frozen=True)
class WhiteNoise1D(CorrelationKernel):
    dim: int = 1
    pointwise = False

    def __post_init__(self):
        if self.dim != 1:
            raise ValueError("WhiteNoise1D is defined in d = 1 only")

    def describe(self):
        return "WhiteNoise1D"

    def k_exponent(self):
        return -0.5

    def length_scale(self):
        return None

    def f_radial(self, r):
        raise NotPointwise("white noise has no pointwise values")

    def f(self, x):
        raise NotPointwise("white noise has no pointwise values")

    def k_closed(self, t, nu):
        return (2 * math.pi * nu * np.asarray(t, dtype=float)) ** -0.5

    def h1_closed(self, t, nu):
        return np.sqrt(2 * np.asarray(t, dtype=float) / (math.pi * nu))

    def h1_limit_closed(self, nu):
        return math.inf

    def upsilon_closed(self, beta):
        return 0.5 / np.sqrt(np.asarray(beta, dtype=float))

    def spectral_radial(self, rho):
        return np.ones(np.shape(rho))


@dataclass(frozen=True)
class BoxIndicator(CorrelationKernel):
    """Indicator of the cube [-a, a]^d (nonnegative, not nonnegative-definite)."""

    a: float = 1.0
    dim: int = 1
    radial = False
    nonneg_definite = False

    def __post_init__(self):
        super().__post_init__()
        if not self.a > 0:
            raise ValueError("BoxIndicator half-width must be positive")

    def describe(self):
        return f"BoxIndicator(a={self.a:g}, d={self.dim})"

    def length_scale(self):
        return self.a

    def f_factor(self, x):
        return (np.abs(np.asarray(x, dtype=float)) <= self.a).astype(float)

    def k_factor_closed(self, t, nu):
        return 2 * ndtr(self.a / np.sqrt(nu * np.asarray(t, dtype=float))) - 1

    def k_closed(self, t, nu):
        return self.k_factor_closed(t, nu) ** self.dim

    def spectral_factor(self, xi):
        xi = np.asarray(xi, dtype=float)
        return 2 * self.a * np.sinc(self.a * xi / math.pi)


@dataclass(frozen=True)
class TabulatedRadial(CorrelationKernel):
    """Piecewise-linear radial profile; zero beyond the last sample radius."""

    radii: tuple = (0.0, 1.0)
    values: tuple = (1.0, 0.0)
    dim: int = 1

    def __post_init__(self):
        super().__post_init__()
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.shape != v.shape or r.ndim != 1 or r.size < 2:
            raise ValueError("radii and values must be 1-D of equal length >= 2")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ValueError("radii must be nonnegative and strictly increasing")
        if np.any(v < 0):
            raise ValueError("tabulated kernel values must be nonnegative")
        object.__setattr__(self, "radii", tuple(float(q) for q in r))
        object.__setattr__(self, "values", tuple(float(q) for q in v))

    @classmethod
    def from_csv(cls, path, dim: int = 1) -> "TabulatedRadial":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise
                    continue  # header
        r, v = zip(*rows)
        return cls(radii=tuple(r), values=tuple(v), dim=dim)

    def describe(self):
        return f"TabulatedRadial(n={len(self.radii)}, d={self.dim})"

    def length_scale(self):
        return self.radii[-1]

    def f_radial(self, r):
        return np.interp(np.asarray(r, dtype=float), self.radii, self.values,
                         left=self.values[0], right=0.0)


# --- k(t) ------------------------------------------------------------------------


def eval_f(kernel: CorrelationKernel, x):
    """Pointwise value f(x)."""
    out = kernel.f(x)
    return float(out) if np.ndim(out) == 0 else out


def _check_dims(kernel, p):
    if kernel.dim != p.dim:
        raise DimensionMismatch(f"kernel dimension {kernel.dim} != heat dimension {p.dim}")


@lru_cache(maxsize=65536)
def _k_quad_scalar(kernel: CorrelationKernel, nu: float, t: float) -> float:
    d = kernel.dim
    if d > MAX_QUADRATURE_DIM and kernel.radial:
        raise DivergentIntegral(f"quadrature paths are capped at d = {MAX_QUADRATURE_DIM}")
    sigma = math.sqrt(nu * t)
    ell = kernel.length_scale()
    pts = [q for q in (ell, sigma) if q]
    if isinstance(kernel, TabulatedRadial):
        pts += list(kernel.radii)
    if kernel.radial:
        prof = lambda r: (2 * math.pi * sigma**2) ** (-d / 2) * np.exp(-r * r / (2 * sigma**2))
        return radial_integral(kernel.f_radial, prof, d, scale=sigma, breakpoints=sorted(pts),
                               origin_exponent=kernel.origin_exponent())
    prof1 = lambda x: (2 * math.pi * sigma**2) ** -0.5 * np.exp(-x * x / (2 * sigma**2))
    one = radial_integral(kernel.f_factor, prof1, 1, scale=sigma, breakpoints=sorted(pts))
    return one**d


@lru_cache(maxsize=65536)
def _k_spectral_scalar(kernel: CorrelationKernel, nu: float, t: float) -> float:
    d = kernel.dim
    if isinstance(kernel, Constant):
        return kernel.level
    damp = lambda rho: np.exp(-nu * t * rho * rho / 2)
    scale = 1.0 / math.sqrt(nu * t)
    if kernel.radial:
        if kernel.spectral_radial(1.0) is None:
            raise NotImplementedError(f"no spectral density for {kernel.describe()}")
        val = radial_integral(kernel.spectral_radial, damp, d, scale=scale,
                              origin_exponent=kernel.spectral_origin_exponent(),
                              breakpoints=sorted({scale, 1.0}))
        return val / (2 * math.pi) ** d
    if kernel.spectral_factor(1.0) is None:
        raise NotImplementedError(f"no spectral density for {kernel.describe()}")
    one = radial_integral(kernel.spectral_factor, damp, 1, scale=scale,
                          breakpoints=sorted({scale, 1.0}))
    return (one / (2 * math.pi)) ** d


def k_of_t(kernel: CorrelationKernel, p: HeatParams, t, method: str = "auto"):
    """k(t) = int f(z) G(t, z) dz.

    ``method`` is ``"auto"`` (closed form if any, else quadrature),
    ``"closed"``, ``"quadrature"`` (physical space) or ``"spectral"``
    (the Fourier-side integral of the spectral density against
    exp(-nu t |xi|^2 / 2)).
    """
    _check_dims(kernel, p)
    _check_time(t)
    t_arr = np.asarray(t, dtype=float)
    if method in ("auto", "closed"):
        val = kernel.k_closed(t_arr, p.nu)
        if val is not None:
            return float(val) if np.ndim(val) == 0 else val
        if method == "closed":
            raise NotImplementedError(f"no closed form of k for {kernel.describe()}")
    if method in ("auto", "quadrature"):
        if not kernel.pointwise:
            raise NotPointwise("physical-space quadrature needs a pointwise kernel")
        fn = lambda s: _k_quad_scalar(kernel, float(p.nu), float(s))
    elif method == "spectral":
        fn = lambda s: _k_spectral_scalar(kernel, float(p.nu), float(s))
    else:
        raise ValueError(f"unknown method {method!r}")
    if t_arr.ndim == 0:
        return fn(float(t_arr))
    return np.array([fn(float(s)) for s in t_arr.ravel()]).reshape(t_arr.shape)


def k_smooth(kernel: CorrelationKernel, p: HeatParams, t):
    """k(t) t^{-e} where e = kernel.k_exponent(); finite at t = 0."""
    t = np.asarray(t, dtype=float)
    e = kernel.k_exponent()
    out = np.empty(t.shape)
    pos = t > 0
    out[pos] = np.asarray(k_of_t(kernel, p, t[pos])) * t[pos] ** (-e)
    if np.any(~pos):
        out[~pos] = k_smooth_at_zero(kernel, p)
    return out


def k_smooth_at_zero(kernel: CorrelationKernel, p: HeatParams) -> float:
    if isinstance(kernel, Riesz):
        return kernel.k_constant(p.nu)
    if isinstance(kernel, WhiteNoise1D):
        return (2 * math.pi * p.nu) ** -0.5
    if kernel.radial:
        return float(kernel.f_radial(0.0))
    return float(kernel.f_factor(0.0)) ** kernel.dim


def h1_of_t(kernel: CorrelationKernel, p: HeatParams, t):
    """h_1(t) = int_0^t k(s) ds (closed form, else cached table interpolation)."""
    _check_dims(kernel, p)
    t = np.asarray(t, dtype=float)
    val = kernel.h1_closed(t, p.nu)
    if val is None:
        val = h1_table(kernel, p.nu)(t)
    return float(val) if np.ndim(val) == 0 else val


class H1Table:
    """Monotone interpolant of h_1 on a log-spaced grid, built by quadrature of k.

    Values outside the table use k(t) ~ k(0) t^e near 0 and the last
    increment rate (log-log slope) beyond the end.
    """

    def __init__(self, kernel: CorrelationKernel, nu: float, t_lo: float = 1e-6,
                 t_hi: float = 1e7, per_decade: int = 24):
        p = HeatParams(nu, kernel.dim)
        n = int(round(per_decade * math.log10(t_hi / t_lo))) + 1
        ts = np.geomspace(t_lo, t_hi, n)
        e = kernel.k_exponent()
        k0 = k_smooth_at_zero(kernel, p)
        first = k0 * t_lo ** (1 + e) / (1 + e)
        pieces = [integrate.quad(lambda s: float(k_of_t(kernel, p, s)), a, b,
                                 epsabs=0.0, epsrel=1e-11, limit=200)[0]
                  for a, b in zip(ts[:-1], ts[1:])]
        self.t = ts
        self.h = first + np.concatenate([[0.0], np.cumsum(pieces)])
        self.log_t = np.log(ts)
        self.log_h = np.log(self.h)
        self.k0 = k0
        self.e = e
        self._spline = PchipInterpolator(self.log_t, self.log_h)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape)
        lo = t < self.t[0]
        hi = t > self.t[-1]
        mid = ~(lo | hi)
        out[lo] = self.k0 * t[lo] ** (1 + self.e) / (1 + self.e)
        out[mid] = np.exp(self._spline(np.log(t[mid])))
        slope = (self.log_h[-1] - self.log_h[-2]) / (self.log_t[-1] - self.log_t[-2])
        out[hi] = self.h[-1] * (t[hi] / self.t[-1]) ** slope
        return out


@lru_cache(maxsize=64)
def h1_table(kernel: CorrelationKernel, nu: float) -> H1Table:
    return H1Table(kernel, nu)


def h1_offset(kernel: CorrelationKernel, p: HeatParams, t: float, y) -> float:
    """h_1(t, y) = int_0^t k(s) T_{nu/4}(s, y) ds by singular quadrature."""
    from .quadrature import integrate_singular
    r2 = float(_sqnorm(y, p.dim))
    if r2 == 0:
        return float(h1_of_t(kernel, p, t))
    e = kernel.k_exponent()

    def g(s):
        if s <= 0:
            return 0.0
        return float(k_of_t(kernel, p, s)) * s ** (-e) * math.exp(-4 * r2 / (p.nu * s))

    return integrate_singular(g, 0.0, float(t), e)


# --- initial measures and J_0 -------------------------------------------------------


@dataclass(frozen=True)
class InitialMeasure:
    dim: int = field(default=1, kw_only=True)
    # optional (beta, integral of e^{beta |x|} mu(dx)) supplied by the caller
    exp_moment_beta: tuple | None = field(default=None, kw_only=True)

    def exp_moment(self, beta: float) -> float:
        if self.exp_moment_beta is not None and self.exp_moment_beta[0] == beta:
            return float(self.exp_moment_beta[1])
        return self._exp_moment(beta)

    def _exp_moment(self, beta: float) -> float:
        return math.inf


def _as_point(z, d):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (d,):
        raise DimensionMismatch(f"point must have {d} coordinates")
    return z


@dataclass(frozen=True)
class DiracAt(InitialMeasure):
    point: tuple = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(_as_point(self.point, self.dim)))

    def atoms(self):
        return np.array([self.point]), np.array([1.0])

    def _exp_moment(self, beta):
        return math.exp(beta * math.sqrt(sum(c * c for c in self.point)))


@dataclass(frozen=True)
class Atoms(InitialMeasure):
    points: tuple = ((0.0,),)
    weights: tuple = (1.0,)

    def __post_init__(self):
        pts = tuple(tuple(_as_point(z, self.dim)) for z in self.points)
        w = tuple(float(q) for q in self.weights)
        if len(pts) != len(w) or not pts:
            raise ValueError("points and weights must have equal nonzero length")
        if any(q <= 0 for q in w):
            raise ValueError("atom weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def atoms(self):
        return np.array(self.points), np.array(self.weights)

    def _exp_moment(self, beta):
        pts, w = self.atoms()
        return float(np.sum(w * np.exp(beta * np.linalg.norm(pts, axis=1))))


@dataclass(frozen=True)
class Density(InitialMeasure):
    """Nonnegative density supported in the box [lower, upper]^d (per coordinate)."""

    func: Callable | None = None
    lower: tuple = (-1.0,)
    upper: tuple = (1.0,)

    def __post_init__(self):
        if self.func is None:
            raise ValueError("Density needs a callable")
        object.__setattr__(self, "lower", tuple(_as_point(self.lower, self.dim)))
        object.__setattr__(self, "upper", tuple(_as_point(self.upper, self.dim)))
        if any(a >= b for a, b in zip(self.lower, self.upper)):
            raise ValueError("support box must have lower < upper")

    @classmethod
    def from_table(cls, x: Sequence[float], values: Sequence[float]) -> "Density":
        x = np.asarray(x, dtype=float)
        v = np.asarray(values, dtype=float)
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        xs, vs = tuple(x), tuple(v)
        fn = _TableDensity(xs, vs)
        return cls(dim=1, func=fn, lower=(xs[0],), upper=(xs[-1],))

    def nodes(self, n: int = 48):
        """Tensor Gauss-Legendre nodes (m, d) and weights times density (m,)."""
        gx, gw = np.polynomial.legendre.leggauss(n)
        axes, wts = [], []
        for a, b in zip(self.lower, self.upper):
            axes.append(0.5 * (b - a) * gx + 0.5 * (a + b))
            wts.append(0.5 * (b - a) * gw)
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        w = np.prod(np.stack(np.meshgrid(*wts, indexing="ij"), axis=-1).reshape(-1, self.dim), axis=1)
        dens = np.asarray(self.func(mesh if self.dim > 1 else mesh[:, 0]), dtype=float)
        if np.any(dens < 0):
            raise ValueError("density must be nonnegative")
        return mesh, w * dens

    def _exp_moment(self, beta):
        z, w = self.nodes(64)
        return float(np.sum(w * np.exp(beta * np.linalg.norm(z, axis=1))))


@dataclass(frozen=True)
class _TableDensity:
    x: tuple
    v: tuple

    def __call__(self, z):
        return np.interp(np.asarray(z, dtype=float), self.x, self.v, left=0.0, right=0.0)


@dataclass(frozen=True)
class LebesgueScaled(InitialMeasure):
    C: float = 1.0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("LebesgueScaled needs C > 0")


def j0(mu: InitialMeasure, p: HeatParams, t, x):
    """J_0(t, x) = (mu * G(t, .))(x)."""
    if mu.dim != p.dim:
        raise DimensionMismatch("measure and heat parameters disagree on d")
    _check_time(t)
    if isinstance(mu, LebesgueScaled):
        shape = np.broadcast_shapes(np.shape(t), np.shape(_sqnorm(x, p.dim)))
        out = np.full(shape, mu.C)
        return float(out) if out.ndim == 0 else out
    if isinstance(mu, (DiracAt, Atoms)):
        pts, w = mu.atoms()
        x = np.asarray(x, dtype=float)
        total = 0.0
        for z, wi in zip(pts, w):
            shift = x - (z[0] if p.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1) else z)
            total = total + wi * heat_kernel(p, t, shift)
        return total
    if isinstance(mu, Density):
        return _j0_density(mu, p, t, x)
    raise TypeError(f"unsupported measure {mu!r}")


def _j0_density(mu: Density, p: HeatParams, t, x):
    x = np.asarray(x, dtype=float)
    if p.dim == 1:
        xs = np.atleast_1d(x).ravel()
        out = []
        a, b = mu.lower[0], mu.upper[0]
        for xv in xs:
            val, err = integrate.quad(lambda z: float(mu.func(z)) * heat_kernel(p, t, xv - z),
                                      a, b, points=[min(max(xv, a), b)], limit=200,
                                      epsabs=1e-14, epsrel=1e-10)
            if err > 1e-6 * max(abs(val), 1e-12):
                raise QuadratureFailure("density convolution did not converge")
            out.append(val)
        out = np.array(out).reshape(np.shape(x))
        return float(out) if out.ndim == 0 else out
    res = []
    for n in (48, 96):
        z, w = mu.nodes(n)
        pts = np.atleast_2d(x)
        res.append(np.array([np.sum(w * heat_kernel(p, t, q - z)) for q in pts]))
    if np.any(np.abs(res[0] - res[1]) > 1e-6 * np.maximum(np.abs(res[1]), 1e-12)):
        raise QuadratureFailure("tensor quadrature of the density did not converge")
    out = res[1].reshape(np.shape(x)[:-1])
    return float(out) if out.ndim == 0 else out


# --- configuration ------------------------------------------------------------------

KERNEL_KEYS = {"variant", "alpha", "c", "dim", "table_path", "level", "a"}


def kernel_from_config(section: Mapping[str, str]) -> CorrelationKernel:
    """Build a kernel from a ``[kernel]`` configuration section."""
    unknown = set(section) - KERNEL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in [kernel]: {sorted(unknown)}")
    if "variant" not in section:
        raise ConfigError("[kernel] needs a 'variant'")
    v = section["variant"].strip().lower().replace("-", "_")
    try:
        dim = int(section.get("dim", "1"))
        alpha = float(section["alpha"]) if "alpha" in section else None
        if v == "riesz":
            return Riesz(alpha=alpha if alpha is not None else 1.0, dim=dim)
        if v in ("ou", "ornstein_uhlenbeck", "ornsteinuhlenbeck"):
            return OrnsteinUhlenbeck(alpha=alpha if alpha is not None else 2.0,
                                     c=float(section.get("c", "1")), dim=dim)
        if v == "poisson":
            return Poisson(dim=dim)
        if v == "cauchy":
            return Cauchy(dim=dim)
        if v == "constant":
            return Constant(level=float(section.get("level", "1")), dim=dim)
        if v in ("white_noise", "whitenoise", "whitenoise1d", "white"):
            if dim != 1:
                raise ConfigError("white noise requires dim = 1")
            return WhiteNoise1D()
        if v in ("box", "boxindicator", "box_indicator"):
            return BoxIndicator(a=float(section.get("a", "1")), dim=dim)
        if v in ("tabulated", "tabulated_radial", "table"):
            if "table_path" not in section:
                raise ConfigError("tabulated kernel needs table_path")
            return TabulatedRadial.from_csv(section["table_path"], dim=dim)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"invalid [kernel] section: {exc}") from exc
    raise ConfigError(f"unknown kernel variant {section['variant']!r}")
