"""Growth rates, the phase-transition verdict and intermittency-front indices.

theta(nu, gamma) is the exponential growth rate of H(t; gamma): the root in
beta of (2/nu) gamma Upsilon(2 beta/nu) = 1.  theta_star is the growth rate of
the lower series H*, always reported with the rigorous bound 1/a, where
h_1(a) = e / gamma'.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import BoundViolated, MissingExpMoment, SlopeNotStabilized
from .kernels import CorrelationKernel, HeatParams, InitialMeasure, _check_time, _sqnorm, h1_of_t
from .moments import (HFamily, H_series_nodes, compute_h_family, k_on_grid, log_H_star,
                      lower_constant)
from .quadrature import TimeGrid, solve_volterra
from .spectral import fmt_value, is_divergent, upsilon, upsilon_zero

REL_TOL = 1e-8


# --- theta --------------------------------------------------------------------------


def theta(p: HeatParams, gamma: float, kernel: CorrelationKernel, *,
          ups0: float | None = None) -> float:
    """inf{beta > 0 : Upsilon(2 beta/nu) < nu/(2 gamma)}, to relative 1e-8."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0:
        return 0.0
    target = p.nu / (2.0 * gamma)
    if ups0 is None:
        ups0 = upsilon_zero(kernel)
    if not is_divergent(ups0) and ups0 < target:
        return 0.0
    g = lambda lb: upsilon(kernel, 2.0 * math.exp(lb) / p.nu) - target
    lo = hi = 0.0
    if g(0.0) < 0:
        while g(lo) < 0:
            lo -= 1.0
            if lo < -700:
                return 0.0
        hi = lo + 1.0
    else:
        while g(hi) >= 0:
            hi += 1.0
        lo = hi - 1.0
    root = brentq(g, lo, hi, xtol=REL_TOL * 0.1, rtol=4 * np.finfo(float).eps)
    return math.exp(root)


def corrected_envelope(p: HeatParams, gamma: float, kernel: CorrelationKernel, t, th: float,
                       n_beta: int = 60) -> np.ndarray:
    """min over beta > theta of e^{beta t} / (1 - (2 gamma/nu) Upsilon(2 beta/nu)).

    H is nondecreasing and int_0^inf e^{-beta s} H(s) ds = 1/(beta (1 - q(beta))),
    so H(t) e^{-beta t} / beta <= 1/(beta (1 - q(beta))) for every beta > theta.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    scale = max(th, 1e-3 * gamma if gamma > 0 else 1e-3)
    betas = th + scale * np.geomspace(1e-4, 1e2, n_beta)
    q = np.array([2.0 * gamma / p.nu * upsilon(kernel, 2.0 * b / p.nu) for b in betas])
    ok = q < 1
    betas, q = betas[ok], q[ok]
    logs = betas[None, :] * t[:, None] - np.log1p(-q)[None, :]
    return np.exp(logs.min(axis=1))


@dataclass
class EnvelopeCheck:
    """Node-by-node comparison of H(t; gamma) with exponential and constant envelopes."""

    kernel: str
    nu: float
    gamma: float
    theta: float
    t: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    exp_ratio_max: float = 0.0
    exp_ratio_at: float = 0.0
    subcritical_bound: float | None = None
    subcritical_ratio_max: float | None = None
    corrected_ratio_max: float | None = None

    def passes(self, slack: float = 1e-6) -> bool:
        ok = self.exp_ratio_max <= 1 + slack
        if self.subcritical_ratio_max is not None:
            ok = ok and self.subcritical_ratio_max <= 1 + slack
        return ok


def est_ht_bounds(fam: HFamily, gamma: float, kernel: CorrelationKernel, p: HeatParams, *,
                  strict: bool = False, slack: float = 1e-6, with_corrected: bool = True
                  ) -> EnvelopeCheck:
    """Compare H(t; gamma) at every node with e^{theta t} and, when 2 gamma Upsilon(0) < nu,
    with nu / (nu - 2 gamma Upsilon(0)).

    Also reports the ratio to the corrected exponential envelope of
    :func:`corrected_envelope`.  With ``strict`` a ratio above ``1 + slack``
    raises BoundViolated.
    """
    if any(c != 0 for c in fam.y):
        raise ValueError("envelope check needs the family at offset 0")
    H, _ = H_series_nodes(fam, gamma)
    t = fam.grid.nodes
    ups0 = upsilon_zero(kernel)
    th = theta(p, gamma, kernel, ups0=ups0)
    ratio = H * np.exp(-th * t)
    k = int(np.argmax(ratio))
    rec = EnvelopeCheck(kernel=kernel.describe(), nu=p.nu, gamma=gamma, theta=th, t=t, H=H,
                        exp_ratio_max=float(ratio[k]), exp_ratio_at=float(t[k]))
    if not is_divergent(ups0) and 2 * gamma * ups0 < p.nu:
        rec.subcritical_bound = p.nu / (p.nu - 2 * gamma * ups0)
        rec.subcritical_ratio_max = float(np.max(H) / rec.subcritical_bound)
    if with_corrected and gamma > 0:
        env = corrected_envelope(p, gamma, kernel, t, th)
        rec.corrected_ratio_max = float(np.max(H / env))
    if strict and not rec.passes(slack):
        if rec.exp_ratio_max > 1 + slack:
            raise BoundViolated(f"H exceeds exp(theta t) by ratio {rec.exp_ratio_max:.6g} "
                                f"at t={rec.exp_ratio_at:.6g}", location=rec.exp_ratio_at,
                                ratio=rec.exp_ratio_max)
        raise BoundViolated(f"H exceeds the bounded-regime constant by ratio "
                            f"{rec.subcritical_ratio_max:.6g}", ratio=rec.subcritical_ratio_max)
    return rec


# --- Lyapunov rate from the renewal equation ------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    shift: float
    t: np.ndarray = field(repr=False)
    log_H: np.ndarray = field(repr=False)


def renewal_log_H(kernel: CorrelationKernel, p: HeatParams, gamma: float, t_max: float, *,
                  steps_per_unit: float | None = None, shift: float | None = None
                  ) -> tuple[np.ndarray, np.ndarray, float]:
    """log H(t; gamma) on a grid from H = 1 + gamma int_0^t k(u) H(t-u) du.

    The solution is computed as e^{-sigma t} H with a pilot shift sigma
    (theta by default) so long horizons stay in floating-point range.
    """
    sigma = theta(p, gamma, kernel) if shift is None else shift
    if steps_per_unit is None:
        steps_per_unit = max(16.0, 24.0 * sigma)
    n = int(math.ceil(t_max * steps_per_unit))
    n += n % 2
    grid = TimeGrid(float(t_max), n)
    left = k_on_grid(kernel, p, grid)
    v = solve_volterra(grid, left, kernel.k_exponent(), gamma, 1.0, shift=sigma)
    with np.errstate(divide="ignore"):
        return grid.nodes, np.log(v) + sigma * grid.nodes, sigma


def lyapunov_rate(kernel: CorrelationKernel, p: HeatParams, gamma: float, t_lo: float,
                  t_hi: float, **kw) -> RateFit:
    """Least-squares slope of log H(t; gamma) against t on [t_lo, t_hi]."""
    t, lh, sigma = renewal_log_H(kernel, p, gamma, t_hi, **kw)
    m = (t >= t_lo) & (t <= t_hi)
    slope = float(np.polyfit(t[m], lh[m], 1)[0])
    return RateFit(slope=slope, shift=sigma, t=t[m], log_H=lh[m])


# --- theta_star -----------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaStar:
    numeric_limit: float | None
    lemma_lower_bound: float
    solvable: bool
    stabilized: bool
    horizon: float | None = None


def h1_root(kernel: CorrelationKernel, p: HeatParams, level: float) -> float | None:
    """Smallest a with h_1(a) = level, or None when sup h_1 <= level."""
    g = lambda la: float(h1_of_t(kernel, p, math.exp(la))) - level
    lo, hi = 0.0, 0.0
    if g(0.0) > 0:
        while g(lo) > 0:
            lo -= 2.0
            if lo < -200:
                return math.exp(lo)
        hi = lo + 2.0
    else:
        while g(hi) <= 0:
            hi += 2.0
            if hi > 40:
                return None
        lo = hi - 2.0
    return math.exp(brentq(g, lo, hi, xtol=1e-12, rtol=1e-13))


def theta_star(p: HeatParams, gamma: float, kernel: CorrelationKernel, *, t0: float | None = None,
               rtol: float = 0.01, max_doublings: int = 12, raise_on_failure: bool = False
               ) -> ThetaStar:
    """Growth rate of H*(t; kappa gamma) and the lemma bound 1/a, h_1(a) = e/(kappa gamma).

    The numeric limit is the slope of log H* fitted on [T, 4T]; T doubles until
    two successive slopes agree within ``rtol``.
    """
    if gamma <= 0:
        return ThetaStar(0.0, 0.0, False, True)
    gp = lower_constant(p.dim) * gamma
    a = h1_root(kernel, p, math.e / gp)
    lemma = 0.0 if a is None else 1.0 / a
    T = t0 if t0 is not None else (10.0 * a if a is not None else 10.0)
    prev = None
    for _ in range(max_doublings):
        ts = np.linspace(T, 4 * T, 7)
        lh = np.array([log_H_star(kernel, p, gp, float(s)) for s in ts])
        slope = float(np.polyfit(ts, lh, 1)[0])
        if prev is not None and abs(slope - prev) <= rtol * max(abs(slope), 1e-300):
            return ThetaStar(slope, lemma, a is not None, True, T)
        if prev is not None and a is None and abs(slope) < 1e-12:
            return ThetaStar(0.0, lemma, False, True, T)
        prev = slope
        T *= 2
    if raise_on_failure:
        raise SlopeNotStabilized("slope of log H* did not stabilize", lemma_bound=lemma)
    return ThetaStar(None, lemma, a is not None, False, T)


# --- phase classification ---------------------------------------------------------------


PHASE_TRANSITION = "PHASE_TRANSITION"
FULLY_INTERMITTENT = "FULLY_INTERMITTENT_ALL_LAMBDA"


@dataclass
class PhaseReport:
    kernel: str
    nu: float
    lip: float
    Lip: float
    upsilon_zero: float
    upsilon_zero_finite: bool
    verdict: str
    lambda_c_lower: float | None = None
    lambda_c_lower_printed: float | None = None
    lambda_c_upper_estimate: float | None = None
    theta_subcritical_bound: float | None = None
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if k == "notes":
                continue
            if isinstance(v, float):
                v = fmt_value(v)
            lines.append(f"{k} = {'NONE' if v is None else v}")
        lines += [f"note = {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def csv_row(self) -> dict:
        return {k: ("NONE" if v is None else fmt_value(v) if isinstance(v, float) else v)
                for k, v in asdict(self).items() if k != "notes"}


def phase_classify(kernel: CorrelationKernel, p: HeatParams, lip: float, Lip: float) -> PhaseReport:
    """Phase-transition verdict from the finiteness of Upsilon(0)."""
    if not (0 < lip <= Lip):
        raise ValueError("need 0 < lip <= Lip")
    u0 = upsilon_zero(kernel)
    rep = PhaseReport(kernel=kernel.describe(), nu=p.nu, lip=lip, Lip=Lip, upsilon_zero=u0,
                      upsilon_zero_finite=not is_divergent(u0), verdict=FULLY_INTERMITTENT)
    if is_divergent(u0):
        rep.notes.append("Upsilon(0) is infinite: positive Lyapunov exponent for every lambda > 0")
        return rep
    d = p.dim
    rep.verdict = PHASE_TRANSITION
    rep.lambda_c_lower = math.sqrt(p.nu / (4.0 * u0))
    rep.lambda_c_lower_printed = 0.5 * (2 * math.pi) ** (d / 2) * math.sqrt(p.nu / u0)
    h1_inf = 2.0 * u0 / p.nu
    rep.lambda_c_upper_estimate = math.sqrt(math.e / (lower_constant(d) * h1_inf))
    if 4.0 * Lip * Lip * u0 < p.nu:
        rep.theta_subcritical_bound = p.nu / (p.nu - 4.0 * Lip * Lip * u0)
        rep.notes.append("Lip below lambda_c_lower: H(t; 2 Lip^2) stays below "
                         "theta_subcritical_bound, second moments bounded by J_0 J_0 times it")
    rep.notes.append("lambda_c_lower = (nu / (4 Upsilon(0)))^{1/2}; the variant with the extra "
                     "(2 pi)^{d/2} factor is reported as lambda_c_lower_printed")
    rep.notes.append("lambda_c_upper_estimate is an ESTIMATE: smallest lambda for which "
                     "h_1(a) = e / (kappa lambda^2) has a root")
    return rep


# --- front indices --------------------------------------------------------------------


def lowind(a: float, p: HeatParams, t: float) -> tuple[float, float]:
    """Lower bounds on int_{[-a,a]^d} G(t, y) dy and on its time integral over [0, t].

    With c = nu pi / (2 a^2): mass >= (1 + c t)^{-d/2}.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    d = p.dim
    c = p.nu * math.pi / (2 * a * a)
    mass = (1 + c * t) ** (-d / 2)
    if d == 1:
        ti = 2.0 / c * (math.sqrt(c * t + 1) - 1)
    elif d == 2:
        ti = math.log1p(c * t) / c
    else:
        ti = 2.0 / (c * (d - 2)) * (1 - (1 + c * t) ** (1 - d / 2))
    return mass, ti


def j0_exp_bound(mu: InitialMeasure, p: HeatParams, t, x):
    """C^2 (2 pi nu t)^{-d} exp(-(2 beta/sqrt d)|x| + nu beta^2 t), C = int e^{beta|x|} mu(dx)."""
    if mu.exp_moment_beta is None:
        raise MissingExpMoment("measure carries no (beta, C) exponential moment")
    _check_time(t)
    beta, C = mu.exp_moment_beta
    d = p.dim
    r = np.sqrt(_sqnorm(x, d))
    t = np.asarray(t, dtype=float)
    out = C * C * (2 * math.pi * p.nu * t) ** (-d) * np.exp(-2 * beta / math.sqrt(d) * r
                                                           + p.nu * beta * beta * t)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class FrontReport:
    kernel: str
    nu: float
    lip: float
    Lip: float
    beta_used: float
    theta: float
    theta_star: float | None
    theta_star_lemma: float
    lower_index: float
    lower_index_lemma: float
    upper_index: float
    optimized_upper: float | None = None
    degenerate: bool = False
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if k == "notes":
                continue
            if isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {'NONE' if v is None else v}")
        lines += [f"note = {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def csv_row(self) -> dict:
        return {k: ("NONE" if v is None else repr(v) if isinstance(v, float) else v)
                for k, v in asdict(self).items() if k != "notes"}


def growth_indices(kernel: CorrelationKernel, p: HeatParams, lip: float, Lip: float, beta: float,
                   *, compact_support: bool = False, theta_override: float | None = None,
                   numeric_theta_star: bool = True) -> FrontReport:
    """Interval [sqrt(nu theta_*), (sqrt d / 2)(nu beta + theta/beta)] for the front speeds.

    ``theta`` uses gamma = Lip^2 and ``theta_*`` uses lip^2.  ``theta_override``
    replaces the bisected theta (to evaluate a quoted value of theta).
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if not (0 <= lip <= Lip):
        raise ValueError("need 0 <= lip <= Lip")
    d = p.dim
    th = theta_override if theta_override is not None else theta(p, Lip * Lip, kernel)
    if lip == 0:
        ts = ThetaStar(0.0, 0.0, False, True)
    elif numeric_theta_star:
        ts = theta_star(p, lip * lip, kernel)
    else:
        ts = ThetaStar(None, theta_star_lemma(p, lip * lip, kernel), True, False)
    lower_lemma = math.sqrt(p.nu * ts.lemma_lower_bound)
    lower = math.sqrt(p.nu * ts.numeric_limit) if ts.numeric_limit is not None else lower_lemma
    lower = max(lower, lower_lemma)
    upper = math.sqrt(d) / 2 * (p.nu * beta + th / beta)
    rep = FrontReport(kernel=kernel.describe(), nu=p.nu, lip=lip, Lip=Lip, beta_used=beta, theta=th,
                      theta_star=ts.numeric_limit, theta_star_lemma=ts.lemma_lower_bound,
                      lower_index=lower, lower_index_lemma=lower_lemma, upper_index=upper,
                      degenerate=(lip == 0 and Lip == 0))
    if compact_support:
        rep.optimized_upper = math.sqrt(d) * math.sqrt(p.nu * th)
    if theta_override is not None:
        rep.notes.append("theta supplied by the caller, not bisected")
    if not ts.stabilized:
        rep.notes.append("theta_star slope did not stabilize; lower index from the lemma bound")
    if lower > upper:
        rep.notes.append("lower index exceeds upper index")
    return rep


def theta_star_lemma(p: HeatParams, gamma: float, kernel: CorrelationKernel) -> float:
    """1/a with h_1(a) = e / ((2 sqrt 3)^{-d} gamma); 0 when no root exists."""
    a = h1_root(kernel, p, math.e / (lower_constant(p.dim) * gamma))
    return 0.0 if a is None else 1.0 / a
