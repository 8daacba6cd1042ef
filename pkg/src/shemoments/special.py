"""Special functions: two-parameter Mittag-Leffler, incomplete gamma, normal cdf."""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special as sc

from .errors import NonconvergentSeries, PoleError

_SERIES_CAP = 400_000
_CHUNK = 512
# log(1e-17): a term this far below the running maximum no longer matters
_LOG_NEGLIGIBLE = -39.0


@dataclass(frozen=True)
class MittagLefflerParams:
    """Parameters of E_{alpha,beta}.

    ``switch_radius`` separates the power-series regime from the
    large-argument expansion; ``n_corrections`` is the number of algebraic
    correction terms kept in that expansion.
    """

    alpha: float
    beta: float = 1.0
    switch_radius: float = 25.0
    n_corrections: int = 12

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if self.switch_radius <= 0:
            raise ValueError("switch_radius must be positive")


def gamma_fn(x: float) -> float:
    """Gamma function with explicit reflection; raises at the poles."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise PoleError(f"Gamma has a pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    return float(sc.gamma(x))


def normal_cdf(x):
    """Standard normal distribution function."""
    return sc.ndtr(x)


def _upper_gamma_cf(s: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Gamma(s, x)
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    else:
        raise NonconvergentSeries("continued fraction for Gamma(s, x) did not converge")
    return math.exp(-x + s * math.log(x)) * h


def _upper_gamma_scalar(s: float, x: float) -> float:
    if x <= 0:
        raise ValueError("x must be positive")
    if x > 1.5 and x > s + 1.0:
        return _upper_gamma_cf(s, x)
    if s > 0:
        return float(sc.gammaincc(s, x) * sc.gamma(s))
    # step down from s0 in [0, 1) with Gamma(a, x) = (Gamma(a+1, x) - x^a e^{-x}) / a
    m = int(math.ceil(-s))
    s0 = s + m
    if abs(s0) < 1e-15:
        s0 = 0.0
        val = float(sc.exp1(x))
    else:
        val = float(sc.gammaincc(s0, x) * sc.gamma(s0))
    a = s0
    for _ in range(m):
        a -= 1.0
        val = (val - x**a * math.exp(-x)) / a
    return val


def upper_incomplete_gamma(s, x):
    """Upper incomplete gamma Gamma(s, x) for real s (including s <= 0), x > 0."""
    if np.ndim(s) == 0 and np.ndim(x) == 0:
        return _upper_gamma_scalar(float(s), float(x))
    return np.vectorize(_upper_gamma_scalar, otypes=[float])(s, x)


# --- Mittag-Leffler ----------------------------------------------------------


def _log_abs_rgamma(a):
    """log|1/Gamma(a)| and its sign; sign 0 at the poles."""
    a = np.asarray(a, dtype=float)
    pole = (a <= 0) & (a == np.floor(a))
    sign = np.where(pole, 0.0, sc.gammasgn(np.where(pole, 0.5, a)))
    logabs = np.where(pole, -np.inf, -sc.gammaln(np.where(pole, 0.5, a)))
    return logabs, sign


def _series_terms(alpha, beta, z, n0, n1):
    n = np.arange(n0, n1, dtype=float)
    logr, sgn = _log_abs_rgamma(alpha * n + beta)
    with np.errstate(divide="ignore"):
        logz = math.log(abs(z)) if z != 0 else -np.inf
    logt = np.where(n == 0, 0.0, n * logz) + logr
    sign = sgn * (np.sign(z) ** n if z < 0 else 1.0)
    return logt, sign


def _collect_series(alpha, beta, z):
    """Log-magnitudes and signs of all non-negligible series terms."""
    logs, signs = [], []
    running_max = -np.inf
    n0 = 0
    while True:
        if n0 > _SERIES_CAP:
            raise NonconvergentSeries(
                f"Mittag-Leffler series exceeded {_SERIES_CAP} terms at z={z}"
            )
        lt, sg = _series_terms(alpha, beta, z, n0, n0 + _CHUNK)
        logs.append(lt)
        signs.append(sg)
        running_max = max(running_max, float(np.max(lt)))
        # stop once the tail is decreasing and far below the maximum
        tail = lt[-8:]
        if np.all(np.diff(tail) < 0) and tail[-1] < running_max + _LOG_NEGLIGIBLE:
            break
        n0 += _CHUNK
    return np.concatenate(logs), np.concatenate(signs)


def ml_series_log(params: MittagLefflerParams, z: float) -> float:
    """log E_{alpha,beta}(z) from the power series, z >= 0."""
    if z < 0:
        raise ValueError("log form requires z >= 0")
    if z == 0:
        logr, sgn = _log_abs_rgamma(params.beta)
        if sgn <= 0:
            raise ValueError("E(0) = 1/Gamma(beta) is not positive")
        return float(logr)
    logs, signs = _collect_series(params.alpha, params.beta, z)
    m = np.max(logs)
    s = float(np.sum(signs * np.exp(logs - m)))
    if s <= 0:
        raise ValueError("series sum is not positive; log form undefined")
    return float(m + math.log(s))


def _mp_series(alpha, beta, z, digits):
    with mpmath.workdps(digits):
        za = mpmath.mpf(z)
        total = mpmath.mpf(0)
        n = 0
        big = mpmath.mpf(0)
        while True:
            term = za**n * mpmath.rgamma(alpha * n + beta)
            total += term
            big = max(big, abs(term))
            if n > 10 and abs(term) < big * mpmath.mpf(10) ** (-digits) and \
                    abs(term) < abs(total) * mpmath.mpf(10) ** (-20):
                break
            n += 1
            if n > _SERIES_CAP:
                raise NonconvergentSeries("high-precision series did not converge")
        return float(total)


def ml_series(params: MittagLefflerParams, z: float) -> float:
    """E_{alpha,beta}(z) from the power series.

    For negative z the alternating series cancels; when the cancellation
    would cost more than about five digits the sum is redone at raised
    working precision.
    """
    z = float(z)
    if z >= 0:
        if z == 0:
            return float(sc.rgamma(params.beta))
        logs, signs = _collect_series(params.alpha, params.beta, z)
        m = np.max(logs)
        s = float(np.sum(signs * np.exp(logs - m)))
        with np.errstate(over="ignore"):
            return float(np.exp(m) * s) if m < 700 else math.copysign(math.inf, s)
    logs, signs = _collect_series(params.alpha, params.beta, z)
    terms = signs * np.exp(logs)
    total = math.fsum(terms)
    biggest = float(np.max(np.abs(terms)))
    if total == 0 or biggest / abs(total) > 1e5:
        loss = math.log10(biggest / max(abs(total), 1e-300))
        return _mp_series(params.alpha, params.beta, z, int(30 + max(loss, 0)))
    return total


def _algebraic_corrections(params: MittagLefflerParams, z: float) -> float:
    k = np.arange(1, params.n_corrections + 1, dtype=float)
    terms = z ** (-k) * sc.rgamma(params.beta - params.alpha * k)
    mags = np.abs(terms)
    # the series is asymptotic: stop before the terms start growing again
    nz = np.nonzero(mags)[0]
    if nz.size:
        grow = np.nonzero(np.diff(mags[nz]) > 0)[0]
        if grow.size:
            terms = terms[: nz[grow[0]] + 1]
    return -float(np.sum(terms))


def _reflected_root_term(params: MittagLefflerParams, z: float) -> float:
    # at alpha = 2 the roots z^{1/2} e^{+-i pi} coincide on the boundary of the
    # admissible sector; each carries half weight
    if params.alpha != 2.0:
        return 0.0
    t = -math.sqrt(z)
    return 0.5 * (complex(t) ** (1 - params.beta)).real * math.exp(t)


def ml_asymptotic(params: MittagLefflerParams, z: float) -> float:
    """Large-|z| expansion of E_{alpha,beta}(z) on the real axis.

    For z > 0 this is (1/alpha) z^{(1-beta)/alpha} exp(z^{1/alpha}) minus the
    algebraic series sum_k z^{-k}/Gamma(beta - alpha k).  For z < 0 only the
    algebraic part is used, which requires alpha < 1.
    """
    z = float(z)
    a, b = params.alpha, params.beta
    if z > 0:
        lead_log = -math.log(a) + (1 - b) / a * math.log(z) + z ** (1 / a)
        corr = _algebraic_corrections(params, z) + _reflected_root_term(params, z)
        if lead_log > 700:
            return math.inf
        return math.exp(lead_log) + corr
    if z < 0:
        if a >= 1:
            raise ValueError("negative-axis expansion implemented for alpha < 1 only")
        return _algebraic_corrections(params, z)
    raise ValueError("expansion is not valid at z = 0")


def ml_asymptotic_log(params: MittagLefflerParams, z: float) -> float:
    a, b = params.alpha, params.beta
    lead_log = -math.log(a) + (1 - b) / a * math.log(z) + z ** (1 / a)
    corr = _algebraic_corrections(params, z) + _reflected_root_term(params, z)
    ratio = corr * math.exp(-lead_log) if lead_log < 700 else 0.0
    return lead_log + math.log1p(ratio)


def _series_is_feasible(params: MittagLefflerParams, z: float) -> bool:
    # the largest term sits near n = |z|^{1/alpha} / alpha
    return abs(z) ** (1.0 / params.alpha) / params.alpha < _SERIES_CAP / 4


def _use_expansion(params: MittagLefflerParams, z: float) -> bool:
    return z > params.switch_radius or not _series_is_feasible(params, z)


def mittag_leffler(params: MittagLefflerParams, z: float) -> float:
    """Two-parameter Mittag-Leffler function E_{alpha,beta}(z), real z.

    Small alpha makes the series impractically long well inside the switch
    radius; there the expansion takes over early, where it is already
    exponentially accurate.
    """
    z = float(z)
    r = params.switch_radius
    if z > 0 and _use_expansion(params, z):
        return ml_asymptotic(params, z)
    if abs(z) <= r:
        return ml_series(params, z)
    if z > 0:
        return ml_asymptotic(params, z)
    if params.alpha < 1:
        return ml_asymptotic(params, z)
    return ml_series(params, z)


def log_mittag_leffler(params: MittagLefflerParams, z: float) -> float:
    """log E_{alpha,beta}(z) for z >= 0 without overflow."""
    z = float(z)
    if z > 0 and _use_expansion(params, z):
        return ml_asymptotic_log(params, z)
    return ml_series_log(params, z)


def switch_discrepancy(params: MittagLefflerParams, band=(0.9, 1.2), n_points: int = 7) -> float:
    """Largest relative gap between the series and the expansion near the switch.

    Computed in log form on positive arguments, so it stays finite even when
    the function itself overflows.
    """
    zs = params.switch_radius * np.linspace(band[0], band[1], n_points)
    gaps = []
    for z in zs:
        ls = ml_series_log(params, z)
        la = ml_asymptotic_log(params, z)
        gaps.append(abs(math.expm1(la - ls)))
    return float(max(gaps))
