"""Upsilon(beta), Dalang's condition and the three equivalent phase-transition tests.

``upsilon`` uses closed forms where known.  Otherwise it evaluates the
Laplace identity ``Upsilon(2 beta/nu) = (nu/2) int_0^inf e^{-beta t} k(t) dt``:
directly in t for product kernels, and for radial kernels with the time
integral done first, which leaves the resolvent of the heat semigroup
(a modified Bessel function) as a radial weight.
"""
from __future__ import annotations

import io
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import erfcx, erf, kve

from .errors import EquivalenceViolation, InconsistentLimits
from .kernels import (BoxIndicator, Cauchy, Constant, CorrelationKernel, HeatParams,
                      TabulatedRadial, WhiteNoise1D, h1_of_t, k_of_t, k_smooth_at_zero)
from .quadrature import (LimitResult, integrate_log, integrate_singular, monotone_limit,
                         radial_integral, sphere_area)

DIVERGENT = math.inf
VALUE_CAP = 1e12
GROWTH_THRESHOLD = 0.01


def is_divergent(v) -> bool:
    return v is None or not math.isfinite(v)


def fmt_value(v) -> str:
    return "DIVERGENT" if is_divergent(v) else repr(float(v))


# --- Upsilon ----------------------------------------------------------------------


def laplace_k(kernel: CorrelationKernel, p: HeatParams, beta: float) -> float:
    """int_0^inf e^{-beta t} k(t) dt by singular quadrature in t."""
    e = kernel.k_exponent()
    t1 = min(1.0, 1.0 / beta)

    def g(t):
        if t <= 0:
            return k_smooth_at_zero(kernel, p)
        return float(k_of_t(kernel, p, t)) * t ** (-e) * math.exp(-beta * t)

    head = integrate_singular(g, 0.0, t1, e, epsrel=1e-11)
    hi = max(t1 * 2, 80.0 / beta)
    tail = integrate_log(lambda t: float(k_of_t(kernel, p, t)) * math.exp(-beta * t), t1, hi,
                         epsrel=1e-11)
    return head + tail


def upsilon_laplace(kernel: CorrelationKernel, beta: float) -> float:
    """Upsilon(beta) = (1/2) int_0^inf e^{-beta t/2} k_{nu=1}(t) dt."""
    return 0.5 * laplace_k(kernel, HeatParams(1.0, kernel.dim), beta / 2)


def upsilon_resolvent(kernel: CorrelationKernel, beta: float) -> float:
    """Radial kernels: Upsilon(beta) as a radial integral against the resolvent.

    int_0^inf e^{-beta t/2} G_1(t, r) dt = 2 (2 pi)^{-d/2} (r/sqrt(beta))^{1-d/2} K_{d/2-1}(r sqrt(beta)),
    so Upsilon(beta) = (2 pi)^{-d/2} S_d beta^{(d-2)/4} int f(r) r^{d/2} K_{d/2-1}(r sqrt(beta)) dr.
    """
    d = kernel.dim
    v = d / 2 - 1
    sb = math.sqrt(beta)

    def h(r):
        x = r * sb
        return float(kernel.f_radial(r)) * r ** (d / 2) * kve(v, x) * math.exp(-x)

    ell = kernel.length_scale() or 1.0
    hi = 60.0 / sb
    lo = 1e-9 * min(ell, 1.0 / sb)
    if isinstance(kernel, TabulatedRadial):
        hi = min(hi, kernel.radii[-1])
        pts = [q for q in kernel.radii if lo < q < hi]
        edges = [lo] + pts + [hi]
        body = sum(integrate.quad(h, a, b, epsabs=0.0, epsrel=1e-11, limit=200)[0]
                   for a, b in zip(edges[:-1], edges[1:]) if b > a)
    else:
        body = integrate_log(h, lo, hi, epsrel=1e-11)
    return (2 * math.pi) ** (-d / 2) * sphere_area(d) * beta ** ((d - 2) / 4) * body


def upsilon_spectral(kernel: CorrelationKernel, beta: float) -> float:
    """(2 pi)^{-d} int f_hat(xi) / (beta + |xi|^2) dxi, for kernels with a known density."""
    d = kernel.dim
    if isinstance(kernel, Constant):
        return kernel.level / beta
    w = lambda rho: 1.0 / (beta + rho * rho)
    if kernel.radial:
        return radial_integral(kernel.spectral_radial, w, d, scale=max(1.0, math.sqrt(beta)),
                               origin_exponent=kernel.spectral_origin_exponent()) / (2 * math.pi) ** d
    # product kernels: 1/(beta + |xi|^2) = int_0^inf e^{-s (beta + |xi|^2)} ds
    ell = 1.0 / (kernel.length_scale() or 1.0)

    def inner(s):
        # break at the Gaussian width and at multiples of the spectral scale; exp(-s x^2) < e^-100 past 10 c
        c = 1.0 / math.sqrt(s)
        edges = sorted({0.0, c, 10 * c} | {m * ell for m in (1, 4, 16, 64)})
        edges = [q for q in edges if q < 10 * c] + [10 * c]
        one = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            # later pieces only need accuracy relative to the running total
            one += integrate.quad(lambda x: float(kernel.spectral_factor(x)) * math.exp(-s * x * x),
                                  a, b, epsabs=1e-13 * abs(one), epsrel=1e-10, limit=200)[0]
        return math.exp(-s * beta) * (2 * one)**d

    total = integrate_log(inner, 1e-12, 80.0 / beta, n_gauss=24)
    return total / (2 * math.pi) ** d


def upsilon(kernel: CorrelationKernel, beta: float) -> float:
    """Upsilon(beta); ``DIVERGENT`` (inf) when Dalang's condition fails."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    val = kernel.upsilon_closed(beta)
    if val is not None:
        return float(val)
    if kernel.radial:
        return upsilon_resolvent(kernel, beta)
    return upsilon_laplace(kernel, beta)


# --- limits ---------------------------------------------------------------------


def _upsilon_zero_result(kernel: CorrelationKernel, cap=VALUE_CAP, growth=GROWTH_THRESHOLD,
                         k_max: int = 60) -> LimitResult:
    return monotone_limit(lambda k: upsilon(kernel, 2.0 ** (-k)), 0, k_max, cap=cap, growth=growth)


def upsilon_zero(kernel: CorrelationKernel, *, cap: float = VALUE_CAP,
                 growth: float = GROWTH_THRESHOLD, method: str = "auto") -> float:
    """lim_{beta -> 0} Upsilon(beta); ``DIVERGENT`` if infinite.

    ``method="limit"`` always uses the monotone limit along beta = 2^{-k};
    ``"auto"`` first uses a closed-form limit of h_1 when the kernel has one
    (Upsilon(0) = (nu/2) lim h_1 at nu = 1).
    """
    if method == "auto":
        lim = kernel.h1_limit_closed(1.0)
        if lim is not None:
            return DIVERGENT if not math.isfinite(lim) else 0.5 * float(lim)
    elif method != "limit":
        raise ValueError(f"unknown method {method!r}")
    return _upsilon_zero_result(kernel, cap, growth).value


def iff2_integral(kernel: CorrelationKernel, *, cap: float = VALUE_CAP) -> float:
    """int f(z) |z|^{2-d} dz; ``DIVERGENT`` for d <= 2 or when the integral diverges."""
    d = kernel.dim
    if d <= 2 or isinstance(kernel, WhiteNoise1D):
        return DIVERGENT
    if kernel.radial:
        e0 = kernel.origin_exponent()
        S = sphere_area(d)
        # start the doubling in the tail so increment ratios reflect tail decay
        r0 = 8.0 * (kernel.length_scale() or 1.0)
        parts = {}

        def seq(k):
            if k == 0:
                val = integrate_singular(lambda r: float(kernel.f_radial(r)) * r ** (-e0) if r > 0
                                         else 0.0, 0.0, r0, 1 + e0)
            else:
                a, b = r0 * 2.0 ** (k - 1), r0 * 2.0 ** k
                val = parts[k - 1] + integrate.quad(lambda r: float(kernel.f_radial(r)) * r, a, b,
                                                    epsabs=0.0, epsrel=1e-11, limit=200)[0]
            parts[k] = val
            return S * val

        return monotone_limit(seq, 0, 100, cap=cap).value
    # product kernels: |z|^{2-d} = Gamma(d/2-1)^{-1} int_0^inf s^{d/2-2} e^{-s|z|^2} ds
    if isinstance(kernel, Cauchy):
        F1 = lambda s: math.pi * erfcx(math.sqrt(s))
    elif isinstance(kernel, BoxIndicator):
        F1 = lambda s: math.sqrt(math.pi / s) * erf(kernel.a * math.sqrt(s))
    else:
        raise NotImplementedError(f"iff2 integral not available for {kernel.describe()}")
    v = d / 2 - 1
    g = lambda s: s ** (v - 1) * F1(s) ** d
    upper = integrate.quad(g, 1.0, np.inf, epsabs=0.0, epsrel=1e-11, limit=200)[0]
    parts = {}

    def seq(k):
        a, b = 2.0 ** (-k), 2.0 ** (-k + 1)
        prev = parts.get(k - 1, upper)
        val = prev + integrate.quad(g, a, b, epsabs=0.0, epsrel=1e-11)[0] if k > 0 else upper
        parts[k] = val
        return val / math.gamma(v)

    return monotone_limit(seq, 0, 120, cap=cap).value


def h1_limit_direct(kernel: CorrelationKernel, p: HeatParams, *, cap: float = VALUE_CAP) -> float:
    """lim_{T -> inf} h_1(T) by doubling T."""
    if kernel.h1_closed(1.0, p.nu) is not None:
        return monotone_limit(lambda k: float(h1_of_t(kernel, p, 2.0**k)), 0, 80, cap=cap).value
    e = kernel.k_exponent()
    first = integrate_singular(lambda s: float(k_of_t(kernel, p, s)) * s ** (-e) if s > 0
                               else k_smooth_at_zero(kernel, p), 0.0, 1.0, e)
    parts = {0: first}

    def seq(k):
        if k not in parts:
            parts[k] = parts[k - 1] + integrate.quad(lambda s: float(k_of_t(kernel, p, s)),
                                                     2.0 ** (k - 1), 2.0**k, epsabs=0.0,
                                                     epsrel=1e-11, limit=200)[0]
        return parts[k]

    return monotone_limit(seq, 0, 80, cap=cap).value


def h1_limit(kernel: CorrelationKernel, p: HeatParams) -> float:
    """lim h_1(t), checked against (2/nu) Upsilon(0)."""
    direct = h1_limit_direct(kernel, p)
    via_ups = 2.0 / p.nu * upsilon_zero(kernel, method="limit")
    if is_divergent(direct) != is_divergent(via_ups):
        raise InconsistentLimits(f"h_1 limit routes disagree: {fmt_value(direct)} vs {fmt_value(via_ups)}")
    if not is_divergent(direct) and abs(direct - via_ups) > 0.01 * abs(via_ups):
        raise InconsistentLimits(f"h_1 limit routes disagree: {direct:.8g} vs {via_ups:.8g}")
    return direct


# --- report ---------------------------------------------------------------------


@dataclass
class SpectralReport:
    kernel: str
    nu: float
    upsilon_at: list = field(default_factory=list)
    upsilon_zero: float = DIVERGENT
    iff2_value: float = DIVERGENT
    h1_limit: float = DIVERGENT
    h1_limit_via_upsilon: float = DIVERGENT
    dalang_ok: bool = True
    verdicts_agree: bool = True
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"kernel = {self.kernel}",
            f"nu = {self.nu!r}",
            f"dalang_ok = {self.dalang_ok}",
            f"upsilon_zero = {fmt_value(self.upsilon_zero)}",
            f"iff2_value = {fmt_value(self.iff2_value)}",
            f"h1_limit = {fmt_value(self.h1_limit)}",
            f"h1_limit_via_upsilon = {fmt_value(self.h1_limit_via_upsilon)}",
            f"verdicts_agree = {self.verdicts_agree}",
        ]
        lines += [f"note = {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["beta [1/length^2]", "upsilon [length^(2-d)]"])
        for b, u in self.upsilon_at:
            w.writerow([repr(float(b)), fmt_value(u)])
        return buf.getvalue()


def equivalence_report(kernel: CorrelationKernel, p: HeatParams, betas=None,
                       strict: bool = True) -> SpectralReport:
    """Evaluate the three finiteness conditions and check that they agree."""
    if betas is None:
        betas = [2.0 ** k for k in range(-6, 7)]
    rep = SpectralReport(kernel=kernel.describe(), nu=p.nu)
    rep.upsilon_at = [(b, upsilon(kernel, b)) for b in betas]
    rep.dalang_ok = not is_divergent(upsilon(kernel, 1.0))
    rep.upsilon_zero = upsilon_zero(kernel, method="limit")
    rep.iff2_value = iff2_integral(kernel)
    rep.h1_limit = h1_limit_direct(kernel, p)
    rep.h1_limit_via_upsilon = 2.0 / p.nu * rep.upsilon_zero
    flags = [is_divergent(rep.upsilon_zero), is_divergent(rep.iff2_value), is_divergent(rep.h1_limit)]
    rep.verdicts_agree = len(set(flags)) == 1
    if not rep.verdicts_agree:
        msg = ("finite/divergent verdicts disagree: upsilon_zero=%s iff2=%s h1_limit=%s"
               % (fmt_value(rep.upsilon_zero), fmt_value(rep.iff2_value), fmt_value(rep.h1_limit)))
        rep.notes.append(msg)
        if strict:
            raise EquivalenceViolation(msg)
    if not flags[0] and not flags[2]:
        gap = abs(rep.h1_limit - rep.h1_limit_via_upsilon) / rep.h1_limit_via_upsilon
        rep.notes.append(f"relative gap between h_1 limit routes = {gap:.3g}")
    if not flags[0] and not flags[1]:
        d = kernel.dim
        # Upsilon(0) = Gamma(d/2 - 1) / (4 pi^{d/2}) * int f |z|^{2-d} dz
        pred = math.gamma(d / 2 - 1) / (4 * math.pi ** (d / 2)) * rep.iff2_value
        rep.notes.append(f"relative gap between upsilon_zero and the iff2 integral = "
                         f"{abs(pred - rep.upsilon_zero) / rep.upsilon_zero:.3g}")
    if isinstance(kernel, Constant):
        rep.notes.append("constant kernel: Upsilon(beta) = level/beta from the point-mass spectral "
                         "measure; a (2 pi)^{-d} prefactor would not match the Laplace identity")
    return rep
