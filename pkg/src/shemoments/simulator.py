"""Monte Carlo solver for the stochastic heat equation in d = 1.

Explicit Euler in time and second-order central differences in space on the
periodic grid x_i = -L + i dx, i = 0..n_x-1:

    u <- u + dt (nu/2) Lap_h u + rho(u) dW,

where dW is a centred Gaussian vector with covariance f(x_i - x_j) dt (or
(dt/dx) I for white noise).  Paths are grouped into batches; each batch owns a
counter-based random stream keyed by (seed, batch index), so results do not
depend on how batches are scheduled across threads.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (ConfigError, DimensionMismatch, GridMismatch, IndefiniteCovariance,
                     NaNDetected, NotPointwise, SingularAtOrigin, StabilityViolated)
from .kernels import (Atoms, CorrelationKernel, Density, DiracAt, HeatParams, InitialMeasure,
                      LebesgueScaled, WhiteNoise1D, j0)
from .moments import two_point_bounds

CLAMP_TOL = 1e-6
BOUNDARY_MASS_TOL = 1e-8
DENSE_MAX_NX = 1024
MIN_BATCHES = 30


# --- nonlinearity ---------------------------------------------------------------


@dataclass(frozen=True)
class Rho:
    """rho(u) with linear-growth constants lip |u| <= |rho(u)| <= Lip |u|."""

    kind: str = "linear"
    lam: float = 1.0
    a: float = 0.0
    table_u: tuple = ()
    table_v: tuple = ()

    @classmethod
    def linear(cls, lam: float) -> "Rho":
        return cls("linear", float(lam))

    @classmethod
    def sine(cls, lam: float, a: float = 0.5) -> "Rho":
        """rho(u) = lam (u + a sin u), |a| < 1."""
        if not abs(a) < 1:
            raise ValueError("sine nonlinearity needs |a| < 1")
        return cls("sine", float(lam), float(a))

    @classmethod
    def table(cls, u, v) -> "Rho":
        """Odd piecewise-linear rho through (u_k, v_k), u_0 = 0 < u_1 < ..., v_0 = 0.

        Beyond the last node rho continues linearly through the origin.
        """
        u = tuple(float(q) for q in u)
        v = tuple(float(q) for q in v)
        if len(u) != len(v) or len(u) < 2 or u[0] != 0 or v[0] != 0:
            raise ValueError("table needs (0, 0) followed by at least one node")
        if any(b <= a for a, b in zip(u, u[1:])):
            raise ValueError("table nodes must increase")
        return cls("table", 1.0, 0.0, u, v)

    def _ratios(self) -> np.ndarray:
        u, v = np.array(self.table_u[1:]), np.array(self.table_v[1:])
        return v / u

    @property
    def lip(self) -> float:
        if self.kind == "linear":
            return abs(self.lam)
        if self.kind == "sine":
            return abs(self.lam) * (1 - abs(self.a) * _NEG_SINC_MIN if self.a > 0 else 1 + self.a)
        return float(np.min(np.abs(self._ratios())))

    @property
    def Lip(self) -> float:
        if self.kind == "linear":
            return abs(self.lam)
        if self.kind == "sine":
            return abs(self.lam) * (1 + self.a if self.a > 0 else 1 - self.a * _NEG_SINC_MIN)
        return float(np.max(np.abs(self._ratios())))

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return self.lam * u
        if self.kind == "sine":
            return self.lam * (u + self.a * np.sin(u))
        tu, tv = np.array(self.table_u), np.array(self.table_v)
        au = np.abs(u)
        slope = tv[-1] / tu[-1]
        val = np.where(au <= tu[-1], np.interp(au, tu, tv), slope * au)
        return np.sign(u) * val


# minus the minimum of sin(u)/u, attained at the first root of tan u = u
_NEG_SINC_MIN = float(-np.sin(4.493409457909064) / 4.493409457909064)


# --- noise ------------------------------------------------------------------------


def _substream(seed: int, index: int) -> np.random.Generator:
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _cell_average_at_zero(kernel: CorrelationKernel, dx: float) -> float:
    fr = kernel.f_radial if kernel.radial else kernel.f_factor
    val, _ = integrate.quad(lambda r: float(fr(r)), 0.0, dx / 2, limit=200)
    return 2.0 * val / dx


def covariance_row(kernel: CorrelationKernel, dx: float, n: int) -> np.ndarray:
    """f(k dx) for k = 0..n-1; a singular f(0) is replaced by its cell average."""
    r = np.arange(n) * dx
    with np.errstate(divide="ignore"):
        out = np.empty(n)
        out[1:] = np.asarray(kernel.f(r[1:]), dtype=float)
        try:
            f0 = float(kernel.f(0.0))
        except SingularAtOrigin:
            f0 = math.inf
    out[0] = f0 if math.isfinite(f0) else _cell_average_at_zero(kernel, dx)
    return out


@dataclass
class NoiseSampler:
    """Draws spatial increment vectors with covariance C dt on the grid."""

    n_x: int
    dt: float
    method: str
    clamped_mass: float
    _factor: np.ndarray | None = field(default=None, repr=False)
    _sqrt_eig: np.ndarray | None = field(default=None, repr=False)
    _scale: float = 1.0

    def draw(self, gen: np.random.Generator, m: int) -> np.ndarray:
        """(m, n_x) array of increments."""
        if self.method == "white":
            return self._scale * gen.standard_normal((m, self.n_x))
        if self.method == "dense":
            z = gen.standard_normal((m, self._factor.shape[1]))
            return math.sqrt(self.dt) * z @ self._factor.T
        # circulant embedding: real and imaginary parts are independent draws
        N = self._sqrt_eig.size
        h = (m + 1) // 2
        z = gen.standard_normal((h, N)) + 1j * gen.standard_normal((h, N))
        y = np.fft.fft(self._sqrt_eig * z, axis=1)[:, : self.n_x]
        out = np.concatenate([y.real, y.imag], axis=0)[:m]
        return math.sqrt(self.dt) * out


def build_noise_sampler(kernel: CorrelationKernel, x: np.ndarray, dt: float,
                        method: str = "auto") -> NoiseSampler:
    """Sampler for increments with covariance f(x_i - x_j) dt on a uniform grid ``x``.

    Circulant embedding on a grid of twice the length (no wrap-around
    correlation inside the original window); dense eigendecomposition as a
    fallback for n_x <= 1024.  Negative eigenvalues are clamped to zero and the
    clamped mass (relative to the trace) is recorded.
    """
    if kernel.dim != 1:
        raise DimensionMismatch("the simulator works in d = 1")
    x = np.asarray(x, dtype=float)
    n = x.size
    dx = float(x[1] - x[0])
    if isinstance(kernel, WhiteNoise1D):
        return NoiseSampler(n, dt, "white", 0.0, _scale=math.sqrt(dt / dx))
    if not kernel.pointwise:
        raise NotPointwise(f"{kernel.name} has no pointwise covariance")
    if method not in ("auto", "circulant", "dense"):
        raise ValueError(f"unknown method {method!r}")

    if method in ("auto", "circulant"):
        N = 2 * n
        row = covariance_row(kernel, dx, n + 1)
        c = np.concatenate([row, row[1:n][::-1]])
        lam = np.fft.fft(c).real
        neg = float(-lam[lam < 0].sum())
        rel = neg / float(lam[lam > 0].sum())
        if rel <= CLAMP_TOL:
            return NoiseSampler(n, dt, "circulant", rel, _sqrt_eig=np.sqrt(np.clip(lam, 0, None) / N))
        if method == "circulant" or n > DENSE_MAX_NX:
            raise IndefiniteCovariance(f"circulant embedding clamps {rel:.2e} of the trace")

    row = covariance_row(kernel, dx, n)
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    w, V = np.linalg.eigh(row[idx])
    neg = float(-w[w < 0].sum())
    rel = neg / float(np.trace(row[idx]))
    if rel > CLAMP_TOL:
        raise IndefiniteCovariance(f"grid covariance clamps {rel:.2e} of the trace")
    return NoiseSampler(n, dt, "dense", rel, _factor=V * np.sqrt(np.clip(w, 0, None)))


# --- configuration and results ----------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    kernel: CorrelationKernel
    p: HeatParams
    rho: Rho
    mu: InitialMeasure
    half_width: float
    n_x: int
    t_max: float
    n_t: int
    n_paths: int
    seed: int = 0
    antithetic: bool = False
    targets: tuple = ()
    n_batches: int = 40

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_x

    @property
    def dt(self) -> float:
        return self.t_max / self.n_t

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + np.arange(self.n_x) * self.dx

    def validate(self):
        if self.p.dim != 1 or self.kernel.dim != 1 or self.mu.dim != 1:
            raise DimensionMismatch("the simulator works in d = 1")
        if self.n_x < 4 or self.n_t < 1 or self.n_paths < 2:
            raise ConfigError("need n_x >= 4, n_t >= 1 and n_paths >= 2")
        if not (MIN_BATCHES <= self.n_batches <= self.n_paths):
            raise ConfigError(f"n_batches must lie in [{MIN_BATCHES}, n_paths]")
        if self.antithetic and self.n_paths // self.n_batches < 2:
            raise ConfigError("antithetic sampling needs at least two paths per batch")
        if self.dt > self.dx ** 2 / self.p.nu * (1 + 1e-12):
            raise StabilityViolated(f"dt = {self.dt:g} exceeds dx^2/nu = {self.dx ** 2 / self.p.nu:g}")
        radius = _support_radius(self.mu)
        if radius is not None:
            gap = self.half_width - radius
            lost = math.erfc(gap / math.sqrt(2 * self.p.nu * self.t_max)) if gap > 0 else 1.0
            if lost >= BOUNDARY_MASS_TOL:
                raise ConfigError(f"domain too small: boundary mass {lost:.2e} at t_max")
        for t, _, _ in self.targets:
            self.step_of(t)

    def step_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if k < 1 or k > self.n_t or abs(k * self.dt - t) > 1e-9 * max(t, 1.0):
            raise GridMismatch(f"target time {t} is not a positive multiple of dt = {self.dt:g}")
        return k

    def node_of(self, x: float) -> int:
        return int(round((x + self.half_width) / self.dx)) % self.n_x


def _support_radius(mu: InitialMeasure) -> float | None:
    if isinstance(mu, (DiracAt, Atoms)):
        pts, _ = mu.atoms()
        return float(np.max(np.abs(pts)))
    if isinstance(mu, Density):
        return float(max(abs(mu.lower[0]), abs(mu.upper[0])))
    return None


def initial_profile(mu: InitialMeasure, x: np.ndarray, dx: float, half_width: float) -> np.ndarray:
    """Discrete initial data; atoms become spikes of mass w/dx at the nearest node."""
    if isinstance(mu, LebesgueScaled):
        return np.full(x.size, mu.C)
    if isinstance(mu, (DiracAt, Atoms)):
        u = np.zeros(x.size)
        pts, w = mu.atoms()
        for z, wi in zip(pts[:, 0], w):
            u[int(round((z + half_width) / dx)) % x.size] += wi / dx
        return u
    if isinstance(mu, Density):
        inside = (x >= mu.lower[0]) & (x <= mu.upper[0])
        return np.where(inside, np.asarray([mu.func(np.array([q])) for q in x], dtype=float), 0.0)
    raise ConfigError(f"unsupported initial measure {type(mu).__name__}")


@dataclass
class TargetEstimate:
    t: float
    x: float
    x_prime: float
    estimate: float
    stderr: float


@dataclass
class SimResult:
    x: np.ndarray
    dt: float
    dx: float
    n_t: int
    mean_field: np.ndarray
    mean_field_stderr: np.ndarray
    targets: list
    n_paths: int
    seed: int
    clamped_mass: float
    negative_excursions: int

    def to_csv(self, path=None, bounds=None) -> str:
        """One row per target; bound columns are NA unless ``bounds`` is given."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "x_prime", "estimate", "stderr", "bound_lower", "bound_upper", "pass"])
        for i, tg in enumerate(self.targets):
            if bounds is None:
                lo = up = ok = "NA"
            else:
                b = bounds[i]
                lo, up, ok = _fmt(b.lower), _fmt(b.upper), str(bool(b.contains(tg.estimate)))
            w.writerow([_fmt(tg.t), _fmt(tg.x), _fmt(tg.x_prime), _fmt(tg.estimate),
                        _fmt(tg.stderr), lo, up, ok])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


# --- simulation -------------------------------------------------------------------


def _run_batch(cfg: SimConfig, sampler: NoiseSampler, u0: np.ndarray, b: int, m: int,
               steps: dict) -> tuple:
    gen = _substream(cfg.seed, b)
    u = np.tile(u0, (m, 1))
    coef = cfg.dt * cfg.p.nu / (2 * cfg.dx ** 2)
    scale = max(float(np.max(np.abs(u0))), 1.0)
    eps = np.finfo(float).eps
    neg = 0
    sums = {}
    for k in range(1, cfg.n_t + 1):
        if cfg.antithetic:
            half = sampler.draw(gen, (m + 1) // 2)
            dW = np.concatenate([half, -half], axis=0)[:m]
        else:
            dW = sampler.draw(gen, m)
        lap = np.roll(u, 1, axis=1) + np.roll(u, -1, axis=1) - 2 * u
        u = u + coef * lap + cfg.rho(u) * dW
        if not np.all(np.isfinite(u)):
            bad = int(np.nonzero(~np.all(np.isfinite(u), axis=1))[0][0])
            raise NaNDetected(f"non-finite value in batch {b}, path {bad}, step {k}")
        neg += int(np.sum(np.min(u, axis=1) < -10 * eps * scale * k))
        if k in steps:
            for i, j, slot in steps[k]:
                sums[slot] = float(np.mean(u[:, i] * u[:, j]))
    return np.mean(u, axis=0), sums, neg


def simulate(config: SimConfig, *, threads: int = 1, noise_method: str = "auto") -> SimResult:
    """Run all paths and return first-moment field and two-point estimates."""
    config.validate()
    x = config.x
    sampler = build_noise_sampler(config.kernel, x, config.dt, noise_method)
    u0 = initial_profile(config.mu, x, config.dx, config.half_width)

    steps: dict = {}
    snapped = []
    for slot, (t, a, b) in enumerate(config.targets):
        k, i, j = config.step_of(t), config.node_of(a), config.node_of(b)
        steps.setdefault(k, []).append((i, j, slot))
        snapped.append((k * config.dt, float(x[i]), float(x[j])))

    sizes = [len(s) for s in np.array_split(np.arange(config.n_paths), config.n_batches)]
    jobs = [(b, m) for b, m in enumerate(sizes)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(lambda bm: _run_batch(config, sampler, u0, bm[0], bm[1], steps), jobs))
    else:
        out = [_run_batch(config, sampler, u0, b, m, steps) for b, m in jobs]

    # weight by integer batch sizes and divide once, so exact inputs stay exact
    w = np.array(sizes, dtype=float)
    B = len(sizes)
    means = np.array([o[0] for o in out])
    mean_field = np.sum(w[:, None] * means, axis=0) / config.n_paths
    mean_se = np.std(means, axis=0, ddof=1) / math.sqrt(B)
    targets = []
    for slot, (t, a, b) in enumerate(snapped):
        vals = np.array([o[1][slot] for o in out])
        targets.append(TargetEstimate(t, a, b, float(np.sum(w * vals) / config.n_paths),
                                      float(np.std(vals, ddof=1) / math.sqrt(B))))
    return SimResult(x, config.dt, config.dx, config.n_t, mean_field, mean_se, targets,
                     config.n_paths, config.seed, sampler.clamped_mass, sum(o[2] for o in out))


# --- validation -------------------------------------------------------------------


@dataclass
class ValidationRow:
    t: float
    x: float
    x_prime: float
    estimate: float
    stderr: float
    bias: float
    lower: float
    upper: float
    inside: bool
    passed: bool


@dataclass
class ValidationReport:
    rows: list
    result: SimResult

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "x_prime", "estimate", "stderr", "bias_allowance",
                    "bound_lower", "bound_upper", "estimate_inside", "pass"])
        for r in self.rows:
            w.writerow([_fmt(r.t), _fmt(r.x), _fmt(r.x_prime), _fmt(r.estimate), _fmt(r.stderr),
                        _fmt(r.bias), _fmt(r.lower), _fmt(r.upper), str(r.inside), str(r.passed)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def coarsened(config: SimConfig) -> SimConfig:
    """Half the spatial resolution with dt/dx^2 held fixed."""
    if config.n_x % 2 or config.n_t % 4:
        raise GridMismatch("coarsening needs n_x even and n_t divisible by 4")
    return SimConfig(config.kernel, config.p, config.rho, config.mu, config.half_width,
                     config.n_x // 2, config.t_max, config.n_t // 4, config.n_paths, config.seed,
                     config.antithetic, config.targets, config.n_batches)


def validate_moments(config: SimConfig, targets=None, *, threads: int = 1, bias: bool = True,
                     result: SimResult | None = None) -> ValidationReport:
    """Compare MC second moments with the analytic envelope at each target.

    A target passes when [estimate - 3 stderr - bias, estimate + 3 stderr + bias]
    meets [lower, upper]; the bias allowance is |fine - coarse| from a run at
    half the spatial resolution.
    """
    if targets is not None:
        config = SimConfig(config.kernel, config.p, config.rho, config.mu, config.half_width,
                           config.n_x, config.t_max, config.n_t, config.n_paths, config.seed,
                           config.antithetic, tuple(tuple(q) for q in targets), config.n_batches)
    fine = result if result is not None else simulate(config, threads=threads)
    coarse = simulate(coarsened(config), threads=threads) if bias else None
    rows = []
    for i, tg in enumerate(fine.targets):
        bnd = two_point_bounds(config.mu, config.kernel, config.p, config.rho.lip, config.rho.Lip,
                               tg.t, tg.x, tg.x_prime)
        allow = abs(tg.estimate - coarse.targets[i].estimate) if coarse is not None else 0.0
        half = 3 * tg.stderr + allow
        tol = 1e-9 * max(abs(bnd.upper), 1e-300)
        passed = (tg.estimate + half >= bnd.lower - tol) and (tg.estimate - half <= bnd.upper + tol)
        inside = bnd.lower - tol <= tg.estimate <= bnd.upper + tol
        rows.append(ValidationRow(tg.t, tg.x, tg.x_prime, tg.estimate, tg.stderr, allow,
                                  bnd.lower, bnd.upper, inside, passed))
    return ValidationReport(rows, fine)
