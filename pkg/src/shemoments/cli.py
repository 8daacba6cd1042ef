"""Command-line front end.

Every run reads an INI-style configuration file.  Unknown sections or keys are
rejected.  Exit codes: 0 ok, 2 configuration error, 3 numerical failure,
4 validation failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import asymptotics, kernels, moments, simulator, spectral
from .errors import ConfigError, NumericalError, ShemomentsError
from .kernels import KERNEL_KEYS, HeatParams

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4

SCHEMA = {
    "kernel": KERNEL_KEYS,
    "heat": {"nu", "dim"},
    "measure": {"type", "point", "points", "weights", "C", "table_path"},
    "grid": {"t_min", "t_max", "n"},
    "upsilon": {"betas"},
    "phase": {"lip", "Lip"},
    "fronts": {"lip", "Lip", "beta", "compact_support", "theta", "numeric_theta_star"},
    "moments": {"lip", "Lip", "targets"},
    "simulate": {"rho", "lam", "a", "table_u", "table_v", "half_width", "n_x", "t_max", "n_t",
                 "n_paths", "antithetic", "n_batches", "targets", "noise_method"},
    "validate": {"bias"},
    "output": {"dir", "seed", "format"},
}


# --- configuration --------------------------------------------------------------


class RunConfig:
    """Parsed and schema-checked configuration."""

    def __init__(self, text: str):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse configuration: {exc}") from exc
        for name in cp.sections():
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]")
            unknown = set(cp[name]) - SCHEMA[name]
            if unknown:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
        self.sections = {name: dict(cp[name]) for name in cp.sections()}

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc

    def section(self, name: str, required: bool = True) -> dict:
        if name not in self.sections:
            if required:
                raise ConfigError(f"missing section [{name}]")
            return {}
        return self.sections[name]

    def get(self, section: str, key: str, conv=str, default=None):
        sec = self.section(section, required=default is None)
        if key not in sec:
            if default is None:
                raise ConfigError(f"missing key '{key}' in [{section}]")
            return default
        try:
            return conv(sec[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {sec[key]!r}") from exc


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _floats(s: str) -> list:
    return [float(q) for q in s.replace(",", " ").split()]


def heat_from(cfg: RunConfig) -> HeatParams:
    return HeatParams(nu=cfg.get("heat", "nu", float, 1.0), dim=cfg.get("heat", "dim", int, 1))


def kernel_from(cfg: RunConfig, p: HeatParams):
    sec = dict(cfg.section("kernel"))
    sec.setdefault("dim", str(p.dim))
    k = kernels.kernel_from_config(sec)
    if k.dim != p.dim:
        raise ConfigError("[kernel] dim and [heat] dim disagree")
    return k


def measure_from(cfg: RunConfig, p: HeatParams):
    sec = cfg.section("measure")
    kind = sec.get("type", "").strip().lower()
    d = p.dim
    if kind == "dirac":
        return kernels.DiracAt(tuple(_floats(sec.get("point", "0 " * d))), dim=d)
    if kind == "atoms":
        pts = tuple(tuple(_floats(q)) for q in sec.get("points", "").split(";") if q.strip())
        return kernels.Atoms(pts, tuple(_floats(sec.get("weights", ""))), dim=d)
    if kind == "lebesgue":
        return kernels.LebesgueScaled(float(sec.get("C", "1")), dim=d)
    if kind == "density":
        if d != 1 or "table_path" not in sec:
            raise ConfigError("density measures need d = 1 and table_path")
        x, v = _read_table(sec["table_path"])
        return kernels.Density.from_table(x, v)
    raise ConfigError(f"unknown measure type {kind!r}")


def _read_table(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    return [float(r[0]) for r in rows], [float(r[1]) for r in rows]


def parse_targets(text: str, d: int) -> list:
    """'t x x'' triples separated by ';' (d = 1) or 't | x.. | x'..' for d > 1."""
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        if "|" in item:
            parts = [_floats(q) for q in item.split("|")]
            if len(parts) != 3 or len(parts[0]) != 1 or len(parts[1]) != d or len(parts[2]) != d:
                raise ConfigError(f"bad target {item!r}")
            out.append((parts[0][0], tuple(parts[1]), tuple(parts[2])))
        else:
            vals = _floats(item)
            if d != 1 or len(vals) != 3:
                raise ConfigError(f"bad target {item!r}")
            out.append(tuple(vals))
    if not out:
        raise ConfigError("no targets given")
    return out


def rho_from(cfg: RunConfig) -> simulator.Rho:
    kind = cfg.get("simulate", "rho", str, "linear").strip().lower()
    lam = cfg.get("simulate", "lam", float, 1.0)
    if kind == "linear":
        return simulator.Rho.linear(lam)
    if kind == "sine":
        return simulator.Rho.sine(lam, cfg.get("simulate", "a", float, 0.5))
    if kind == "table":
        return simulator.Rho.table(_floats(cfg.get("simulate", "table_u")),
                                   _floats(cfg.get("simulate", "table_v")))
    raise ConfigError(f"unknown rho {kind!r}")


def sim_config_from(cfg: RunConfig, seed: int) -> simulator.SimConfig:
    p = heat_from(cfg)
    g = lambda key, conv, default=None: cfg.get("simulate", key, conv, default)
    return simulator.SimConfig(
        kernel=kernel_from(cfg, p), p=p, rho=rho_from(cfg), mu=measure_from(cfg, p),
        half_width=g("half_width", float), n_x=g("n_x", int), t_max=g("t_max", float),
        n_t=g("n_t", int), n_paths=g("n_paths", int), seed=seed,
        antithetic=g("antithetic", _bool, False), targets=tuple(parse_targets(g("targets", str), 1)),
        n_batches=g("n_batches", int, 40))


# --- output -----------------------------------------------------------------------


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return spectral.fmt_value(float(v)) if math.isinf(v) else format(float(v), ".12g")
    return str(v)


class Writer:
    def __init__(self, out_dir: str, fmt: str):
        self.out_dir = out_dir
        self.fmt = fmt
        os.makedirs(out_dir, exist_ok=True)
        self.files: list = []

    def table(self, stem: str, header: list, rows: list) -> str:
        rows = [[_num(v) for v in r] for r in rows]
        if self.fmt == "json":
            path = os.path.join(self.out_dir, stem + ".json")
            text = json.dumps([dict(zip(header, r)) for r in rows], indent=1) + "\n"
        else:
            path = os.path.join(self.out_dir, stem + ".csv")
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            text = buf.getvalue()
        return self.text(os.path.basename(path), text)

    def text(self, name: str, text: str) -> str:
        path = os.path.join(self.out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.files.append(path)
        return path


def svg_loglog(series: dict, xlabel: str, ylabel: str, width: int = 640, height: int = 400) -> str:
    """Static log-log line chart; ``series`` maps labels to (x, y) arrays."""
    pad = 60
    xs = np.concatenate([np.asarray(v[0], float) for v in series.values()])
    ys = np.concatenate([np.asarray(v[1], float) for v in series.values()])
    ok = (xs > 0) & (ys > 0) & np.isfinite(ys)
    lx0, lx1 = np.log10(xs[ok].min()), np.log10(xs[ok].max())
    ly0, ly1 = np.log10(ys[ok].min()), np.log10(ys[ok].max())
    if ly1 - ly0 < 1e-12:
        ly0, ly1 = ly0 - 0.5, ly1 + 0.5
    if lx1 - lx0 < 1e-12:
        lx0, lx1 = lx0 - 0.5, lx1 + 0.5
    sx = lambda v: pad + (math.log10(v) - lx0) / (lx1 - lx0) * (width - 2 * pad)
    sy = lambda v: height - pad - (math.log10(v) - ly0) / (ly1 - ly0) * (height - 2 * pad)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           'fill="none" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="{height - 15}" text-anchor="middle" font-size="13">{xlabel}</text>',
           f'<text x="15" y="{height / 2:.1f}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 15 {height / 2:.1f})">{ylabel}</text>',
           f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{10 ** lx0:.3g}</text>',
           f'<text x="{width - pad}" y="{height - pad + 15}" font-size="10" text-anchor="end">{10 ** lx1:.3g}</text>',
           f'<text x="{pad - 5}" y="{height - pad}" font-size="10" text-anchor="end">{10 ** ly0:.3g}</text>',
           f'<text x="{pad - 5}" y="{pad + 10}" font-size="10" text-anchor="end">{10 ** ly1:.3g}</text>']
    for i, (label, (x, y)) in enumerate(series.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y) if a > 0 and b > 0 and math.isfinite(b))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{width - pad - 5}" y="{pad + 15 + 15 * i}" font-size="12" '
                   f'text-anchor="end" fill="{c}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --- commands ---------------------------------------------------------------------


def cmd_kernel(cfg: RunConfig, w: Writer, args) -> int:
    p = heat_from(cfg)
    k = kernel_from(cfg, p)
    t = np.geomspace(cfg.get("grid", "t_min", float, 1e-3), cfg.get("grid", "t_max", float, 1e2),
                     cfg.get("grid", "n", int, 41))
    kt = np.asarray(kernels.k_of_t(k, p, t), dtype=float)
    h1 = np.asarray(kernels.h1_of_t(k, p, t), dtype=float)
    w.table("kernel", ["t [time]", "k [f]", "h1 [f*time]"], list(zip(t, kt, h1)))
    w.text("kernel.svg", svg_loglog({"k(t)": (t, kt), "h1(t)": (t, h1)}, "t", "value"))
    return EXIT_OK


def cmd_upsilon(cfg: RunConfig, w: Writer, args) -> int:
    p = heat_from(cfg)
    k = kernel_from(cfg, p)
    betas = _floats(cfg.get("upsilon", "betas", str, " ".join(str(2.0 ** j) for j in range(-6, 7))))
    rep = spectral.equivalence_report(k, p, betas, strict=False)
    w.table("upsilon", ["beta [1/length^2]", "upsilon [f*length^2]"], rep.upsilon_at)
    w.table("upsilon_summary", ["quantity", "value"],
            [["upsilon_zero [f*length^2]", rep.upsilon_zero], ["iff2_integral [f*length^2]", rep.iff2_value],
             ["h1_limit [f*time]", rep.h1_limit], ["h1_limit_via_upsilon [f*time]", rep.h1_limit_via_upsilon],
             ["dalang_ok", rep.dalang_ok], ["verdicts_agree", rep.verdicts_agree]])
    return EXIT_OK if rep.verdicts_agree else EXIT_VALIDATION


def _lips(cfg, section):
    lip = cfg.get(section, "lip", float, 1.0)
    return lip, cfg.get(section, "Lip", float, lip)


def cmd_phase(cfg: RunConfig, w: Writer, args) -> int:
    p = heat_from(cfg)
    k = kernel_from(cfg, p)
    lip, Lip = _lips(cfg, "phase")
    rep = asymptotics.phase_classify(k, p, lip, Lip)
    row = rep.csv_row()
    units = {"nu": "nu [length^2/time]", "upsilon_zero": "upsilon_zero [f*length^2]"}
    w.table("phase", [units.get(c, c) for c in row], [list(row.values())])
    w.text("phase.txt", rep.to_text())
    return EXIT_OK


def cmd_fronts(cfg: RunConfig, w: Writer, args) -> int:
    p = heat_from(cfg)
    k = kernel_from(cfg, p)
    lip, Lip = _lips(cfg, "fronts")
    beta = cfg.get("fronts", "beta", float, 1.0)
    th = cfg.get("fronts", "theta", float, math.nan)
    rep = asymptotics.growth_indices(
        k, p, lip, Lip, beta, compact_support=cfg.get("fronts", "compact_support", _bool, False),
        theta_override=None if math.isnan(th) else th,
        numeric_theta_star=cfg.get("fronts", "numeric_theta_star", _bool, True))
    row = rep.csv_row()
    units = {"nu": "nu [length^2/time]", "theta": "theta [1/time]", "theta_star": "theta_star [1/time]",
             "theta_star_lemma": "theta_star_lemma [1/time]", "lower_index": "lower_index [length/time]",
             "lower_index_lemma": "lower_index_lemma [length/time]",
             "upper_index": "upper_index [length/time]", "optimized_upper": "optimized_upper [length/time]",
             "beta_used": "beta_used [1/length]"}
    w.table("fronts", [units.get(c, c) for c in row], [list(row.values())])
    w.text("fronts.txt", rep.to_text())
    return EXIT_OK


def _coord(v):
    v = np.atleast_1d(v)
    return " ".join(_num(q) for q in v)


def cmd_moments(cfg: RunConfig, w: Writer, args) -> int:
    p = heat_from(cfg)
    k = kernel_from(cfg, p)
    mu = measure_from(cfg, p)
    lip, Lip = _lips(cfg, "moments")
    rows = []
    for t, x, xp in parse_targets(cfg.get("moments", "targets"), p.dim):
        b = moments.two_point_bounds(mu, k, p, lip, Lip, t, x, xp)
        rows.append([t, _coord(x), _coord(xp), b.lower, b.upper, b.mode])
    w.table("moments", ["t [time]", "x [length]", "x_prime [length]", "lower [u^2]", "upper [u^2]", "mode"],
            rows)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, w: Writer, args) -> int:
    sc = sim_config_from(cfg, args.seed_value)
    res = simulator.simulate(sc, threads=args.threads,
                             noise_method=cfg.get("simulate", "noise_method", str, "auto"))
    w.table("simulate", ["t [time]", "x [length]", "x_prime [length]", "estimate [u^2]", "stderr [u^2]"],
            [[tg.t, tg.x, tg.x_prime, tg.estimate, tg.stderr] for tg in res.targets])
    w.table("mean_field", ["x [length]", "mean [u]", "stderr [u]"],
            list(zip(res.x, res.mean_field, res.mean_field_stderr)))
    w.table("simulate_meta", ["quantity", "value"],
            [["n_paths", res.n_paths], ["seed", res.seed], ["dt [time]", res.dt], ["dx [length]", res.dx],
             ["n_t", res.n_t], ["clamped_mass", res.clamped_mass],
             ["negative_excursions", res.negative_excursions]])
    return EXIT_OK


def cmd_validate(cfg: RunConfig, w: Writer, args) -> int:
    sc = sim_config_from(cfg, args.seed_value)
    rep = simulator.validate_moments(sc, threads=args.threads,
                                     bias=cfg.get("validate", "bias", _bool, True))
    w.table("validate", ["t [time]", "x [length]", "x_prime [length]", "estimate [u^2]", "stderr [u^2]",
                         "bias_allowance [u^2]", "bound_lower [u^2]", "bound_upper [u^2]",
                         "estimate_inside", "pass"],
            [[r.t, r.x, r.x_prime, r.estimate, r.stderr, r.bias, r.lower, r.upper, r.inside, r.passed]
             for r in rep.rows])
    return EXIT_OK if rep.all_pass else EXIT_VALIDATION


COMMANDS = {"kernel": cmd_kernel, "upsilon": cmd_upsilon, "phase": cmd_phase, "fronts": cmd_fronts,
            "moments": cmd_moments, "simulate": cmd_simulate, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shemoments", description="Second-moment analysis of the "
                                 "stochastic heat equation with spatially correlated noise.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--seed", type=int, help="random seed (overrides [output] seed)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for simulations")
    ap.add_argument("--format", choices=["csv", "json"], help="table format (default csv)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config)
        out = args.out or cfg.get("output", "dir", str, "out")
        args.seed_value = args.seed if args.seed is not None else cfg.get("output", "seed", int, 0)
        fmt = args.format or cfg.get("output", "format", str, "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown format {fmt!r}")
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        writer = Writer(out, fmt)
        return COMMANDS[args.command](cfg, writer, args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ShemomentsError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
