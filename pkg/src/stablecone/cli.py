"""Command-line front end.

Configuration files use a flat ``key = value`` grammar. ``[section]`` headers
only group keys; ``#`` starts a comment; several assignments may share a line
when separated by commas (``alpha = 1.0, d = 2``). Lists of times or radii are
whitespace separated, points are ``;`` separated with comma components::

    command = pkill
    [model]
    alpha = 1.0, d = 2
    domain = cone:0.7853981634
    [grid]
    t = 0.5 1 2
    x = 0, 1; 0.2, 0.8
    y = 0, 0.5
    [mc]
    n_paths = 20000
    seed = 7

Exit status: 0 success, 1 unexpected error, 2 configuration error,
3 numerical failure, 4 uninformative grid, 5 insufficient paths, 6 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .bounds import ConeExponent
from .estimators import MCConfig, green_function, killed_kernel_many
from .geometry import Ball, Cone, Domain, HalfLine, HalfSpace, parse_domain
from .kernel import QuadratureError, StableParams, get_profile, heat_kernel_radial
from .sampler import SeedSpec, binomial_estimate, default_step, run_paths, time_grid
from .verify import (
    InsufficientPaths,
    UninformativeGrid,
    beta_fit,
    cone_kernel_report,
    cone_survival_report,
    doubling_check,
    factorization_trend,
    with_stability,
)

COMMANDS = ("kernel", "survive", "pkill", "green", "beta", "verify")
FORMATS = ("csv", "json", "plotdata")
STATEMENTS = ("ppu", "eetGs", "doubling", "large_time")
SECTIONS = ("model", "grid", "mc", "output", "verify")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_NUMERIC, EXIT_GRID, EXIT_PATHS, EXIT_IO = 0, 1, 2, 3, 4, 5, 6


class ConfigError(ValueError):
    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    params: StableParams
    domain: str = "full"
    x: tuple = ()
    y: tuple = ()
    t: tuple = ()  # empty: t = 1, or the default large-time grid for beta
    r: tuple = ()
    n_paths: int = 20_000
    h: float | None = None
    rel_step: float | None = None
    residual: float | None = None
    seed: int = 0
    workers: int = 1
    format: str = "csv"
    out: str = "."
    beta: float | None = None
    statement: str = "ppu"
    t_min: float = 1e-3
    t_max: float = 8.0
    r_max: float = 64.0
    n_grid: int = 513

    @property
    def mc(self) -> MCConfig:
        return MCConfig(self.n_paths, self.h, SeedSpec(self.seed), self.workers, self.residual, self.rel_step)

    def domain_obj(self) -> Domain:
        return parse_domain(self.domain, self.params.d)

    def echo(self) -> list[str]:
        """Assignments that reproduce the results (runtime-only keys are omitted)."""
        lines = []
        for f in fields(self):
            if f.name in ("workers", "out"):
                continue
            v = getattr(self, f.name)
            if v is None or v == ():
                continue
            if f.name == "params":
                lines += [f"alpha = {v.alpha!r}", f"d = {v.d}"]
            elif f.name in ("x", "y"):
                lines.append(f"{f.name} = " + "; ".join(", ".join(repr(c) for c in p) for p in v))
            elif f.name in ("t", "r"):
                lines.append(f"{f.name} = " + " ".join(repr(c) for c in v))
            else:
                lines.append(f"{f.name} = {v}" if isinstance(v, str) else f"{f.name} = {v!r}")
        return lines


# ---------------------------------------------------------------------------
# parsing

_SPLIT = re.compile(r",\s*(?=[A-Za-z_][A-Za-z0-9_]*\s*=)")
_KEYS = {
    "command", "alpha", "d", "domain", "x", "y", "t", "r", "n_paths", "h", "rel_step", "residual", "seed",
    "workers", "format", "out", "beta", "statement", "t_min", "t_max", "r_max", "n_grid",
}


def _assignments(text: str) -> tuple[dict[str, str], list[str]]:
    raw, errors = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            name = line.strip("[] ").lower()
            if not line.endswith("]") or name not in SECTIONS:
                errors.append(f"line {lineno}: unknown section {line!r} (expected one of {', '.join(SECTIONS)})")
            continue
        for part in _SPLIT.split(line):
            key, eq, value = part.partition("=")
            key = key.strip().lower()
            if not eq:
                errors.append(f"line {lineno}: expected 'key = value', got {part.strip()!r}")
            elif key not in _KEYS:
                errors.append(f"line {lineno}: unknown key {key!r}")
            elif key in raw:
                errors.append(f"line {lineno}: duplicate key {key!r}")
            else:
                raw[key] = value.strip()
    return raw, errors


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _points(text: str, d: int | None) -> tuple[tuple[float, ...], ...]:
    pts = tuple(tuple(float(c) for c in chunk.split(",")) for chunk in text.split(";") if chunk.strip())
    if d is not None and any(len(p) != d for p in pts):
        raise ValueError(f"every point needs {d} components")
    return pts


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a configuration; raises :class:`ConfigError` listing every problem."""
    raw, errors = _assignments(text)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = str(v)
    values: dict = {}

    def conv(key, fn, check=None, msg=""):
        if key not in raw:
            return
        try:
            v = fn(raw[key])
        except ValueError as exc:
            errors.append(f"{key}: cannot parse {raw[key]!r} ({exc})")
            return
        if check is not None and not check(v):
            errors.append(f"{key} = {raw[key]}: {msg}")
            return
        values[key] = v

    conv("command", str.strip, lambda c: c in COMMANDS, f"command must be one of {', '.join(COMMANDS)}")
    if "command" not in raw:
        errors.append("command: missing (one of " + ", ".join(COMMANDS) + ")")
    conv("alpha", float, lambda a: 0 < a < 2, "alpha must lie in (0, 2)")
    if "alpha" not in raw:
        errors.append("alpha: missing")
    conv("d", int, lambda d: d >= 1, "dimension must be at least 1")
    d = values.get("d", 1)
    for key in ("x", "y"):
        conv(key, lambda s: _points(s, d))
    conv("t", _float_list, lambda ts: len(ts) > 0 and all(v > 0 for v in ts), "times must be positive")
    conv("r", _float_list, lambda rs: all(v >= 0 for v in rs), "radii must be nonnegative")
    conv("n_paths", int, lambda n: n >= 1, "n_paths must be at least 1")
    conv("n_grid", int, lambda n: n >= 2, "n_grid must be at least 2")
    for key in ("h", "rel_step", "residual", "t_min", "t_max", "r_max"):
        conv(key, float, lambda v: v > 0, "must be positive")
    conv("seed", int, lambda s: 0 <= s < 2**64, "seed must be a 64-bit unsigned integer")
    conv("workers", int, lambda w: w >= 1, "workers must be at least 1")
    conv("format", str.strip, lambda f: f in FORMATS, f"format must be one of {', '.join(FORMATS)}")
    conv("out", str.strip)
    conv("statement", str.strip, lambda s: s in STATEMENTS, f"statement must be one of {', '.join(STATEMENTS)}")
    conv("beta", float, lambda b: b >= 0, "beta must be nonnegative")
    if "domain" in raw:
        try:
            parse_domain(raw["domain"], d)
            values["domain"] = raw["domain"].strip()
        except ValueError as exc:
            errors.append(f"domain: {exc}")
    if "alpha" in values and "beta" in values and not values["beta"] < values["alpha"]:
        errors.append("beta must satisfy 0 <= beta < alpha")
    if errors:
        raise ConfigError(errors)
    alpha = values.pop("alpha")
    d = values.pop("d", 1)
    return ExperimentConfig(params=StableParams(d, alpha), **values)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    summary: str = ""
    meta: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "columns": self.columns, "rows": self.rows,
            "summary": self.summary, "meta": self.meta,
        }

    def to_table(self, digits: int = 6) -> str:
        """Aligned-column text for reading at a terminal."""
        def fmt(v):
            return f"{float(v):.{digits}g}" if _is_number(v) else str(v)

        cells = [list(self.columns)] + [[fmt(v) for v in row] for row in self.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.columns))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_report(report: Report, fmt: str, path) -> Path:
    """Write ``report`` as csv, json or plotdata; errors carry the path."""
    path = Path(path)
    buf = io.StringIO()
    if fmt == "csv":
        for line in report.meta:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(report.columns)
        for row in report.rows:
            w.writerow([_cell(v) for v in row])
    elif fmt == "json":
        json.dump(_jsonable(report.to_dict()), buf, sort_keys=True, indent=1)
        buf.write("\n")
    elif fmt == "plotdata":
        for line in report.meta:
            buf.write(f"# {line}\n")
        numeric = [i for i, c in enumerate(report.columns) if all(_is_number(r[i]) for r in report.rows)]
        buf.write("# " + " ".join(report.columns[i] for i in numeric) + "\n")
        for row in report.rows:
            buf.write(" ".join(_cell(row[i]) for i in numeric) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc
    return path


def _is_number(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# ---------------------------------------------------------------------------
# commands


def _coord_names(prefix: str, d: int) -> list[str]:
    return [prefix] if d == 1 else [f"{prefix}{i + 1}" for i in range(d)]


def _need(cfg: ExperimentConfig, *keys: str):
    missing = [k for k in keys if not getattr(cfg, k)]
    if missing:
        raise ConfigError([f"{k}: required by command {cfg.command!r}" for k in missing])


def _cmd_kernel(cfg: ExperimentConfig, rep: Report):
    cfg = _with_times(cfg)
    p = cfg.params
    profile = get_profile(p.d, p.alpha, cfg.r_max, cfg.n_grid)
    radii = list(cfg.r) + [float(np.linalg.norm(x)) for x in cfg.x]
    if not radii:
        raise ConfigError(["r or x: command 'kernel' needs radii or points"])
    rep.columns = ["alpha", "d", "t", "r", "value"]
    for t in cfg.t:
        vals = heat_kernel_radial(profile, t, np.array(radii))
        rep.rows += [[p.alpha, p.d, t, r, float(v)] for r, v in zip(radii, vals)]
    rep.summary = f"{len(rep.rows)} kernel values; mass of p_1 = {profile.mass():.12f}"


def _with_times(cfg: ExperimentConfig) -> ExperimentConfig:
    return cfg if cfg.t else replace(cfg, t=(1.0,))


def _estimate_columns(cfg: ExperimentConfig, with_y: bool, with_t: bool = True) -> list[str]:
    cols = ["domain", "alpha", "d"] + (["t"] if with_t else []) + _coord_names("x", cfg.params.d)
    if with_y:
        cols += _coord_names("y", cfg.params.d)
    return cols + ["value", "std_error", "n_paths", "seed"]


def _cmd_survive(cfg: ExperimentConfig, rep: Report):
    cfg = _with_times(cfg)
    _need(cfg, "x")
    dom, p = cfg.domain_obj(), cfg.params
    ts = sorted(cfg.t)
    h = default_step(ts[0]) if cfg.h is None else cfg.h
    grid = time_grid(ts[-1], h, rel_step=cfg.rel_step, include=ts)
    rep.columns = _estimate_columns(cfg, False)
    seed = SeedSpec(cfg.seed)
    for i, x in enumerate(cfg.x):
        s = seed.spawn(i)
        batch = run_paths(dom, p, x, grid, cfg.n_paths, s, workers=cfg.workers)
        for t in ts:
            est = binomial_estimate(int(np.sum(batch.tau > t)), cfg.n_paths)
            rep.rows.append([cfg.domain, p.alpha, p.d, t, *x, est.value, est.std_error, cfg.n_paths, str(s)])
    rep.summary = "; ".join(f"P(tau>{r[3]!r})={r[-4]:.5g}+-{r[-3]:.2g}" for r in rep.rows[:6])


def _cmd_pkill(cfg: ExperimentConfig, rep: Report):
    cfg = _with_times(cfg)
    _need(cfg, "x", "y")
    dom, p = cfg.domain_obj(), cfg.params
    profile = get_profile(p.d, p.alpha, cfg.r_max, cfg.n_grid)
    rep.columns = _estimate_columns(cfg, True)
    seed = SeedSpec(cfg.seed)
    for i, x in enumerate(cfg.x):
        s = seed.spawn(i)
        est = killed_kernel_many(dom, profile, x, list(cfg.t), np.array(cfg.y), cfg.mc, s)
        for a, t in enumerate(cfg.t):
            for b, y in enumerate(cfg.y):
                e = est[a, b]
                rep.rows.append([cfg.domain, p.alpha, p.d, t, *x, *y, e.value, e.std_error, cfg.n_paths, str(s)])
    rep.summary = f"{len(rep.rows)} killed-kernel estimates"


def _cone_exponent(cfg: ExperimentConfig, dom: Domain) -> ConeExponent | None:
    if isinstance(dom, Cone):
        if cfg.beta is None:
            return None
        return ConeExponent(dom.theta_max, cfg.params, cfg.beta)
    if isinstance(dom, (HalfSpace, HalfLine)):
        beta = cfg.params.alpha / 2 if cfg.beta is None else cfg.beta
        return ConeExponent(math.pi / 2, cfg.params, beta)
    return None


def _cmd_green(cfg: ExperimentConfig, rep: Report):
    _need(cfg, "x", "y")
    dom, p = cfg.domain_obj(), cfg.params
    profile = get_profile(p.d, p.alpha, cfg.r_max, cfg.n_grid)
    exp = _cone_exponent(cfg, dom)
    if not dom.bounded and exp is None:
        raise ConfigError(["beta: the Green function tail on a cone needs beta"])
    rep.columns = _estimate_columns(cfg, True, with_t=False)
    seed = SeedSpec(cfg.seed)
    k = 0
    for x in cfg.x:
        for y in cfg.y:
            s = seed.spawn(k)
            k += 1
            mc = replace(cfg.mc, seed=s)
            g = green_function(dom, profile, x, y, mc, t_min=cfg.t_min, t_max=cfg.t_max, cone_exponent=exp)
            rep.rows.append([cfg.domain, p.alpha, p.d, *x, *y, g.value, g.std_error, cfg.n_paths, str(s)])
    rep.summary = f"{len(rep.rows)} Green function estimates"


def _cmd_beta(cfg: ExperimentConfig, rep: Report):
    _need(cfg, "x")
    dom, p = cfg.domain_obj(), cfg.params
    ts = cfg.t or None
    fit = beta_fit(dom, p, cfg.x[0], ts, cfg.mc)
    rep.columns = ["domain", "alpha", "d", "t", "survival", "std_error", "n_paths", "seed"]
    for t, s, se in zip(fit.ts, fit.survival, fit.survival_se):
        rep.rows.append([cfg.domain, p.alpha, p.d, t, s, se, fit.n_paths, str(cfg.mc.seed)])
    lo, hi = fit.ci
    rep.meta.append(f"beta = {fit.beta!r}, std_error = {fit.std_error!r}, ci95 = [{lo!r}, {hi!r}]")
    rep.summary = f"beta = {fit.beta:.4f} +- {fit.std_error:.4f} (95% CI [{lo:.4f}, {hi:.4f}])"


def _report_rows(report, d: int) -> tuple[list[str], list[list]]:
    if not report.nodes:
        return [], []
    cols: list[str] = []
    for k, v in report.nodes[0].items():
        cols += _coord_names(k, d) if isinstance(v, list) else [k]
    rows = []
    for node in report.nodes:
        row = []
        for v in node.values():
            row += list(v) if isinstance(v, list) else [v]
        rows.append(row)
    return cols, rows


def _cmd_verify(cfg: ExperimentConfig, rep: Report):
    cfg = _with_times(cfg)
    dom, p = cfg.domain_obj(), cfg.params
    st = cfg.statement
    if st == "large_time":
        _need(cfg, "x", "y")
        profile = get_profile(p.d, p.alpha, cfg.r_max, cfg.n_grid)
        tr = factorization_trend(dom, profile, cfg.x[0], cfg.y[0], cfg.t, cfg.mc)
        rep.columns = ["t", "ratio", "ratio_se", "kernel", "survival_x", "survival_y"]
        rep.rows = [list(r) for r in zip(tr.ts, tr.ratio, tr.ratio_se, tr.kernel, tr.survival_x, tr.survival_y)]
        rep.summary = (
            f"growth rate {tr.growth_rate:.4f} +- {tr.growth_rate_se:.4f}; "
            f"strictly increasing beyond CI: {tr.increasing}"
        )
        return
    if st == "doubling":
        _need(cfg, "x")
        nodes = [{"id": i * len(cfg.t) + j, "t": t, "x": np.array(x)} for i, x in enumerate(cfg.x) for j, t in enumerate(cfg.t)]
        coarse = doubling_check(dom, p, nodes, cfg.mc)
        fine = doubling_check(dom, p, nodes, cfg.mc.refined())
    else:
        exp = _cone_exponent(cfg, dom)
        if exp is None:
            raise ConfigError(["beta: statement needs a cone or half-space domain and, for cones, beta"])
        if st == "ppu":
            _need(cfg, "x", "y")
            if len(cfg.x) != len(cfg.y):
                raise ConfigError(["x, y: statement 'ppu' pairs points, so x and y need equal length"])
            profile = get_profile(p.d, p.alpha, cfg.r_max, cfg.n_grid)
            pairs = [(np.array(a), np.array(b)) for a, b in zip(cfg.x, cfg.y)]
            coarse = cone_kernel_report(exp, profile, pairs, cfg.t, cfg.mc)
            fine = cone_kernel_report(exp, profile, pairs, cfg.t, cfg.mc.refined())
        else:
            _need(cfg, "x")
            pts = [np.array(a) for a in cfg.x]
            coarse = cone_survival_report(exp, pts, cfg.t, cfg.mc)
            fine = cone_survival_report(exp, pts, cfg.t, cfg.mc.refined())
    report = with_stability(coarse, fine)
    rep.columns, rep.rows = _report_rows(report, p.d)
    b = report.band
    rep.meta.append(
        f"band = [{b['min']!r}, {b['max']!r}], q05 = {b['q05']!r}, q95 = {b['q95']!r}, "
        f"refinement_stability = {report.refinement_stability!r}, excluded = {report.excluded}"
    )
    rep.summary = (
        f"{st}: band [{b['min']:.4g}, {b['max']:.4g}] (q05 {b['q05']:.4g}, q95 {b['q95']:.4g}), "
        f"refinement change {report.refinement_stability:.3f}, excluded {report.excluded}/{len(report.nodes) + report.excluded}"
    )


_DISPATCH = {
    "kernel": _cmd_kernel, "survive": _cmd_survive, "pkill": _cmd_pkill,
    "green": _cmd_green, "beta": _cmd_beta, "verify": _cmd_verify,
}
_EXT = {"csv": "csv", "json": "json", "plotdata": "dat"}


def execute(cfg: ExperimentConfig) -> Report:
    rep = Report(cfg.command, [])
    rep.meta = [f"stablecone {__version__}, numpy {np.__version__}, scipy {scipy.__version__}"] + [
        f"config: {line}" for line in cfg.echo()
    ]
    _DISPATCH[cfg.command](cfg, rep)
    return rep


def run(cfg: ExperimentConfig, stdout=None) -> int:
    """Run ``cfg``, write its artifact and return the exit status."""
    stdout = sys.stdout if stdout is None else stdout
    try:
        rep = execute(cfg)
        path = emit_report(rep, cfg.format, Path(cfg.out) / f"{cfg.command}.{_EXT[cfg.format]}")
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except UninformativeGrid as exc:
        print(f"grid uninformative: {exc}", file=sys.stderr)
        return EXIT_GRID
    except InsufficientPaths as exc:
        print(f"insufficient paths: {exc}", file=sys.stderr)
        return EXIT_PATHS
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (QuadratureError, ValueError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"seed {cfg.seed}", file=stdout)
    if rep.rows:
        print(rep.to_table(), file=stdout)
    print(rep.summary, file=stdout)
    print(f"wrote {path}", file=stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stablecone",
        description="Killed stable-process experiments on cones and C^{1,1} domains.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "exit status: 0 ok, 1 unexpected error, 2 configuration error, 3 numerical failure,\n"
            "             4 uninformative grid, 5 insufficient paths, 6 I/O error"
        ),
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="overrides 'command' in the config")
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="extra assignment (repeatable)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--format", choices=FORMATS)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            print(f"i/o error: cannot read config {args.config}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_IO
    text += "\n" + "\n".join(args.set)
    overrides = {"command": args.command, "seed": args.seed, "workers": args.workers, "out": args.out, "format": args.format}
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
