"""Command-line entry point.

Subcommands: simulate, positivity, stability-region, decay, converge, audit.
Exit codes: 0 success, 2 configuration error, 1 runtime failure.  Data goes to
files (CSV with ``#`` metadata lines), diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .convergence import ConvergenceAborted, strong_error
from .implicit import DEFAULT_MAXIT, DEFAULT_TOL, SchemeParams, SolverError, check_step_restriction
from .models import DomainError, UnknownModelError, audit_assumptions, builtin_model
from .positivity import HypothesisError, certify, margin_curve_rows, max_dt_for_positivity
from .rng import ALGORITHM
from .stability import empirical_decay, raster_region
from .stepper import SCHEMES, n_steps, simulate_paths

SUBCOMMANDS = ("simulate", "positivity", "stability-region", "decay", "converge", "audit")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    model: Optional[str] = None
    params: tuple = ()
    scheme: str = "theta_sigma"
    theta: float = 1.0
    sigma: float = 1.0
    dt: Optional[float] = None
    t_end: float = 1.0
    x0: float = 1.0
    paths: int = 1000
    seed: int = 0
    workers: int = 1
    out: Optional[str] = None
    solve_tol: float = DEFAULT_TOL
    solve_maxit: int = DEFAULT_MAXIT
    options: dict = field(default_factory=dict)

    def header_lines(self):
        cfg = dataclasses.asdict(self)
        cfg["params"] = list(self.params)
        return [f"# thetamilstein {__version__}",
                f"# seed={self.seed}",
                f"# rng={ALGORITHM}",
                "# config=" + json.dumps(cfg, sort_keys=True)]

    @classmethod
    def from_header(cls, lines) -> "RunConfig":
        for line in lines:
            if line.startswith("# config="):
                cfg = json.loads(line[len("# config="):])
                cfg["params"] = tuple(cfg["params"])
                return cls(**cfg)
        raise ValueError("no config line in header")


# option name -> type; _USES picks which ones each subcommand accepts
_COMMON = {
    "model": str, "params": str, "scheme": str, "theta": float, "sigma": float, "dt": float,
    "t_end": float, "x0": float, "paths": int, "seed": int, "workers": int, "out": str,
    "solve_tol": float, "solve_maxit": int,
}
_EXTRA = {
    "simulate": {"record_trajectories": "flag"},
    "positivity": {"find_max_dt": "flag", "grid_file": str},
    "stability-region": {"xmin": float, "xmax": float, "ymin": float, "ymax": float, "res": int},
    "decay": {"z_probe_grid": str, "z_power": float, "z_scale": float},
    "converge": {"ref_dt": float, "dts": str, "metric": str, "full_scale": "flag"},
    "audit": {"grid_file": str, "pair_budget": int},
}
_USES = {
    "simulate": {"model", "params", "scheme", "theta", "sigma", "dt", "t_end", "x0", "paths",
                 "seed", "workers", "out", "solve_tol", "solve_maxit"},
    "positivity": {"model", "params", "theta", "sigma", "dt", "out"},
    "stability-region": {"theta", "sigma", "out"},
    "decay": {"model", "params", "theta", "sigma", "dt", "t_end", "x0", "paths", "seed",
              "workers", "out", "solve_tol", "solve_maxit"},
    "converge": {"model", "params", "scheme", "theta", "sigma", "t_end", "x0", "paths", "seed",
                 "workers", "out", "solve_tol", "solve_maxit"},
    "audit": {"model", "params", "theta", "sigma", "dt", "out"},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thetamilstein", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value file; flags take precedence")
        for opt in sorted(_USES[name]):
            sp.add_argument("--" + opt.replace("_", "-"), dest=opt, type=_COMMON[opt],
                            default=argparse.SUPPRESS)
        for opt, typ in _EXTRA[name].items():
            flag = "--" + opt.replace("_", "-")
            if typ == "flag":
                sp.add_argument(flag, dest=opt, action="store_true", default=argparse.SUPPRESS)
            else:
                sp.add_argument(flag, dest=opt, type=typ, default=argparse.SUPPRESS)
    return parser


def _read_config_file(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line without '=': {line!r}")
            k, v = line.split("=", 1)
            out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _coerce(sub, key, value):
    typ = _COMMON.get(key) or _EXTRA[sub].get(key)
    if typ is None:
        raise ConfigError(f"unknown config key {key!r} for {sub}")
    if typ == "flag":
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
    return typ(value)


def _parse_floats(text, flag):
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{flag} must be a comma-separated list of numbers") from None


def make_config(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    sub = args.subcommand
    merged = {}
    if getattr(args, "config", None):
        for k, v in _read_config_file(args.config).items():
            merged[k] = _coerce(sub, k, v)
    for k, v in vars(args).items():
        if k in ("subcommand", "config"):
            continue
        merged[k] = v
    if "seed" not in merged and "MILSTEIN_SEED" in environ:
        try:
            merged["seed"] = int(environ["MILSTEIN_SEED"])
        except ValueError:
            raise ConfigError("MILSTEIN_SEED must be an integer") from None
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    cfg = RunConfig(sub)
    options = {}
    for k, v in merged.items():
        if k == "params":
            cfg.params = _parse_floats(v, "--params") if isinstance(v, str) else tuple(v)
        elif k in fields:
            setattr(cfg, k, v)
        else:
            options[k] = v
    if "workers" not in merged:
        cfg.workers = os.cpu_count() or 1
    cfg.options = options
    validate(cfg)
    return cfg


def _need(cfg, name):
    if getattr(cfg, name) is None:
        raise ConfigError(f"--{name.replace('_', '-')} is required for {cfg.subcommand}")


def validate(cfg: RunConfig) -> None:
    """Check every numeric precondition before any compute starts."""
    sub = cfg.subcommand
    if cfg.workers < 1:
        raise ConfigError("--workers must be >= 1")
    if cfg.paths < 1:
        raise ConfigError("--paths must be >= 1")
    if not (0 <= cfg.theta <= 1 and 0 <= cfg.sigma <= 1):
        raise ConfigError("--theta and --sigma must lie in [0, 1]")
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"--scheme must be one of {SCHEMES}")
    if cfg.solve_tol <= 0 or cfg.solve_maxit < 1:
        raise ConfigError("--solve-tol must be > 0 and --solve-maxit >= 1")
    if sub != "stability-region":
        _need(cfg, "model")
        try:
            model = builtin_model(cfg.model, cfg.params)
        except UnknownModelError as e:
            raise ConfigError(f"--model: {e.args[0]}") from None
        except ValueError as e:
            raise ConfigError(f"--model/--params: {e}") from None
        if model.half_line and cfg.x0 < 0:
            raise ConfigError("--x0 must be non-negative for a half-line model")
    if sub in ("simulate", "decay"):
        _need(cfg, "dt")
        if cfg.dt <= 0:
            raise ConfigError("--dt must be positive")
        try:
            n_steps(cfg.t_end, cfg.dt)
            if sub == "decay" or cfg.scheme == "theta_sigma":
                check_step_restriction(model, SchemeParams(cfg.theta, cfg.sigma, cfg.dt))
        except ValueError as e:
            raise ConfigError(f"--dt: {e}") from None
    if sub == "positivity":
        if not cfg.options.get("find_max_dt"):
            _need(cfg, "dt")
    if sub == "audit" and cfg.dt is not None and cfg.dt <= 0:
        raise ConfigError("--dt must be positive")
    if sub == "stability-region":
        o = cfg.options
        if o.get("res", 400) < 2:
            raise ConfigError("--res must be >= 2")
        if o.get("ymin", 0.0) < 0:
            raise ConfigError("--ymin must be >= 0")
        if o.get("xmin", -4.0) >= o.get("xmax", 0.0) or o.get("ymin", 0.0) >= o.get("ymax", 4.0):
            raise ConfigError("empty plotting window")
    if sub == "converge":
        o = cfg.options
        if o.get("metric", "mean-abs") not in ("mean-abs", "rms"):
            raise ConfigError("--metric must be mean-abs or rms")
        if "dts" in o:
            o["dts"] = _parse_floats(o["dts"], "--dts") if isinstance(o["dts"], str) else o["dts"]


# ---------------------------------------------------------------------------
# runners


def _write_csv(path, cfg, rows, extra_meta=()):
    if path is None:
        raise ConfigError(f"--out is required for {cfg.subcommand}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in cfg.header_lines():
            fh.write(line + "\n")
        for line in extra_meta:
            fh.write(f"# {line}\n")
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _model(cfg):
    return builtin_model(cfg.model, cfg.params)


def run_simulate(cfg):
    model = _model(cfg)
    params = SchemeParams(cfg.theta, cfg.sigma, cfg.dt)
    record = bool(cfg.options.get("record_trajectories"))
    res = simulate_paths(model, params, cfg.scheme, cfg.x0, cfg.t_end, cfg.paths, cfg.seed,
                         record=record, workers=cfg.workers, tol=cfg.solve_tol, maxit=cfg.solve_maxit)
    nfail = int(res.failed.sum())
    if record:
        n = res.states.shape[1] - 1
        rows = [("path", "k", "t", "x")]
        for i in range(cfg.paths):
            for k in range(n + 1):
                rows.append((i, k, repr(k * cfg.dt), repr(float(res.states[i, k]))))
    else:
        rows = [("path", "terminal", "negative_excursions", "failed", "failure_step")]
        for i in range(cfg.paths):
            rows.append((i, repr(float(res.terminal[i])), int(res.negative_excursions[i]),
                         int(res.failed[i]), int(res.failure_step[i])))
    _write_csv(cfg.out, cfg, rows, [f"n_failed={nfail}"])
    if nfail > 0.01 * cfg.paths:
        print(f"error: {nfail} of {cfg.paths} paths failed", file=sys.stderr)
        return 1
    return 0


def run_positivity(cfg):
    model = _model(cfg)
    grid = None
    if cfg.options.get("grid_file"):
        grid = np.loadtxt(cfg.options["grid_file"], delimiter=",", comments="#", ndmin=1)
        grid = grid.ravel()
    if cfg.options.get("find_max_dt"):
        bound = max_dt_for_positivity(model, cfg.theta, cfg.sigma, grid)
        print(f"model={model.name}")
        print(f"theta={cfg.theta!r}")
        print(f"sigma={cfg.sigma!r}")
        print("dt_bound=" + ("inf" if math.isinf(bound) else repr(bound)))
        return 0
    cert = certify(model, SchemeParams(cfg.theta, cfg.sigma, cfg.dt), grid)
    for line in cert.as_lines():
        print(line)
    if cfg.out:
        _write_csv(cfg.out, cfg, margin_curve_rows(cert))
    return 0


def run_stability(cfg):
    o = cfg.options
    res = o.get("res", 400)
    grid = raster_region(cfg.theta, cfg.sigma, (o.get("xmin", -4.0), o.get("xmax", 0.0)),
                         (o.get("ymin", 0.0), o.get("ymax", 4.0)), (res, res))
    _write_csv(cfg.out, cfg, grid.csv_rows())
    return 0


def run_decay(cfg):
    model = _model(cfg)
    params = SchemeParams(cfg.theta, cfg.sigma, cfg.dt)
    z = None
    probe = None
    if "z_power" in cfg.options:
        pw, sc = cfg.options["z_power"], cfg.options.get("z_scale", 1.0)
        z = lambda x: sc * np.abs(x) ** pw
    if cfg.options.get("z_probe_grid"):
        probe = np.loadtxt(cfg.options["z_probe_grid"], delimiter=",", comments="#", ndmin=1).ravel()
    rep = empirical_decay(model, params, cfg.x0, cfg.t_end, cfg.paths, cfg.seed, z=z,
                          probe_grid=probe, workers=cfg.workers)
    rows = [("threshold", "fraction_below")] + [
        (repr(float(t)), repr(float(f))) for t, f in zip(rep.thresholds, rep.fraction_below)]
    _write_csv(cfg.out, cfg, rows, [f"sup_square={rep.sup_square!r}", f"n_failed={rep.n_failed}"])
    return 0 if rep.finite else 1


def run_converge(cfg):
    model = _model(cfg)
    o = cfg.options
    if o.get("full_scale"):
        ref = 2.0 ** -14
        dts = tuple(ref * 2 ** j for j in (1, 3, 5, 7))
        paths = 10_000
    else:
        ref = o.get("ref_dt", 2.0 ** -12)
        dts = o.get("dts", tuple(2.0 ** -k for k in range(5, 12)))
        paths = cfg.paths
    try:
        rep = strong_error(model, cfg.scheme, cfg.theta, cfg.sigma, ref, dts, cfg.x0, cfg.t_end,
                           paths, cfg.seed, workers=cfg.workers, metric=o.get("metric", "mean-abs"),
                           tol=cfg.solve_tol, maxit=cfg.solve_maxit)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    _write_csv(cfg.out, cfg, rep.csv_rows(),
               [f"excluded_paths={rep.n_failed} (domain or solver failures at any level)",
                f"metric={rep.metric}", f"reference_dt={rep.reference_dt!r}"])
    return 0


def run_audit(cfg):
    model = _model(cfg)
    grid = None
    if cfg.options.get("grid_file"):
        grid = np.loadtxt(cfg.options["grid_file"], delimiter=",", comments="#", ndmin=1).ravel()
    params = (cfg.theta, cfg.sigma, cfg.dt) if cfg.dt is not None else None
    rep = audit_assumptions(model, grid, cfg.options.get("pair_budget", 10**6), params=params)
    if cfg.out:
        _write_csv(cfg.out, cfg, rep.csv_rows())
    print(f"violations={len(rep.violations)}")
    print(f"pairs_checked={rep.pairs_checked}")
    return 0


_RUNNERS = {
    "simulate": run_simulate, "positivity": run_positivity, "stability-region": run_stability,
    "decay": run_decay, "converge": run_converge, "audit": run_audit,
}


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        cfg = make_config(args, environ)
        return _RUNNERS[cfg.subcommand](cfg)
    except (ConfigError, HypothesisError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (SolverError, ConvergenceAborted, DomainError, FloatingPointError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
