"""Strong endpoint error against a fine-step reference on shared Brownian paths,
log-log rate fitting and second-moment bound checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .implicit import DEFAULT_MAXIT, DEFAULT_TOL, SchemeParams, eval_F
from .models import SdeModel, estimate_growth_constants
from .rng import block_increments, coarsen
from .stepper import _map, n_steps, simulate_batch, simulate_paths

Z95 = 1.959963984540054


class ConvergenceAborted(RuntimeError):
    pass


def fit_rate(dts, errors):
    """Least-squares slope of log(error) against log(dt).

    Returns ``(rate, residual)`` with residual the root mean square deviation
    of the log errors from the fitted line.
    """
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if dts.size < 2 or dts.size != errors.size:
        raise ValueError("need at least two (dt, error) pairs")
    if np.any(errors <= 0) or np.any(dts <= 0):
        raise ValueError("errors and dts must be positive")
    lx, ly = np.log(dts), np.log(errors)
    A = np.column_stack((lx, np.ones_like(lx)))
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + icpt)) ** 2)))
    return float(slope), resid


@dataclass
class ConvergenceReport:
    dts: list
    mean_abs_errors: list
    ci_halfwidths: list
    fitted_rate: float
    fit_residual: float
    paths: int
    reference_dt: float
    n_failed: int = 0
    degenerate: bool = False
    metric: str = "mean-abs"
    extras: dict = field(default_factory=dict)

    def csv_rows(self):
        rows = [("dt", "mean_err", "ci95", "n_failed")]
        for d, e, c in zip(self.dts, self.mean_abs_errors, self.ci_halfwidths):
            rows.append((repr(d), repr(e), repr(c), self.n_failed))
        rows.append(("rate", repr(self.fitted_rate), "", ""))
        rows.append(("residual", repr(self.fit_residual), "", ""))
        return rows


def strong_error(model: SdeModel, scheme: str, theta: float, sigma: float, reference_dt: float,
                 test_dts, x0: float, t_end: float, paths: int, seed: int, workers: int = 1,
                 chunk: int = 1024, metric: str = "mean-abs", reference_scheme: str = "theta_sigma",
                 tol: float = DEFAULT_TOL, maxit: int = DEFAULT_MAXIT,
                 max_failure_fraction: float = 0.01) -> ConvergenceReport:
    """Mean endpoint error of ``scheme`` at each test step against the
    ``reference_scheme`` at ``reference_dt``, every level driven by the same
    Brownian path (coarse increments are sums of reference increments).

    ``metric="rms"`` reports the L2 endpoint error instead.  Paths failing at
    any level are excluded and counted; more than ``max_failure_fraction``
    failures aborts.
    """
    test_dts = sorted((float(d) for d in test_dts), reverse=True)
    factors = []
    for d in test_dts:
        m = d / reference_dt
        mi = int(round(m))
        if mi < 2 or abs(m - mi) > 1e-9 * m or mi & (mi - 1):
            raise ValueError(f"test dt {d} is not a power-of-two multiple (>= 2) of {reference_dt}")
        factors.append(mi)
    if metric not in ("mean-abs", "rms"):
        raise ValueError("metric must be 'mean-abs' or 'rms'")
    nref = n_steps(t_end, reference_dt)
    for m in factors:
        if nref % m:
            raise ValueError("t_end must be a multiple of every test dt")
    ref_params = SchemeParams(theta, sigma, reference_dt)

    def run(lohi):
        lo, hi = lohi
        dw = block_increments(seed, np.arange(lo, hi), reference_dt, 0, nref)
        ref = simulate_batch(model, ref_params, reference_scheme, x0, dw, tol=tol, maxit=maxit)
        failed = ref.failed.copy()
        terms = []
        for d, m in zip(test_dts, factors):
            r = simulate_batch(model, SchemeParams(theta, sigma, d), scheme, x0, coarsen(dw, m),
                               tol=tol, maxit=maxit)
            failed |= r.failed
            terms.append(r.terminal)
        return ref.terminal, np.array(terms), failed

    bounds = [(s, min(s + chunk, paths)) for s in range(0, paths, chunk)]
    parts = _map(run, bounds, workers)
    ref_T = np.concatenate([p[0] for p in parts])
    coarse_T = np.concatenate([p[1] for p in parts], axis=1)
    failed = np.concatenate([p[2] for p in parts])
    nfail = int(failed.sum())
    if nfail > max_failure_fraction * paths:
        raise ConvergenceAborted(f"{nfail} of {paths} paths failed")
    keep = ~failed
    err = np.abs(coarse_T[:, keep] - ref_T[keep])
    n = int(keep.sum())
    if metric == "mean-abs":
        means = err.mean(axis=1)
        ci = Z95 * err.std(axis=1, ddof=1) / math.sqrt(n)
    else:
        sq = err * err
        ms = sq.mean(axis=1)
        means = np.sqrt(ms)
        # delta method for the square root of a mean
        with np.errstate(divide="ignore", invalid="ignore"):
            ci = np.where(means > 0, Z95 * sq.std(axis=1, ddof=1) / math.sqrt(n) / (2 * means), 0.0)
    degenerate = bool(np.any(means <= 0))
    if degenerate:
        rate, resid = math.nan, math.nan
    else:
        rate, resid = fit_rate(test_dts, means)
    return ConvergenceReport(test_dts, [float(v) for v in means], [float(v) for v in ci],
                             rate, resid, paths, reference_dt, nfail, degenerate, metric)


# ---------------------------------------------------------------------------
# second moments


@dataclass
class MomentReport:
    sup_second_moment: float
    bound: float
    flagged: bool
    second_moments: np.ndarray  # sample E|X_k|^2 for k = 0..N
    growth_constants: tuple  # (a, b)
    c1: float
    c2: float


def f_lower_bound_constants(model: SdeModel, params: SchemeParams, a: float, b: float):
    """(c1, c2) with F(x)^2 >= c1 x^2 - c2 dt.

    Uses Young's inequality with weight theta (or 1 for theta = 0) on the
    sigma x L1g(0) cross term.
    """
    th, sg, dt = params.theta, params.sigma, params.dt
    eps = th if th > 0 else 1.0
    l0 = float(model.l1g(0.0))
    c1 = 1.0 - (th * b + eps / 2) * dt
    c2 = th * a + sg * sg * l0 * l0 / (2 * eps)
    return c1, c2


def gronwall_bound(model: SdeModel, params: SchemeParams, x0: float, t_end: float, a: float, b: float):
    """Upper bound on E|X_k|^2 for k dt <= t_end.

    From E|F_{k+1}|^2 <= E|F_k|^2 + a dt + b E|X_k|^2 dt and the lower bound
    on F^2: E|F_N|^2 <= [F(x0)^2 + (a + b c2 dt / c1) T] exp(b T / c1), and
    E|X_N|^2 <= (E|F_N|^2 + c2 dt) / c1.
    """
    c1, c2 = f_lower_bound_constants(model, params, a, b)
    if c1 <= 0:
        raise ValueError("dt too large for the F lower bound (c1 <= 0)")
    dt = params.dt
    F0 = float(eval_F(model, params, x0))
    EF = (F0 * F0 + (a + b * c2 * dt / c1) * t_end) * math.exp(b * t_end / c1)
    return (EF + c2 * dt) / c1, c1, c2


def moment_bound_check(model: SdeModel, params: SchemeParams, x0: float, t_end: float,
                       paths: int, seed: int, growth=None, grid=None, workers: int = 1):
    """Running supremum of the sample second moment against the Gronwall bound.

    ``growth=(a, b)`` defaults to a grid estimate of the monotone-type
    constants for these scheme parameters.
    """
    if growth is None:
        growth = estimate_growth_constants(model, params.theta, params.sigma, params.dt, grid)
    a, b = growth
    bound, c1, c2 = gronwall_bound(model, params, x0, t_end, a, b)
    res = simulate_paths(model, params, "theta_sigma", x0, t_end, paths, seed, record=True,
                         workers=workers)
    m2 = np.mean(res.states ** 2, axis=0)
    sup = float(np.max(m2))
    return MomentReport(sup, bound, bool(sup > bound or not np.isfinite(sup)), m2, (a, b), c1, c2)
