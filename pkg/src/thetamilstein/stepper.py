"""One-step maps and path simulation for the (theta, sigma)-Milstein family,
with Euler-Maruyama and classical Milstein baselines.

All path routines are vectorised over paths: a batch of ``n`` paths is an
``(n, steps)`` block of Brownian increments.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .implicit import (DEFAULT_MAXIT, DEFAULT_TOL, SchemeParams, _solve_array,
                       check_step_restriction, solve_F)
from .models import SdeModel
from .rng import IncrementStream, block_increments

SCHEMES = ("em", "milstein", "theta_sigma")


def b_rhs(model: SdeModel, params: SchemeParams, x, dw):
    """Explicit part of one step: F(X_{k+1}) = b_rhs(X_k, dw)."""
    dt = params.dt
    f = model.drift(x)
    g = model.diffusion(x)
    l = model.l1g(x)
    return (x + (1 - params.theta) * f * dt + g * dw + 0.5 * l * dw * dw
            - 0.5 * (1 - params.sigma) * l * dt)


def step(model: SdeModel, params: SchemeParams, x, dw, tol: float = DEFAULT_TOL,
         maxit: int = DEFAULT_MAXIT):
    """One (theta, sigma)-Milstein step; raises DomainError/SolverError on failure."""
    return solve_F(model, params, b_rhs(model, params, x, dw), tol, maxit).root


def n_steps(t_end: float, dt: float) -> int:
    n = round(t_end / dt)
    if n < 1 or abs(n * dt - t_end) > 4 * math.ulp(t_end) + 1e-12 * t_end:
        raise ValueError(f"t_end={t_end} is not an integer multiple of dt={dt}")
    return int(n)


@dataclass
class PathResult:
    terminal_state: float
    states: Optional[np.ndarray]
    negative_excursions: int
    failed: bool
    failure_step: Optional[int] = None


@dataclass
class BatchResult:
    """Per-path outcome of a vectorised simulation."""

    terminal: np.ndarray
    states: Optional[np.ndarray]  # (paths, steps + 1) when recorded
    negative_excursions: np.ndarray
    failed: np.ndarray
    failure_step: np.ndarray  # -1 where the path did not fail

    def path(self, i: int) -> PathResult:
        fs = int(self.failure_step[i])
        return PathResult(float(self.terminal[i]),
                          None if self.states is None else self.states[i].copy(),
                          int(self.negative_excursions[i]), bool(self.failed[i]),
                          fs if fs >= 0 else None)


def simulate_batch(model: SdeModel, params: SchemeParams, scheme: str, x0, dw: np.ndarray,
                   record: bool = False, tol: float = DEFAULT_TOL,
                   maxit: int = DEFAULT_MAXIT, sup_square: bool = False):
    """Advance ``dw.shape[0]`` paths through ``dw.shape[1]`` steps of size ``params.dt``.

    Baseline schemes on half-line models evaluate the coefficients at
    max(x, 0) and count each step ending below zero as a negative excursion.
    The implicit scheme confines its root search to [0, inf); a step with no
    admissible root fails the path, which keeps its last valid state.
    With ``sup_square`` the running maximum of x^2 per path is also returned.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    dw = np.atleast_2d(np.asarray(dw, dtype=float))
    npaths, nsteps = dw.shape
    x = np.broadcast_to(np.asarray(x0, dtype=float), (npaths,)).copy()
    if model.half_line and np.any(x < 0):
        raise ValueError("initial state outside the non-negative half-line")
    if scheme == "theta_sigma":
        check_step_restriction(model, params)
    dt = params.dt
    states = np.empty((npaths, nsteps + 1)) if record else None
    if record:
        states[:, 0] = x
    neg = np.zeros(npaths, dtype=np.int64)
    failed = np.zeros(npaths, dtype=bool)
    fstep = np.full(npaths, -1, dtype=np.int64)
    sup2 = x * x if sup_square else None
    truncate = model.half_line and scheme != "theta_sigma"

    for k in range(nsteps):
        act = ~failed
        xa = x[act]
        d = dw[act, k]
        if scheme == "theta_sigma":
            b = b_rhs(model, params, xa, d)
            new, ok, _, _ = _solve_array(model, params, b, tol, maxit)
            bad = ~ok
            if bad.any():
                idx = np.nonzero(act)[0][bad]
                failed[idx] = True
                fstep[idx] = k
                new = np.where(ok, new, xa)
        else:
            xe = np.maximum(xa, 0.0) if truncate else xa
            f = model.drift(xe)
            g = model.diffusion(xe)
            new = xa + f * dt + g * d
            if scheme == "milstein":
                new = new + 0.5 * model.l1g(xe) * (d * d - dt)
            if truncate:
                neg[act] += new < 0
        x[act] = new
        if record:
            states[:, k + 1] = x
        if sup_square:
            np.maximum(sup2, x * x, out=sup2)

    out = BatchResult(x, states, neg, failed, fstep)
    return (out, sup2) if sup_square else out


def simulate_path(model: SdeModel, params: SchemeParams, scheme: str, x0: float, t_end: float,
                  stream: IncrementStream, record: bool = False) -> PathResult:
    """Simulate a single path driven by ``stream`` (whose level_dt must equal params.dt)."""
    if not math.isclose(stream.level_dt, params.dt, rel_tol=1e-12):
        raise ValueError("stream level dt does not match the scheme step")
    n = n_steps(t_end, params.dt)
    dw = stream.increments(0, n)[None, :]
    return simulate_batch(model, params, scheme, x0, dw, record).path(0)


def simulate_paths(model: SdeModel, params: SchemeParams, scheme: str, x0: float, t_end: float,
                   paths: int, seed: int, record: bool = False, workers: int = 1,
                   chunk: int = 4096, tol: float = DEFAULT_TOL, maxit: int = DEFAULT_MAXIT):
    """Simulate paths 0..paths-1 with increments keyed on (seed, path, step).

    Chunks are reassembled in path order, so the result does not depend on
    ``workers`` or ``chunk``.
    """
    n = n_steps(t_end, params.dt)
    bounds = [(s, min(s + chunk, paths)) for s in range(0, paths, chunk)]

    def run(lohi):
        lo, hi = lohi
        dw = block_increments(seed, np.arange(lo, hi), params.dt, 0, n)
        return simulate_batch(model, params, scheme, x0, dw, record, tol, maxit)

    parts = _map(run, bounds, workers)
    return BatchResult(
        np.concatenate([p.terminal for p in parts]),
        np.concatenate([p.states for p in parts]) if record else None,
        np.concatenate([p.negative_excursions for p in parts]),
        np.concatenate([p.failed for p in parts]),
        np.concatenate([p.failure_step for p in parts]),
    )


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
