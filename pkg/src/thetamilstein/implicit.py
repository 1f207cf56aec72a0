"""The monotone map F(x) = x - theta f(x) dt + (sigma/2) L1g(x) dt and the
per-step implicit solve F(x) = b."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import DomainError, SdeModel

DEFAULT_TOL = 1e-12
DEFAULT_MAXIT = 100
BRACKET_DOUBLINGS = 60
POLISH_STEPS = 3


class SolverError(RuntimeError):
    """Bracket expansion or iteration failed; signals a broken assumption."""


@dataclass(frozen=True)
class SchemeParams:
    theta: float
    sigma: float
    dt: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def explicit(self) -> bool:
        return self.theta == 0.0 and self.sigma == 0.0


@dataclass
class SolveOutcome:
    root: float | np.ndarray
    residual: float
    iterations: int
    method: str  # "closed-form" | "newton-bisection" | "explicit"


def max_stable_dt(model: SdeModel, theta: float) -> float:
    """Largest admissible step (exclusive) for the implicit map to be a bijection."""
    K = model.constants.one_sided_lipschitz_K
    if theta == 0.0 or K <= -1.0:
        return math.inf
    return 1.0 / (theta * (K + 1.0))


def check_step_restriction(model: SdeModel, params: SchemeParams) -> None:
    bound = max_stable_dt(model, params.theta)
    if not params.dt < bound:
        raise ValueError(
            f"dt={params.dt} violates dt < 1/(theta (K+1)) = {bound} for model {model.name}")


def eval_F(model: SdeModel, params: SchemeParams, x):
    dt = params.dt
    return x - params.theta * model.drift(x) * dt + 0.5 * params.sigma * model.l1g(x) * dt


def _eval_dF(model, params, x):
    dt = params.dt
    th, sg = params.theta, params.sigma
    if model.drift_derivative is not None and model.l1g_derivative is not None:
        return 1.0 - th * model.drift_derivative(x) * dt + 0.5 * sg * model.l1g_derivative(x) * dt
    h = 1e-6 * np.maximum(1.0, np.abs(x))
    lo = x - h
    if model.half_line:
        lo = np.maximum(lo, 0.0)
    return (eval_F(model, params, x + h) - eval_F(model, params, lo)) / (x + h - lo)


def _quadratic_roots(a2, a1, a0, b):
    """Root of a2 x^2 + a1 x + a0 = b on the increasing branch of F."""
    c = a0 - b
    if a2 == 0.0:
        return -c / a1
    disc = a1 * a1 - 4.0 * a2 * c
    if np.any(disc < 0):
        raise SolverError("negative discriminant in closed-form step")
    sq = np.sqrt(disc)
    # larger root, written without cancellation
    with np.errstate(divide="ignore", invalid="ignore"):
        if a1 >= 0:
            root = np.where(sq + a1 == 0, 0.0, -2.0 * c / (a1 + sq))
        else:
            root = (sq - a1) / (2.0 * a2)
    return root


def _solve_array(model, params, b, tol, maxit):
    """Vectorised solve. Returns (roots, ok, iterations, method); never raises on
    per-element failure, marking ``ok`` False instead."""
    b = np.asarray(b, dtype=float)
    if params.explicit:
        ok = b >= 0 if model.half_line else np.ones(b.shape, bool)
        return b.copy(), ok, 0, "explicit"
    if model.quadratic_F is not None:
        a2, a1, a0 = model.quadratic_F(params.theta, params.sigma, params.dt)
        root = np.asarray(_quadratic_roots(a2, a1, a0, b), dtype=float)
        ok = np.isfinite(root)
        if model.half_line:
            ok &= root >= 0.0
        return root, ok, 0, "closed-form"
    return _newton_bisection(model, params, b, tol, maxit)


def _newton_bisection(model, params, b, tol, maxit):
    G = lambda x, bb: eval_F(model, params, x) - bb
    scale = np.maximum(1.0, np.abs(b))
    ok = np.ones(b.shape, bool)

    with np.errstate(all="ignore"):
        if model.half_line:
            lo = np.zeros_like(b)
            g0 = G(lo, b)
            # F(0) > b means no non-negative root
            ok &= g0 <= tol * scale
            width = np.maximum(1.0, np.abs(b))
            hi = lo + width
        else:
            width = np.maximum(1.0, np.abs(b))
            lo = b - width
            hi = b + width
            for _ in range(BRACKET_DOUBLINGS):
                bad = ok & (G(lo, b) > 0)
                if not bad.any():
                    break
                lo = np.where(bad, lo - (hi - lo), lo)
            else:
                ok &= G(lo, b) <= 0
        for _ in range(BRACKET_DOUBLINGS):
            bad = ok & (G(hi, b) < 0)
            if not bad.any():
                break
            hi = np.where(bad, hi + (hi - lo), hi)
        else:
            ok &= G(hi, b) >= 0

        x = np.clip(b, lo, hi)
        gx = G(x, b)
        done = ~ok | (np.abs(gx) <= tol * scale)
        it = 0
        while not done.all() and it < maxit:
            it += 1
            act = ~done
            xa, ga, la, ha, ba = x[act], gx[act], lo[act], hi[act], b[act]
            la = np.where(ga < 0, xa, la)
            ha = np.where(ga > 0, xa, ha)
            d = _eval_dF(model, params, xa)
            xn = xa - ga / d
            use_bis = ~np.isfinite(xn) | (xn <= la) | (xn >= ha) | ~(d > 0)
            xn = np.where(use_bis, 0.5 * (la + ha), xn)
            gn = G(xn, ba)
            x[act], gx[act], lo[act], hi[act] = xn, gn, la, ha
            stalled = (ha - la) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(xn))
            done[act] = (np.abs(gn) <= tol * scale[act]) | stalled
        # polish: the absolute residual test leaves small roots with few correct digits
        for _ in range(POLISH_STEPS):
            d = _eval_dF(model, params, x)
            xn = x - gx / d
            cand = ok & np.isfinite(xn) & (d > 0) & (xn >= lo) & (xn <= hi) & (gx != 0)
            if not cand.any():
                break
            gn = G(np.where(cand, xn, x), b)
            take = cand & (np.abs(gn) <= np.abs(gx))
            x = np.where(take, xn, x)
            gx = np.where(take, gn, gx)
    ok &= np.abs(gx) <= tol * scale
    if model.half_line:
        x = np.maximum(x, 0.0)
    return x, ok, it, "newton-bisection"


def solve_F(model: SdeModel, params: SchemeParams, b, tol: float = DEFAULT_TOL,
            maxit: int = DEFAULT_MAXIT, method: str = "auto") -> SolveOutcome:
    """Solve F(x) = b for the unique root (non-negative root on half-line models).

    ``method="iterative"`` bypasses any closed form.  ``b`` may be an array,
    in which case ``root`` is an array and ``residual`` the worst residual.
    """
    check_step_restriction(model, params)
    b_arr = np.asarray(b, dtype=float)
    b1 = np.atleast_1d(b_arr).copy()
    if method == "iterative" and not params.explicit:
        root, ok, it, how = _newton_bisection(model, params, b1, tol, maxit)
    elif method in ("auto", "iterative"):
        root, ok, it, how = _solve_array(model, params, b1, tol, maxit)
    else:
        raise ValueError(f"unknown method {method!r}")
    root = root.reshape(b_arr.shape)
    if not np.all(ok):
        if model.half_line:
            f0 = eval_F(model, params, 0.0)
            if np.any(f0 > b_arr + tol * np.maximum(1.0, np.abs(b_arr))):
                raise DomainError("implicit step has no non-negative root "
                                  "(positivity hypotheses fail for this state)")
        raise SolverError(f"implicit solve did not converge within {maxit} iterations")
    resid = float(np.max(np.abs(eval_F(model, params, root) - b_arr))) if root.size else 0.0
    if root.ndim == 0:
        root = float(root)
    return SolveOutcome(root, resid, it, how)


def closed_form_heston_step(mu: float, alpha: float, beta: float, dt: float, b):
    """Non-negative root of F(x) = b for the 3/2 model under the (1, 1) scheme.

    F(x) = (alpha + 3/4 beta^2) dt x^2 + (1 - mu dt) x, so the root is
    [-(1 - mu dt) + sqrt((1 - mu dt)^2 + 4 (alpha + 3/4 beta^2) dt b)] / (2 (alpha + 3/4 beta^2) dt).
    """
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("closed-form Heston step needs b >= 0")
    A = (alpha + 0.75 * beta * beta) * dt
    B = 1.0 - mu * dt
    disc = B * B + 4.0 * A * b
    if np.any(disc < 0):
        raise SolverError("negative discriminant in closed-form Heston step")
    sq = np.sqrt(disc)
    if B > 0:
        out = 2.0 * b / (B + sq)
    else:
        out = (sq - B) / (2.0 * A)
    return float(out) if out.ndim == 0 else out
