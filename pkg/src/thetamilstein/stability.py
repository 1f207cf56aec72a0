"""Mean-square stability of the (theta, sigma)-Milstein scheme on the linear
test equation dx = alpha x dt + mu x dw, and the nonlinear Lyapunov
condition with an empirical decay harness.

Scaled coordinates are used throughout: x = alpha dt, y = mu^2 dt.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .implicit import SchemeParams
from .models import SdeModel
from .stepper import simulate_paths


class SingularParameterization(ZeroDivisionError):
    pass


def pqr(theta, sigma, x, y):
    """Coefficients of X_{k+1} = X_k (p + q xi + r xi^2), xi ~ N(0, 1).

    q is returned non-negative (only q^2 enters the second moment).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    den = 1.0 - theta * x + 0.5 * sigma * y
    if np.any(den == 0):
        raise SingularParameterization("1 - theta x + sigma y / 2 vanishes")
    p = (1.0 + (1 - theta) * x - 0.5 * (1 - sigma) * y) / den
    q = np.sqrt(y) / den
    r = 0.5 * y / den
    return p, np.abs(q), r


def growth_factor(theta, sigma, x, y):
    """Exact per-step multiplier of E|X_k|^2: p^2 + q^2 + 3r^2 + 2pr."""
    p, q, r = pqr(theta, sigma, x, y)
    return (p + r) ** 2 + q * q + 2 * r * r


def scaled_lhs(theta, sigma, x, y):
    """dt times the stability polynomial; negative iff the scheme is MS-stable."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (2 * x + y) + x * x * (1 - 2 * theta) + 0.5 * y * (2 * sigma * x + y)


def stability_lhs(theta, sigma, alpha, mu2, dt):
    """(2a + m) + dt a^2 (1 - 2 theta) + (dt m / 2)(2 sigma a + m) with m = mu^2."""
    alpha = np.asarray(alpha, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    return (2 * alpha + mu2) + dt * alpha * alpha * (1 - 2 * theta) + 0.5 * dt * mu2 * (2 * sigma * alpha + mu2)


def scheme_ms_stable(theta, sigma, alpha, mu2, dt):
    if np.any(np.asarray(dt) <= 0) or np.any(np.asarray(mu2) < 0):
        raise ValueError("need dt > 0 and mu2 >= 0")
    out = stability_lhs(theta, sigma, alpha, mu2, dt) < 0
    return bool(out) if np.ndim(out) == 0 else out


def sde_ms_stable(alpha, mu2):
    out = 2 * np.asarray(alpha, dtype=float) + np.asarray(mu2, dtype=float) < 0
    return bool(out) if np.ndim(out) == 0 else out


@dataclass
class StabilityPoint:
    x_coord: float
    y_coord: float
    sde_stable: bool
    scheme_stable: bool
    growth_factor: float


@dataclass
class StabilityGrid:
    theta: float
    sigma: float
    x_range: tuple
    y_range: tuple
    resolution: tuple
    x: np.ndarray  # cell centres, shape (nx,)
    y: np.ndarray  # cell centres, shape (ny,)
    sde_stable: np.ndarray  # (ny, nx)
    scheme_stable: np.ndarray
    growth_factor: np.ndarray

    def point(self, i: int, j: int) -> StabilityPoint:
        """Cell in row i (y) and column j (x)."""
        return StabilityPoint(float(self.x[j]), float(self.y[i]), bool(self.sde_stable[i, j]),
                              bool(self.scheme_stable[i, j]), float(self.growth_factor[i, j]))

    def locate(self, x: float, y: float) -> StabilityPoint:
        return self.point(int(np.argmin(np.abs(self.y - y))), int(np.argmin(np.abs(self.x - x))))

    def csv_rows(self):
        X, Y = np.meshgrid(self.x, self.y)
        rows = [("x", "y", "sde_stable", "scheme_stable", "growth_factor")]
        for xv, yv, a, b, g in zip(X.ravel(), Y.ravel(), self.sde_stable.ravel(),
                                   self.scheme_stable.ravel(), self.growth_factor.ravel()):
            rows.append((repr(float(xv)), repr(float(yv)), int(a), int(b), repr(float(g))))
        return rows


def raster_region(theta, sigma, x_range=(-4.0, 0.0), y_range=(0.0, 4.0), resolution=(400, 400)):
    """Classify cell centres of the (alpha dt, mu^2 dt) plane; boundaries count as unstable."""
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    nx, ny = resolution
    if nx < 2 or ny < 2:
        raise ValueError("resolution must be >= 2 per axis")
    if y_range[0] < 0:
        raise ValueError("y = mu^2 dt cannot be negative")
    hx = (x_range[1] - x_range[0]) / nx
    hy = (y_range[1] - y_range[0]) / ny
    x = x_range[0] + hx * (np.arange(nx) + 0.5)
    y = y_range[0] + hy * (np.arange(ny) + 0.5)
    X, Y = np.meshgrid(x, y)
    sde = 2 * X + Y < 0
    scheme = scaled_lhs(theta, sigma, X, Y) < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        gf = growth_factor(theta, sigma, X, Y)
    return StabilityGrid(theta, sigma, tuple(x_range), tuple(y_range), (nx, ny), x, y, sde, scheme, gf)


# ---------------------------------------------------------------------------
# nonlinear


def lyapunov_lhs(model: SdeModel, theta, sigma, dt, x):
    """2xf + g^2 + (1 - 2 theta) f^2 dt + (dt/2) L1g (2 sigma f + L1g)."""
    f = model.drift(x)
    g = model.diffusion(x)
    l = model.l1g(x)
    return 2 * x * f + g * g + (1 - 2 * theta) * f * f * dt + 0.5 * dt * l * (2 * sigma * f + l)


def check_lyapunov(model: SdeModel, theta, sigma, dt, z, grid) -> np.ndarray:
    """Probe points where lyapunov_lhs(x) <= -z(x) fails (empty array = condition holds)."""
    grid = np.asarray(grid, dtype=float)
    lhs = lyapunov_lhs(model, theta, sigma, dt, grid)
    rhs = -np.asarray(z(grid), dtype=float)
    return grid[lhs > rhs + 1e-12 * (np.abs(lhs) + np.abs(rhs))]


@dataclass
class DecayReport:
    thresholds: np.ndarray
    fraction_below: np.ndarray  # fraction of terminal |X_N| below each threshold
    sup_square: float  # max over paths and steps of |X_k|^2
    finite: bool
    n_failed: int
    paths: int
    terminal: np.ndarray

    def fraction_under(self, tol: float) -> float:
        return float(np.mean(np.abs(self.terminal) < tol))


def empirical_decay(model: SdeModel, params: SchemeParams, x0, t_end, paths, seed,
                    thresholds=(1e-1, 1e-2, 1e-3, 1e-4), z=None, probe_grid=None,
                    workers: int = 1) -> DecayReport:
    """Simulate and summarise decay towards zero.

    When ``z`` is supplied the Lyapunov condition is verified on
    ``probe_grid`` first and a violation raises ValueError.  The reported
    supremum is evidence of boundedness, not a proof.
    """
    if z is not None:
        grid = np.linspace(-10, 10, 1001) if probe_grid is None else probe_grid
        if model.half_line:
            grid = np.asarray(grid)[np.asarray(grid) >= 0]
        bad = check_lyapunov(model, params.theta, params.sigma, params.dt, z, grid)
        if bad.size:
            raise ValueError(f"Lyapunov condition fails at {bad[:5]}")
    res = simulate_paths(model, params, "theta_sigma", x0, t_end, paths, seed,
                         record=True, workers=workers)
    st = res.states
    with np.errstate(over="ignore", invalid="ignore"):
        sup2 = float(np.max(st * st))
    term = res.terminal
    th = np.asarray(thresholds, dtype=float)
    frac = np.array([np.mean(np.abs(term) < t) for t in th])
    return DecayReport(th, frac, sup2, bool(np.isfinite(sup2)), int(res.failed.sum()), paths, term)
