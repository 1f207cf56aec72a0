"""Grid certification that the implicit scheme keeps positive states positive.

For x > 0 the scheme is certified when

    x - g^2/(2 L1g) + (1-theta) f dt - (1-sigma)/2 L1g dt + theta f(0) dt

is > 0 (positive) or >= 0 (non-negative) at every probe point.  The margin is
affine in dt, which makes the largest admissible step a closed-form minimum
over the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .implicit import SchemeParams
from .models import SdeModel, default_grid

POSITIVE = "positive"
NON_NEGATIVE = "non-negative"
NONE = "none"


class HypothesisError(ValueError):
    """A structural hypothesis of the certificate fails (named in the message)."""


def default_probe_grid(model: SdeModel) -> np.ndarray:
    """Positive part of the model grid, 64 points in [1e-8, 1e-1] and a far tail up to 1e12."""
    base = default_grid(model)
    near = np.logspace(-8, -1, 64)
    tail = 10.0 ** np.arange(1.25, 12.0 + 1e-9, 0.25)
    g = np.concatenate((base[base > 0], near, tail))
    return np.unique(g)


def _parts(model: SdeModel, theta: float, sigma: float, x):
    """Split the margin into m0(x) + dt * m1(x)."""
    x = np.asarray(x, dtype=float)
    g = model.diffusion(x)
    l = model.l1g(x)
    if np.any(l <= 0):
        bad = x[np.atleast_1d(l <= 0)] if x.ndim else x
        raise HypothesisError(f"L1g(x) > 0 fails at x = {np.atleast_1d(bad)[:5]}")
    f = model.drift(x)
    m0 = x - g * g / (2.0 * l)
    # x - x style cancellations (p = 1/2) must not read as a violation
    m0 = np.where(np.abs(m0) <= 1e-12 * x, 0.0, m0)
    m1 = (1 - theta) * f - 0.5 * (1 - sigma) * l + theta * model.drift_at_zero
    return m0, m1


def margin(model: SdeModel, params: SchemeParams, x):
    if np.any(np.asarray(x) <= 0):
        raise ValueError("margin is defined for x > 0 only")
    m0, m1 = _parts(model, params.theta, params.sigma, x)
    return m0 + params.dt * m1


def _check_boundary(model: SdeModel, grid):
    if model.drift_at_zero < 0:
        raise HypothesisError(f"f(0) >= 0 fails: f(0) = {model.drift_at_zero}")
    if model.diffusion_at_zero != 0:
        raise HypothesisError(f"g(0) = 0 fails: g(0) = {model.diffusion_at_zero}")
    g = model.diffusion(grid)
    if np.any(g * g <= 0):
        raise HypothesisError("g(x)^2 > 0 fails on the probe grid")


@dataclass
class PositivityCertificate:
    model: SdeModel = field(repr=False)
    params: SchemeParams
    kind: str
    margin_min: float
    argmin: float
    dt_bound: float
    probe_grid: np.ndarray = field(repr=False)
    violations: np.ndarray = field(repr=False)  # probe points where the margin is negative

    @property
    def holds(self) -> bool:
        return self.kind != NONE

    @property
    def nonnegative(self) -> bool:
        """Positive certificates imply non-negativity as well."""
        return self.kind in (POSITIVE, NON_NEGATIVE)

    def as_lines(self):
        grid = self.probe_grid
        return [
            f"model={self.model.name}",
            f"params={','.join(repr(p) for p in self.model.params)}",
            f"theta={self.params.theta!r}",
            f"sigma={self.params.sigma!r}",
            f"dt={self.params.dt!r}",
            f"kind={self.kind}",
            f"margin_min={self.margin_min!r}",
            f"argmin={self.argmin!r}",
            f"dt_bound={_fmt(self.dt_bound)}",
            f"grid_min={grid.min()!r}",
            f"grid_max={grid.max()!r}",
            f"grid_points={grid.size}",
            f"violations={self.violations.size}",
        ]


def _fmt(v):
    return "inf" if math.isinf(v) else repr(v)


def certify(model: SdeModel, params: SchemeParams, probe_grid=None) -> PositivityCertificate:
    """Classify (model, params) as positive / non-negative / none on the probe grid.

    The certificate only speaks about probe points; it cannot see what happens
    below ``probe_grid.min()`` or above ``probe_grid.max()``.
    """
    grid = np.asarray(default_probe_grid(model) if probe_grid is None else probe_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("probe grid must be a non-empty subset of (0, inf)")
    _check_boundary(model, grid)
    m = margin(model, params, grid)
    i = int(np.argmin(m))
    mmin = float(m[i])
    kind = POSITIVE if mmin > 0 else NON_NEGATIVE if mmin >= 0 else NONE
    bound = max_dt_for_positivity(model, params.theta, params.sigma, grid)
    return PositivityCertificate(model, params, kind, mmin, float(grid[i]), bound, grid, grid[m < 0])


def max_dt_for_positivity(model: SdeModel, theta: float, sigma: float, probe_grid=None) -> float:
    """Largest dt with margin >= 0 on every probe point; inf if unrestricted, 0 if none works."""
    grid = np.asarray(default_probe_grid(model) if probe_grid is None else probe_grid, dtype=float)
    _check_boundary(model, grid)
    m0, m1 = _parts(model, theta, sigma, grid)
    if np.any(m0 < 0):
        return 0.0
    neg = m1 < 0
    if not neg.any():
        return math.inf
    return float(np.min(m0[neg] / -m1[neg]))


def margin_curve_rows(cert: PositivityCertificate):
    m = margin(cert.model, cert.params, cert.probe_grid)
    return [("x", "margin")] + [(repr(float(x)), repr(float(v))) for x, v in zip(cert.probe_grid, m)]
