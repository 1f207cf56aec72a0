"""Scalar SDE models dx = f(x) dt + g(x) dw and numerical audits of their
structural assumptions.

Every coefficient function accepts floats or numpy arrays.  Models living on
the non-negative half-line refuse to evaluate at negative arguments and raise
:class:`DomainError` instead of returning NaN.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

WHOLE_LINE = "whole-line"
HALF_LINE = "non-negative-half-line"

Coefficient = Callable[[np.ndarray], np.ndarray]


class DomainError(ValueError):
    """Raised when a coefficient is evaluated outside the model's domain."""


class UnknownModelError(KeyError):
    pass


@dataclass(frozen=True)
class AssumptionConstants:
    """Constants certifying the structural assumptions of a model.

    ``monotone_growth_a``/``monotone_growth_b`` bound ``2xf + g^2 <= a + b x^2``
    (the small-step limit of the monotone-type moment condition); bounds for a
    concrete scheme are obtained with :func:`estimate_growth_constants`.
    """

    one_sided_lipschitz_K: float
    monotone_growth_a: float
    monotone_growth_b: float
    poly_growth_h: float
    poly_growth_H: float
    constants_domain: str = WHOLE_LINE
    method: str = "analytic"

    def __post_init__(self):
        vals = (self.one_sided_lipschitz_K, self.monotone_growth_a, self.monotone_growth_b,
                self.poly_growth_h, self.poly_growth_H)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("assumption constants must be finite")
        if self.poly_growth_h < 1:
            raise ValueError("poly_growth_h must be >= 1")
        if self.poly_growth_H <= 0:
            raise ValueError("poly_growth_H must be > 0")


def _checked(fn: Coefficient, domain: str, label: str) -> Coefficient:
    if domain == WHOLE_LINE:
        return fn

    def wrapped(x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0):
            raise DomainError(f"{label} evaluated at negative argument on a half-line model")
        return fn(x)

    wrapped.__name__ = label
    return wrapped


@dataclass(frozen=True)
class SdeModel:
    """A scalar SDE with analytic ``L1g = g g'`` and certified constants.

    ``quadratic_F``, when present, maps ``(theta, sigma, dt)`` to the
    coefficients ``(a2, a1, a0)`` of the implicit map
    ``F(x) = a2 x^2 + a1 x + a0``; the implicit solver then uses the quadratic
    formula instead of iterating.
    """

    name: str
    drift: Coefficient
    diffusion: Coefficient
    diffusion_derivative: Coefficient
    l1g: Coefficient
    drift_at_zero: float
    diffusion_at_zero: float
    domain: str
    constants: AssumptionConstants
    params: tuple = ()
    drift_derivative: Optional[Coefficient] = None
    l1g_derivative: Optional[Coefficient] = None
    quadratic_F: Optional[Callable[[float, float, float], tuple]] = field(default=None, compare=False)

    @classmethod
    def build(cls, name, drift, diffusion, diffusion_derivative, l1g, domain, constants,
              params=(), drift_derivative=None, l1g_derivative=None, quadratic_F=None):
        """Wrap raw coefficient formulas with the domain contract."""
        chk = lambda fn, label: None if fn is None else _checked(fn, domain, label)
        return cls(
            name=name,
            drift=chk(drift, "drift"),
            diffusion=chk(diffusion, "diffusion"),
            diffusion_derivative=chk(diffusion_derivative, "diffusion_derivative"),
            l1g=chk(l1g, "l1g"),
            drift_at_zero=float(drift(np.float64(0.0))),
            diffusion_at_zero=float(diffusion(np.float64(0.0))),
            domain=domain,
            constants=constants,
            params=tuple(float(p) for p in params),
            drift_derivative=chk(drift_derivative, "drift_derivative"),
            l1g_derivative=chk(l1g_derivative, "l1g_derivative"),
            quadratic_F=quadratic_F,
        )

    @property
    def half_line(self) -> bool:
        return self.domain == HALF_LINE


# ---------------------------------------------------------------------------
# builtin models


def _require(cond, msg):
    if not cond:
        raise ValueError(msg)


def _heston32(mu, alpha, beta):
    _require(mu > 0 and alpha > 0 and beta > 0, "heston32 needs mu, alpha, beta > 0")
    b2 = beta * beta

    def quad(theta, sigma, dt):
        return ((theta * alpha + 0.75 * sigma * b2) * dt, 1.0 - theta * mu * dt, 0.0)

    # (x-y)(f(x)-f(y)) = (x-y)^2 (mu - alpha(x+y)) <= mu (x-y)^2 on x, y >= 0.
    # 2xf + g^2 = 2 mu x^2 + (b2 - 2 alpha) x^3 <= 2 mu x^2 when b2 <= 2 alpha.
    certified = b2 <= 2 * alpha
    consts = AssumptionConstants(
        one_sided_lipschitz_K=mu,
        monotone_growth_a=0.0,
        monotone_growth_b=2 * mu,
        poly_growth_h=2.0,
        poly_growth_H=max(mu, alpha, beta),
        constants_domain=HALF_LINE,
        method="analytic" if certified else "grid",
    )
    model = SdeModel.build(
        "heston32",
        drift=lambda x: mu * x - alpha * x * x,
        diffusion=lambda x: beta * np.power(x, 1.5),
        diffusion_derivative=lambda x: 1.5 * beta * np.sqrt(x),
        l1g=lambda x: 1.5 * b2 * x * x,
        domain=HALF_LINE,
        constants=consts,
        params=(mu, alpha, beta),
        drift_derivative=lambda x: mu - 2 * alpha * x,
        l1g_derivative=lambda x: 3.0 * b2 * x,
        quadratic_F=quad,
    )
    return model if certified else _with_grid_growth(model)


def _linear(alpha, mu):
    def quad(theta, sigma, dt):
        return (0.0, 1.0 - theta * alpha * dt + 0.5 * sigma * mu * mu * dt, 0.0)

    consts = AssumptionConstants(
        one_sided_lipschitz_K=max(alpha, 0.0),
        monotone_growth_a=0.0,
        monotone_growth_b=max(2 * alpha + mu * mu, 0.0),
        poly_growth_h=1.0,
        poly_growth_H=max(abs(alpha), abs(mu), 1e-12),
    )
    zero = lambda x: 0.0 * np.asarray(x, dtype=float)
    return SdeModel.build(
        "linear",
        drift=lambda x: alpha * x,
        diffusion=lambda x: mu * x,
        diffusion_derivative=lambda x: mu + zero(x),
        l1g=lambda x: mu * mu * x,
        domain=WHOLE_LINE,
        constants=consts,
        params=(alpha, mu),
        drift_derivative=lambda x: alpha + zero(x),
        l1g_derivative=lambda x: mu * mu + zero(x),
        quadratic_F=quad,
    )


def _cubic():
    consts = AssumptionConstants(
        one_sided_lipschitz_K=0.0,
        monotone_growth_a=0.0,
        monotone_growth_b=0.0,
        poly_growth_h=3.0,
        poly_growth_H=1.0,
    )
    return SdeModel.build(
        "cubic",
        drift=lambda x: -x ** 3,
        diffusion=lambda x: x * x,
        diffusion_derivative=lambda x: 2 * x,
        l1g=lambda x: 2 * x ** 3,
        domain=WHOLE_LINE,
        constants=consts,
        drift_derivative=lambda x: -3 * x * x,
        l1g_derivative=lambda x: 6 * x * x,
    )


def _meanrev_power(alpha, mu, beta, p):
    _require(alpha > 0 and mu > 0 and beta > 0, "meanrev_power needs alpha, mu, beta > 0")
    _require(0.5 <= p <= 1.0, "meanrev_power needs p in [0.5, 1]")
    b2 = beta * beta
    quad = None
    if p == 1.0:
        quad = lambda th, sg, dt: (0.0, 1.0 + th * alpha * dt + 0.5 * sg * b2 * dt, -th * alpha * mu * dt)
    elif p == 0.5:
        quad = lambda th, sg, dt: (0.0, 1.0 + th * alpha * dt, -th * alpha * mu * dt + 0.25 * sg * b2 * dt)

    # x^(2p) <= 1 + x^2 and 2 alpha mu x <= alpha mu (1 + x^2)
    consts = AssumptionConstants(
        one_sided_lipschitz_K=0.0,
        monotone_growth_a=alpha * mu + b2,
        monotone_growth_b=max(alpha * mu + b2 - 2 * alpha, 0.0),
        poly_growth_h=1.0,
        poly_growth_H=max(alpha * mu, alpha, beta),
        constants_domain=HALF_LINE,
    )
    return SdeModel.build(
        "meanrev_power",
        drift=lambda x: alpha * (mu - x),
        diffusion=lambda x: beta * np.power(x, p),
        diffusion_derivative=lambda x: p * beta * np.power(x, p - 1.0),
        l1g=lambda x: p * b2 * np.power(x, 2 * p - 1.0),
        domain=HALF_LINE,
        constants=consts,
        params=(alpha, mu, beta, p),
        drift_derivative=lambda x: -alpha + 0.0 * np.asarray(x, dtype=float),
        l1g_derivative=lambda x: p * (2 * p - 1.0) * b2 * np.power(x, 2 * p - 2.0),
        quadratic_F=quad,
    )


def _meanrev_general(mu, q, p):
    _require(mu > 0 and q > 0, "meanrev_general needs mu, q > 0")
    _require(p >= 0.5, "meanrev_general needs p >= 0.5")
    h = max(q, p, 1.0)
    # 2x(mu - x^q) + x^(2p): bounded by grid maximisation below.
    consts = AssumptionConstants(
        one_sided_lipschitz_K=0.0,
        monotone_growth_a=0.0,
        monotone_growth_b=0.0,
        poly_growth_h=h,
        poly_growth_H=max(mu, 1.0),
        constants_domain=HALF_LINE,
        method="grid",
    )
    model = SdeModel.build(
        "meanrev_general",
        drift=lambda x: mu - np.power(x, q),
        diffusion=lambda x: np.power(x, p),
        diffusion_derivative=lambda x: p * np.power(x, p - 1.0),
        l1g=lambda x: p * np.power(x, 2 * p - 1.0),
        domain=HALF_LINE,
        constants=consts,
        params=(mu, q, p),
        drift_derivative=lambda x: -q * np.power(x, q - 1.0),
        l1g_derivative=lambda x: p * (2 * p - 1.0) * np.power(x, 2 * p - 2.0),
    )
    return _with_grid_growth(model)


def _with_grid_growth(model):
    # small-step limit of the monotone-type bound: theta = 1/2 kills the f^2 term
    a, b = estimate_growth_constants(model, 0.5, 0.0, 0.0)
    c = dataclasses.replace(model.constants, monotone_growth_a=a, monotone_growth_b=b, method="grid")
    return dataclasses.replace(model, constants=c)


def zero_model() -> SdeModel:
    """f = g = 0; every scheme keeps the state constant."""
    zero = lambda x: 0.0 * np.asarray(x, dtype=float)
    consts = AssumptionConstants(0.0, 0.0, 0.0, 1.0, 1e-12)
    return SdeModel.build("zero", zero, zero, zero, zero, WHOLE_LINE, consts,
                          drift_derivative=zero, l1g_derivative=zero,
                          quadratic_F=lambda th, sg, dt: (0.0, 1.0, 0.0))


_BUILTINS = {
    "heston32": (_heston32, 3),
    "linear": (_linear, 2),
    "cubic": (_cubic, 0),
    "meanrev_power": (_meanrev_power, 4),
    "meanrev_general": (_meanrev_general, 3),
    "zero": (zero_model, 0),
}


def builtin_names():
    return sorted(_BUILTINS)


def builtin_model(name: str, params: Sequence[float] = ()) -> SdeModel:
    """Return one of the shipped models.

    >>> builtin_model("heston32", [0.1, 0.2, 0.2 ** 0.5]).l1g(1.0)
    0.30000000000000004
    """
    try:
        factory, nparams = _BUILTINS[name]
    except KeyError:
        raise UnknownModelError(f"unknown model {name!r}; choose from {builtin_names()}") from None
    params = [float(p) for p in params]
    if len(params) != nparams:
        raise ValueError(f"model {name!r} takes {nparams} parameters, got {len(params)}")
    return factory(*params)


def default_grid(model: SdeModel) -> np.ndarray:
    """{0} plus 10^k for k = -4..1 in quarter decades; mirrored for whole-line models."""
    pos = 10.0 ** np.arange(-4.0, 1.0 + 1e-9, 0.25)
    if model.half_line:
        return np.concatenate(([0.0], pos))
    return np.concatenate((-pos[::-1], [0.0], pos))


def dense_grid(model: SdeModel, n: int = 4001) -> np.ndarray:
    """Default grid merged with ``n`` evenly spaced points over its span."""
    g = default_grid(model)
    return np.union1d(g, np.linspace(g.min(), g.max(), n))


def monotone_growth_lhs(model: SdeModel, theta: float, sigma: float, dt: float, x):
    """2xf + g^2 + (1-2 theta) f^2 dt + (dt/2) L1g (2 sigma f + L1g)."""
    f = model.drift(x)
    g = model.diffusion(x)
    l = model.l1g(x)
    return 2 * x * f + g * g + (1 - 2 * theta) * f * f * dt + 0.5 * dt * l * (2 * sigma * f + l)


def estimate_growth_constants(model: SdeModel, theta: float, sigma: float, dt: float, grid=None):
    """Grid estimate of (a, b) with monotone_growth_lhs <= a + b x^2.

    ``a`` bounds the left-hand side for |x| < 1, ``b`` bounds its quotient by
    x^2 for |x| >= 1, which is sufficient on every grid point.
    """
    x = np.asarray(dense_grid(model) if grid is None else grid, dtype=float)
    lhs = monotone_growth_lhs(model, theta, sigma, dt, x)
    small = np.abs(x) < 1
    a = float(max(lhs[small].max(initial=0.0), 0.0))
    big = ~small
    b = float(max((lhs[big] / x[big] ** 2).max(initial=0.0), 0.0))
    return a, b


# ---------------------------------------------------------------------------
# audit


@dataclass
class Violation:
    x: float
    y: float
    condition: str
    margin: float


@dataclass
class AuditReport:
    model: str
    violations: list
    pairs_checked: int
    estimation_method: str

    @property
    def passed(self) -> bool:
        return not self.violations

    def csv_rows(self):
        return [("pair", "condition", "margin")] + [
            (f"({float(v.x)!r},{float(v.y)!r})", v.condition, repr(float(v.margin)))
            for v in self.violations]

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.csv_rows())
        return buf.getvalue()


def audit_assumptions(model: SdeModel, grid=None, pair_budget: int = 10**6,
                      params=None, growth=None, rtol: float = 1e-12) -> AuditReport:
    """Falsify the model's stored constants on all grid pairs.

    Checks the one-sided Lipschitz bound with the stored K, the monotonicity of
    L1g, polynomial growth of f and g, and, when ``params`` (theta, sigma, dt)
    is supplied, the monotone-type bound with ``growth=(a, b)`` (defaults to the
    stored constants).  Only the first ``pair_budget`` pairs (in a fixed
    pseudo-random order when the budget is binding) are examined.  An empty
    violation list means the audit passed.
    """
    if pair_budget < 1:
        raise ValueError("pair_budget must be >= 1")
    x = np.unique(np.asarray(default_grid(model) if grid is None else grid, dtype=float))
    c = model.constants
    f = model.drift(x)
    g = model.diffusion(x)
    l = model.l1g(x)
    violations = []

    i, j = np.triu_indices(len(x), k=1)
    if len(i) > pair_budget:
        sel = np.sort(np.random.default_rng(0).choice(len(i), pair_budget, replace=False))
        i, j = i[sel], j[sel]
    dx = x[i] - x[j]
    d2 = dx * dx
    osl = dx * (f[i] - f[j])
    bound = c.one_sided_lipschitz_K * d2
    slack = rtol * (np.abs(osl) + np.abs(bound) + 1e-300)
    for k in np.nonzero(osl > bound + slack)[0]:
        violations.append(Violation(x[i[k]], x[j[k]], "one-sided-lipschitz", float(bound[k] - osl[k])))
    mono = dx * (l[i] - l[j])
    for k in np.nonzero(mono < -rtol * np.abs(dx * (np.abs(l[i]) + np.abs(l[j]))))[0]:
        violations.append(Violation(x[i[k]], x[j[k]], "monotone-l1g", float(mono[k])))

    growth_bound = c.poly_growth_H * (1 + np.abs(x) ** c.poly_growth_h)
    worst = np.maximum(np.abs(f), np.abs(g))
    for k in np.nonzero(worst > growth_bound * (1 + rtol))[0]:
        violations.append(Violation(x[k], x[k], "polynomial-growth", float(growth_bound[k] - worst[k])))

    if params is not None:
        theta, sigma, dt = params
        a, b = (c.monotone_growth_a, c.monotone_growth_b) if growth is None else growth
        lhs = monotone_growth_lhs(model, theta, sigma, dt, x)
        rhs = a + b * x * x
        for k in np.nonzero(lhs > rhs + rtol * (np.abs(lhs) + np.abs(rhs)))[0]:
            violations.append(Violation(x[k], x[k], "monotone-type", float(rhs[k] - lhs[k])))

    return AuditReport(model.name, violations, int(len(i)), c.method)
