"""
Positivity certificates
=======================

The implicit step keeps positive states positive when a margin built from
f, g and L1g stays non-negative on (0, inf).  The margin is affine in dt,
so the largest safe step comes out in closed form.
"""
import math

from thetamilstein import SchemeParams, builtin_model, certify, max_dt_for_positivity, simulate_paths

heston = builtin_model("heston32", [0.1, 0.2, math.sqrt(0.2)])
for dt in (1e-3, 1.0, 1e3):
    cert = certify(heston, SchemeParams(1, 1, dt))
    print(f"heston dt={dt:g}: kind={cert.kind} margin_min={cert.margin_min:.3g} at x={cert.argmin:.3g}")

# Mean-reverting power model: p = 1 needs dt < 1/beta^2, p = 1/2 needs nothing
beta = math.sqrt(0.2)
for p in (1.0, 0.5):
    m = builtin_model("meanrev_power", [1.0, 1.0, beta, p])
    print(f"meanrev p={p}: largest safe dt = {max_dt_for_positivity(m, 1.0, 0.0)}")

# Empirical check: implicit paths never cross zero, Euler-Maruyama can
m = builtin_model("meanrev_power", [1.0, 0.05, 1.5, 0.5])
for scheme, params in [("em", SchemeParams(0, 0, 0.1)), ("theta_sigma", SchemeParams(1, 1, 0.1))]:
    res = simulate_paths(m, params, scheme, 0.05, 5.0, 2000, seed=1, record=True)
    print(f"{scheme:>11}: negative excursions {int(res.negative_excursions.sum())},"
          f" min state {res.states.min():.3g}")
