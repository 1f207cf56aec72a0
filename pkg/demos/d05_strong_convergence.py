"""
Strong convergence on shared Brownian paths
===========================================

Coarse increments are exact sums of reference increments, so every level
sees the same Brownian path.  The log-log slope of the endpoint error
estimates the strong order.
"""
import math

from thetamilstein import builtin_model, strong_error

heston = builtin_model("heston32", [0.1, 0.2, math.sqrt(0.2)])
dts = [2.0 ** -k for k in range(5, 12)]
for scheme in ("theta_sigma", "em"):
    rep = strong_error(heston, scheme, 1, 1, 2.0 ** -12, dts, 0.5, 1.0, 1000, seed=12345, workers=4)
    print(f"{scheme}: rate {rep.fitted_rate:.3f} (residual {rep.fit_residual:.3f})")
    for d, e, c in zip(rep.dts, rep.mean_abs_errors, rep.ci_halfwidths):
        print(f"   dt=2^{int(round(math.log2(d)))}  error {e:.3e} +- {c:.1e}")
