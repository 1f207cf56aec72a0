"""
Moment bounds and nonlinear decay
=================================

A Gronwall argument bounds E|X_k|^2 in terms of monotone-type growth
constants.  For the cubic model the Lyapunov expression collapses to -x^4
at (theta, sigma) = (1/2, 1), independently of dt.
"""
import math

import numpy as np

from thetamilstein import SchemeParams, builtin_model, empirical_decay, lyapunov_lhs, moment_bound_check

heston = builtin_model("heston32", [0.1, 0.2, math.sqrt(0.2)])
rep = moment_bound_check(heston, SchemeParams(1, 1, 2.0 ** -8), 0.5, 1.0, 5000, seed=7)
print(f"sup E|X|^2 = {rep.sup_second_moment:.4f}, bound = {rep.bound:.4f}")

cubic = builtin_model("cubic")
x = np.array([-2.0, -0.5, 1.0, 3.0])
for dt in (0.01, 0.5, 5.0):
    print(f"dt={dt}: lyapunov_lhs = {lyapunov_lhs(cubic, 0.5, 1.0, dt, x)}")

# Decay towards zero is only algebraic (roughly t^(-1/2)), so paths shrink slowly
for t_end in (10.0, 50.0, 200.0):
    d = empirical_decay(cubic, SchemeParams(0.5, 1.0, 0.5), 1.0, t_end, 1000, seed=3)
    print(f"T={t_end:>5}: median |X_N| {np.median(np.abs(d.terminal)):.4f},"
          f" fraction below 1e-3 {d.fraction_under(1e-3):.3f}")
