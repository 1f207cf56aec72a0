"""
One implicit step
=================

Every step solves the scalar equation F(x) = b, where
F(x) = x - theta f(x) dt + (sigma/2) L1g(x) dt is strictly increasing.
"""
import math

import numpy as np

from thetamilstein import (SchemeParams, b_rhs, builtin_model, closed_form_heston_step, eval_F,
                           max_stable_dt, solve_F)

heston = builtin_model("heston32", [0.1, 0.2, math.sqrt(0.2)])
params = SchemeParams(theta=1.0, sigma=1.0, dt=0.1)

# The step must respect dt < 1/(theta (K + 1))
print("largest admissible dt:", max_stable_dt(heston, params.theta))

# For the 3/2 model F is a quadratic, so the step has a closed form
b = b_rhs(heston, params, 0.5, 0.0)
print("b =", b, " next state =", closed_form_heston_step(0.1, 0.2, math.sqrt(0.2), 0.1, b))

# The general safeguarded Newton solver agrees with it
out = solve_F(heston, params, b, method="iterative")
print("iterative root:", out.root, "after", out.iterations, "iterations")

# Round trip on the cubic model over a whole range of states
cubic = builtin_model("cubic")
p = SchemeParams(0.5, 1.0, 0.5)
x = np.linspace(-20, 20, 9)
print("cubic round trip max error:", np.max(np.abs(solve_F(cubic, p, eval_F(cubic, p, x)).root - x)))
