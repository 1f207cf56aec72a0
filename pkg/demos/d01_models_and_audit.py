"""
Models and their structural constants
=====================================

Each builtin model carries drift, diffusion and the Milstein operator
L1g = g g' together with the constants the implicit scheme relies on.
The audit re-checks those constants on a grid of point pairs.
"""
import math

import numpy as np

from thetamilstein import audit_assumptions, builtin_model, builtin_names

print("builtin models:", ", ".join(builtin_names()))

# Heston 3/2 volatility: dx = x(mu - alpha x) dt + beta x^{3/2} dw
heston = builtin_model("heston32", [0.1, 0.2, math.sqrt(0.2)])
print("L1g(1) =", heston.l1g(1.0), " K =", heston.constants.one_sided_lipschitz_K)

# The audit confirms one-sided Lipschitz, monotone L1g and polynomial growth
report = audit_assumptions(heston)
print("heston audit:", "clean" if report.passed else report.violations[:3],
      f"({report.pairs_checked} pairs)")

# A stored constant that is too optimistic is caught immediately
import dataclasses

linear = builtin_model("linear", [-1.0, 1.0])
too_tight = dataclasses.replace(
    linear, constants=dataclasses.replace(linear.constants, one_sided_lipschitz_K=-2.0))
bad = audit_assumptions(too_tight, np.linspace(-5, 5, 21))
print("linear with K=-2:", len(bad.violations), "violations, e.g.", bad.csv_rows()[1])
