"""
Mean-square stability regions
=============================

On the linear test equation dx = alpha x dt + mu x dw the scheme multiplies
E|X|^2 by a fixed growth factor each step.  Rasterising the sign of the
stability polynomial over (alpha dt, mu^2 dt) gives the stability region.
"""
from thetamilstein import growth_factor, raster_region

for theta, sigma in [(0, 0), (0.5, 0), (1, 0), (0, 1), (0.5, 1), (1, 1)]:
    g = raster_region(theta, sigma, resolution=(200, 200))
    frac = g.scheme_stable.mean()
    same = (g.scheme_stable == g.sde_stable).all()
    print(f"theta={theta:<3} sigma={sigma}: stable fraction {frac:.3f}"
          f"{'  (matches the SDE exactly)' if same else ''}")

# Explicit Milstein loses stability where the SDE is still stable
print("growth factor at (x, y) = (-1, 1), explicit:", float(growth_factor(0, 0, -1.0, 1.0)))
print("growth factor at (x, y) = (-1, 1), theta=0.5 sigma=1:", float(growth_factor(0.5, 1, -1.0, 1.0)))

# Coarse text picture of the explicit region ('#' stable, '.' unstable)
g = raster_region(0, 0, resolution=(40, 20))
for row in g.scheme_stable[::-1]:
    print("".join("#" if s else "." for s in row))
