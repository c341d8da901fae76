"""Curvature and geometric potential on the preset surfaces.

Samples each preset chart on a coarse grid and prints the range of the mean
curvature trace M, the Gauss curvature K and the geometric potential
V0 = -((M/2)^2 - K)/2m.  The sphere is the one curved preset on which V0
vanishes identically; the cylinder sits at the constant -1/(8 m R^2).
"""
import numpy as np

from thinwall import geometry as G
from thinwall.grids import SurfaceGrid

MASS = 1.0

charts = [G.plane(1.0, 1.0), G.cylinder(1.0, 2.0), G.sphere(1.0), G.torus(2.0, 1.0),
          G.catenoid(1.0, 1.0), G.helicoid(1.0, 1.0)]

print(f"{'surface':<10} {'M min':>9} {'M max':>9} {'K min':>9} {'K max':>9} {'V0 min':>9} {'V0 max':>9}"
      f" {'egregium':>9}")
for chart in charts:
    grid = SurfaceGrid(chart, 24, 48)
    s = grid.sample
    V0 = G.geometric_potential(s, MASS)
    # Gauss curvature from the metric alone, as a check on the shape-operator value
    defect = np.max(np.abs(G.intrinsic_gauss_curvature(chart, s.u, s.v) - s.K_gauss))
    print(f"{chart.name:<10} {s.M.min():9.4f} {s.M.max():9.4f} {s.K_gauss.min():9.4f} {s.K_gauss.max():9.4f}"
          f" {V0.min():9.4f} {V0.max():9.4f} {defect:9.1e}")

# the torus changes the sign of K between its outer and inner equator
torus = G.torus(2.0, 1.0)
for v, where in ((0.0, "outer"), (np.pi, "inner")):
    print(f"torus K on the {where} equator: {G.sample_geometry(torus, 0.0, v).K_gauss:+.4f}")

# volume factor xi(x3) of a thin shell: exact square (1 - x3/R)^2 on the sphere
s = G.sample_geometry(G.sphere(1.0), 1.0, 0.5)
for x3 in (0.0, 0.05, 0.1):
    print(f"sphere xi({x3:.2f}) = {G.xi_factor(s, x3):.6f}")
