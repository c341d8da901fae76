"""Orbital response of ring modes to an axial magnetic field.

On a short cylinder of radius 1 (a ring), the azimuthal modes e^{+-i phi}
are degenerate at zero field.  A uniform axial B with |A| = s on the ring
shifts them linearly in s with slopes -+q/m.  The anomalous term needs A3,
which is zero here, so the naive and variational operators agree.
"""
import numpy as np

from thinwall import fields as F
from thinwall import geometry as G
from thinwall.analysis import field_derivative_probe
from thinwall.grids import SurfaceGrid
from thinwall.operators import ParticleParams, assemble_naive_hamiltonian, assemble_variational_hamiltonian
from thinwall.solver import SolverConfig, solve_lowest

grid = SurfaceGrid(G.cylinder(1.0, 0.1), 256, 4, "neumann")


def family(s):
    return F.uniform_b(0.0, 0.0, 2.0 * s)


for q, m in ((1.0, 1.0), (0.5, 2.0)):
    p = ParticleParams(m, q)
    for name, asm in (("naive", assemble_naive_hamiltonian), ("variational", assemble_variational_hamiltonian)):
        d = field_derivative_probe(lambda f: asm(grid, f, p, include_v0=False), family, 0.0, 1e-3, 3)
        print(f"q={q} m={m} {name:<12} d lambda/ds = {np.round(d, 5)}  (expected 0, +-{q / m})")

# the spectrum itself at a finite field: (n - q s)^2 / 2m
p = ParticleParams(1.0, 1.0)
res = solve_lowest(assemble_variational_hamiltonian(grid, family(0.2), p, include_v0=False), SolverConfig(k=4))
exact = sorted((n - 0.2) ** 2 / 2 for n in range(-2, 3))[:4]
print("s=0.2 eigenvalues", np.round(res.eigenvalues.real, 5), "exact", np.round(exact, 5))
