import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given
from hypothesis import strategies as st

from thinwall import fields as F
from thinwall import geometry as G
from thinwall.errors import GridMismatch, GridTooCoarse, ThickSlab
from thinwall.grids import SlabGrid, SurfaceGrid
from thinwall.operators import (BoundaryCondition, DiscreteOperator, ModelVariant, ParticleParams, anomalous_delta,
                                assemble_laplace_beltrami, assemble_naive_hamiltonian, assemble_slab_hamiltonian,
                                assemble_variational_hamiltonian, xi_reduction_check)
from thinwall.solver import hermiticity_defect

SLAB_PLANE_GROUND = 493.4802200544679     # pi^2 / (8 m eps^2), eps = 0.05, from tests/oracles/derive.py

SURFACES = {
    "sphere": (G.sphere(1.0), 8, 16),
    "torus": (G.torus(2.0, 1.0), 8, 16),
    "cylinder": (G.cylinder(1.0, 2.0), 8, 16),
    "catenoid": (G.catenoid(1.0, 1.0), 8, 16),
    "plane": (G.plane(1.0, 1.0), 8, 8),
}


def surface_grid(name, edge="dirichlet"):
    ch, nu, nv = SURFACES[name]
    return SurfaceGrid(ch, nu, nv, edge)


def dense_eigs(op):
    return np.sort(np.linalg.eigvals(op.symmetrized().toarray()).real)


def hermitian_residual(op):
    return hermiticity_defect(op.symmetrized())


# --- Laplace-Beltrami ------------------------------------------------------------------

def test_ring_spectrum():
    g = SurfaceGrid(G.cylinder(1.0, 0.1), 256, 4, "neumann")
    e = dense_eigs(assemble_laplace_beltrami(g))
    np.testing.assert_allclose(e[:5], [0, 0.5, 0.5, 2.0, 2.0], atol=1e-3)


def test_box_ground_state():
    g = SurfaceGrid(G.plane(np.pi, np.pi), 24, 24, "dirichlet")
    e = dense_eigs(assemble_laplace_beltrami(g))
    assert e[0] == pytest.approx(1.0, rel=2e-3)
    errs = [abs(dense_eigs(assemble_laplace_beltrami(SurfaceGrid(G.plane(np.pi, np.pi), n, n)))[0] - 1.0)
            for n in (11, 23)]
    assert errs[0] / errs[1] > 3.5                  # second order


@pytest.mark.parametrize("chart", [G.torus(2.0, 1.0), G.plane(1.0, 1.0, periodic=True), G.sphere(1.0)],
                         ids=lambda c: c.name)
def test_constants_are_annihilated(chart):
    op = assemble_laplace_beltrami(SurfaceGrid(chart, 8, 16))
    assert np.max(np.abs(op.matrix @ np.ones(op.dimension))) <= 1e-10


@pytest.mark.parametrize("name", sorted(SURFACES))
def test_laplace_beltrami_self_adjoint(name):
    op = assemble_laplace_beltrami(surface_grid(name))
    assert hermitian_residual(op) <= 1e-12 * op.scale
    assert np.all(dense_eigs(op) >= -1e-9)


# --- reduced Hamiltonians ----------------------------------------------------------------

FIELDS = [F.uniform(0.2, -0.5, 1.0), F.loop((0.2, 0.1, 3.0), 2.0), F.wire((4.0, 0.0, 0.0))]


@pytest.mark.parametrize("name", sorted(SURFACES))
@pytest.mark.parametrize("field", FIELDS, ids=["uniform", "loop", "wire"])
def test_q0_variants_coincide(name, field):
    g = surface_grid(name)
    p = ParticleParams(1.3, 0.0)
    Hn = assemble_naive_hamiltonian(g, field, p)
    Hv = assemble_variational_hamiltonian(g, field, p)
    assert (Hn.matrix.indptr == Hv.matrix.indptr).all() and (Hn.matrix.indices == Hv.matrix.indices).all()
    assert np.max(np.abs(Hn.matrix.data - Hv.matrix.data)) <= 1e-15
    lb = assemble_laplace_beltrami(g, 1.3).matrix + sps.diags(G.geometric_potential(g.sample, 1.3))
    np.testing.assert_allclose((Hn.matrix - lb).toarray(), 0.0, atol=1e-12)


def test_naive_anomalous_diagonal_on_sphere():
    a = 0.6
    g = SurfaceGrid(G.sphere(1.0), 12, 24)
    Hn = assemble_naive_hamiltonian(g, F.uniform(0, 0, a), ParticleParams(1.0, 1.0))
    np.testing.assert_allclose(Hn.extras["anomalous_diagonal"], -2j * a * np.cos(g.sample.u), atol=1e-14)
    assert Hn.metadata["dropped_terms"] == ["A3*d3"]


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_hermiticity_residuals_sphere(a):
    g = SurfaceGrid(G.sphere(1.0), 12, 24)
    p = ParticleParams(1.0, 1.0)
    f = F.uniform(0, 0, a)
    Hn, Hv = assemble_naive_hamiltonian(g, f, p), assemble_variational_hamiltonian(g, f, p)
    assert hermitian_residual(Hn) == pytest.approx(2 * a * np.max(np.abs(np.cos(g.sample.u))), abs=1e-10)
    assert hermitian_residual(Hv) <= 1e-8 * Hv.scale


@pytest.mark.parametrize("field", [F.uniform(0.3, 0.2, -1.0), F.uniform_b(0, 0, 1.5), F.loop((0, 0, 3.0), 2.0)],
                         ids=["uniform", "uniform_b", "loop"])
def test_variational_hermitian_for_divergence_free_fields(field):
    for chart in (G.torus(2.0, 1.0), G.plane(1.0, 1.0, periodic=True)):
        op = assemble_variational_hamiltonian(SurfaceGrid(chart, 8, 16), field, ParticleParams(1.0, 1.0))
        assert hermitian_residual(op) <= 1e-8 * op.scale


def test_non_divergence_free_field_breaks_hermiticity():
    f = F.analytic(lambda x: np.stack([0 * x[..., 0], 0 * x[..., 0], x[..., 2]], -1), "az")
    op = assemble_variational_hamiltonian(SurfaceGrid(G.torus(), 8, 16), f, ParticleParams(1.0, 1.0))
    assert hermitian_residual(op) == pytest.approx(0.5, rel=1e-6)      # (q/2m) div A with div A = 1


def test_coef_adv_scales_advection_only():
    g = SurfaceGrid(G.torus(), 8, 16)
    f, p = F.uniform(0.3, 0.0, 1.0), ParticleParams(1.0, 1.0)
    H1 = assemble_variational_hamiltonian(g, f, p, ModelVariant.variational(1.0)).matrix
    H0 = assemble_variational_hamiltonian(g, f, p, ModelVariant.variational(0.0)).matrix
    Hh = assemble_variational_hamiltonian(g, f, p, ModelVariant.variational(0.5)).matrix
    np.testing.assert_allclose(Hh.toarray(), (0.5 * (H1 + H0)).toarray(), atol=1e-12)


def test_surface_bracket_option():
    g = SurfaceGrid(G.sphere(1.0), 16, 32)
    f, p = F.uniform(0, 0, 1.0), ParticleParams(1.0, 1.0)
    Ha = assemble_naive_hamiltonian(g, f, p, "ambient")
    Hs = assemble_naive_hamiltonian(g, f, p, "surface")
    assert Hs.metadata["divergence"] == "surface"
    assert np.all(Ha.extras["bookkeeping_diagonal"] == 0)
    assert np.max(np.abs(Hs.extras["bookkeeping_diagonal"])) <= 1e-2
    with pytest.raises(ValueError):
        assemble_naive_hamiltonian(g, f, p, "spectral")


# --- anomalous delta ----------------------------------------------------------------------

def test_anomalous_delta_examples():
    g = SurfaceGrid(G.sphere(1.0), 12, 24)
    f = F.uniform(0, 0, 1.0)
    p = ParticleParams(1.0, 1.0)
    D = anomalous_delta(assemble_naive_hamiltonian(g, f, p), assemble_variational_hamiltonian(g, f, p))
    np.testing.assert_allclose(D.diagonal(), -2j * np.cos(g.sample.u), atol=1e-13 * D.scale)
    assert np.all(D.diagonal().real == 0)
    assert D.matrix.nnz == g.size
    p0 = ParticleParams(1.0, 0.0)
    assert anomalous_delta(assemble_naive_hamiltonian(g, f, p0), assemble_variational_hamiltonian(g, f, p0)).matrix.nnz == 0


@pytest.mark.parametrize("field", FIELDS, ids=["uniform", "loop", "wire"])
def test_anomalous_delta_vanishes_on_minimal_surface(field):
    g = SurfaceGrid(G.catenoid(1.0, 1.0), 8, 16)
    p = ParticleParams(1.0, 1.0)
    D = anomalous_delta(assemble_naive_hamiltonian(g, field, p), assemble_variational_hamiltonian(g, field, p))
    assert D.matrix.nnz == 0


@given(q=st.floats(-3, 3), m=st.floats(0.2, 5), th=st.floats(0, np.pi), ph=st.floats(0, 2 * np.pi))
def test_anomalous_delta_pointwise(q, m, th, ph):
    g = SurfaceGrid(G.torus(2.0, 1.0), 6, 12)
    f = F.uniform(np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th))
    p = ParticleParams(m, q)
    Hn = assemble_naive_hamiltonian(g, f, p)
    D = anomalous_delta(Hn, assemble_variational_hamiltonian(g, f, p))
    expected = -1j * q / m * Hn.extras["A3"] * g.sample.M
    off = D.matrix - sps.diags(D.diagonal())
    assert np.max(np.abs(D.diagonal() - expected)) <= 1e-13 * max(Hn.scale, 1.0)
    assert np.all(D.diagonal().real == 0)
    assert off.count_nonzero() == 0


def test_anomalous_delta_rejects_mismatch():
    f, p = F.uniform(0, 0, 1), ParticleParams(1.0, 1.0)
    a, b = SurfaceGrid(G.sphere(), 8, 16), SurfaceGrid(G.sphere(), 8, 18)
    with pytest.raises(GridMismatch):
        anomalous_delta(assemble_naive_hamiltonian(a, f, p), assemble_variational_hamiltonian(b, f, p))
    with pytest.raises(GridMismatch):
        anomalous_delta(assemble_naive_hamiltonian(a, f, p), assemble_variational_hamiltonian(a, f, ParticleParams(2.0, 1.0)))
    with pytest.raises(GridMismatch):
        anomalous_delta(assemble_naive_hamiltonian(a, f, p), assemble_variational_hamiltonian(a, F.uniform(0, 0, 2), p))
    with pytest.raises(GridMismatch):
        anomalous_delta(assemble_naive_hamiltonian(a, f, p),
                        assemble_variational_hamiltonian(a, f, p, ModelVariant.variational(0.5)))
    with pytest.raises(GridMismatch):
        anomalous_delta(assemble_variational_hamiltonian(a, f, p), assemble_naive_hamiltonian(a, f, p))


# --- structural invariants -------------------------------------------------------------------

def _all_operators():
    p = ParticleParams(1.0, 1.0)
    f = F.uniform(0.3, 0.1, 1.0)
    for name in sorted(SURFACES):
        g = surface_grid(name)
        yield name + "/lb", assemble_laplace_beltrami(g), 7
        yield name + "/naive", assemble_naive_hamiltonian(g, f, p), 7
        yield name + "/variational", assemble_variational_hamiltonian(g, f, p), 7
    sl = SlabGrid(SurfaceGrid(G.sphere(1.0), 6, 12), 6, 0.05)
    for bc in (BoundaryCondition.dirichlet(), BoundaryCondition.neumann(), BoundaryCondition.neumann(1, 1)):
        yield "slab/" + bc.variant, assemble_slab_hamiltonian(sl, f, p, bc), 9


@pytest.mark.parametrize("label,op,limit", list(_all_operators()), ids=lambda x: x if isinstance(x, str) else "")
def test_operator_structure(label, op, limit, tmp_path):
    m = op.matrix
    assert np.all(np.isfinite(m.data))
    assert np.all(m.data != 0)
    assert m.indices.min() >= 0 and m.indices.max() < op.dimension
    assert np.max(np.diff(m.indptr)) <= limit
    path = tmp_path / "op.csv"
    op.save(path)
    back = DiscreteOperator.load(path)
    assert back.metadata == op.metadata
    np.testing.assert_array_equal(back.weights, op.weights)
    assert (back.matrix != op.matrix).nnz == 0


def test_saved_operator_format(tmp_path):
    op = assemble_laplace_beltrami(SurfaceGrid(G.torus(), 4, 4))
    op.save(tmp_path / "op.csv")
    lines = (tmp_path / "op.csv").read_text().splitlines()
    assert lines[0].startswith("# {") and lines[1] == "row,col,re,im"
    assert len(lines) == 2 + op.matrix.nnz
    assert "np.float64" not in lines[2]


def test_grid_guards():
    with pytest.raises(GridTooCoarse):
        SurfaceGrid(G.sphere(), 3, 16)
    with pytest.raises(GridTooCoarse):
        SlabGrid(SurfaceGrid(G.sphere(), 8, 8), 3, 0.05)
    with pytest.raises(ThickSlab):
        SlabGrid(SurfaceGrid(G.sphere(1.0), 8, 8), 8, 0.2)
    with pytest.raises(ValueError):
        ParticleParams(0.0, 1.0)
    with pytest.raises(ValueError):
        BoundaryCondition("robin")
    with pytest.raises(ValueError):
        BoundaryCondition.neumann(np.inf, 1.0)


# --- slab ------------------------------------------------------------------------------------

def _plane_slab(n3, bc, eps=0.05):
    sl = SlabGrid(SurfaceGrid(G.plane(1.0, 1.0, periodic=True), 4, 4), n3, eps)
    return dense_eigs(assemble_slab_hamiltonian(sl, None, ParticleParams(1.0, 0.0), bc))


def test_plane_slab_dirichlet_ground():
    errs = [abs(_plane_slab(n3, BoundaryCondition.dirichlet())[0] - SLAB_PLANE_GROUND) for n3 in (9, 17, 33)]
    assert errs[-1] / SLAB_PLANE_GROUND <= 2e-3
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_plane_slab_neumann_ground_is_zero():
    e = _plane_slab(8, BoundaryCondition.neumann())
    assert abs(e[0]) <= 1e-9


def test_slab_hermitian_for_real_bc():
    sl = SlabGrid(SurfaceGrid(G.torus(2.0, 1.0), 6, 12), 6, 0.05)
    p = ParticleParams(1.0, 1.0)
    for bc in (BoundaryCondition.dirichlet(), BoundaryCondition.neumann(0.0, 2.0)):
        op = assemble_slab_hamiltonian(sl, F.uniform(0, 0, 1.0), p, bc)
        assert hermitian_residual(op) <= 1e-8 * op.scale


def test_slab_harmonic_confinement():
    sl = SlabGrid(SurfaceGrid(G.plane(1.0, 1.0, periodic=True), 4, 4), 8, 0.05)
    p = ParticleParams(1.0, 0.0)
    base = assemble_slab_hamiltonian(sl, None, p)
    conf = assemble_slab_hamiltonian(sl, None, p, V_conf={"kind": "harmonic", "omega": 10.0})
    x3 = sl.x3[sl.layers("dirichlet")]
    np.testing.assert_allclose((conf.diagonal() - base.diagonal()).reshape(16, -1)[0], 50.0 * x3**2, atol=1e-9)
    with pytest.raises(ValueError):
        assemble_slab_hamiltonian(sl, None, p, V_conf=("quartic", 1.0))


def test_slab_sphere_reproduces_surface_gaps():
    sl = SlabGrid(SurfaceGrid(G.sphere(1.0), 12, 24), 6, 0.05)
    e = np.sort(np.linalg.eigvalsh(assemble_slab_hamiltonian(sl, None, ParticleParams(1.0, 0.0)).symmetrized().toarray()))
    s = np.sort(np.linalg.eigvalsh(assemble_laplace_beltrami(sl.surface).symmetrized().toarray()))
    np.testing.assert_allclose(e[1:4] - e[0], s[1:4] - s[0], rtol=2e-2)


# --- transverse reduction check ------------------------------------------------------------

def test_xi_check_plane_is_exact():
    s = G.sample_geometry(G.plane(), 0.3, 0.3)
    assert xi_reduction_check(s, lambda x: np.exp(-(x - 0.3) ** 2), 1e-3) == 0.0


def test_xi_check_sphere():
    s = G.sample_geometry(G.sphere(1.0), 1.0, 0.5)
    prof = lambda x: np.exp(-(x - 0.3) ** 2)  # noqa: E731
    assert abs(xi_reduction_check(s, prof, 1e-3)) <= 1e-4
    d = [abs(xi_reduction_check(s, prof, h)) for h in (1e-2, 5e-3, 2.5e-3)]
    assert d[0] / d[1] >= 1.8 and d[1] / d[2] >= 1.8


@given(u=st.floats(0.2, 6.0), v=st.floats(0.2, 6.0), c=st.floats(-1, 1))
def test_xi_check_converges_on_torus(u, v, c):
    s = G.sample_geometry(G.torus(2.0, 1.0), u, v)
    prof = lambda x: np.cos(x + c) + 2.0  # noqa: E731
    d = [abs(xi_reduction_check(s, prof, h)) for h in (1e-2, 5e-3)]
    assert d[1] <= 1e-4
    assert d[1] <= 1e-9 or d[0] / d[1] >= 1.8
