import csv
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinwall import geometry as G
from thinwall.errors import DegenerateChart
from thinwall.geometry import (SurfaceChart, geometric_potential, intrinsic_gauss_curvature, offset_metric,
                               sample_geometry, xi_factor)

# Frozen values from tests/oracles/derive.py (independent sympy derivation).
SPHERE_17 = {"M": 1.1764705882352942, "K": 0.3460207612456747}
CYL_13_V0 = -0.07396449704142012
CATENOID_K_V05 = -0.6185000366872468
TORUS_K = {0.0: 0.3333333333333333, 1.0: 0.21269212905095297, 2.0: -0.2627433187303343, 3.0: -0.9801833088053888}

ALL_PRESETS = {
    "plane": G.plane(2.0, 3.0),
    "cylinder": G.cylinder(1.3, 2.0),
    "sphere": G.sphere(1.7),
    "torus": G.torus(2.0, 1.0),
    "catenoid": G.catenoid(1.0, 1.0),
    "helicoid": G.helicoid(1.0, 1.0),
}


def interior(chart, fu, fv):
    u0, u1, v0, v1 = chart.domain
    return u0 + fu * (u1 - u0), v0 + fv * (v1 - v0)


unit = st.floats(0.02, 0.98)


# --- examples -------------------------------------------------------------------------

def test_plane_is_flat():
    s = sample_geometry(G.plane(), 0.3, 0.7)
    assert s.M == 0.0 and s.K_gauss == 0.0
    assert geometric_potential(s, 1.0) == 0.0
    assert intrinsic_gauss_curvature(G.plane(), 0.3, 0.7) == pytest.approx(0.0, abs=1e-14)


def test_sphere_curvatures():
    s = sample_geometry(G.sphere(1.7), 0.7, 0.3)
    assert s.M == pytest.approx(SPHERE_17["M"], rel=1e-13)
    assert s.K_gauss == pytest.approx(SPHERE_17["K"], rel=1e-13)
    assert intrinsic_gauss_curvature(G.sphere(1.7), 0.7, 0.3) == pytest.approx(SPHERE_17["K"], rel=1e-10)


def test_cylinder_curvatures_and_potential():
    s = sample_geometry(G.cylinder(1.3, 2.0), 1.1, 0.4)
    assert s.M == pytest.approx(1 / 1.3, rel=1e-13)
    assert s.K_gauss == pytest.approx(0.0, abs=1e-14)
    assert geometric_potential(s, 1.0) == pytest.approx(CYL_13_V0, rel=1e-12)
    assert geometric_potential(s, 2.0) == pytest.approx(CYL_13_V0 / 2, rel=1e-12)


def test_catenoid_is_minimal():
    ch = G.catenoid(1.0, 1.0)
    u, v = np.meshgrid(np.linspace(0, 6, 11), np.linspace(-1, 1, 9))
    s = sample_geometry(ch, u, v)
    assert np.all(s.M == 0.0)
    assert sample_geometry(ch, 0.2, 0.5).K_gauss == pytest.approx(CATENOID_K_V05, rel=1e-12)


@pytest.mark.parametrize("v", sorted(TORUS_K))
def test_torus_gauss_curvature(v):
    ch = G.torus(2.0, 1.0)
    assert sample_geometry(ch, 0.1, v).K_gauss == pytest.approx(TORUS_K[v], rel=1e-12)
    assert intrinsic_gauss_curvature(ch, 0.1, v) == pytest.approx(TORUS_K[v], rel=1e-9, abs=1e-12)


def test_sphere_potential_vanishes():
    u, v = np.meshgrid(np.linspace(0.01, 3.13, 40), np.linspace(0, 6.28, 40))
    for R in (0.5, 1.0, 3.0):
        s = sample_geometry(G.sphere(R), u, v)
        assert np.max(np.abs(geometric_potential(s, 1.0))) <= 1e-10


def test_xi_factor_examples():
    s = sample_geometry(G.sphere(1.0), 1.0, 0.5)
    assert xi_factor(s, 0.0) == 1.0
    assert xi_factor(s, 0.1) == pytest.approx(0.81, rel=1e-14)
    assert xi_factor(s, 0.1) == pytest.approx((1 - 0.1) ** 2, rel=1e-14)
    p = sample_geometry(G.plane(), 0.2, 0.2)
    assert xi_factor(p, 0.37) == 1.0


def test_offset_metric_examples():
    s = sample_geometry(G.sphere(1.0), 1.0, 0.5)
    np.testing.assert_array_equal(offset_metric(s, 0.0), s.g)
    np.testing.assert_allclose(offset_metric(s, 0.1), 0.81 * s.g, rtol=1e-13)
    c = sample_geometry(G.cylinder(1.0, 1.0), 0.4, 0.5)
    G_ab = offset_metric(c, 0.05)
    assert G_ab[0, 0] == pytest.approx(0.9025 * c.g[0, 0], rel=1e-13)
    assert G_ab[1, 1] == pytest.approx(c.g[1, 1], rel=1e-13)


def test_thick_offset_warns():
    s = sample_geometry(G.sphere(1.0), 1.0, 0.5)
    with pytest.warns(UserWarning, match="offset"):
        xi_factor(s, 0.4)


def test_degenerate_chart_raises():
    base = G.sphere(1.0)
    polar = SurfaceChart("sphere_with_pole", base.map, (0.0, np.pi, 0.0, 2 * np.pi), False, True,
                         derivative_mode="fd")
    with pytest.raises(DegenerateChart) as exc:
        sample_geometry(polar, np.array([0.0, 1.0]), np.array([0.3, 0.3]))
    assert exc.value.u == 0.0


def test_unknown_preset_and_mode():
    with pytest.raises(ValueError):
        G.make_chart("klein_bottle")
    with pytest.raises(ValueError):
        G.sphere(1.0).with_mode("spectral")
    with pytest.raises(ValueError):
        G.torus(1.0, 2.0)


def test_periodicity_flags_are_consistent():
    for name in ("cylinder", "sphere", "torus", "catenoid"):
        assert ALL_PRESETS[name].check_periodicity()


def test_csv_chart_matches_preset(tmp_path):
    ch = G.torus(2.0, 1.0)
    us = np.linspace(0, 2 * np.pi, 81)
    vs = np.linspace(0, 2 * np.pi, 81)
    path = tmp_path / "torus.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "x", "y", "z"])
        for u in us:
            for v in vs:
                w.writerow([u, v, *ch.position(u, v)])
    tab = G.load_chart_csv(path, periodic_u=True, periodic_v=True)
    assert tab.derivative_mode == "fd"
    u, v = np.array([0.5, 2.0, 4.0]), np.array([0.3, 1.7, 3.5])
    a, b = sample_geometry(ch, u, v), sample_geometry(tab, u, v)
    np.testing.assert_allclose(b.K_gauss, a.K_gauss, atol=1e-3)
    np.testing.assert_allclose(b.M, a.M, atol=1e-3)


def test_csv_chart_rejects_ragged_grid(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("u,v,x,y,z\n0,0,0,0,0\n0,1,0,1,0\n1,0,1,0,0\n")
    with pytest.raises(ValueError):
        G.load_chart_csv(path)


# --- properties -----------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(ALL_PRESETS))
@pytest.mark.parametrize("mode,tol", [("analytic", 1e-6), ("fd", 1e-3)])
def test_egregium_random_points(name, mode, tol):
    ch = ALL_PRESETS[name].with_mode(mode, 1e-4)
    rng = np.random.default_rng(100)
    u, v = interior(ch, rng.uniform(0.01, 0.99, 100), rng.uniform(0.01, 0.99, 100))
    s = sample_geometry(ch, u, v)
    assert np.max(np.abs(s.K_gauss - intrinsic_gauss_curvature(ch, u, v))) <= tol


@pytest.mark.parametrize("name", sorted(ALL_PRESETS))
def test_fd_mode_matches_analytic(name):
    ch = ALL_PRESETS[name]
    rng = np.random.default_rng(7)
    u, v = interior(ch, rng.uniform(0.05, 0.95, 50), rng.uniform(0.05, 0.95, 50))
    a, f = sample_geometry(ch, u, v), sample_geometry(ch.with_mode("fd"), u, v)
    assert np.max(np.abs(a.M - f.M)) <= 1e-6
    assert np.max(np.abs(a.K_gauss - f.K_gauss)) <= 1e-6


@given(fu=unit, fv=unit, c=st.floats(-3.0, 3.0))
def test_curvature_invariant_under_shift(fu, fv, c):
    base = G.torus(2.0, 1.0)
    shifted = SurfaceChart("torus_shifted", lambda u, v: base.map(u + c, v), base.domain, True, True,
                           derivative_mode="fd")
    u, v = interior(base, fu, fv)
    a = sample_geometry(base, u + c, v)
    b = sample_geometry(shifted, u, v)
    assert b.M == pytest.approx(a.M, abs=1e-6)
    assert b.K_gauss == pytest.approx(a.K_gauss, abs=1e-6)


@pytest.mark.parametrize("name", ["sphere", "torus", "cylinder", "catenoid"])
@given(fu=unit, fv=unit)
def test_swapping_parameters_flips_mean_curvature(name, fu, fv):
    base = ALL_PRESETS[name]
    u0, u1, v0, v1 = base.domain
    swapped = SurfaceChart(name + "_swapped", lambda a, b: base.map(b, a), (v0, v1, u0, u1),
                           base.periodic_v, base.periodic_u, derivative_mode="fd")
    u, v = interior(base, fu, fv)
    a = sample_geometry(base, u, v)
    b = sample_geometry(swapped, v, u)
    np.testing.assert_allclose(b.normal, -a.normal, atol=1e-9)
    assert b.M == pytest.approx(-a.M, abs=1e-6)
    assert b.K_gauss == pytest.approx(a.K_gauss, abs=1e-6)


@pytest.mark.parametrize("name", sorted(ALL_PRESETS))
@given(fu=unit, fv=unit, t=st.floats(-1.0, 1.0))
def test_offset_determinant_is_xi_squared(name, fu, fv, t):
    ch = ALL_PRESETS[name]
    s = sample_geometry(ch, *interior(ch, fu, fv))
    kmax = np.max(np.abs(np.linalg.eigvals(s.g_inv @ s.K_ext)))
    x3 = t * 0.01 / max(kmax, 1e-3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ratio = np.linalg.det(offset_metric(s, x3)) / s.det_g
        xi = xi_factor(s, x3)
    assert ratio == pytest.approx(xi**2, rel=1e-12, abs=1e-14)


def test_offset_determinant_richardson():
    # the truncated expansion error shrinks at least cubically in x3
    s = sample_geometry(G.torus(2.0, 1.0), 0.3, 2.5)
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        ratio = np.linalg.det(offset_metric(s, h)) / s.det_g
        errs.append(abs(ratio - xi_factor(s, h) ** 2))
    assert max(errs) <= 1e-12


@pytest.mark.parametrize("name", sorted(ALL_PRESETS))
@given(fu=unit, fv=unit, m=st.floats(0.1, 10.0))
def test_geometric_potential_non_positive(name, fu, fv, m):
    ch = ALL_PRESETS[name]
    s = sample_geometry(ch, *interior(ch, fu, fv))
    assert s.K_gauss <= (s.M / 2) ** 2 + 1e-12
    assert geometric_potential(s, m) <= 1e-12


def test_geometric_potential_rejects_bad_mass():
    s = sample_geometry(G.sphere(), 1.0, 1.0)
    with pytest.raises(ValueError):
        geometric_potential(s, 0.0)
