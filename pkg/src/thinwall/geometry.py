"""Differential geometry of parametrized surface patches.

Conventions used throughout the package:

* ``normal = (r_u x r_v) / |r_u x r_v|``; presets are parametrized so that it
  points outward on closed surfaces.
* ``K_ext[a, b] = -r_ab . normal`` (equivalently ``r_a . d_b normal``), so a
  sphere of radius R has ``K_ext = g / R``.
* ``M = g^{ab} K_ab`` is the *trace*, i.e. twice the averaged mean curvature
  (sphere: ``M = 2/R``).  Wherever the averaged value is needed the code uses
  ``M / 2`` explicitly.
* ``K_gauss = det(g^{-1} K_ext)``.
* The transverse coordinate ``x3`` runs along ``-normal``: the point at height
  ``x3`` is ``r - x3 * normal``.  With this choice the offset metric is
  ``g - 2 K x3 + K g^{-1} K x3**2`` and its determinant is exactly
  ``det(g) * xi(x3)**2`` with ``xi = 1 - M x3 + K_gauss x3**2``.

All geometry functions are vectorized over ``u`` and ``v`` (numpy broadcasting).
"""
from __future__ import annotations

import csv
import dataclasses
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import sympy as sp
from scipy.interpolate import RectBivariateSpline

from thinwall.errors import DegenerateChart

EPS_DEG = 1e-14
POLE_MARGIN = 1e-3
M_ROUNDOFF = 32 * np.finfo(float).eps

# 4th-order central stencils: offset -> coefficient (divide by h**order)
_STENCILS = {
    0: {0: 1.0},
    1: {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12},
    2: {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12},
    3: {-3: 1 / 8, -2: -1.0, -1: 13 / 8, 1: -13 / 8, 2: 1.0, 3: -1 / 8},
}


@dataclass(frozen=True, eq=False)
class SurfaceChart:
    """A single chart ``(u, v) -> R^3`` of a surface patch.

    ``map`` must accept broadcastable arrays and return an array with a
    trailing axis of length 3.  ``pole_edges`` lists parameter directions
    (``"u"`` or ``"v"``) whose two domain ends are coordinate poles rather
    than physical edges; grids close them with zero-flux rows.
    """

    name: str
    map: Callable[[np.ndarray, np.ndarray], np.ndarray]
    domain: tuple[float, float, float, float]
    periodic_u: bool = False
    periodic_v: bool = False
    derivative_mode: str = "analytic"
    h_geom: float = 1e-4
    params: Mapping[str, float] = field(default_factory=dict)
    pole_edges: tuple[str, ...] = ()
    analytic_partials: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.derivative_mode not in ("analytic", "fd"):
            raise ValueError(f"unknown derivative_mode {self.derivative_mode!r}")
        if self.derivative_mode == "analytic" and self.analytic_partials is None:
            raise ValueError(f"chart {self.name!r} has no analytic derivatives; use derivative_mode='fd'")

    @property
    def span_u(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def span_v(self) -> float:
        return self.domain[3] - self.domain[2]

    def with_mode(self, mode: str, h_geom: float | None = None) -> "SurfaceChart":
        return dataclasses.replace(self, derivative_mode=mode, h_geom=self.h_geom if h_geom is None else h_geom)

    def position(self, u, v) -> np.ndarray:
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return np.asarray(self.map(u, v), float)

    def partials(self, u, v, order: int = 2) -> dict[tuple[int, int], np.ndarray]:
        """Partial derivatives ``d^{i+j} r / du^i dv^j`` for ``i + j <= order``."""
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        keys = [(i, j) for i in range(order + 1) for j in range(order + 1 - i)]
        if self.derivative_mode == "analytic":
            return {k: np.asarray(self.analytic_partials(k, u, v), float) for k in keys}
        return self._fd_partials(u, v, keys)

    def _fd_partials(self, u, v, keys):
        hu = self.h_geom * self.span_u
        hv = self.h_geom * self.span_v
        cache: dict[tuple[int, int], np.ndarray] = {}

        def at(a, b):
            if (a, b) not in cache:
                cache[(a, b)] = self.position(u + a * hu, v + b * hv)
            return cache[(a, b)]

        out = {}
        for i, j in keys:
            acc = 0.0
            for a, ca in _STENCILS[i].items():
                for b, cb in _STENCILS[j].items():
                    acc = acc + (ca * cb) * at(a, b)
            out[(i, j)] = acc / (hu**i * hv**j)
        return out

    def check_periodicity(self, n: int = 7, tol: float = 1e-12) -> bool:
        u0, u1, v0, v1 = self.domain
        s = np.linspace(0.0, 1.0, n)
        ok = True
        if self.periodic_u:
            vv = v0 + s * self.span_v
            ok &= bool(np.all(np.abs(self.position(u0, vv) - self.position(u1, vv)) <= tol))
        if self.periodic_v:
            uu = u0 + s * self.span_u
            ok &= bool(np.all(np.abs(self.position(uu, v0) - self.position(uu, v1)) <= tol))
        return ok


@dataclass(frozen=True, eq=False)
class GeometrySample:
    """Geometry at one or many surface points (arrays broadcast over points)."""

    u: np.ndarray
    v: np.ndarray
    position: np.ndarray
    tangent_u: np.ndarray
    tangent_v: np.ndarray
    normal: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    det_g: np.ndarray
    K_ext: np.ndarray
    M: np.ndarray
    K_gauss: np.ndarray
    V0: np.ndarray
    mass: float = 1.0

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.M)

    @property
    def sqrt_g(self) -> np.ndarray:
        return np.sqrt(self.det_g)

    def at(self, index) -> "GeometrySample":
        """Sub-sample selected by a numpy index over the point axes."""
        kw = {}
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            kw[f.name] = val if f.name == "mass" else np.asarray(val)[index]
        return GeometrySample(**kw)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def sample_geometry(chart: SurfaceChart, u, v, mass: float = 1.0) -> GeometrySample:
    """Evaluate first and second fundamental forms, curvatures and V0.

    Raises
    ------
    DegenerateChart
        If ``det g <= 1e-14`` at any requested point.
    """
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    d = chart.partials(u, v, order=2)
    ru, rv = d[(1, 0)], d[(0, 1)]
    E, F, G = _dot(ru, ru), _dot(ru, rv), _dot(rv, rv)
    # orthogonal charts: keep roundoff in g_uv from switching on the mixed stencil
    F = np.where(np.abs(F) <= M_ROUNDOFF * np.sqrt(E * G), 0.0, F)
    det_g = E * G - F * F
    bad = ~(det_g > EPS_DEG)
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        uu, vv, dd = (np.atleast_1d(x)[tuple(idx)] for x in (u, v, det_g))
        raise DegenerateChart(float(uu), float(vv), float(dd))
    cross = np.cross(ru, rv)
    normal = cross / np.linalg.norm(cross, axis=-1)[..., None]
    L = -_dot(d[(2, 0)], normal)
    Mx = -_dot(d[(1, 1)], normal)
    N = -_dot(d[(0, 2)], normal)
    Mx = np.where(np.abs(Mx) <= M_ROUNDOFF * (np.abs(L) * np.sqrt(G / E) + np.abs(N) * np.sqrt(E / G)), 0.0, Mx)
    g = np.stack([np.stack([E, F], -1), np.stack([F, G], -1)], -2)
    g_inv = np.stack([np.stack([G, -F], -1), np.stack([-F, E], -1)], -2) / det_g[..., None, None]
    K_ext = np.stack([np.stack([L, Mx], -1), np.stack([Mx, N], -1)], -2)
    M = (G * L - 2 * F * Mx + E * N) / det_g
    # the trace cancels on minimal surfaces; snap roundoff residue to exact zero
    M_scale = (np.abs(G * L) + 2 * np.abs(F * Mx) + np.abs(E * N)) / det_g
    M = np.where(np.abs(M) <= M_ROUNDOFF * M_scale, 0.0, M)
    K_gauss = (L * N - Mx * Mx) / det_g
    V0 = -((M / 2) ** 2 - K_gauss) / (2 * mass)
    return GeometrySample(
        u=u, v=v, position=d[(0, 0)], tangent_u=ru, tangent_v=rv, normal=normal,
        g=g, g_inv=g_inv, det_g=det_g, K_ext=K_ext, M=M, K_gauss=K_gauss, V0=V0, mass=mass,
    )


def geometric_potential(sample: GeometrySample, mass: float) -> np.ndarray:
    """Curvature-induced potential ``-(1/2m)((M/2)^2 - K)`` (hbar = 1)."""
    if mass <= 0:
        raise ValueError("mass must be positive")
    return -((sample.M / 2) ** 2 - sample.K_gauss) / (2 * mass)


def xi_factor(sample: GeometrySample, x3) -> np.ndarray:
    """Volume ratio ``sqrt(G)/sqrt(g) = 1 - 2 (M/2) x3 + K x3^2``."""
    x3 = np.asarray(x3, float)
    if np.any(np.abs(x3 * sample.M) > 0.5):
        warnings.warn("|x3 * M| > 0.5: offset is not small against the curvature radius", stacklevel=2)
    return 1.0 - 2.0 * (sample.M / 2) * x3 + sample.K_gauss * x3**2


def offset_metric(sample: GeometrySample, x3) -> np.ndarray:
    """Metric ``G_ab(x3) = g - 2 K x3 + K g^{-1} K x3^2`` of the parallel surface."""
    x3 = np.asarray(x3, float)
    if np.any(np.abs(x3 * sample.M) > 0.5):
        warnings.warn("|x3 * M| > 0.5: offset is not small against the curvature radius", stacklevel=2)
    K = sample.K_ext
    KgK = K @ sample.g_inv @ K
    t = x3[..., None, None]
    return sample.g - 2.0 * K * t + KgK * t**2


def intrinsic_gauss_curvature(chart: SurfaceChart, u, v) -> np.ndarray:
    """Gaussian curvature from the metric and its derivatives (Brioschi formula)."""
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    d = chart.partials(u, v, order=3)
    ru, rv = d[(1, 0)], d[(0, 1)]
    ruu, ruv, rvv = d[(2, 0)], d[(1, 1)], d[(0, 2)]
    ruuv, ruvv = d[(2, 1)], d[(1, 2)]
    E, F, G = _dot(ru, ru), _dot(ru, rv), _dot(rv, rv)
    det_g = E * G - F * F
    if np.any(~(det_g > EPS_DEG)):
        idx = np.argwhere(np.atleast_1d(~(det_g > EPS_DEG)))[0]
        raise DegenerateChart(float(np.atleast_1d(u)[tuple(idx)]), float(np.atleast_1d(v)[tuple(idx)]),
                              float(np.atleast_1d(det_g)[tuple(idx)]))
    Eu, Ev = 2 * _dot(ru, ruu), 2 * _dot(ru, ruv)
    Gu, Gv = 2 * _dot(rv, ruv), 2 * _dot(rv, rvv)
    Fu = _dot(ruu, rv) + _dot(ru, ruv)
    Fv = _dot(ruv, rv) + _dot(ru, rvv)
    Evv = 2 * (_dot(ruv, ruv) + _dot(ru, ruvv))
    Guu = 2 * (_dot(ruv, ruv) + _dot(rv, ruuv))
    Fuv = _dot(ruuv, rv) + _dot(ruu, rvv) + _dot(ruv, ruv) + _dot(ru, ruvv)

    a11 = -0.5 * Evv + Fuv - 0.5 * Guu
    m1 = np.stack([
        np.stack([a11, 0.5 * Eu, Fu - 0.5 * Ev], -1),
        np.stack([Fv - 0.5 * Gu, E, F], -1),
        np.stack([0.5 * Gv, F, G], -1),
    ], -2)
    z = np.zeros_like(E)
    m2 = np.stack([
        np.stack([z, 0.5 * Ev, 0.5 * Gu], -1),
        np.stack([0.5 * Ev, E, F], -1),
        np.stack([0.5 * Gu, F, G], -1),
    ], -2)
    return (np.linalg.det(m1) - np.linalg.det(m2)) / det_g**2


# ---------------------------------------------------------------------------
# presets

def _plane_expr(u, v, Lx, Ly):
    return (u, v, sp.Integer(0))


def _cylinder_expr(u, v, R, L):
    return (R * sp.cos(u), R * sp.sin(u), v)


def _sphere_expr(u, v, R):
    return (R * sp.sin(u) * sp.cos(v), R * sp.sin(u) * sp.sin(v), R * sp.cos(u))


def _torus_expr(u, v, R, r):
    rho = R + r * sp.cos(v)
    return (rho * sp.cos(u), rho * sp.sin(u), r * sp.sin(v))


def _catenoid_expr(u, v, a, vmax):
    return (a * sp.cosh(v / a) * sp.cos(u), a * sp.cosh(v / a) * sp.sin(u), v)


def _helicoid_expr(u, v, a, vmax):
    return (v * sp.cos(u), v * sp.sin(u), a * u)


_EXPRS = {
    "plane": (("Lx", "Ly"), _plane_expr),
    "cylinder": (("R", "L"), _cylinder_expr),
    "sphere": (("R",), _sphere_expr),
    "torus": (("R", "r"), _torus_expr),
    "catenoid": (("a", "vmax"), _catenoid_expr),
    "helicoid": (("a", "vmax"), _helicoid_expr),
}


@lru_cache(maxsize=None)
def _compiled(kind: str):
    names, build = _EXPRS[kind]
    u, v = sp.symbols("u v", real=True)
    params = sp.symbols(names, positive=True)
    expr = sp.Matrix(build(u, v, *params))
    funcs = {}
    for i in range(4):
        for j in range(4 - i):
            dexpr = expr
            if i:
                dexpr = dexpr.diff(u, i)
            if j:
                dexpr = dexpr.diff(v, j)
            funcs[(i, j)] = sp.lambdify((u, v, *params), list(dexpr), "numpy")
    return names, funcs


def _preset_chart(kind, params, domain, periodic_u=False, periodic_v=False, pole_edges=(),
                  derivative_mode="analytic", h_geom=1e-4):
    names, funcs = _compiled(kind)
    args = tuple(float(params[n]) for n in names)

    def partial(key, u, v):
        comps = funcs[key](u, v, *args)
        return np.stack([np.broadcast_to(np.asarray(c, float), np.shape(u)) for c in comps], -1)

    def rmap(u, v):
        return partial((0, 0), u, v)

    return SurfaceChart(
        name=kind, map=rmap, domain=tuple(float(x) for x in domain),
        periodic_u=periodic_u, periodic_v=periodic_v, derivative_mode=derivative_mode,
        h_geom=h_geom, params=dict(zip(names, args)), pole_edges=tuple(pole_edges),
        analytic_partials=partial,
    )


def plane(Lx: float = 1.0, Ly: float = 1.0, periodic: bool = False, derivative_mode: str = "analytic") -> SurfaceChart:
    return _preset_chart("plane", {"Lx": Lx, "Ly": Ly}, (0.0, Lx, 0.0, Ly), periodic, periodic,
                         derivative_mode=derivative_mode)


def cylinder(R: float = 1.0, L: float = 1.0, periodic_z: bool = False, derivative_mode: str = "analytic") -> SurfaceChart:
    """u = azimuth (periodic), v = axial coordinate in [0, L]."""
    return _preset_chart("cylinder", {"R": R, "L": L}, (0.0, 2 * np.pi, 0.0, L), True, periodic_z,
                         derivative_mode=derivative_mode)


def sphere(R: float = 1.0, derivative_mode: str = "analytic") -> SurfaceChart:
    """u = colatitude (poles trimmed by 1e-3), v = azimuth (periodic)."""
    return _preset_chart("sphere", {"R": R}, (POLE_MARGIN, np.pi - POLE_MARGIN, 0.0, 2 * np.pi),
                         False, True, pole_edges=("u",), derivative_mode=derivative_mode)


def torus(R: float = 2.0, r: float = 1.0, derivative_mode: str = "analytic") -> SurfaceChart:
    """u = toroidal angle, v = poloidal angle (v = 0 on the outer equator)."""
    if r >= R:
        raise ValueError("torus needs r < R to be an immersion")
    return _preset_chart("torus", {"R": R, "r": r}, (0.0, 2 * np.pi, 0.0, 2 * np.pi), True, True,
                         derivative_mode=derivative_mode)


def catenoid(a: float = 1.0, vmax: float = 1.0, derivative_mode: str = "analytic") -> SurfaceChart:
    return _preset_chart("catenoid", {"a": a, "vmax": vmax}, (0.0, 2 * np.pi, -vmax, vmax), True, False,
                         derivative_mode=derivative_mode)


def helicoid(a: float = 1.0, vmax: float = 1.0, derivative_mode: str = "analytic") -> SurfaceChart:
    return _preset_chart("helicoid", {"a": a, "vmax": vmax}, (-np.pi, np.pi, -vmax, vmax), False, False,
                         derivative_mode=derivative_mode)


PRESETS: dict[str, Callable[..., SurfaceChart]] = {
    "plane": plane,
    "cylinder": cylinder,
    "sphere": sphere,
    "torus": torus,
    "catenoid": catenoid,
    "helicoid": helicoid,
}


def make_chart(name: str, **params) -> SurfaceChart:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown surface preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**params)


def load_chart_csv(path, name: str | None = None, periodic_u: bool = False, periodic_v: bool = False,
                   h_geom: float = 1e-4) -> SurfaceChart:
    """Chart from a tabulated position grid (CSV columns ``u,v,x,y,z``).

    The table must cover a full tensor grid.  Positions are interpolated with
    quintic splines; derivatives are taken by finite differences.  A periodic
    direction must include both domain ends (duplicated seam).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = {"u", "v", "x", "y", "z"} - set(rows[0] if rows else ())
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    data = np.array([[float(r[k]) for k in ("u", "v", "x", "y", "z")] for r in rows])
    us, vs = np.unique(data[:, 0]), np.unique(data[:, 1])
    if len(us) * len(vs) != len(data):
        raise ValueError(f"{path}: rows do not form a full (u, v) grid")
    order = np.lexsort((data[:, 1], data[:, 0]))
    xyz = data[order, 2:].reshape(len(us), len(vs), 3)
    ku, kv = min(5, len(us) - 1), min(5, len(vs) - 1)
    splines = [RectBivariateSpline(us, vs, xyz[..., c], kx=ku, ky=kv, s=0) for c in range(3)]
    u0, u1, v0, v1 = us[0], us[-1], vs[0], vs[-1]

    def rmap(u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        if periodic_u:
            u = u0 + np.mod(u - u0, u1 - u0)
        if periodic_v:
            v = v0 + np.mod(v - v0, v1 - v0)
        return np.stack([s.ev(u, v) for s in splines], -1)

    return SurfaceChart(name=name or path.stem, map=rmap, domain=(u0, u1, v0, v1),
                        periodic_u=periodic_u, periodic_v=periodic_v, derivative_mode="fd", h_geom=h_geom)
