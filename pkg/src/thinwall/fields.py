"""Static electromagnetic potentials and their decomposition on a surface.

Natural units (hbar = c = 1) with the Biot-Savart prefactor mu0/4pi = 1, so a
current I along a polyline produces ``A(r) = I * sum int dl' / |r - r'|``.
Fields are vectorized: they map an array of points ``(..., 3)`` to
``(..., 3)``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import ellipe, ellipk

from thinwall.errors import SourceOnSurface
from thinwall.geometry import GeometrySample

DELTA = 1e-5

# 4th-order first-derivative stencil
_D1 = ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))


@dataclass(frozen=True, eq=False)
class VectorPotentialField:
    """Static vector potential ``A`` plus scalar potential ``A_t`` (V = -A_t)."""

    A: Callable[[np.ndarray], np.ndarray]
    A_t: Callable[[np.ndarray], np.ndarray] | None = None
    kind: str = "analytic"
    label: str = "field"

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return np.asarray(self.A(x), float) * np.ones(x.shape)

    def scalar(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.A_t is None:
            return np.zeros(x.shape[:-1])
        return np.asarray(self.A_t(x), float) * np.ones(x.shape[:-1])

    def scaled(self, s: float) -> "VectorPotentialField":
        At = None if self.A_t is None else (lambda x, f=self.A_t: s * f(x))
        return VectorPotentialField(lambda x, f=self.A: s * f(x), At, self.kind, f"{s:g}*{self.label}")

    def __add__(self, other: "VectorPotentialField") -> "VectorPotentialField":
        return superpose([self, other])


def superpose(fields: Sequence[VectorPotentialField]) -> VectorPotentialField:
    fields = list(fields)

    def A(x):
        total = fields[0](x)
        for f in fields[1:]:
            total = total + f(x)
        return total

    def At(x):
        total = fields[0].scalar(x)
        for f in fields[1:]:
            total = total + f.scalar(x)
        return total

    has_t = any(f.A_t is not None for f in fields)
    return VectorPotentialField(A, At if has_t else None, "superposition", "+".join(f.label for f in fields))


def zero_field() -> VectorPotentialField:
    return VectorPotentialField(lambda x: np.zeros_like(x), label="zero")


def uniform(ax: float = 0.0, ay: float = 0.0, az: float = 0.0) -> VectorPotentialField:
    """Spatially constant potential (zero magnetic field, divergence free)."""
    a = np.array([ax, ay, az], float)
    return VectorPotentialField(lambda x: np.broadcast_to(a, x.shape).copy(), label=f"uniform({ax:g},{ay:g},{az:g})")


def uniform_b(bx: float = 0.0, by: float = 0.0, bz: float = 0.0, center=(0.0, 0.0, 0.0)) -> VectorPotentialField:
    """Symmetric-gauge potential ``B x (x - c) / 2`` of a uniform magnetic field."""
    b = np.array([bx, by, bz], float)
    c = np.asarray(center, float)
    return VectorPotentialField(lambda x: 0.5 * np.cross(b, x - c), label=f"uniform_b({bx:g},{by:g},{bz:g})")


def _unit(v) -> np.ndarray:
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def wire(point=(0.0, 0.0, 0.0), direction=(0.0, 0.0, 1.0), current: float = 1.0) -> VectorPotentialField:
    """Infinite straight wire: ``A = -2 I ln(rho) t`` (reference radius 1)."""
    p = np.asarray(point, float)
    t = _unit(direction)

    def A(x):
        d = x - p
        perp = d - np.sum(d * t, -1)[..., None] * t
        rho = np.linalg.norm(perp, axis=-1)
        with np.errstate(divide="ignore"):
            mag = -2.0 * current * np.log(rho)
        return mag[..., None] * t

    return VectorPotentialField(A, label=f"wire(I={current:g})")


def _loop_bracket(m):
    """``(1 - m/2) K(m) - E(m)`` with a series where cancellation would bite."""
    m = np.asarray(m, float)
    small = m < 1e-3
    ms = np.where(small, 0.5, m)
    direct = (1 - ms / 2) * ellipk(ms) - ellipe(ms)
    series = np.pi * m**2 / 32 * (1 + 0.75 * m + 75 / 128 * m**2)
    return np.where(small, series, direct)


def loop(center=(0.0, 0.0, 0.0), radius: float = 1.0, normal=(0.0, 0.0, 1.0), current: float = 1.0) -> VectorPotentialField:
    """Circular current loop, closed form via complete elliptic integrals.

    Current flows counter-clockwise about ``normal``.
    """
    c = np.asarray(center, float)
    n = _unit(normal)
    a = float(radius)

    def A(x):
        d = x - c
        z = np.sum(d * n, -1)
        perp = d - z[..., None] * n
        rho = np.linalg.norm(perp, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        m = 4 * a * safe / ((a + safe) ** 2 + z**2)
        k = np.sqrt(m)
        aphi = np.where(rho > 0, 4 * current / k * np.sqrt(a / safe) * _loop_bracket(m), 0.0)
        phi_hat = np.cross(n, perp) / safe[..., None]
        return aphi[..., None] * phi_hat

    return VectorPotentialField(A, label=f"loop(a={a:g},I={current:g})")


def solenoid(n_turns: int, radius: float, length: float, current: float = 1.0,
             center=(0.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0)) -> VectorPotentialField:
    """Stack of ``n_turns`` coaxial loops evenly spread over ``length``."""
    n = _unit(axis)
    c = np.asarray(center, float)
    zs = np.linspace(-length / 2, length / 2, n_turns) if n_turns > 1 else np.zeros(1)
    f = superpose([loop(c + z * n, radius, n, current) for z in zs])
    return VectorPotentialField(f.A, None, "superposition", f"solenoid(n={n_turns},a={radius:g})")


def analytic(func: Callable[[np.ndarray], np.ndarray], label: str = "analytic",
             scalar: Callable[[np.ndarray], np.ndarray] | None = None) -> VectorPotentialField:
    return VectorPotentialField(func, scalar, "analytic", label)


# ---------------------------------------------------------------------------
# line currents

@dataclass(frozen=True, eq=False)
class CurrentSource:
    """Steady current along a polyline; a closed loop gets its closing segment once."""

    polyline: np.ndarray
    current: float = 1.0
    closed: bool = False

    def __post_init__(self):
        pts = np.asarray(self.polyline, float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise ValueError("polyline must be an (n >= 2, 3) array")
        if self.closed and np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0):
            raise ValueError("consecutive polyline points must be distinct")
        object.__setattr__(self, "polyline", pts)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        pts = self.polyline
        if self.closed:
            return pts, np.roll(pts, -1, axis=0)
        return pts[:-1], pts[1:]


def biot_savart_potential(sources: Sequence[CurrentSource], quadrature_n: int = 8,
                          chunk: int = 4096) -> VectorPotentialField:
    """Vector potential of line currents by Gauss-Legendre quadrature per segment."""
    if quadrature_n < 2:
        raise ValueError("quadrature_n must be >= 2")
    x, w = np.polynomial.legendre.leggauss(quadrature_n)
    pts, vecs = [], []
    for src in sources:
        a, b = src.segments()
        d = b - a
        pts.append(a[:, None, :] + 0.5 * (1 + x)[None, :, None] * d[:, None, :])
        vecs.append(src.current * 0.5 * w[None, :, None] * d[:, None, :])
    P = np.concatenate([p.reshape(-1, 3) for p in pts])
    Wv = np.concatenate([v.reshape(-1, 3) for v in vecs])

    def A(xq):
        flat = xq.reshape(-1, 3)
        out = np.empty_like(flat)
        for s in range(0, len(flat), chunk):
            r = flat[s:s + chunk, None, :] - P[None, :, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / np.linalg.norm(r, axis=-1)
            out[s:s + chunk] = inv @ Wv
        return out.reshape(xq.shape)

    return VectorPotentialField(A, kind="biot_savart", label=f"biot_savart(n_src={len(sources)},q={quadrature_n})")


def segment_potential_exact(a, b, current: float, x) -> np.ndarray:
    """Closed-form potential of one straight segment from ``a`` to ``b``."""
    a, b, x = (np.asarray(t, float) for t in (a, b, x))
    L = np.linalg.norm(b - a)
    t = (b - a) / L
    ra = np.linalg.norm(x - a, axis=-1)
    rb = np.linalg.norm(x - b, axis=-1)
    sa = np.sum((a - x) * t, -1)
    sb = np.sum((b - x) * t, -1)
    return (current * np.log((rb + sb) / (ra + sa)))[..., None] * t


def load_current_sources(csv_path, sidecar=None) -> list[CurrentSource]:
    """Read a polyline (columns ``x,y,z``) and its JSON sidecar (``current``, ``closed``)."""
    csv_path = Path(csv_path)
    sidecar = Path(sidecar) if sidecar is not None else csv_path.with_suffix(".json")
    meta = json.loads(sidecar.read_text())
    unknown = set(meta) - {"current", "closed"}
    if unknown:
        raise ValueError(f"{sidecar}: unknown keys {sorted(unknown)}")
    with csv_path.open(newline="") as fh:
        pts = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in csv.DictReader(fh)])
    return [CurrentSource(pts, float(meta["current"]), bool(meta.get("closed", False)))]


def write_current_source(src: CurrentSource, csv_path) -> None:
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "z"])
        wr.writerows(src.polyline.tolist())
    csv_path.with_suffix(".json").write_text(json.dumps({"current": src.current, "closed": src.closed}))


# ---------------------------------------------------------------------------
# differential probes

def _jacobian(f: Callable, x, h: float) -> np.ndarray:
    """``J[..., i, j] = d f_i / d x_j`` by 4th-order central differences."""
    x = np.asarray(x, float)
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        cols.append(sum(c * f(x + s * e) for s, c in _D1) / h)
    return np.stack(cols, -1)


def numeric_divergence(field: VectorPotentialField, x, h: float = 1e-3) -> np.ndarray:
    return np.trace(_jacobian(field, x, h), axis1=-2, axis2=-1)


def numeric_curl(field: VectorPotentialField, x, h: float = 1e-3) -> np.ndarray:
    J = _jacobian(field, x, h)
    return np.stack([J[..., 2, 1] - J[..., 1, 2], J[..., 0, 2] - J[..., 2, 0], J[..., 1, 0] - J[..., 0, 1]], -1)


@dataclass(frozen=True, eq=False)
class GaugeFunction:
    """Scalar gauge function with an analytic or finite-difference gradient."""

    f: Callable[[np.ndarray], np.ndarray]
    grad_f: Callable[[np.ndarray], np.ndarray] | None = None
    h: float = 1e-4

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.grad_f is not None:
            return np.asarray(self.grad_f(x), float) * np.ones(x.shape)
        return _jacobian(lambda p: np.asarray(self.f(p), float)[..., None], x, self.h)[..., 0, :]

    def check_gradient(self, points, rtol: float = 1e-6) -> bool:
        """Compare the supplied gradient with a finite-difference one."""
        pts = np.asarray(points, float)
        fd = _jacobian(lambda p: np.asarray(self.f(p), float)[..., None], pts, self.h)[..., 0, :]
        scale = max(1.0, float(np.max(np.abs(fd))))
        return bool(np.max(np.abs(self.gradient(pts) - fd)) <= rtol * scale)


def gauge_transform(field: VectorPotentialField, f: GaugeFunction) -> VectorPotentialField:
    """``A -> A + grad f``; the scalar potential is unchanged for static ``f``."""
    return VectorPotentialField(lambda x: field(x) + f.gradient(x), field.A_t, "gauge_transformed",
                                f"{field.label}+grad(f)")


# ---------------------------------------------------------------------------
# surface decomposition

@dataclass(frozen=True, eq=False)
class SurfaceFieldSample:
    """Field split into tangential and normal parts at surface points.

    ``A_par`` holds contravariant components: ``A_par^a r_a + A3 normal = A``.
    """

    A: np.ndarray
    A_par: np.ndarray
    A3: np.ndarray
    dA3_dx3: np.ndarray
    div3: np.ndarray

    def A_par_covariant(self, sample: GeometrySample) -> np.ndarray:
        return np.einsum("...ab,...b->...a", sample.g, self.A_par)

    def reconstruct(self, sample: GeometrySample) -> np.ndarray:
        return (self.A_par[..., 0:1] * sample.tangent_u + self.A_par[..., 1:2] * sample.tangent_v
                + self.A3[..., None] * sample.normal)


def _eval_finite(field: VectorPotentialField, x) -> np.ndarray:
    with np.errstate(all="ignore"):
        A = field(x)
    if not np.all(np.isfinite(A)):
        raise SourceOnSurface(f"field {field.label!r} is not finite at {np.count_nonzero(~np.isfinite(A).all(-1))} point(s)")
    return A


def decompose_on_surface(field: VectorPotentialField, sample: GeometrySample, delta: float = DELTA) -> SurfaceFieldSample:
    """Project ``A`` on the tangent basis and the normal.

    ``dA3_dx3`` is the derivative along ``+normal`` of ``A . normal`` with the
    normal frozen at the surface point; ``div3`` is the ambient divergence,
    both by central differences of step ``delta``.
    """
    x = sample.position
    n = sample.normal
    A = _eval_finite(field, x)
    A3 = np.sum(A * n, -1)
    cov = np.stack([np.sum(A * sample.tangent_u, -1), np.sum(A * sample.tangent_v, -1)], -1)
    A_par = np.einsum("...ab,...b->...a", sample.g_inv, cov)
    Ap = _eval_finite(field, x + delta * n)
    Am = _eval_finite(field, x - delta * n)
    dA3 = np.sum((Ap - Am) * n, -1) / (2 * delta)
    div3 = np.zeros_like(A3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = delta
        div3 = div3 + (_eval_finite(field, x + e)[..., j] - _eval_finite(field, x - e)[..., j]) / (2 * delta)
    return SurfaceFieldSample(A=A, A_par=A_par, A3=A3, dA3_dx3=dA3, div3=div3)


def surface_divergence_identity(s: SurfaceFieldSample, sample: GeometrySample, surface_div_Apar) -> np.ndarray:
    """``div_par A_par + d3 A3 + 2 A3 (M/2)``; equals the ambient divergence on the surface."""
    return np.asarray(surface_div_Apar) + s.dA3_dx3 + 2.0 * s.A3 * (sample.M / 2)


def lorentz_residual(field: VectorPotentialField, sample: GeometrySample, surface_div_Apar) -> np.ndarray:
    """Static Lorentz-gauge residual on the surface; zero iff div A = 0 there."""
    return surface_divergence_identity(decompose_on_surface(field, sample), sample, surface_div_Apar)


def identity_on_grid(grid, field: VectorPotentialField) -> dict[str, np.ndarray]:
    """Evaluate the divergence identity at every node of a SurfaceGrid."""
    s = decompose_on_surface(field, grid.sample)
    sdiv = grid.surface_divergence(s.A_par[:, 0], s.A_par[:, 1])
    ident = surface_divergence_identity(s, grid.sample, sdiv)
    return {"identity": ident, "div3": s.div3, "surface_div": sdiv, "defect": ident - s.div3}


FIELD_PRESETS: dict[str, Callable[..., VectorPotentialField]] = {
    "zero": zero_field,
    "uniform": uniform,
    "uniform_b": uniform_b,
    "wire": wire,
    "loop": loop,
    "solenoid": solenoid,
}


def make_field(name: str, **params) -> VectorPotentialField:
    try:
        factory = FIELD_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown field preset {name!r}; choose from {sorted(FIELD_PRESETS)}") from None
    return factory(**params)
