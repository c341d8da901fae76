"""Structured grids over a surface chart and thin slabs around it.

Node layout per parameter direction:

``periodic``
    ``n`` nodes, ``h = span / n``, node ``i`` at ``x0 + i h``.
``dirichlet``
    ``n`` interior nodes, ``h = span / (n + 1)``; the zero-valued boundary
    nodes sit on the domain ends and are not unknowns.
``neumann``
    ``n`` cell-centred nodes, ``h = span / n``; no flux crosses the domain
    ends.  Chart pole edges always use this layout.

Unknowns are ordered u-major: ``index = i_u * n_v + i_v``.  Slab unknowns are
ordered surface-major: ``index = surface_index * n_layers + layer``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from thinwall.errors import GridTooCoarse, ThickSlab
from thinwall.geometry import SurfaceChart, sample_geometry

EDGE_KINDS = ("dirichlet", "neumann")


def _layout(kind: str, x0: float, x1: float, n: int):
    span = x1 - x0
    if kind == "periodic":
        h = span / n
        return x0 + h * np.arange(n), h
    if kind == "dirichlet":
        h = span / (n + 1)
        return x0 + h * np.arange(1, n + 1), h
    if kind == "neumann":
        h = span / n
        return x0 + h * (np.arange(n) + 0.5), h
    raise ValueError(f"unknown edge kind {kind!r}")


def _faces(kind: str, x0: float, h: float, n: int):
    """Face positions with (left, right) node indices; -1 marks a Dirichlet boundary node."""
    if kind == "periodic":
        left = np.arange(n)
        return x0 + h * (left + 0.5), left, (left + 1) % n
    if kind == "dirichlet":
        k = np.arange(n + 1)
        return x0 + h * (k + 0.5), k - 1, np.where(k == n, -1, k)
    left = np.arange(n - 1)
    return x0 + h * (left + 1.0), left, left + 1


def _neighbour(kind: str, i: np.ndarray, step: int, n: int) -> np.ndarray:
    """Index of node ``i + step`` or -1 when it lies outside the unknowns."""
    j = i + step
    if kind == "periodic":
        return j % n
    return np.where((j >= 0) & (j < n), j, -1)


@dataclass(eq=False)
class SurfaceGrid:
    """Tensor grid of GeometrySamples over a chart.

    Parameters
    ----------
    chart : SurfaceChart
    n_u, n_v : int
        Number of unknown nodes per direction (each >= 4).
    edge : str or (str, str)
        Treatment of non-periodic, non-pole edges: ``"dirichlet"`` or
        ``"neumann"`` (zero flux).
    """

    chart: SurfaceChart
    n_u: int
    n_v: int
    edge: str | tuple[str, str] = "dirichlet"
    kinds: tuple[str, str] = field(init=False)

    def __post_init__(self):
        if self.n_u < 4 or self.n_v < 4 or self.n_u * self.n_v < 16:
            raise GridTooCoarse(f"surface grid {self.n_u}x{self.n_v} is below the 4x4 minimum")
        edges = (self.edge, self.edge) if isinstance(self.edge, str) else tuple(self.edge)
        kinds = []
        for name, periodic, e in (("u", self.chart.periodic_u, edges[0]), ("v", self.chart.periodic_v, edges[1])):
            if periodic:
                kinds.append("periodic")
            elif name in self.chart.pole_edges:
                kinds.append("neumann")
            else:
                if e not in EDGE_KINDS:
                    raise ValueError(f"edge must be one of {EDGE_KINDS}, got {e!r}")
                kinds.append(e)
        self.kinds = tuple(kinds)
        u0, u1, v0, v1 = self.chart.domain
        self.u_nodes, self.h_u = _layout(self.kinds[0], u0, u1, self.n_u)
        self.v_nodes, self.h_v = _layout(self.kinds[1], v0, v1, self.n_v)
        U, V = np.meshgrid(self.u_nodes, self.v_nodes, indexing="ij")
        self.sample = sample_geometry(self.chart, U.ravel(), V.ravel())
        s = self.sample
        if not (np.all(np.isfinite(s.M)) and np.all(np.isfinite(s.K_gauss))):
            raise GridTooCoarse("curvature is not finite at every node")

    @property
    def size(self) -> int:
        return self.n_u * self.n_v

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_u, self.n_v)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights sqrt(g) h_u h_v of the surface inner product."""
        return self.sample.sqrt_g * self.h_u * self.h_v

    @property
    def periodic(self) -> tuple[bool, bool]:
        return (self.kinds[0] == "periodic", self.kinds[1] == "periodic")

    @cached_property
    def u_faces(self):
        x0 = self.chart.domain[0]
        pos, left, right = _faces(self.kinds[0], x0, self.h_u, self.n_u)
        U, V = np.meshgrid(pos, self.v_nodes, indexing="ij")
        return sample_geometry(self.chart, U, V), left, right

    @cached_property
    def v_faces(self):
        x0 = self.chart.domain[2]
        pos, left, right = _faces(self.kinds[1], x0, self.h_v, self.n_v)
        U, V = np.meshgrid(self.u_nodes, pos, indexing="ij")
        return sample_geometry(self.chart, U, V), left, right

    def index(self, i, j):
        return np.asarray(i) * self.n_v + np.asarray(j)

    def node_field(self, values) -> np.ndarray:
        """Reshape a flat nodal vector to ``(n_u, n_v)``."""
        return np.asarray(values).reshape(self.n_u, self.n_v)

    def describe(self) -> dict:
        return {
            "chart": self.chart.name,
            "params": dict(self.chart.params),
            "derivative_mode": self.chart.derivative_mode,
            "n_u": self.n_u,
            "n_v": self.n_v,
            "kinds": list(self.kinds),
        }

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.describe()).encode())
        h.update(np.ascontiguousarray(self.sample.position).tobytes())
        return h.hexdigest()[:16]

    # -- discrete calculus -------------------------------------------------

    def flux_matrix(self, cu_faces, cv_faces, c_mixed=None, h3: float = 1.0) -> sps.csr_matrix:
        """Symmetric stiffness matrix of ``d_a (c^{ab} d_b)`` integrated over cells.

        ``cu_faces``/``cv_faces`` hold ``c^{uu}``/``c^{vv}`` at u-/v-faces, shaped
        like the face samples; ``c_mixed`` is ``c^{uv}`` at the nodes.  Rows
        sum to zero except where a Dirichlet boundary node is adjacent.
        """
        rows, cols, vals = [], [], []

        def add_faces(c, left, right, along_u):
            n_other = self.n_v if along_u else self.n_u
            other = np.arange(n_other)
            if along_u:
                L = self.index(left[:, None], other[None, :])
                R = self.index(right[:, None], other[None, :])
                coef = c * (self.h_v * h3 / self.h_u)
                lmask = np.broadcast_to(left[:, None] >= 0, L.shape)
                rmask = np.broadcast_to(right[:, None] >= 0, R.shape)
            else:
                L = self.index(other[:, None], left[None, :])
                R = self.index(other[:, None], right[None, :])
                coef = c * (self.h_u * h3 / self.h_v)
                lmask = np.broadcast_to(left[None, :] >= 0, L.shape)
                rmask = np.broadcast_to(right[None, :] >= 0, R.shape)
            both = lmask & rmask
            rows.extend([L[both], R[both]])
            cols.extend([R[both], L[both]])
            vals.extend([coef[both], coef[both]])
            rows.extend([L[lmask], R[rmask]])
            cols.extend([L[lmask], R[rmask]])
            vals.extend([-coef[lmask], -coef[rmask]])

        _, lu, ru = self.u_faces
        _, lv, rv = self.v_faces
        add_faces(np.asarray(cu_faces), lu, ru, True)
        add_faces(np.asarray(cv_faces), lv, rv, False)

        if c_mixed is not None:
            c = np.asarray(c_mixed).reshape(self.n_u, self.n_v)
            if np.max(np.abs(c)) > 0:
                I, J = np.meshgrid(np.arange(self.n_u), np.arange(self.n_v), indexing="ij")
                ku, kv = self.kinds
                ip, im = _neighbour(ku, I, 1, self.n_u), _neighbour(ku, I, -1, self.n_u)
                jp, jm = _neighbour(kv, J, 1, self.n_v), _neighbour(kv, J, -1, self.n_v)
                here = self.index(I, J)

                def cval(ii, jj):
                    ok = (ii >= 0) & (jj >= 0)
                    return np.where(ok, c[np.where(ii >= 0, ii, 0), np.where(jj >= 0, jj, 0)], 0.0)

                for si, sj, sign in ((ip, jp, 1.0), (ip, jm, -1.0), (im, jp, -1.0), (im, jm, 1.0)):
                    ok = (si >= 0) & (sj >= 0)
                    w = sign * (cval(si, J) + cval(I, sj)) * (h3 / 4.0)
                    rows.append(here[ok])
                    cols.append(self.index(si, sj)[ok])
                    vals.append(w[ok])

        N = self.size
        return sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(N, N)).tocsr()

    def skew_advection(self, Au, Av, sqrtg=None, h3: float = 1.0) -> sps.csr_matrix:
        """Weighted-antisymmetric stencil for ``1/2 (A.grad + div(A .))``.

        Returns the matrix ``B`` of the *integrated* form: the operator is
        ``W^{-1} B`` with ``W`` the nodal weights, and ``B = -B^T``.
        """
        sqrtg = self.sample.sqrt_g if sqrtg is None else sqrtg
        fu = (np.asarray(sqrtg) * np.asarray(Au)).reshape(self.n_u, self.n_v)
        fv = (np.asarray(sqrtg) * np.asarray(Av)).reshape(self.n_u, self.n_v)
        I, J = np.meshgrid(np.arange(self.n_u), np.arange(self.n_v), indexing="ij")
        here = self.index(I, J)
        rows, cols, vals = [], [], []
        for along_u, f, scale in ((True, fu, self.h_v * h3 / 4.0), (False, fv, self.h_u * h3 / 4.0)):
            kind, n = (self.kinds[0], self.n_u) if along_u else (self.kinds[1], self.n_v)
            base = I if along_u else J
            nb = _neighbour(kind, base, 1, n)
            ok = nb >= 0
            other = (self.index(nb, J) if along_u else self.index(I, nb))
            fn = f[np.where(ok, nb, 0), J] if along_u else f[I, np.where(ok, nb, 0)]
            w = scale * (f + fn)
            rows.extend([here[ok], other[ok]])
            cols.extend([other[ok], here[ok]])
            vals.extend([w[ok], -w[ok]])
        N = self.size
        return sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(N, N)).tocsr()

    @cached_property
    def dlog_sqrtg(self) -> np.ndarray:
        """``d_a ln sqrt(g) = g^{bc} r_c . r_ab`` at the nodes, shape ``(N, 2)``."""
        U, V = np.meshgrid(self.u_nodes, self.v_nodes, indexing="ij")
        d = self.chart.partials(U.ravel(), V.ravel(), order=2)
        r = (d[(1, 0)], d[(0, 1)])
        second = ((d[(2, 0)], d[(1, 1)]), (d[(1, 1)], d[(0, 2)]))
        gi = self.sample.g_inv
        out = np.zeros((self.size, 2))
        for a in range(2):
            for b in range(2):
                for c in range(2):
                    out[:, a] += gi[:, b, c] * np.sum(r[c] * second[a][b], -1)
        return out

    def surface_divergence(self, Au, Av) -> np.ndarray:
        """Covariant divergence ``(1/sqrt g) d_a (sqrt g A^a)`` at the nodes.

        Evaluated as ``d_a A^a + A^a d_a ln sqrt(g)``: 4th-order differences of
        the components (one-sided at non-periodic edges) and the exact
        log-measure gradient, so chart poles do not amplify the error.
        """
        Au = np.asarray(Au).reshape(self.shape)
        Av = np.asarray(Av).reshape(self.shape)
        du = _diff(Au, self.h_u, 0, self.kinds[0] == "periodic")
        dv = _diff(Av, self.h_v, 1, self.kinds[1] == "periodic")
        dl = self.dlog_sqrtg
        return (du + dv).ravel() + Au.ravel() * dl[:, 0] + Av.ravel() * dl[:, 1]

    def gradient(self, f) -> tuple[np.ndarray, np.ndarray]:
        f = np.asarray(f).reshape(self.shape)
        return (_diff(f, self.h_u, 0, self.kinds[0] == "periodic").ravel(),
                _diff(f, self.h_v, 1, self.kinds[1] == "periodic").ravel())


_EDGE4 = (np.array([-25, 48, -36, 16, -3]) / 12.0, np.array([-3, -10, 18, -6, 1]) / 12.0)


def _diff(f: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    """4th-order first derivative along ``axis``."""
    if periodic:
        return (8 * (np.roll(f, -1, axis) - np.roll(f, 1, axis))
                - (np.roll(f, -2, axis) - np.roll(f, 2, axis))) / (12 * h)
    f = np.moveaxis(f, axis, 0)
    n = f.shape[0]
    if n < 5:
        out = np.gradient(f, h, axis=0, edge_order=2)
    else:
        out = np.empty_like(f)
        out[2:-2] = (8 * (f[3:-1] - f[1:-3]) - (f[4:] - f[:-4])) / (12 * h)
        for k, c in enumerate(_EDGE4):
            out[k] = np.tensordot(c, f[:5], axes=(0, 0)) / h
            out[n - 1 - k] = -np.tensordot(c, f[::-1][:5], axes=(0, 0)) / h
    return np.moveaxis(out, 0, axis)


@dataclass(eq=False)
class SlabGrid:
    """Surface grid times transverse nodes ``x3_k = -eps + k h3``, ``k = 0..n3-1``.

    ``x3`` runs along ``-normal``; the two end layers are the slab faces.
    """

    surface: SurfaceGrid
    n3: int
    eps: float

    def __post_init__(self):
        if self.n3 < 4:
            raise GridTooCoarse(f"n3 = {self.n3} < 4")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        mmax = float(np.max(np.abs(self.surface.sample.M)))
        if self.eps * mmax > 0.2:
            raise ThickSlab(f"eps * max|M| = {self.eps * mmax:.3g} exceeds 0.2")
        self.h3 = 2 * self.eps / (self.n3 - 1)
        self.x3 = -self.eps + self.h3 * np.arange(self.n3)
        if np.any(self._xi_nodes() <= 0):
            raise ThickSlab("xi <= 0 inside the slab")

    def _xi_nodes(self):
        s = self.surface.sample
        return 1.0 - s.M[:, None] * self.x3[None, :] + s.K_gauss[:, None] * self.x3[None, :] ** 2

    @property
    def xi(self) -> np.ndarray:
        """xi at every (surface node, layer), shape ``(n_surface, n3)``."""
        return self._xi_nodes()

    def layers(self, bc: str) -> np.ndarray:
        """Indices of transverse layers carrying unknowns for a boundary condition."""
        if bc == "dirichlet":
            return np.arange(1, self.n3 - 1)
        if bc == "neumann":
            return np.arange(self.n3)
        raise ValueError(f"unknown slab boundary condition {bc!r}")

    def full_weights(self) -> np.ndarray:
        """Trapezoidal measure sqrt(g) xi h_u h_v h3 on all n_surface * n3 nodes."""
        trap = np.ones(self.n3)
        trap[0] = trap[-1] = 0.5
        w = self.surface.weights[:, None] * self._xi_nodes() * (self.h3 * trap)[None, :]
        return w.ravel()

    def weights(self, bc: str) -> np.ndarray:
        lay = self.layers(bc)
        return self.full_weights().reshape(self.surface.size, self.n3)[:, lay].ravel()

    def expand(self, vec, bc: str) -> np.ndarray:
        """Embed a vector over active layers into the full ``n_surface * n3`` layout."""
        vec = np.asarray(vec)
        lay = self.layers(bc)
        full = np.zeros((self.surface.size, self.n3), dtype=vec.dtype)
        full[:, lay] = vec.reshape(self.surface.size, len(lay))
        return full.ravel()

    def positions(self) -> np.ndarray:
        """Ambient positions ``r - x3 normal``, shape ``(n_surface, n3, 3)``."""
        s = self.surface.sample
        return s.position[:, None, :] - self.x3[None, :, None] * s.normal[:, None, :]

    def describe(self) -> dict:
        return {"surface": self.surface.describe(), "n3": self.n3, "eps": self.eps}

    def digest(self) -> str:
        return hashlib.sha256((self.surface.digest() + repr((self.n3, self.eps))).encode()).hexdigest()[:16]
