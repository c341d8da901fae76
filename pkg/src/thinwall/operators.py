"""Discrete Hamiltonians on surface and slab grids.

All operators act on nodal values and are self-adjoint (when they should be)
in the weighted inner product ``<a, b> = sum_i w_i conj(a_i) b_i`` with the
grid weights ``w`` (``sqrt g h_u h_v`` on surfaces, ``sqrt g xi h_u h_v h3``
in slabs).  Kinetic terms are assembled as ``-(1/2m) W^{-1} L`` with ``L`` a
symmetric flux matrix; first-order terms use the skew split
``1/2 (A.grad + div(A .))`` so that they are anti-self-adjoint.

Sign convention: ``H = (p - qA)^2 / 2m - q A_t`` with ``p = -i grad``, which
expands to ``-lap/2m + (iq/m) A.grad + (iq/2m) div A + q^2 A^2 / 2m - q A_t``.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sps

from thinwall import __version__
from thinwall.errors import GridMismatch
from thinwall.fields import VectorPotentialField, decompose_on_surface, zero_field
from thinwall.geometry import GeometrySample, offset_metric, xi_factor
from thinwall.grids import SlabGrid, SurfaceGrid


@dataclass(frozen=True)
class ParticleParams:
    mass: float = 1.0
    charge: float = 0.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class BoundaryCondition:
    """Slab face condition: hard wall, or ``(d_3 - c_A iq A_3 + c_M M) chi = 0``."""

    variant: str = "dirichlet"
    c_A: float = 2.0
    c_M: float = 2.0

    def __post_init__(self):
        if self.variant not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary variant {self.variant!r}")
        if not (np.isfinite(self.c_A) and np.isfinite(self.c_M)):
            raise ValueError("constraint coefficients must be finite")

    @classmethod
    def dirichlet(cls) -> "BoundaryCondition":
        return cls("dirichlet")

    @classmethod
    def neumann(cls, c_A: float = 2.0, c_M: float = 2.0) -> "BoundaryCondition":
        return cls("neumann", c_A, c_M)

    def describe(self) -> dict:
        if self.variant == "dirichlet":
            return {"variant": "dirichlet"}
        return {"variant": "neumann", "c_A": self.c_A, "c_M": self.c_M}


@dataclass(frozen=True)
class ModelVariant:
    kind: str = "variational"
    coef_adv: float = 1.0

    def __post_init__(self):
        if self.kind not in ("naive", "variational", "slab"):
            raise ValueError(f"unknown model variant {self.kind!r}")

    @classmethod
    def naive(cls) -> "ModelVariant":
        return cls("naive")

    @classmethod
    def variational(cls, coef_adv: float = 1.0) -> "ModelVariant":
        return cls("variational", coef_adv)

    @classmethod
    def slab(cls) -> "ModelVariant":
        return cls("slab")


@dataclass(eq=False)
class DiscreteOperator:
    """Sparse complex Hamiltonian with its quadrature weights and metadata.

    ``metadata`` is JSON-serializable and survives :meth:`save`/:meth:`load`;
    ``extras`` carries per-node diagnostic arrays that are not serialized.
    """

    matrix: sps.csr_matrix
    weights: np.ndarray
    metadata: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        m = sps.csr_matrix(self.matrix, dtype=complex)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        self.matrix = m
        self.weights = np.asarray(self.weights, float)
        if self.matrix.shape != (len(self.weights), len(self.weights)):
            raise ValueError("matrix and weights disagree in dimension")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def scale(self) -> float:
        """Largest entry modulus, the reference for relative tolerances."""
        return float(np.max(np.abs(self.matrix.data))) if self.matrix.nnz else 0.0

    def symmetrized(self) -> sps.csr_matrix:
        """``W^{1/2} H W^{-1/2}``: Hermitian iff H is self-adjoint in the weighted product."""
        r = np.sqrt(self.weights)
        return (sps.diags(r) @ self.matrix @ sps.diags(1.0 / r)).tocsr()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def save(self, path) -> None:
        """Write ``# {json header}`` then ``row,col,re,im`` triplets (atomic)."""
        path = Path(path)
        coo = self.matrix.tocoo()
        header = {"format": "thinwall-operator/1", "dimension": self.dimension,
                  "metadata": self.metadata, "weights": self.weights.tolist()}
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write("# " + json.dumps(header) + "\n")
            fh.write("row,col,re,im\n")
            for r, c, z in zip(coo.row, coo.col, coo.data):
                fh.write(f"{int(r)},{int(c)},{float(z.real)!r},{float(z.imag)!r}\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "DiscreteOperator":
        with open(path) as fh:
            header = json.loads(fh.readline()[2:])
            fh.readline()
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        n = header["dimension"]
        if data.size:
            m = sps.coo_matrix((data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))),
                               shape=(n, n))
        else:
            m = sps.coo_matrix((n, n), dtype=complex)
        return cls(m.tocsr(), np.array(header["weights"]), header["metadata"])


def _base_metadata(grid, params: ParticleParams, field: VectorPotentialField | None) -> dict:
    return {
        "version": __version__,
        "grid": grid.describe(),
        "grid_digest": grid.digest(),
        "mass": params.mass,
        "charge": params.charge,
        "gauge": field.label if field is not None else "none",
        "field_kind": field.kind if field is not None else "none",
        "units": "hbar = c = 1",
    }


def _diag(values) -> sps.csr_matrix:
    return sps.diags(np.asarray(values, complex)).tocsr()


# ---------------------------------------------------------------------------
# surface operators

def _laplace_beltrami_matrix(grid: SurfaceGrid, m: float) -> sps.csr_matrix:
    su, _, _ = grid.u_faces
    sv, _, _ = grid.v_faces
    s = grid.sample
    L = grid.flux_matrix(su.sqrt_g * su.g_inv[..., 0, 0], sv.sqrt_g * sv.g_inv[..., 1, 1],
                         s.sqrt_g * s.g_inv[:, 0, 1])
    return (sps.diags(-0.5 / (m * grid.weights)) @ L).tocsr()


def assemble_laplace_beltrami(grid: SurfaceGrid, m: float = 1.0) -> DiscreteOperator:
    """Kinetic operator ``-(1/2m) (1/sqrt g) d_a (sqrt g g^{ab} d_b)``."""
    params = ParticleParams(m, 0.0)
    meta = _base_metadata(grid, params, None)
    meta.update(variant="laplace_beltrami", bc=list(grid.kinds))
    return DiscreteOperator(_laplace_beltrami_matrix(grid, m), grid.weights, meta)


def _surface_parts(grid: SurfaceGrid, field: VectorPotentialField, params: ParticleParams, include_v0: bool = True):
    """Shared pieces of the reduced Hamiltonians."""
    m, q = params.mass, params.charge
    s = grid.sample
    fs = decompose_on_surface(field, s)
    A2 = np.sum(fs.A**2, -1)
    At = field.scalar(s.position)
    V0 = -((s.M / 2) ** 2 - s.K_gauss) / (2 * m) if include_v0 else np.zeros(grid.size)
    base = _laplace_beltrami_matrix(grid, m) + _diag(V0 + q * q * A2 / (2 * m) - q * At)
    adv = (sps.diags(1.0 / grid.weights) @ grid.skew_advection(fs.A_par[:, 0], fs.A_par[:, 1])).tocsr()
    return fs, base, adv


def assemble_naive_hamiltonian(grid: SurfaceGrid, field: VectorPotentialField | None, params: ParticleParams,
                               divergence: str = "ambient", include_v0: bool = True) -> DiscreteOperator:
    """Reduced Hamiltonian of direct dimensional reduction.

    ``H = LB + V0 + q^2 A^2/2m - q A_t + (iq/m) S[A_par] + (iq/2m) D - (iq/m) A3 M``
    where ``S`` is the skew advection and ``D`` the divergence bracket
    ``div_par A_par + d3 A3 + M A3``.  ``divergence="ambient"`` evaluates
    ``D`` as the ambient divergence (equal by the surface identity);
    ``"surface"`` assembles it from grid differences.  The ``A3 d3`` term
    has no meaning on a surface grid and is dropped (recorded in metadata).
    ``include_v0=False`` leaves out the geometric potential.
    """
    field = field or zero_field()
    m, q = params.mass, params.charge
    fs, base, adv = _surface_parts(grid, field, params, include_v0)
    s = grid.sample
    if divergence == "ambient":
        bracket = fs.div3
    elif divergence == "surface":
        bracket = grid.surface_divergence(fs.A_par[:, 0], fs.A_par[:, 1]) + fs.dA3_dx3 + s.M * fs.A3
    else:
        raise ValueError(f"divergence must be 'ambient' or 'surface', got {divergence!r}")
    anomalous = -1j * q / m * fs.A3 * s.M
    H = base + 1j * q / m * adv + _diag(1j * q / (2 * m) * bracket + anomalous)
    meta = _base_metadata(grid, params, field)
    meta.update(variant="naive", coef_adv=1.0, divergence=divergence, geometric_potential=include_v0, dropped_terms=["A3*d3"], bc=list(grid.kinds))
    extras = {"anomalous_diagonal": anomalous,
              "bookkeeping_diagonal": 1j * q / (2 * m) * (bracket - fs.div3),
              "A3": fs.A3, "M": s.M}
    return DiscreteOperator(H, grid.weights, meta, extras)


def assemble_variational_hamiltonian(grid: SurfaceGrid, field: VectorPotentialField | None, params: ParticleParams,
                                     variant: ModelVariant | None = None, include_v0: bool = True) -> DiscreteOperator:
    """Reduced Hamiltonian of the variational treatment (no ``A3 M`` coupling).

    ``H = LB + V0 + q^2 A^2/2m - q A_t + coef_adv (iq/m) S[A_par] + (iq/2m) div A``
    """
    field = field or zero_field()
    variant = variant or ModelVariant.variational()
    if variant.kind != "variational":
        raise ValueError("variant must be variational")
    m, q = params.mass, params.charge
    fs, base, adv = _surface_parts(grid, field, params, include_v0)
    H = base + variant.coef_adv * 1j * q / m * adv + _diag(1j * q / (2 * m) * fs.div3)
    meta = _base_metadata(grid, params, field)
    meta.update(variant="variational", coef_adv=variant.coef_adv, geometric_potential=include_v0, bc=list(grid.kinds))
    extras = {"A3": fs.A3, "M": grid.sample.M}
    return DiscreteOperator(H, grid.weights, meta, extras)


_SHARED_KEYS = ("grid_digest", "mass", "charge", "gauge")


def anomalous_delta(H_naive: DiscreteOperator, H_var: DiscreteOperator) -> DiscreteOperator:
    """``H_naive - H_var``: the anomalous ``-(iq/m) A3 M`` diagonal plus bookkeeping.

    The split is stored in ``extras``: ``anomalous_diagonal`` and
    ``bookkeeping_diagonal`` (nonzero only for the ``"surface"`` bracket).
    """
    a, b = H_naive.metadata, H_var.metadata
    if a.get("variant") != "naive" or b.get("variant") != "variational":
        raise GridMismatch("expected a naive and a variational operator")
    for k in _SHARED_KEYS:
        if a.get(k) != b.get(k):
            raise GridMismatch(f"operators differ in {k}: {a.get(k)!r} vs {b.get(k)!r}")
    if b.get("coef_adv") != 1.0:
        raise GridMismatch("anomalous_delta needs coef_adv = 1")
    D = H_naive.matrix - H_var.matrix
    meta = {k: a[k] for k in _SHARED_KEYS}
    meta.update(variant="anomalous_delta", grid=a["grid"], divergence=a.get("divergence"))
    extras = {k: H_naive.extras[k] for k in ("anomalous_diagonal", "bookkeeping_diagonal") if k in H_naive.extras}
    return DiscreteOperator(D, H_naive.weights, meta, extras)


# ---------------------------------------------------------------------------
# slab operator

def _confinement(V_conf, x3: np.ndarray, m: float) -> np.ndarray:
    if V_conf is None or V_conf == "none":
        return np.zeros_like(x3)
    if isinstance(V_conf, dict):
        kind, omega = V_conf.get("kind"), V_conf.get("omega")
    else:
        kind, omega = V_conf
    if kind != "harmonic":
        raise ValueError(f"unknown confinement {V_conf!r}")
    return 0.5 * m * float(omega) ** 2 * x3**2


def _layer_geometry(s: GeometrySample, x3: float):
    """``sqrt g xi``, inverse offset metric and tangent vectors of the parallel surface."""
    xi = xi_factor(s, x3)
    Ginv = np.linalg.inv(offset_metric(s, x3))
    return s.sqrt_g * xi, Ginv


def assemble_slab_hamiltonian(slab: SlabGrid, field: VectorPotentialField | None, params: ParticleParams,
                              bc: BoundaryCondition | None = None, V_conf=None) -> DiscreteOperator:
    """Full minimally coupled operator in a slab ``|x3| <= eps`` around the surface.

    ``x3`` runs along ``-normal``; the metric is ``G_ab(x3) + dx3^2`` with
    measure ``sqrt g xi``.  Dirichlet faces drop the face layers; the
    Neumann-type constraint keeps them and eliminates a reflected ghost node
    so that ``d3 chi = -(c_M M - c_A iq A_3) chi`` on both faces, with the
    covariant ``A_3 = -A.normal``.
    """
    field = field or zero_field()
    bc = bc or BoundaryCondition()
    m, q = params.mass, params.charge
    surf = slab.surface
    s = surf.sample
    ns, n3, h3 = surf.size, slab.n3, slab.h3
    area = surf.h_u * surf.h_v
    lay = slab.layers(bc.variant)
    nl = len(lay)
    slot = -np.ones(n3, int)
    slot[lay] = np.arange(nl)
    trap = np.ones(n3)
    if bc.variant == "neumann":
        trap[0] = trap[-1] = 0.5
    su, _, _ = surf.u_faces
    sv, _, _ = surf.v_faces
    X = slab.positions()
    A = field(X.reshape(-1, 3)).reshape(ns, n3, 3)
    if not np.all(np.isfinite(A)):
        from thinwall.errors import SourceOnSurface
        raise SourceOnSurface(f"field {field.label!r} is not finite inside the slab")
    shape_op = np.einsum("nac,ncb->nab", s.g_inv, s.K_ext)   # S^a_b
    dN = [shape_op[:, 0, b, None] * s.tangent_u + shape_op[:, 1, b, None] * s.tangent_v for b in range(2)]
    r = [s.tangent_u, s.tangent_v]
    sn = np.arange(ns)

    Lr, Lc, Lv = [], [], []
    Br, Bc, Bv = [], [], []

    def put(store, mat, j):
        coo = mat.tocoo()
        store[0].append(coo.row * nl + j)
        store[1].append(coo.col * nl + j)
        store[2].append(coo.data.astype(complex))

    for k in lay:
        j = slot[k]
        x3 = slab.x3[k]
        cu_s, Gu = _layer_geometry(su, x3)
        cv_s, Gv = _layer_geometry(sv, x3)
        cn_s, Gn = _layer_geometry(s, x3)
        Lk = surf.flux_matrix(cu_s * Gu[..., 0, 0], cv_s * Gv[..., 1, 1], cn_s * Gn[:, 0, 1], h3=h3 * trap[k])
        put((Lr, Lc, Lv), Lk, j)
        Xb = [r[b] - x3 * dN[b] for b in range(2)]
        cov = np.stack([np.sum(A[:, k] * Xb[b], -1) for b in range(2)], -1)
        con = np.einsum("nab,nb->na", Gn, cov)
        Bk = surf.skew_advection(con[:, 0], con[:, 1], sqrtg=cn_s, h3=h3 * trap[k])
        put((Br, Bc, Bv), Bk, j)

    # transverse flux and advection between neighbouring layers
    xi = slab.xi
    A3up = -np.sum(A * s.normal[:, None, :], -1)           # contravariant x3 component
    flux3 = s.sqrt_g[:, None] * xi * A3up
    for k in range(n3 - 1):
        x3f = 0.5 * (slab.x3[k] + slab.x3[k + 1])
        c = s.sqrt_g * xi_factor(s, x3f) * area / h3
        a, b = slot[k], slot[k + 1]
        if a >= 0 and b >= 0:
            Lr += [sn * nl + a, sn * nl + b, sn * nl + a, sn * nl + b]
            Lc += [sn * nl + b, sn * nl + a, sn * nl + a, sn * nl + b]
            Lv += [c + 0j, c + 0j, -c + 0j, -c + 0j]
            w = area / 4.0 * (flux3[:, k] + flux3[:, k + 1])
            Br += [sn * nl + a, sn * nl + b]
            Bc += [sn * nl + b, sn * nl + a]
            Bv += [w + 0j, -w + 0j]
        elif a >= 0 or b >= 0:
            kk = a if a >= 0 else b
            Lr.append(sn * nl + kk)
            Lc.append(sn * nl + kk)
            Lv.append(-c + 0j)

    if bc.variant == "neumann":
        for k, sign, kin in ((0, 1.0, 0), (n3 - 1, -1.0, n3 - 2)):
            A3cov = -np.sum(A[:, k] * s.normal, -1)
            beta = bc.c_M * s.M - bc.c_A * 1j * q * A3cov
            x3f = 0.5 * (slab.x3[kin] + slab.x3[kin + 1])
            Lr.append(sn * nl + slot[k])
            Lc.append(sn * nl + slot[k])
            Lv.append(sign * beta * s.sqrt_g * xi_factor(s, x3f) * area)

    N = ns * nl
    L = sps.coo_matrix((np.concatenate(Lv), (np.concatenate(Lr), np.concatenate(Lc))), shape=(N, N)).tocsr()
    B = sps.coo_matrix((np.concatenate(Bv), (np.concatenate(Br), np.concatenate(Bc))), shape=(N, N)).tocsr()
    W = slab.weights(bc.variant)
    Winv = sps.diags(1.0 / W)
    A2 = np.sum(A**2, -1)[:, lay].ravel()
    At = field.scalar(X.reshape(-1, 3)).reshape(ns, n3)[:, lay].ravel()
    Vc = np.broadcast_to(_confinement(V_conf, slab.x3, m)[lay], (ns, nl)).ravel()
    H = Winv @ (-0.5 / m * L + 1j * q / m * B) + _diag(q * q * A2 / (2 * m) - q * At + Vc)
    meta = _base_metadata(slab, params, field)
    meta.update(variant="slab", bc=bc.describe(), layers=lay.tolist(), n_surface=ns,
                V_conf=V_conf if V_conf is None or isinstance(V_conf, (str, dict)) else list(V_conf))
    return DiscreteOperator(H.tocsr(), W, meta)


# ---------------------------------------------------------------------------
# transverse reduction check

def xi_reduction_check(sample: GeometrySample, test_profile: Callable[[np.ndarray], np.ndarray], h3: float) -> float:
    """Defect of ``xi^{-1} d3 (xi d3 psi) = d3^2 chi + ((M/2)^2 - K) chi`` at ``x3 = 0``.

    ``psi = xi^{-1/2} chi``; both sides use the same three-point stencil of
    width ``h3`` so the defect is the discretization error of the reduction,
    ``O(h3^2)`` for smooth profiles and exactly zero where ``xi = 1``.
    """
    x = np.array([-h3, 0.0, h3])
    chi = np.asarray(test_profile(x), float)
    xi = xi_factor(sample, x)
    psi = chi / np.sqrt(xi)
    xi_half = xi_factor(sample, np.array([-h3 / 2, h3 / 2]))
    lhs = (xi_half[1] * (psi[2] - psi[1]) - xi_half[0] * (psi[1] - psi[0])) / (h3**2 * xi[1])
    rhs = ((chi[2] - chi[1]) - (chi[1] - chi[0])) / h3**2 + ((sample.M / 2) ** 2 - sample.K_gauss) * chi[1]
    return float(lhs - rhs)
