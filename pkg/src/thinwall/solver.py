"""Low-lying eigenpairs and norm evolution of discrete Hamiltonians.

Everything is done on the symmetrized matrix ``S = W^{1/2} H W^{-1/2}``,
whose Euclidean geometry is the weighted one of ``H``.  Small problems go
through dense LAPACK (this path doubles as the oracle for the sparse one);
larger ones through ARPACK in shift-invert mode with a sparse LU of
``S - sigma I``.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from thinwall.errors import NotConverged, SingularShift, StabilityViolation
from thinwall.operators import DiscreteOperator

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Eigensolver settings.

    ``sigma=None`` places the shift just below the Gershgorin bound so the
    pairs nearest to it are the lowest ones.  ``restart`` is ARPACK's ``ncv``.
    """

    k: int = 6
    sigma: complex | None = None
    tol: float = 1e-8
    max_iter: int | None = None
    restart: int | None = None
    seed: int = 0
    cluster_tol: float = 1e-6
    dense_threshold: int = 600
    method: str = "auto"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.restart is not None and self.restart < 2 * self.k + 2:
            raise ValueError("restart must be >= 2k + 2")
        if self.method not in ("auto", "dense", "sparse"):
            raise ValueError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sigma"] is not None:
            d["sigma"] = [complex(d["sigma"]).real, complex(d["sigma"]).imag]
        return d


def _clusters(vals: np.ndarray, rel_tol: float) -> list[list[int]]:
    if len(vals) == 0:
        return []
    tol = rel_tol * max(float(np.max(np.abs(vals))), np.finfo(float).tiny)
    groups = [[0]]
    for i in range(1, len(vals)):
        if abs(vals[i] - vals[i - 1]) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


@dataclass(eq=False)
class SpectrumResult:
    """Eigenpairs sorted by real part.

    ``eigenvectors[:, i]`` has unit norm in the operator's weighted inner
    product.  ``converged`` is False for pairs returned from an interrupted
    iteration.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    hermiticity_defect: float
    clusters: list[list[int]]
    converged: np.ndarray
    method: str
    sigma: complex
    metadata: dict = field(default_factory=dict)
    weights: np.ndarray | None = None

    @property
    def max_imag(self) -> float:
        return float(np.max(np.abs(self.eigenvalues.imag))) if len(self.eigenvalues) else 0.0

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    def regroup(self, rel_tol: float) -> list[list[int]]:
        return _clusters(self.eigenvalues, rel_tol)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "residuals": self.residuals.tolist(),
            "converged": self.converged.tolist(),
            "partial": not self.all_converged,
            "hermiticity_defect": self.hermiticity_defect,
            "max_imag": self.max_imag,
            "clusters": self.clusters,
            "method": self.method,
            "sigma": [complex(self.sigma).real, complex(self.sigma).imag],
            "metadata": self.metadata,
        }

    def write_json(self, path) -> None:
        _atomic_write(path, json.dumps(self.to_dict(), indent=2))

    def csv_text(self) -> str:
        rows = ["index,re,im,residual,converged,cluster"]
        owner = {i: c for c, grp in enumerate(self.clusters) for i in grp}
        for i, z in enumerate(self.eigenvalues):
            rows.append(f"{i},{float(z.real)!r},{float(z.imag)!r},{float(self.residuals[i])!r},{int(self.converged[i])},{owner.get(i, -1)}")
        return "\n".join(rows) + "\n"

    def write_csv(self, path) -> None:
        _atomic_write(path, self.csv_text())

    def write_eigenvector_csv(self, path, index: int, shape: tuple[int, ...] | None = None) -> None:
        """Dump one eigenvector as ``node,re,im`` (plus grid indices when ``shape`` is given)."""
        v = self.eigenvectors[:, index]
        lines = []
        if shape is None:
            lines.append("node,re,im")
            lines += [f"{i},{float(z.real)!r},{float(z.imag)!r}" for i, z in enumerate(v)]
        else:
            idx = np.unravel_index(np.arange(len(v)), shape)
            lines.append(",".join(f"i{d}" for d in range(len(shape))) + ",re,im")
            for n, z in enumerate(v):
                lines.append(",".join(str(int(a[n])) for a in idx) + f",{float(z.real)!r},{float(z.imag)!r}")
        _atomic_write(path, "\n".join(lines) + "\n")


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def hermiticity_defect(S: sps.spmatrix) -> float:
    """``max |(S - S^H)/2|`` of an already symmetrized matrix."""
    D = (S - S.conj().T) / 2
    D = sps.csr_matrix(D)
    return float(np.max(np.abs(D.data))) if D.nnz else 0.0


def gershgorin_lower(H: sps.spmatrix) -> float:
    """Lower bound on the real part of every eigenvalue."""
    H = sps.csr_matrix(H)
    d = H.diagonal()
    off = np.asarray(abs(H).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d.real - off))


def _default_sigma(op: DiscreteOperator) -> float:
    lo = gershgorin_lower(op.matrix)
    return lo - 1e-3 * (1.0 + abs(lo))


def _order(vals: np.ndarray) -> np.ndarray:
    """Sort by real part, ties (to 1e-10 relative) broken by imaginary part."""
    if len(vals) == 0:
        return np.arange(0)
    q = 1e-10 * max(1.0, float(np.max(np.abs(vals))))
    return np.lexsort((vals.imag, np.round(vals.real / q)))


def _finish(S, vals, vecs, op, cfg, method, sigma, converged=None) -> SpectrumResult:
    order = _order(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    nrm = np.linalg.norm(vecs, axis=0)
    vecs = vecs / np.where(nrm > 0, nrm, 1.0)
    # fix the global phase so the largest component is real and positive
    piv = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])]
    vecs = vecs * (np.abs(piv) / np.where(piv != 0, piv, 1.0))[None, :]
    res = np.linalg.norm(S @ vecs - vecs * vals[None, :], axis=0)
    if converged is None:
        converged = res <= cfg.tol * max(op.scale, 1.0)
    else:
        converged = np.asarray(converged)[order]
    v_orig = vecs / np.sqrt(op.weights)[:, None]
    return SpectrumResult(vals, v_orig, res, hermiticity_defect(S), _clusters(vals, cfg.cluster_tol),
                          np.asarray(converged, bool), method, sigma, dict(op.metadata), op.weights)


def _solve_dense(S, op: DiscreteOperator, cfg: SolverConfig, herm: bool) -> SpectrumResult:
    A = S.toarray()
    if herm:
        vals, vecs = sla.eigh((A + A.conj().T) / 2)
        vals = vals.astype(complex)
        method = "dense-eigh"
    else:
        vals, vecs = sla.eig(A)
        method = "dense-eig"
    k = min(cfg.k, len(vals))
    if cfg.sigma is None:
        pick = _order(vals)[:k]
        sigma = complex(_default_sigma(op))
    else:
        sigma = complex(cfg.sigma)
        pick = np.argsort(np.abs(vals - sigma), kind="stable")[:k]
    return _finish(S, vals[pick], vecs[:, pick], op, cfg, method, sigma)


def _shift_invert(S, sigma: complex):
    N = S.shape[0]
    M = sps.csc_matrix(S - sigma * sps.identity(N, dtype=S.dtype, format="csc"))
    try:
        lu = spla.splu(M)
    except RuntimeError as exc:
        raise SingularShift(f"factorization of H - sigma I failed at sigma={sigma}: {exc}; perturb the shift") from exc
    if not np.all(np.isfinite(lu.U.diagonal())) or np.min(np.abs(lu.U.diagonal())) == 0:
        raise SingularShift(f"H - sigma I is singular at sigma={sigma}; perturb the shift")
    return spla.LinearOperator((N, N), matvec=lu.solve, dtype=S.dtype)


def _solve_sparse(S, op: DiscreteOperator, cfg: SolverConfig, herm: bool) -> SpectrumResult:
    N = S.shape[0]
    sigma = complex(_default_sigma(op)) if cfg.sigma is None else complex(cfg.sigma)
    real = herm and not np.any(S.data.imag) and sigma.imag == 0
    if real:
        S_use = sps.csr_matrix(S.real)
        sigma_use = sigma.real
    else:
        S_use = S
        sigma_use = sigma
    OPinv = _shift_invert(S_use, sigma_use)
    rng = np.random.default_rng(cfg.seed)
    v0 = rng.standard_normal(N)
    if not real:
        v0 = v0 + 1j * rng.standard_normal(N)
    # a few extra pairs keep ARPACK from dropping one member of a degenerate cluster
    k_int = min(N - 2, cfg.k + max(4, cfg.k // 2))
    kw = dict(k=k_int, sigma=sigma_use, OPinv=OPinv, v0=v0, tol=cfg.tol * 1e-2,
              maxiter=cfg.max_iter, ncv=cfg.restart or min(N, max(2 * cfg.k + 2, 20)))
    try:
        if herm:
            vals, vecs = spla.eigsh(S_use, which="LM", **kw)
            method = "lanczos" if real else "arnoldi-hermitian"
        else:
            vals, vecs = spla.eigs(S_use, which="LM", **kw)
            method = "arnoldi"
    except spla.ArpackNoConvergence as exc:
        vals, vecs = np.asarray(exc.eigenvalues), np.asarray(exc.eigenvectors)
        partial = _finish(S, vals.astype(complex), vecs.astype(complex).reshape(N, -1), op, cfg,
                          "arnoldi" if not herm else "lanczos", sigma, converged=np.zeros(len(vals), bool))
        raise NotConverged(f"ARPACK stopped with {len(vals)} of {k_int} pairs", result=partial) from exc
    vals = vals.astype(complex)
    if herm:
        vals = vals.real.astype(complex)
    pick = np.argsort(np.abs(vals - sigma), kind="stable")[:cfg.k]
    return _finish(S, vals[pick], vecs[:, pick].astype(complex), op, cfg, method, sigma)


def solve_lowest(op: DiscreteOperator, cfg: SolverConfig | None = None) -> SpectrumResult:
    """The ``cfg.k`` eigenpairs nearest ``cfg.sigma`` (the lowest by default).

    Raises
    ------
    NotConverged
        ARPACK hit ``max_iter``; ``exc.result`` holds the partial pairs.
    SingularShift
        ``H - sigma I`` could not be factorized.
    """
    cfg = cfg or SolverConfig()
    N = op.dimension
    if N < cfg.k + 2:
        raise ValueError(f"operator dimension {N} is too small for k={cfg.k}")
    S = op.symmetrized().astype(complex)
    herm = hermiticity_defect(S) <= HERMITIAN_TOL * max(op.scale, 1.0)
    dense = cfg.method == "dense" or (cfg.method == "auto" and N < cfg.dense_threshold)
    if dense:
        return _solve_dense(S, op, cfg, herm)
    if N < cfg.k + 2 or cfg.k >= N - 1:
        raise ValueError("sparse path needs k < N - 1")
    return _solve_sparse(S, op, cfg, herm)


# ---------------------------------------------------------------------------
# time evolution

def weighted_norm(op: DiscreteOperator, psi) -> float:
    psi = np.asarray(psi)
    return float(np.sqrt(np.sum(op.weights * np.abs(psi) ** 2)))


def norm_rate(op: DiscreteOperator, psi) -> float:
    """Instantaneous ``dN/dt = 2 Im <psi, H psi>`` for ``i dpsi/dt = H psi``."""
    psi = np.asarray(psi, complex)
    z = np.vdot(op.weights * psi, op.matrix @ psi)
    return float(2 * z.imag)


def predicted_drift_rate(op: DiscreteOperator, psi) -> float:
    """Norm drift rate from the anomalous diagonal alone, ``-2 (q/m) <A3 M>``."""
    if "anomalous_diagonal" not in op.extras:
        return 0.0
    psi = np.asarray(psi, complex)
    diag = op.extras["anomalous_diagonal"]
    return float(2 * np.sum(op.weights * np.abs(psi) ** 2 * diag.imag))


def norm_drift(op: DiscreteOperator, steps: int, dt: float, start) -> np.ndarray:
    """Implicit-midpoint evolution; returns the weighted norm after each step.

    Entry 0 is the (normalized) start, so the result has ``steps + 1`` values.
    Raises StabilityViolation when ``dt * max|H| > 1``.
    """
    if dt * op.scale > 1.0:
        raise StabilityViolation(f"dt * max|H| = {dt * op.scale:.3g} > 1")
    psi = np.asarray(start, complex)
    psi = psi / weighted_norm(op, psi)
    N = op.dimension
    I = sps.identity(N, dtype=complex, format="csc")
    Hc = sps.csc_matrix(op.matrix)
    lu = spla.splu(sps.csc_matrix(I + 0.5j * dt * Hc))
    rhs_op = sps.csr_matrix(I - 0.5j * dt * Hc)
    out = np.empty(steps + 1)
    out[0] = weighted_norm(op, psi)
    for n in range(steps):
        psi = lu.solve(rhs_op @ psi)
        out[n + 1] = weighted_norm(op, psi)
    return out
