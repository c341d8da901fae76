"""Claim-level diagnostics built on spectra and eigenvectors."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from thinwall.errors import DegenerateTracking, MetadataMismatch, ShapeMismatch
from thinwall.fields import VectorPotentialField
from thinwall.grids import SlabGrid
from thinwall.operators import DiscreteOperator
from thinwall.solver import SolverConfig, SpectrumResult, hermiticity_defect, solve_lowest

IMAG_FLAG = 1e-8


def hermiticity_residual(op: DiscreteOperator) -> float:
    """``max |(S - S^H)/2|`` with ``S = W^{1/2} H W^{-1/2}`` (weighted adjoint defect)."""
    return hermiticity_defect(op.symmetrized())


# ---------------------------------------------------------------------------
# separability

@dataclass(frozen=True)
class SchmidtReport:
    """Singular values of a slab state viewed as a surface x transverse matrix.

    Values are normalized so that their squares sum to one.
    """

    singular_values: np.ndarray
    separability_index: float
    bipartition: str = "surface|transverse"

    def csv_text(self) -> str:
        return "index,sigma\n" + "".join(f"{i},{float(s)!r}\n" for i, s in enumerate(self.singular_values))

    def to_dict(self) -> dict:
        return {"singular_values": self.singular_values.tolist(),
                "separability_index": self.separability_index, "bipartition": self.bipartition}


def schmidt_spectrum(state, slab: SlabGrid, n_values: int | None = None) -> SchmidtReport:
    """Schmidt decomposition of a slab state with symmetric sqrt-measure weighting.

    ``state`` may cover all ``n_surface * n3`` nodes or, for hard-wall slabs,
    only the ``n3 - 2`` interior layers (face values are then zero).
    """
    v = np.asarray(state).ravel()
    ns, n3 = slab.surface.size, slab.n3
    if v.size == ns * n3:
        w = slab.full_weights()
        cols = n3
    elif v.size == ns * (n3 - 2):
        w = slab.weights("dirichlet")
        cols = n3 - 2
    else:
        raise ShapeMismatch(f"state has {v.size} entries; expected {ns * n3} or {ns * (n3 - 2)}")
    X = (np.sqrt(w) * v).reshape(ns, cols)
    sv = np.linalg.svd(X, compute_uv=False)
    total = np.sqrt(np.sum(sv**2))
    if total == 0:
        raise ShapeMismatch("state is identically zero")
    sv = sv / total
    idx = float(sv[1] / sv[0]) if len(sv) > 1 else 0.0
    if n_values is not None:
        sv = sv[:n_values]
    return SchmidtReport(sv, idx)


# ---------------------------------------------------------------------------
# variant comparison

_MATCH_KEYS = ("grid_digest", "mass", "charge", "gauge")


@dataclass(frozen=True)
class ComparisonReport:
    naive: np.ndarray
    variational: np.ndarray
    max_imag_naive: float
    max_imag_variational: float
    hermiticity_naive: float
    hermiticity_variational: float
    anomalous_profile: dict = field(default_factory=dict)

    @property
    def naive_flagged(self) -> bool:
        return self.max_imag_naive > IMAG_FLAG

    @property
    def variational_flagged(self) -> bool:
        return self.max_imag_variational > IMAG_FLAG

    @property
    def verdict(self) -> str:
        if self.naive_flagged and not self.variational_flagged:
            return "naive spectrum is complex; variational spectrum is real"
        if not self.naive_flagged and not self.variational_flagged:
            return "both spectra are real"
        if self.variational_flagged and not self.naive_flagged:
            return "variational spectrum is complex; naive spectrum is real"
        return "both spectra are complex"

    def to_dict(self) -> dict:
        pair = lambda z: [float(z.real), float(z.imag)]  # noqa: E731
        return {
            "table": [{"index": i, "naive": pair(a), "variational": pair(b)}
                      for i, (a, b) in enumerate(zip(self.naive, self.variational))],
            "max_imag_naive": self.max_imag_naive,
            "max_imag_variational": self.max_imag_variational,
            "naive_flagged": self.naive_flagged,
            "variational_flagged": self.variational_flagged,
            "hermiticity_naive": self.hermiticity_naive,
            "hermiticity_variational": self.hermiticity_variational,
            "anomalous_profile": self.anomalous_profile,
            "verdict": self.verdict,
        }

    def text(self) -> str:
        lines = [f"{'i':>3}  {'naive re':>14} {'naive im':>12}  {'var re':>14} {'var im':>12}"]
        for i, (a, b) in enumerate(zip(self.naive, self.variational)):
            mark = " *" if abs(a.imag) > IMAG_FLAG or abs(b.imag) > IMAG_FLAG else ""
            lines.append(f"{i:>3}  {a.real:>14.8f} {a.imag:>12.3e}  {b.real:>14.8f} {b.imag:>12.3e}{mark}")
        lines.append(f"max |Im| naive {self.max_imag_naive:.3e}, variational {self.max_imag_variational:.3e}")
        lines.append(self.verdict)
        return "\n".join(lines) + "\n"


def compare_variants(spec_naive: SpectrumResult, spec_var: SpectrumResult,
                     anomalous_diagonal=None) -> ComparisonReport:
    """Align two spectra by sorted real part and flag complex eigenvalues."""
    for k in _MATCH_KEYS:
        if spec_naive.metadata.get(k) != spec_var.metadata.get(k):
            raise MetadataMismatch(f"spectra differ in {k}: {spec_naive.metadata.get(k)!r} vs {spec_var.metadata.get(k)!r}")
    n = min(len(spec_naive.eigenvalues), len(spec_var.eigenvalues))
    profile = {}
    if anomalous_diagonal is not None:
        a = np.abs(np.asarray(anomalous_diagonal))
        profile = {"max": float(a.max()), "mean": float(a.mean()), "nonzero_nodes": int(np.count_nonzero(a))}
    return ComparisonReport(spec_naive.eigenvalues[:n], spec_var.eigenvalues[:n], spec_naive.max_imag,
                            spec_var.max_imag, spec_naive.hermiticity_defect, spec_var.hermiticity_defect, profile)


# ---------------------------------------------------------------------------
# field derivative probe

def field_derivative_probe(assemble_fn: Callable[[VectorPotentialField], DiscreteOperator],
                           field_family: Callable[[float], VectorPotentialField],
                           s0: float, ds: float, k: int, cfg: SolverConfig | None = None,
                           min_overlap: float = 0.7) -> np.ndarray:
    """Central difference ``d Re(lambda_i) / ds`` of the ``k`` lowest states at ``s0``.

    States at ``s0 + ds`` are matched to those at ``s0 - ds`` by maximal
    weighted overlap.
    """
    cfg = cfg or SolverConfig(k=k)
    wide = SolverConfig(**{**cfg.__dict__, "k": k + 2, "restart": None})
    lo = solve_lowest(assemble_fn(field_family(s0 - ds)), wide)
    hi = solve_lowest(assemble_fn(field_family(s0 + ds)), wide)
    w = lo.weights
    O = np.abs((lo.eigenvectors.conj() * w[:, None]).T @ hi.eigenvectors)
    out = np.empty(k)
    used = set()
    for i in range(k):
        j = int(np.argmax(O[i]))
        if O[i, j] < min_overlap or j in used:
            raise DegenerateTracking(f"state {i}: best overlap {O[i, j]:.3f} with state {j}")
        used.add(j)
        out[i] = (hi.eigenvalues[j].real - lo.eigenvalues[i].real) / (2 * ds)
    return out


def write_report(path, payload: dict) -> None:
    from thinwall.solver import _atomic_write
    _atomic_write(path, json.dumps(payload, indent=2))
