"""Scenario files: a TOML description of one surface/field/particle/solver run.

Every section is optional and falls back to the defaults below; unknown keys
raise ConfigError.  Example::

    [surface]
    preset = "sphere"
    params = { R = 1.0 }

    [field]
    preset = "uniform"
    params = { az = 1.0 }

    [particle]
    mass = 1.0
    charge = 1.0

    [grid]
    n_u = 12
    n_v = 24

    [solver]
    k = 6
"""
from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from thinwall.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SCHEMA: dict[str, dict] = {
    "surface": {"preset": "sphere", "params": {}, "derivative_mode": "analytic", "csv": None,
                "periodic_u": False, "periodic_v": False},
    "field": {"preset": "zero", "params": {}, "sources": [], "quadrature_n": 8},
    "particle": {"mass": 1.0, "charge": 0.0},
    "grid": {"n_u": 16, "n_v": 32, "edge": "dirichlet", "n3": 8, "eps": 0.05},
    "model": {"variant": "variational", "coef_adv": 1.0, "divergence": "ambient",
              "include_geometric_potential": True},
    "boundary": {"variant": "dirichlet", "c_A": 2.0, "c_M": 2.0},
    "confinement": {"kind": "none", "omega": 0.0},
    "solver": {"k": 6, "sigma": None, "tol": 1e-8, "max_iter": None, "restart": None, "seed": 0,
               "cluster_tol": 1e-6, "dense_threshold": 600, "method": "auto"},
    "analysis": {"states": 3, "baseline": True, "refine": True, "cluster_tol": None},
    "xi_check": {"u": 1.0, "v": 0.5, "h3": [1e-2, 5e-3, 2.5e-3], "profile_center": 0.3, "profile_width": 1.0},
}
TOP_KEYS = {"name", "command", "description"}
COMMANDS = ("geometry", "spectrum", "compare", "separability", "gauge-check", "xi-check")


@dataclass
class Scenario:
    name: str = "scenario"
    command: str | None = None
    description: str = ""
    sections: dict = field(default_factory=lambda: copy.deepcopy(SCHEMA))
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key: str) -> dict:
        return self.sections[key]

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "Scenario":
        unknown = set(data) - set(SCHEMA) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        sections = copy.deepcopy(SCHEMA)
        for sec, values in data.items():
            if sec in TOP_KEYS:
                continue
            if not isinstance(values, dict):
                raise ConfigError(f"[{sec}] must be a table")
            bad = set(values) - set(SCHEMA[sec])
            if bad:
                raise ConfigError(f"unknown keys in [{sec}]: {sorted(bad)}")
            sections[sec].update(copy.deepcopy(values))
        cmd = data.get("command")
        if cmd is not None and cmd not in COMMANDS:
            raise ConfigError(f"unknown command {cmd!r}")
        sc = cls(str(data.get("name", "scenario")), cmd, str(data.get("description", "")), sections,
                 Path(base_dir) if base_dir else Path.cwd())
        sc.validate()
        return sc

    def to_dict(self) -> dict:
        out = {"name": self.name, "description": self.description}
        if self.command:
            out["command"] = self.command
        out.update(copy.deepcopy(self.sections))
        # file references are stored resolved so a manifest can be re-run from anywhere
        out["field"]["sources"] = [str(self.resolve(p)) for p in out["field"]["sources"]]
        if out["surface"]["csv"]:
            out["surface"]["csv"] = str(self.resolve(out["surface"]["csv"]))
        return out

    def validate(self) -> None:
        s = self.sections
        try:
            if not float(s["particle"]["mass"]) > 0:
                raise ConfigError("particle.mass must be positive")
            for key in ("n_u", "n_v", "n3"):
                if int(s["grid"][key]) < 4:
                    raise ConfigError(f"grid.{key} must be >= 4")
            if not float(s["grid"]["eps"]) > 0:
                raise ConfigError("grid.eps must be positive")
            if s["model"]["variant"] not in ("naive", "variational", "slab"):
                raise ConfigError(f"model.variant {s['model']['variant']!r} is not naive|variational|slab")
            if s["boundary"]["variant"] not in ("dirichlet", "neumann"):
                raise ConfigError("boundary.variant must be dirichlet or neumann")
            if s["confinement"]["kind"] not in ("none", "harmonic"):
                raise ConfigError("confinement.kind must be none or harmonic")
            if int(s["solver"]["k"]) < 1:
                raise ConfigError("solver.k must be >= 1")
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        for path in self.referenced_files():
            if not path.exists():
                raise ConfigError(f"referenced file does not exist: {path}")

    def referenced_files(self) -> list[Path]:
        files = [self.resolve(p) for p in self.sections["field"]["sources"]]
        if self.sections["surface"]["csv"]:
            files.append(self.resolve(self.sections["surface"]["csv"]))
        return files

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def preset_names() -> list[str]:
    root = resources.files("thinwall") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_scenario(ref: str) -> Scenario:
    """Load a TOML file, a manifest JSON written by a previous run, or a preset name."""
    path = Path(ref)
    if path.exists():
        text = path.read_text()
        if path.suffix == ".json":
            try:
                data = json.loads(text)["scenario"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise ConfigError(f"{path}: not a run manifest ({exc})") from exc
        else:
            try:
                data = tomllib.loads(text)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return Scenario.from_dict(data, base_dir=path.parent.resolve())
    res = resources.files("thinwall") / "scenarios" / f"{ref}.toml"
    if res.is_file():
        return Scenario.from_dict(tomllib.loads(res.read_text()))
    raise ConfigError(f"no config file or preset named {ref!r} (presets: {', '.join(preset_names())})")


# ---------------------------------------------------------------------------
# builders

def build_chart(sc: Scenario):
    from thinwall import geometry as G
    s = sc["surface"]
    try:
        if s["csv"]:
            chart = G.load_chart_csv(sc.resolve(s["csv"]), periodic_u=s["periodic_u"], periodic_v=s["periodic_v"])
        else:
            chart = G.make_chart(s["preset"], **s["params"])
            if s["derivative_mode"] != "analytic":
                chart = chart.with_mode(s["derivative_mode"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"[surface]: {exc}") from exc
    return chart


def build_field(sc: Scenario):
    from thinwall import fields as F
    f = sc["field"]
    try:
        if f["sources"]:
            srcs = []
            for p in f["sources"]:
                srcs += F.load_current_sources(sc.resolve(p))
            bs = F.biot_savart_potential(srcs, int(f["quadrature_n"]))
            return bs if f["preset"] == "zero" else bs + F.make_field(f["preset"], **f["params"])
        return F.make_field(f["preset"], **f["params"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"[field]: {exc}") from exc


def build_surface_grid(sc: Scenario, refine: int = 1):
    from thinwall.grids import SurfaceGrid
    g = sc["grid"]
    return SurfaceGrid(build_chart(sc), int(g["n_u"]) * refine, int(g["n_v"]) * refine, g["edge"])


def build_slab(sc: Scenario, surface=None):
    from thinwall.grids import SlabGrid
    g = sc["grid"]
    return SlabGrid(surface or build_surface_grid(sc), int(g["n3"]), float(g["eps"]))


def build_params(sc: Scenario):
    from thinwall.operators import ParticleParams
    p = sc["particle"]
    return ParticleParams(float(p["mass"]), float(p["charge"]))


def build_bc(sc: Scenario):
    from thinwall.operators import BoundaryCondition
    b = sc["boundary"]
    if b["variant"] == "dirichlet":
        return BoundaryCondition.dirichlet()
    return BoundaryCondition.neumann(float(b["c_A"]), float(b["c_M"]))


def build_confinement(sc: Scenario):
    c = sc["confinement"]
    return None if c["kind"] == "none" else {"kind": "harmonic", "omega": float(c["omega"])}


def build_solver_config(sc: Scenario, seed: int | None = None):
    from thinwall.solver import SolverConfig
    s = dict(sc["solver"])
    if seed is not None:
        s["seed"] = seed
    if s["sigma"] is not None:
        sig = s["sigma"]
        s["sigma"] = complex(sig[0], sig[1]) if isinstance(sig, (list, tuple)) else complex(sig)
    try:
        return SolverConfig(**s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[solver]: {exc}") from exc


def build_operator(sc: Scenario, variant: str | None = None):
    """Assemble the scenario's Hamiltonian; returns ``(operator, grid)``."""
    from thinwall import operators as O
    variant = variant or sc["model"]["variant"]
    field_ = build_field(sc)
    params = build_params(sc)
    m = sc["model"]
    if variant == "slab":
        slab = build_slab(sc)
        return O.assemble_slab_hamiltonian(slab, field_, params, build_bc(sc), build_confinement(sc)), slab
    grid = build_surface_grid(sc)
    v0 = bool(m["include_geometric_potential"])
    if variant == "naive":
        return O.assemble_naive_hamiltonian(grid, field_, params, m["divergence"], include_v0=v0), grid
    return O.assemble_variational_hamiltonian(grid, field_, params, O.ModelVariant.variational(float(m["coef_adv"])),
                                              include_v0=v0), grid
