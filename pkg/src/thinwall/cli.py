"""Command-line front end: ``thinwall COMMAND --config PATH|PRESET [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 eigensolver did not converge
(partial results are still written and flagged), 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_NUMERICAL = 0, 2, 3, 4
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _write(out: Path, name: str, text: str, written: list) -> None:
    from thinwall.solver import _atomic_write
    _atomic_write(out / name, text)
    written.append(name)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands

def run_geometry(sc, out: Path, seed, written) -> dict:
    import numpy as np
    from thinwall.geometry import intrinsic_gauss_curvature
    from thinwall.scenario import build_surface_grid

    grid = build_surface_grid(sc)
    s = grid.sample
    V0 = -((s.M / 2) ** 2 - s.K_gauss) / (2 * float(sc["particle"]["mass"]))
    lines = ["u,v,M,K_gauss,V0,det_g"]
    for row in zip(s.u, s.v, s.M, s.K_gauss, V0, s.det_g):
        lines.append(",".join(repr(float(x)) for x in row))
    _write(out, "geometry.csv", "\n".join(lines) + "\n", written)
    K_int = intrinsic_gauss_curvature(grid.chart, s.u, s.v)
    summary = {c: {"min": float(np.min(a)), "max": float(np.max(a)), "mean": float(np.mean(a))}
               for c, a in (("M", s.M), ("K_gauss", s.K_gauss), ("V0", V0), ("det_g", s.det_g))}
    summary["egregium_max_defect"] = float(np.max(np.abs(K_int - s.K_gauss)))
    _write(out, "geometry_summary.json", _json(summary), written)
    return {"grids": {"surface": grid.digest()}}


def _solve(op, cfg, out: Path, prefix: str, written) -> object:
    from thinwall.errors import NotConverged
    from thinwall.solver import solve_lowest
    try:
        res = solve_lowest(op, cfg)
    except NotConverged as exc:
        if exc.result is not None:
            _write(out, f"{prefix}.csv", exc.result.csv_text(), written)
            _write(out, f"{prefix}.json", _json(exc.result.to_dict()), written)
        else:
            _write(out, f"{prefix}.json", _json({"partial": True, "eigenvalues": [], "error": str(exc)}), written)
        raise
    _write(out, f"{prefix}.csv", res.csv_text(), written)
    _write(out, f"{prefix}.json", _json(res.to_dict()), written)
    return res


def run_spectrum(sc, out: Path, seed, written) -> dict:
    from thinwall.analysis import hermiticity_residual
    from thinwall.scenario import build_operator, build_solver_config

    op, grid = build_operator(sc)
    res = _solve(op, build_solver_config(sc, seed), out, "spectrum", written)
    info = {"hermiticity_residual": hermiticity_residual(op), "dimension": op.dimension, "method": res.method}
    ac = sc["analysis"]["cluster_tol"]
    if ac is not None:
        info["clusters"] = res.regroup(float(ac))
    _write(out, "spectrum_info.json", _json(info), written)
    return {"grids": {"operator": grid.digest()}}


def run_compare(sc, out: Path, seed, written) -> dict:
    from thinwall.analysis import compare_variants, hermiticity_residual
    from thinwall.operators import anomalous_delta
    from thinwall.scenario import build_operator, build_solver_config

    cfg = build_solver_config(sc, seed)
    opn, grid = build_operator(sc, "naive")
    opv, _ = build_operator(sc, "variational")
    rn = _solve(opn, cfg, out, "spectrum_naive", written)
    rv = _solve(opv, cfg, out, "spectrum_variational", written)
    delta = anomalous_delta(opn, opv) if float(sc["model"]["coef_adv"]) == 1.0 else None
    rep = compare_variants(rn, rv, None if delta is None else delta.extras["anomalous_diagonal"])
    payload = rep.to_dict()
    payload["hermiticity_residual"] = {"naive": hermiticity_residual(opn), "variational": hermiticity_residual(opv)}
    _write(out, "compare.json", _json(payload), written)
    _write(out, "compare.txt", rep.text(), written)
    if delta is not None:
        s = grid.sample
        lines = ["u,v,anomalous_im,bookkeeping_im"]
        for u, v, a, b in zip(s.u, s.v, delta.extras["anomalous_diagonal"], delta.extras["bookkeeping_diagonal"]):
            lines.append(f"{float(u)!r},{float(v)!r},{float(a.imag)!r},{float(b.imag)!r}")
        _write(out, "anomalous_profile.csv", "\n".join(lines) + "\n", written)
    return {"grids": {"surface": grid.digest()}}


def run_separability(sc, out: Path, seed, written) -> dict:
    import numpy as np
    from thinwall.analysis import schmidt_spectrum
    from thinwall.operators import BoundaryCondition, assemble_slab_hamiltonian
    from thinwall.scenario import (build_bc, build_confinement, build_field, build_params, build_slab,
                                   build_solver_config)
    from thinwall.solver import SolverConfig

    slab = build_slab(sc)
    n_states = int(sc["analysis"]["states"])
    cfg = build_solver_config(sc, seed)
    cfg = SolverConfig(**{**cfg.__dict__, "k": max(cfg.k, n_states), "restart": None})
    field_, params, Vc = build_field(sc), build_params(sc), build_confinement(sc)
    bc = build_bc(sc)
    res = _solve(assemble_slab_hamiltonian(slab, field_, params, bc, Vc), cfg, out, "spectrum", written)
    reports = [schmidt_spectrum(res.eigenvectors[:, i], slab) for i in range(n_states)]
    payload = {"bc": bc.describe(), "indices": [r.separability_index for r in reports]}
    lines = ["state,index,sigma"]
    for i, r in enumerate(reports):
        lines += [f"{i},{j},{float(s)!r}" for j, s in enumerate(r.singular_values)]
    _write(out, "schmidt.csv", "\n".join(lines) + "\n", written)
    if sc["analysis"]["baseline"] and bc.variant != "dirichlet":
        rb = _solve(assemble_slab_hamiltonian(slab, field_, params, BoundaryCondition.dirichlet(), Vc), cfg, out,
                    "spectrum_baseline", written)
        base = [schmidt_spectrum(rb.eigenvectors[:, i], slab).separability_index for i in range(n_states)]
        payload["baseline_indices"] = base
        payload["ratio"] = float(max(payload["indices"]) / max(max(base), np.finfo(float).tiny))
    _write(out, "separability.json", _json(payload), written)
    return {"grids": {"slab": slab.digest()}}


def run_gauge_check(sc, out: Path, seed, written) -> dict:
    import numpy as np
    from thinwall.fields import identity_on_grid
    from thinwall.scenario import build_field, build_surface_grid

    field_ = build_field(sc)
    grid = build_surface_grid(sc)
    r = identity_on_grid(grid, field_)
    s = grid.sample
    lines = ["u,v,identity,div3,defect"]
    for row in zip(s.u, s.v, r["identity"], r["div3"], r["defect"]):
        lines.append(",".join(repr(float(x)) for x in row))
    _write(out, "gauge_check.csv", "\n".join(lines) + "\n", written)
    payload = {"field": field_.label, "max_abs_defect": float(np.max(np.abs(r["defect"]))),
               "h_u": grid.h_u, "h_v": grid.h_v}
    grids = {"surface": grid.digest()}
    if sc["analysis"]["refine"]:
        fine = build_surface_grid(sc, refine=2)
        e2 = float(np.max(np.abs(identity_on_grid(fine, field_)["defect"])))
        payload["max_abs_defect_refined"] = e2
        payload["observed_order"] = float(np.log2(payload["max_abs_defect"] / e2)) if e2 > 0 else None
        grids["surface_refined"] = fine.digest()
    _write(out, "gauge_check.json", _json(payload), written)
    return {"grids": grids}


def run_xi_check(sc, out: Path, seed, written) -> dict:
    import numpy as np
    from thinwall.geometry import sample_geometry
    from thinwall.operators import xi_reduction_check
    from thinwall.scenario import build_chart

    x = sc["xi_check"]
    chart = build_chart(sc)
    sample = sample_geometry(chart, float(x["u"]), float(x["v"]), float(sc["particle"]["mass"]))
    c, w = float(x["profile_center"]), float(x["profile_width"])
    profile = lambda t: np.exp(-((t - c) / w) ** 2)  # noqa: E731
    hs = [float(h) for h in x["h3"]]
    defects = [xi_reduction_check(sample, profile, h) for h in hs]
    ratios = [abs(defects[i]) / abs(defects[i + 1]) if defects[i + 1] != 0 else None for i in range(len(hs) - 1)]
    lines = ["h3,defect"] + [f"{h!r},{d!r}" for h, d in zip(hs, defects)]
    _write(out, "xi_check.csv", "\n".join(lines) + "\n", written)
    _write(out, "xi_check.json", _json({"h3": hs, "defect": defects, "ratios": ratios,
                                         "M": float(sample.M), "K_gauss": float(sample.K_gauss)}), written)
    return {"grids": {}}


COMMANDS = {
    "geometry": run_geometry,
    "spectrum": run_spectrum,
    "compare": run_compare,
    "separability": run_separability,
    "gauge-check": run_gauge_check,
    "xi-check": run_xi_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thinwall", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS) + ["presets"])
    ap.add_argument("--config", help="scenario TOML, run manifest JSON, or preset name (AC1..AC8, circle)")
    ap.add_argument("--out", default="out", help="output directory (created if missing)")
    ap.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread count")
    ap.add_argument("--seed", type=int, default=None, help="overrides solver.seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    from thinwall import __version__
    from thinwall.errors import ConfigError, NotConverged, ThinwallError
    from thinwall.scenario import load_scenario, preset_names

    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sc = load_scenario(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    manifest = {"tool": "thinwall", "version": __version__, "command": args.command,
                "units": {"hbar": 1, "c": 1, "biot_savart_prefactor": 1},
                "seed": args.seed if args.seed is not None else sc["solver"]["seed"],
                "threads": args.threads, "scenario": sc.to_dict()}
    code, status = EXIT_OK, "ok"
    try:
        extra = COMMANDS[args.command](sc, out, args.seed, written)
        manifest.update(extra)
    except ConfigError as exc:
        code, status = EXIT_CONFIG, f"config error: {exc}"
    except NotConverged as exc:
        code, status = EXIT_CONVERGENCE, f"not converged: {exc}"
    except (ThinwallError, ArithmeticError, ValueError, RuntimeError) as exc:
        code, status = EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"
    manifest["status"] = status
    manifest["outputs"] = written
    from thinwall.solver import _atomic_write
    _atomic_write(out / "manifest.json", _json(manifest))
    if code != EXIT_OK:
        print(status, file=sys.stderr)
    else:
        print(f"{args.command}: wrote {', '.join(written)} to {out}")
    return code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
