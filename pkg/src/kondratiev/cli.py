"""Command line front-end: ``kondratiev {family,solve,regularity,hardy} --config FILE --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (partial
reports are still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as cfgmod
from .config import ConfigError
from .eigensolve import ConvergenceError, NotSPDError, SolveOptions
from .geometry import (
    GeometryError,
    MultiElectronSpec,
    admissible_order,
    canonical_sequence,
    family_to_json,
    hyperfaces_at_infinity,
    lattice,
    minimal_elements,
    multi_electron_family,
)
from .mesh import MeshError, build_radial_mesh, build_tensor_mesh
from .norms import NormError, regularity_threshold
from .probes import hardy_constant, hardy_rayleigh, isomorphism_probe
from .studies import decay_fit, solve_3d, solve_magnetic, solve_radial
from .weights import WeightEvaluator

log = logging.getLogger("kondratiev")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Partial(Exception):
    """Numerical failure that still carries the results gathered so far."""

    def __init__(self, summary, message):
        super().__init__(message)
        self.summary = summary


def _num(x):
    """JSON-safe float: infinities and nan become strings."""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if np.isfinite(x):
            return x
        return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _num(v) for k, v in x.items()}
    return x


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(_num(doc), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())


def _solver_options(sc: cfgmod.SolverConfig, seed: int) -> SolveOptions:
    return SolveOptions(k=sc.k, tol=sc.tol, max_iter=sc.max_iter, shift=sc.shift, seed=seed, mode=sc.mode,
                        preconditioner=sc.preconditioner, inner=sc.inner)


# -- commands -------------------------------------------------------------------

def cmd_family(cfg: cfgmod.FamilyConfig, out: Path, seed: int) -> dict:
    spec = MultiElectronSpec(cfg.electrons, tuple(cfg.b), tuple(cfg.c))
    fam = multi_electron_family(spec)
    lat = lattice(fam)
    order = admissible_order(fam)
    seq = canonical_sequence(fam, order)
    labels = fam.labels
    (out / "family.json").write_text(family_to_json(fam) + "\n")
    _write_csv(out / "members.csv", ["index", "label", "dim"],
               [(i, m.label, m.dim) for i, m in enumerate(fam.members)])
    summary = {
        "members": labels,
        "containment": sorted([labels[i], labels[j]] for i, j in lat.containment),
        "minimal": sorted(labels[i] for i in minimal_elements(lat)),
        "admissible_order": [labels[i] for i in order.permutation],
        "canonical_sequence": [
            {"stratum": labels[s.index], "previously_blown": sorted(labels[j] for j in s.previously_blown)}
            for s in seq.stages
        ],
        "hyperfaces": hyperfaces_at_infinity(fam),
    }
    if cfg.comparability_samples:
        lo, hi = WeightEvaluator(fam).comparability_estimate(cfg.comparability_samples, seed, cfg.comparability_box)
        summary["comparability"] = {"min_ratio": lo, "max_ratio": hi, "samples": cfg.comparability_samples}
    return summary


def _swap_asymmetry(u, positions):
    """max |u(x) - u(P1 + P2 - x)| / max |u| when the grid is symmetric under that point reflection."""
    mesh = u.mesh
    mid = (np.asarray(positions[0]) + np.asarray(positions[1])) / 2
    perms = []
    for a, c in zip(mesh.axes, mid):
        mirrored = 2 * c - a[::-1]
        if not np.allclose(mirrored, a, atol=1e-9 * max(1.0, np.abs(a).max())):
            return None
        perms.append(np.arange(len(a))[::-1])
    vals = u.values.reshape(mesh.shape)
    refl = vals[np.ix_(*perms)]
    scale = np.abs(vals).max()
    return float(np.abs(vals - refl).max() / scale) if scale > 0 else 0.0


def cmd_solve(cfg: cfgmod.SolveConfig, out: Path, seed: int) -> dict:
    opts = _solver_options(cfg.solver, seed)
    summary: dict = {"kind": cfg.kind}
    failure = None
    try:
        if cfg.kind == "radial":
            sol = solve_radial(cfg.box, cfg.n, cfg.grading, cfg.charge, cfg.ell, opts)
        else:
            mesh = build_tensor_mesh(cfg.box, cfg.background, cfg.cluster_depth, cfg.grading, cfg.positions,
                                     cfg.cluster_radius)
            summary["mesh"] = {"shape": list(mesh.shape), "vertices": mesh.num_vertices}
            if cfg.magnetic_k:
                sol = solve_magnetic(mesh, cfg.magnetic_k, cfg.positions, cfg.charges, cfg.coupling, opts, cfg.cap)
            else:
                sol = solve_3d(mesh, cfg.positions, cfg.charges, opts, cfg.cap)
    except ConvergenceError as exc:
        failure = str(exc)
        res = exc.result
        sol = None
        if res is not None:
            summary["best_eigenvalues"] = res.eigenvalues.tolist()
            summary["best_residuals"] = res.residuals.tolist()
            _write_csv(out / "eigenvalues.csv", ["index", "eigenvalue", "residual"],
                       [(i, float(w), float(r)) for i, (w, r) in enumerate(zip(res.eigenvalues, res.residuals))])
    if sol is not None:
        _write_csv(out / "eigenvalues.csv", ["index", "eigenvalue", "residual"],
                   [(i, float(w), float(r)) for i, (w, r) in enumerate(zip(sol.eigenvalues, sol.residuals))])
        summary["eigenvalues"] = sol.eigenvalues.real.tolist()
        summary["residuals"] = sol.residuals.tolist()
        summary["iterations"] = sol.iterations
        u0 = sol.functions[0]
        r1, r2 = cfg.decay_window
        try:
            summary["decay_rate"] = decay_fit(u0, r1, r2)
        except ValueError as exc:
            summary["decay_rate"] = None
            summary["decay_note"] = str(exc)
        if cfg.kind == "tensor" and len(cfg.positions) == 2:
            summary["swap_asymmetry"] = _swap_asymmetry(u0, cfg.positions)
        if cfg.dump_nodal:
            for j, u in enumerate(sol.functions):
                (out / f"eigenfunction_{j}.txt").write_text(u.dump())
    if failure:
        summary["failure"] = failure
        raise _Partial(summary, failure)
    return summary


def cmd_regularity(cfg: cfgmod.RegularityConfig, out: Path, seed: int) -> dict:
    opts = _solver_options(cfg.solver, seed)
    W = WeightEvaluator(multi_electron_family(MultiElectronSpec(1, (cfg.charge,))))
    funcs, eigs = [], []
    try:
        for n in cfg.levels:
            sol = solve_radial(cfg.box, n, cfg.grading, cfg.charge, 0, opts)
            funcs.append(sol.functions[0])
            eigs.append(float(sol.eigenvalues[0]))
    except ConvergenceError as exc:
        summary = {"levels_completed": cfg.levels[: len(eigs)], "eigenvalues": eigs, "failure": str(exc)}
        raise _Partial(summary, str(exc)) from None
    est = regularity_threshold(funcs, W, cfg.m, cfg.a_grid, cfg.exclusion_radius, cfg.bounded_ratio,
                               cfg.diverging_ratio)
    rows = []
    for a in sorted(est.sequences):
        seq = est.sequences[a]
        for lev, (n, val) in enumerate(zip(cfg.levels, seq)):
            ratio = val / seq[lev - 1] if lev else float("nan")
            rows.append((cfg.m, a, lev, n + 1, val, ratio, est.classification[a]))
    _write_csv(out / "knorms.csv", ["m", "a", "level", "vertices", "norm", "ratio", "classification"], rows)
    contrib = []
    for lev, rep in enumerate(est.reports):
        for label, a, val in rep.rows():
            contrib.append((lev, rep.mesh_id, label, a, val))
    _write_csv(out / "contributions.csv", ["level", "mesh", "alpha", "a", "contribution"], contrib)
    return {
        "eigenvalues": eigs,
        "bounded_up_to": est.bounded_up_to,
        "diverging_from": est.diverging_from,
        "classification": {repr(a): c for a, c in sorted(est.classification.items())},
    }


def cmd_hardy(cfg: cfgmod.HardyConfig, out: Path, seed: int) -> dict:
    seq = []
    for n in cfg.levels:
        seq.append(hardy_rayleigh(cfg.dimension, build_radial_mesh(cfg.box, n, cfg.grading)))
    _write_csv(out / "hardy.csv", ["level", "n", "quotient"], [(i, n, v) for i, (n, v) in enumerate(zip(cfg.levels, seq))])
    probes = []
    mesh = build_radial_mesh(cfg.probe_box, cfg.probe_n, cfg.probe_grading)
    for a in cfg.a_grid:
        probes.append(isomorphism_probe(a, cfg.mu, mesh, cfg.trials, seed, cfg.dimension))
    _write_csv(out / "isomorphism.csv", ["a", "delta", "kappa", "lambda_max", "in_range", "mean_ratio"],
               [(p.a, p.delta, p.kappa, p.lambda_max, int(p.in_range),
                 float(np.mean(p.ratios)) if p.ratios else float("nan")) for p in probes])
    return {
        "hardy_constant_squared": hardy_constant(cfg.dimension) ** 2,
        "quotients": seq,
        "nonincreasing": bool(all(b <= a + 1e-12 for a, b in zip(seq, seq[1:]))),
        "probes": [{"a": p.a, "delta": p.delta, "kappa": p.kappa, "in_range": p.in_range} for p in probes],
    }


COMMANDS = {"family": cmd_family, "solve": cmd_solve, "regularity": cmd_regularity, "hardy": cmd_hardy}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kondratiev", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="BLAS thread limit")
    p.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        text = Path(args.config).read_text()
        cfg = cfgmod.PARSERS[args.command](text)
    except (ConfigError, OSError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"command": args.command, "seed": args.seed, "threads": args.threads, "config": cfgmod.echo(cfg)}
    with threadpool_limits(limits=args.threads):
        try:
            summary = COMMANDS[args.command](cfg, out, args.seed)
            code = EXIT_OK
        except _Partial as exc:
            summary, code = exc.summary, EXIT_NUMERIC
            print(f"numerical failure: {exc}", file=sys.stderr)
        except (ConvergenceError, NotSPDError, NormError, np.linalg.LinAlgError, RuntimeError) as exc:
            summary, code = {"failure": str(exc)}, EXIT_NUMERIC
            print(f"numerical failure: {exc}", file=sys.stderr)
        except (GeometryError, MeshError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    _write_json(out / "summary.json", {**meta, "results": summary, "exit_code": code})
    return code


if __name__ == "__main__":
    sys.exit(main())
