"""Solver front-ends, decay fitting and refinement studies."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_hamiltonian_3d, assemble_magnetic_3d, assemble_radial, coulomb_field
from .eigensolve import EigenResult, SolveOptions, lowest_eigenpairs
from .mesh import GradedMesh1D, GridFunction, TensorMesh3D, build_radial_mesh, build_tensor_mesh


class StudyError(ValueError):
    pass


@dataclass
class Solution:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    functions: list[GridFunction]
    iterations: int
    mesh: object


def _to_solution(disc, res: EigenResult) -> Solution:
    funcs = [disc.to_grid(res.vectors[:, j]) for j in range(res.vectors.shape[1])]
    return Solution(res.eigenvalues, res.residuals, funcs, res.iterations, disc.mesh)


def solve_radial(R: float, n: int, gamma: float, b: float = -1.0, ell: int = 0,
                 opts: SolveOptions | None = None) -> Solution:
    """Lowest states of -Delta + b/|x| in angular momentum channel ``ell``."""
    mesh = build_radial_mesh(R, n, gamma)
    disc = assemble_radial(mesh, b, ell)
    if opts is None:
        opts = SolveOptions(tol=1e-10, mode="shift_invert", shift=-(b * b) / 4 - 0.05 if b < 0 else -0.05)
    return _to_solution(disc, lowest_eigenpairs(disc.A, disc.M, opts))


def solve_3d(mesh: TensorMesh3D, positions, charges, opts: SolveOptions | None = None, cap: float = 0.5) -> Solution:
    disc = assemble_hamiltonian_3d(mesh, positions, charges, cap)
    return _to_solution(disc, lowest_eigenpairs(disc.A, disc.M, opts or SolveOptions(tol=1e-6)))


def solve_magnetic(mesh: TensorMesh3D, k, positions, charges, coupling: str = "magnetic",
                   opts: SolveOptions | None = None, cap: float = 0.5) -> Solution:
    V = coulomb_field(positions, charges) if len(positions) else None
    disc = assemble_magnetic_3d(mesh, k, V, coupling=coupling, cap=cap)
    return _to_solution(disc, lowest_eigenpairs(disc.A, disc.M, opts or SolveOptions(tol=1e-6)))


def decay_fit(u: GridFunction, r1: float, r2: float, center=(0.0, 0.0, 0.0), shells: int = 32) -> float:
    """Least-squares slope of -log max_{|x|=r} |u| against r over r in [r1, r2].

    On radial meshes every node is a shell. On tensor meshes the vertices are
    binned into ``shells`` equal-width radial bins and each bin contributes its
    maximum.
    """
    if not r1 < r2:
        raise StudyError("need r1 < r2")
    if isinstance(u.mesh, GradedMesh1D):
        r = u.mesh.nodes
        sel = (r >= r1) & (r <= r2)
        radii, amp = r[sel], np.abs(u.values[sel])
    else:
        X = u.mesh.coordinates()
        r = np.linalg.norm(X - np.asarray(center), axis=1)
        sel = (r >= r1) & (r <= r2)
        rs, vs = r[sel], np.abs(u.values[sel])
        bins = np.minimum(((rs - r1) / (r2 - r1) * shells).astype(int), shells - 1)
        radii, amp = [], []
        for b in range(shells):
            inb = bins == b
            if np.any(inb):
                i = np.argmax(np.where(inb, vs, -1.0))
                radii.append(rs[i])
                amp.append(vs[i])
        radii, amp = np.array(radii), np.array(amp)
    keep = amp > 0
    if keep.sum() < 2:
        raise StudyError("function vanishes on the fit window")
    slope, _ = np.polyfit(radii[keep], -np.log(amp[keep]), 1)
    return float(slope)


@dataclass
class ConvergenceRow:
    level: int
    vertices: int
    eigenvalue: float
    error: float
    rate: float


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    reference: float
    reference_kind: str
    failure: str | None = None


@dataclass(frozen=True)
class HydrogenProblem:
    """Single-nucleus ground state, either radial or on a graded tensor mesh."""

    kind: str = "radial"
    box: float = 40.0
    gamma: float = 2.0
    charge: float = -1.0
    cluster_radius: float | None = None
    reference: float | None = field(default=None)

    def exact(self) -> float:
        return self.reference if self.reference is not None else -(self.charge**2) / 4

    def run(self, level):
        """Return (vertex count, eigenvalue, dimension) for one refinement level."""
        if self.kind == "radial":
            sol = solve_radial(self.box, int(level), self.gamma, self.charge)
            return sol.mesh.num_vertices, float(sol.eigenvalues[0]), 1
        bg, depth = level
        mesh = build_tensor_mesh(self.box, bg, depth, self.gamma, cluster_radius=self.cluster_radius)
        sol = solve_3d(mesh, [(0.0, 0.0, 0.0)], [self.charge])
        return mesh.num_vertices, float(sol.eigenvalues[0]), 3


def _aitken(values):
    a, b, c = values[-3:]
    den = (c - b) - (b - a)
    return c if den == 0 else c - (c - b) ** 2 / den


def convergence_study(problem, levels, analytic: bool = True) -> ConvergenceTable:
    """Eigenvalue errors and observed rates across refinement levels.

    ``problem.run(level)`` must return (vertex count, eigenvalue, spatial dimension).
    Rates use the mesh size h ~ vertices^(-1/dim). Without an analytic reference the
    finest three levels are extrapolated with Aitken's delta-squared.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise StudyError("need at least 3 levels")
    results = []
    failure = None
    for lev in levels:
        try:
            results.append(problem.run(lev))
        except Exception as exc:  # partial table is still useful
            failure = f"level {lev}: {exc}"
            break
    if analytic:
        ref, kind = problem.exact(), "analytic"
    elif len(results) >= 3:
        ref, kind = _aitken([r[1] for r in results]), "extrapolated"
    else:
        ref, kind = float("nan"), "unavailable"
    rows = []
    for i, (nv, lam, dim) in enumerate(results):
        err = abs(lam - ref)
        rate = float("nan")
        if i:
            nv0, lam0, _ = results[i - 1]
            err0 = abs(lam0 - ref)
            if err > 0 and err0 > 0:
                rate = np.log(err0 / err) / np.log((nv / nv0) ** (1.0 / dim))
        rows.append(ConvergenceRow(i, nv, lam, err, float(rate)))
    return ConvergenceTable(rows, ref, kind, failure)
