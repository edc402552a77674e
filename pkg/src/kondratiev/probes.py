"""Hardy quotient, coercivity/conditioning of the conjugated Laplacian and the conformal identity check."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_conformal_laplacian, laplacian_operator
from .eigensolve import ConvergenceError, SolveOptions, lowest_eigenpairs
from .mesh import GradedMesh1D, TensorMesh3D
from .weights import DEFAULT_PROFILE, SmoothedDistanceProfile, WeightEvaluator, dpsi, psi


class ProbeError(ValueError):
    pass


def hardy_constant(N: int) -> float:
    return (N - 2) / 2


class RadialForms:
    """Galerkin matrices of radial P1 functions in R^N, free at r=0 and zero at r=R.

    ``weighted(f)`` returns the matrix of integral f(r) u v r^{N-1} dr, computed by
    Gauss-Legendre quadrature on each element.
    """

    def __init__(self, mesh: GradedMesh1D, N: int, points: int = 6):
        self.mesh = mesh
        self.N = N
        r = mesh.nodes
        h = np.diff(r)
        xg, wg = np.polynomial.legendre.leggauss(points)
        t = (xg + 1) / 2
        self._x = r[:-1, None] + h[:, None] * t
        self._meas = h[:, None] * (wg / 2) * self._x ** (N - 1)
        self._t = t
        self._h = h

    def _assemble(self, LL, RR, LR):
        main = np.r_[LL, 0] + np.r_[0, RR]
        A = sp.diags([LR, main, LR], [-1, 0, 1], format="csr")
        return A[:-1, :-1].tocsr()

    def weighted(self, f: Callable | None = None):
        mw = self._meas if f is None else self._meas * f(self._x)
        pl, pr = 1 - self._t, self._t
        return self._assemble((mw * pl * pl).sum(1), (mw * pr * pr).sum(1), (mw * pl * pr).sum(1))

    def stiffness(self):
        s = self._meas.sum(1) / self._h**2
        return self._assemble(s, s, -s)


def hardy_rayleigh(N: int, mesh: GradedMesh1D, tol: float = 1e-7) -> float:
    """Smallest discrete quotient ||grad u||^2 / ||u/|x|||^2 over radial P1 functions on R^N.

    Both forms are integrated exactly, so the value never drops below the
    continuous optimum ((N-2)/2)^2 and decreases on nested meshes.
    """
    if N <= 2:
        raise ProbeError("Hardy quotient needs N >= 3")
    forms = RadialForms(mesh, N, points=N + 2)
    K = forms.stiffness()
    Wt = forms.weighted(lambda x: x**-2.0)
    res = lowest_eigenpairs(K, Wt, SolveOptions(k=1, tol=tol, mode="shift_invert", shift=0.0, max_iter=5000))
    return float(res.eigenvalues[0])


@dataclass
class IsomorphismProbe:
    a: float
    mu: float
    delta: float
    kappa: float
    lambda_max: float
    ratios: list[float]
    in_range: bool


def _largest_pencil(S, G, tol, max_iter=20000, seed=0):
    """Largest eigenvalue of the pencil (S, G), G SPD, by power iteration on G^{-1} S."""
    lu = spla.splu(sp.csc_matrix(G))
    x = np.random.default_rng(seed).standard_normal(S.shape[0])
    lam_old = np.inf
    for _ in range(max_iter):
        x = lu.solve(S @ x)
        x /= np.linalg.norm(x)
        lam = float(x @ (S @ x) / (x @ (G @ x)))
        if abs(lam - lam_old) <= tol * abs(lam):
            return lam
        lam_old = lam
    raise ConvergenceError("power iteration for the largest pencil eigenvalue did not converge")


def isomorphism_probe(a: float, mu: float, mesh: GradedMesh1D, trials: int = 4, seed: int = 0, N: int = 3,
                      profile: SmoothedDistanceProfile = DEFAULT_PROFILE, tol: float = 1e-9) -> IsomorphismProbe:
    """Coercivity and conditioning of mu - r^{-a} Delta r^a measured in the K^1_1 norm.

    The quadratic form of the conjugated operator is
    mu ||u||^2 + ||grad u||^2 - a^2 ||u grad(r_S)/r_S||^2, which depends on a only
    through a^2. delta is the lowest eigenvalue of that form against the squared
    K^1_1 norm ||grad u||^2 + ||u/r_S||^2, kappa the ratio of the largest to delta.
    Trials solve the system for seeded random loads f and record
    ||u||_{K^1_1} / ||r_S f||_{L^2}.
    """
    if mu <= 0:
        raise ProbeError("mu must be positive")
    if N <= 2:
        raise ProbeError("the probe needs N >= 3")
    forms = RadialForms(mesh, N)
    K = forms.stiffness()
    M = forms.weighted()
    Wn = forms.weighted(lambda x: psi(x, profile) ** -2.0)
    Wg = forms.weighted(lambda x: (dpsi(x, profile) / psi(x, profile)) ** 2)
    S = (mu * M + K - a * a * Wg).tocsr()
    G = (K + Wn).tocsr()
    # any eigenvalue lies above -a^2 max|psi'|^2, so this shift sits below the spectrum
    floor = -(a * a) * float(np.max(np.abs(dpsi(np.linspace(0, profile.outer_radius, 2001), profile)))) ** 2 - 0.5
    res = lowest_eigenpairs(S, G, SolveOptions(k=1, tol=tol, mode="shift_invert", shift=floor, max_iter=20000))
    delta = float(res.eigenvalues[0])
    lam_max = _largest_pencil(S, G, 1e-10, seed=seed)
    kappa = lam_max / delta if delta > 0 else np.inf
    rng = np.random.default_rng(seed)
    Mr = forms.weighted(lambda x: psi(x, profile) ** 2)
    lu = spla.splu(sp.csc_matrix(S))
    ratios = []
    for _ in range(trials):
        f = rng.standard_normal(S.shape[0])
        u = lu.solve(M @ f)
        ratios.append(float(np.sqrt(u @ (G @ u)) / np.sqrt(f @ (Mr @ f))))
    return IsomorphismProbe(float(a), float(mu), delta, kappa, lam_max, ratios, abs(a) < hardy_constant(N))


# -- conformal identity -----------------------------------------------------------

@dataclass
class ConformalCheck:
    deviation: float
    vertices: int
    region_vertices: int
    multiplier_max: float


def conformal_identity_check(mesh: TensorMesh3D, W: WeightEvaluator, u1: Callable, u2: Callable,
                             r_in: float = 0.3, r_out: float = 1.5, center=(0.0, 0.0, 0.0)) -> ConformalCheck:
    """Compare D(u) = rho^{5/2} Delta(rho^{-1/2} u) - Delta_h u for two test functions.

    D acts as multiplication by a function, so D(u1)/u1 and D(u2)/u2 must agree up
    to discretization error. Returns the largest difference over the annulus
    r_in <= |x - center| <= r_out.
    """
    X = mesh.coordinates()
    rho = W.rho(X)
    lap = laplacian_operator(mesh)
    Lh = assemble_conformal_laplacian(mesh, W)
    dist = np.linalg.norm(X - np.asarray(center), axis=1)
    region = (dist >= r_in) & (dist <= r_out)
    if not np.any(region):
        raise ProbeError("empty comparison region")
    safe_rho = np.where(rho > 0, rho, 1.0)

    def D_over(u):
        vals = np.asarray(u(X), dtype=float)
        if np.any(np.abs(vals[region]) < 1e-14):
            raise ProbeError("test function vanishes in the comparison region")
        D = safe_rho**2.5 * (lap @ (safe_rho**-0.5 * vals)) - Lh @ vals
        return D[region] / vals[region]

    q1, q2 = D_over(u1), D_over(u2)
    return ConformalCheck(float(np.max(np.abs(q1 - q2))), mesh.num_vertices, int(region.sum()),
                          float(np.max(np.abs(q1))))
