"""Weighted (Kondratiev-type) Sobolev norms of nodal functions and refinement-based threshold detection.

The squared norm of order m and weight exponent a is

    sum_{|alpha| <= m} integral r_S^{2(|alpha| - a)} |d^alpha u|^2 dx

with r_S the smoothed distance to the singular union. Radial functions on a
``GradedMesh1D`` are treated as functions on R^3; the sum over multi-indices of
each order is reduced to one-dimensional integrands through an exact angular
average.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .mesh import GradedMesh1D, GridFunction, TensorMesh3D
from .weights import WeightEvaluator


class NormError(ValueError):
    pass


@dataclass
class KNormReport:
    m: int
    a_grid: list[float]
    contributions: dict[tuple[str, float], float]
    totals: dict[float, float]
    mesh_id: str
    exclusion_radius: float = 0.0

    def rows(self):
        """(label, a, contribution) sorted by a then label."""
        return sorted(((lab, a, v) for (lab, a), v in self.contributions.items()), key=lambda t: (t[1], t[0]))


# -- difference stencils ------------------------------------------------------

def _stencil_weights(x0, pts):
    """Weights of the 3-point first-derivative formula at x0 on nodes ``pts``."""
    x1, x2, x3 = pts
    w1 = (2 * x0 - x2 - x3) / ((x1 - x2) * (x1 - x3))
    w2 = (2 * x0 - x1 - x3) / ((x2 - x1) * (x2 - x3))
    w3 = (2 * x0 - x1 - x2) / ((x3 - x1) * (x3 - x2))
    return w1, w2, w3


def masked_derivative(f, x, valid, axis=0):
    """First derivative along ``axis`` using only nodes flagged ``valid``.

    Centered three-point formulas where both neighbours are valid, one-sided
    three-point formulas next to invalid nodes or the grid ends, and zero where
    fewer than three consecutive valid nodes are available.
    """
    f = np.asarray(f)
    valid = np.moveaxis(np.broadcast_to(valid, f.shape), axis, -1)
    f = np.moveaxis(f, axis, -1)
    n = f.shape[-1]
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(f)
    vl = np.zeros_like(valid)
    vr = np.zeros_like(valid)
    vl[..., 1:] = valid[..., :-1]
    vr[..., :-1] = valid[..., 1:]
    vll = np.zeros_like(valid)
    vrr = np.zeros_like(valid)
    vll[..., 2:] = valid[..., :-2]
    vrr[..., :-2] = valid[..., 2:]
    idx = np.arange(n)
    im, ip = np.clip(idx - 1, 0, n - 1), np.clip(idx + 1, 0, n - 1)
    imm, ipp = np.clip(idx - 2, 0, n - 1), np.clip(idx + 2, 0, n - 1)
    central = valid & vl & vr
    forward = valid & ~vl & vr & vrr
    backward = valid & ~vr & vl & vll
    with np.errstate(divide="ignore", invalid="ignore"):
        wc = _stencil_weights(x, (x[im], x, x[ip]))
        wf = _stencil_weights(x, (x, x[ip], x[ipp]))
        wb = _stencil_weights(x, (x[imm], x[im], x))
        dc = wc[0] * f[..., im] + wc[1] * f + wc[2] * f[..., ip]
        df = wf[0] * f + wf[1] * f[..., ip] + wf[2] * f[..., ipp]
        db = wb[0] * f[..., imm] + wb[1] * f[..., im] + wb[2] * f
    out = np.where(central, dc, out)
    out = np.where(forward, df, out)
    out = np.where(backward, db, out)
    return np.moveaxis(out, -1, axis)


# -- angular reduction for radial functions ------------------------------------

def _multi_indices(order, dim=3):
    return [a for a in itertools.product(range(order + 1), repeat=dim) if sum(a) == order]


def _expand(alpha):
    """d^alpha f(|x|) as {(j, p, beta): coef} meaning coef f^{(j)}(r) r^{-p} x^beta."""
    terms = {(0, 0, (0, 0, 0)): 1.0}
    for i, count in enumerate(alpha):
        for _ in range(count):
            new: dict = {}
            for (j, p, beta), c in terms.items():
                b_up = tuple(b + (k == i) for k, b in enumerate(beta))
                # derivative of f^{(j)}(r): f^{(j+1)} x_i / r
                key = (j + 1, p + 1, b_up)
                new[key] = new.get(key, 0.0) + c
                if p:
                    key = (j, p + 2, b_up)
                    new[key] = new.get(key, 0.0) - p * c
                if beta[i]:
                    b_dn = tuple(b - (k == i) for k, b in enumerate(beta))
                    key = (j, p, b_dn)
                    new[key] = new.get(key, 0.0) + beta[i] * c
            terms = {k: v for k, v in new.items() if v != 0.0}
    return terms


def _sphere_rule(degree):
    """Product rule on S^2 exact for polynomials up to ``degree``, weights averaging to one."""
    nt = degree // 2 + 2
    ct, wt = np.polynomial.legendre.leggauss(nt)
    nphi = degree + 2
    phi = 2 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1 - ct**2)
    n = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(ct, np.ones(nphi))], axis=-1)
    w = np.outer(wt, np.ones(nphi)) / (2 * nphi)
    return n.reshape(-1, 3), w.ravel()


@lru_cache(maxsize=None)
def radial_gram(order: int):
    """Angular average of sum_{|alpha|=order} |d^alpha f(|x|)|^2.

    Returns (keys, Q) with keys a list of (j, s) and Q a symmetric matrix such that
    the average equals sum Q[k, l] f^{(j_k)} f^{(j_l)} r^{s_k + s_l}.
    """
    nodes, weights = _sphere_rule(4 * order + 4)
    keys: list = []
    rows = []
    for alpha in _multi_indices(order):
        g: dict = {}
        for (j, p, beta), c in _expand(alpha).items():
            key = (j, sum(beta) - p)
            g[key] = g.get(key, 0.0) + c * np.prod(nodes ** np.array(beta), axis=1)
        rows.append(g)
        for key in g:
            if key not in keys:
                keys.append(key)
    keys.sort()
    Q = np.zeros((len(keys), len(keys)))
    for g in rows:
        vals = np.array([g.get(k, np.zeros(len(weights))) for k in keys])
        Q += (vals * weights) @ vals.T
    Q[np.abs(Q) < 1e-13] = 0.0
    return keys, Q


# -- norms --------------------------------------------------------------------

def _singular_scale(mesh) -> float:
    """Local mesh size at the singular point(s)."""
    if isinstance(mesh, GradedMesh1D):
        return float(mesh.nodes[1] - mesh.nodes[0])
    hv = mesh.local_size()
    return float(min(hv[mesh.flat_index(mesh.vertex_of(p))] for p in mesh.singular_points)) if mesh.singular_points else 0.0


def _radial_densities(u: GridFunction, m: int, exclusion_radius: float):
    r = u.mesh.nodes
    valid = r >= exclusion_radius * _singular_scale(u.mesh)
    if exclusion_radius == 0:
        valid = valid & (r > 0)
    derivs = [np.asarray(u.values, dtype=float)]
    for _ in range(m):
        derivs.append(masked_derivative(derivs[-1], r, valid))
    rs = np.where(valid, r, 1.0)
    densities = {}
    for order in range(m + 1):
        keys, Q = radial_gram(order)
        dens = np.zeros_like(r)
        for (k1, (j1, s1)), (k2, (j2, s2)) in itertools.product(enumerate(keys), repeat=2):
            if Q[k1, k2]:
                dens += Q[k1, k2] * derivs[j1] * derivs[j2] * rs ** (s1 + s2)
        densities[f"|alpha|={order}"] = (order, dens)
    weights = _masked_trapezoid(r, valid) * 4 * np.pi * r**2
    points = np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=-1)
    return densities, weights, points


def _masked_trapezoid(x, valid):
    """Trapezoid weights over the valid nodes (intervals with both ends valid)."""
    h = np.diff(x)
    both = valid[:-1] & valid[1:]
    hw = np.where(both, h / 2, 0.0)
    return np.r_[hw, 0] + np.r_[0, hw]


def _tensor_densities(u: GridFunction, m: int, exclusion_radius: float):
    mesh: TensorMesh3D = u.mesh
    if m > 2:
        raise NormError("3D meshes support m <= 2")
    coords = mesh.coordinates()
    shape = mesh.shape
    valid = np.ones(len(coords), bool)
    ball = exclusion_radius * _singular_scale(mesh)
    for p in mesh.singular_points:
        d = np.linalg.norm(coords - np.asarray(p), axis=1)
        valid &= (d >= ball) if exclusion_radius > 0 else (d > 0)
    valid3 = valid.reshape(shape)
    f = np.asarray(u.values).reshape(shape)
    densities = {}
    for order in range(m + 1):
        for alpha in _multi_indices(order):
            g = f
            for ax, cnt in enumerate(alpha):
                for _ in range(cnt):
                    g = masked_derivative(g, mesh.axes[ax], valid3, axis=ax)
            densities[str(alpha)] = (order, np.abs(g.ravel()) ** 2)
    ws = [_masked_trapezoid(a, np.ones(len(a), bool)) for a in mesh.axes]
    weights = np.einsum("i,j,k->ijk", *ws).ravel() * valid
    return densities, weights, coords


def knorm_table(u: GridFunction, W: WeightEvaluator, m: int, a_grid, exclusion_radius: float = 1.0) -> KNormReport:
    """Weighted norms of ``u`` for every exponent in ``a_grid``.

    Nodes within ``exclusion_radius`` local mesh sizes of a singular point are
    dropped; derivative stencils next to the dropped ball are one-sided.
    """
    if m < 0:
        raise NormError("m must be >= 0")
    if exclusion_radius < 0:
        raise NormError("exclusion_radius must be >= 0")
    if isinstance(u.mesh, GradedMesh1D):
        densities, weights, points = _radial_densities(u, m, exclusion_radius)
    else:
        densities, weights, points = _tensor_densities(u, m, exclusion_radius)
    live = weights > 0
    rS = np.ones(len(weights))
    rS[live] = W.r_union(points[live])
    logr = np.log(np.where(live, rS, 1.0))
    contributions = {}
    totals = {}
    for a in a_grid:
        a = float(a)
        acc = 0.0
        for label, (order, dens) in densities.items():
            val = float(np.sum(weights[live] * np.exp(2 * (order - a) * logr[live]) * dens[live]))
            val = max(val, 0.0)
            contributions[(label, a)] = np.sqrt(val)
            acc += val
        totals[a] = float(np.sqrt(acc))
    return KNormReport(m, [float(a) for a in a_grid], contributions, totals, u.mesh.mesh_id, exclusion_radius)


def knorm(u: GridFunction, W: WeightEvaluator, m: int, a: float, exclusion_radius: float = 1.0) -> float:
    return knorm_table(u, W, m, [a], exclusion_radius).totals[float(a)]


# -- threshold detection ------------------------------------------------------

BOUNDED, DIVERGING, INDETERMINATE = "bounded", "diverging", "indeterminate"


@dataclass
class ThresholdEstimate:
    bounded_up_to: float
    diverging_from: float
    sequences: dict[float, list[float]]
    classification: dict[float, str]
    reports: list = field(default_factory=list, repr=False)

    def contains(self, a: float) -> bool:
        return self.bounded_up_to < a < self.diverging_from


def classify_sequence(norms, bounded_ratio: float = 1.1, diverging_ratio: float = 1.5) -> str:
    norms = np.asarray(norms, dtype=float)
    if norms[0] == 0 and norms[-1] == 0:
        return BOUNDED
    if norms[0] > 0 and norms[-1] / norms[0] < bounded_ratio:
        return BOUNDED
    steps = norms[1:] / np.where(norms[:-1] > 0, norms[:-1], np.nan)
    if np.all(steps >= diverging_ratio):
        return DIVERGING
    return INDETERMINATE


def regularity_threshold(functions, W: WeightEvaluator, m: int, a_grid, exclusion_radius: float = 1.0,
                         bounded_ratio: float = 1.1, diverging_ratio: float = 1.5) -> ThresholdEstimate:
    """Bracket the weight exponent where the norm of a refined family of functions starts to blow up.

    ``functions`` is a sequence of GridFunctions from successively refined meshes
    (or a callable returning that sequence).
    """
    if callable(functions):
        functions = functions()
    functions = list(functions)
    if len(functions) < 3:
        raise NormError("need at least 3 refinement levels")
    a_grid = sorted(float(a) for a in a_grid)
    if not a_grid:
        raise NormError("empty a grid")
    reports = [knorm_table(u, W, m, a_grid, exclusion_radius) for u in functions]
    sequences = {a: [rep.totals[a] for rep in reports] for a in a_grid}
    classes = {a: classify_sequence(seq, bounded_ratio, diverging_ratio) for a, seq in sequences.items()}
    bounded = [a for a in a_grid if classes[a] == BOUNDED]
    diverging = [a for a in a_grid if classes[a] == DIVERGING]
    if bounded and diverging and max(bounded) > min(diverging):
        raise NormError(f"non-monotone classification: bounded {bounded}, diverging {diverging}")
    lo = max(bounded) if bounded else -np.inf
    hi = min(diverging) if diverging else np.inf
    return ThresholdEstimate(lo, hi, sequences, classes, reports)
