"""Finite element assembly: radial P1, trilinear Q1 on tensor meshes, magnetic and conformal operators.

Operators are scipy CSR matrices. 3D operators act on interior vertices only
(homogeneous Dirichlet data on the box boundary); ``Discretization.to_grid``
maps an interior vector back to a nodal function on the full mesh.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import GradedMesh1D, GridFunction, MeshError, TensorMesh3D
from .weights import WeightEvaluator

# below this element ratio h/a the closed-form log integrals lose digits
_CLOSED_FORM_MIN_RATIO = 0.05
_GAUSS_RADIAL = np.polynomial.legendre.leggauss(8)


@dataclass(eq=False)
class Discretization:
    A: sp.csr_matrix
    M: sp.csr_matrix
    mesh: object
    interior: np.ndarray

    def to_grid(self, vec) -> GridFunction:
        vec = np.asarray(vec)
        if isinstance(self.mesh, GradedMesh1D):
            return radial_grid_function(self.mesh, vec)
        full = np.zeros(self.mesh.num_vertices, dtype=vec.dtype)
        full[self.interior] = vec
        return GridFunction(self.mesh, full)


def radial_grid_function(mesh: GradedMesh1D, w_interior) -> GridFunction:
    """u = w/r from the reduced radial unknowns; u(0) by the slope of w at the origin."""
    r = mesh.nodes
    w = np.zeros(len(r), dtype=np.asarray(w_interior).dtype)
    w[1:-1] = w_interior
    u = np.empty_like(w)
    u[1:] = w[1:] / r[1:]
    u[0] = w[1] / r[1]
    return GridFunction(mesh, u)


def _tridiag(diag_left, diag_right, off, n_nodes):
    """Assemble per-element 2x2 blocks [[L, off], [off, R]] into a tridiagonal matrix."""
    main = np.zeros(n_nodes)
    main[:-1] += diag_left
    main[1:] += diag_right
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def p1_matrices_1d(x):
    """Stiffness, consistent mass and lumped mass of P1 elements on nodes ``x``."""
    h = np.diff(x)
    K = _tridiag(1 / h, 1 / h, -1 / h, len(x))
    M = _tridiag(h / 3, h / 3, h / 6, len(x))
    ml = np.r_[h / 2, 0] + np.r_[0, h / 2]
    return K, M, ml


def _inverse_power_moments(a, c):
    """Element integrals of hat products against 1/x and 1/x^2 on [a, c], a > 0.

    Returns (LL, RR, LR) for each weight, with phi_L = (c-x)/h, phi_R = (x-a)/h.
    """
    h = c - a
    closed = h / a >= _CLOSED_FORM_MIN_RATIO
    out1 = np.empty((3, len(a)))
    out2 = np.empty((3, len(a)))
    # closed forms
    ac, cc, hc = a[closed], c[closed], h[closed]
    L = np.log(cc / ac)
    d2 = (cc**2 - ac**2) / 2
    out1[0, closed] = (cc**2 * L - 2 * cc * hc + d2) / hc**2
    out1[1, closed] = (ac**2 * L - 2 * ac * hc + d2) / hc**2
    out1[2, closed] = (-ac * cc * L + (ac + cc) * hc - d2) / hc**2
    out2[0, closed] = (cc * hc / ac - 2 * cc * L + hc) / hc**2
    out2[1, closed] = (hc - 2 * ac * L + ac * hc / cc) / hc**2
    out2[2, closed] = (-2 * hc + (ac + cc) * L) / hc**2
    # Gauss-Legendre where the logarithm cancels badly
    g = ~closed
    if np.any(g):
        xg, wg = _GAUSS_RADIAL
        t = (xg + 1) / 2
        w = wg / 2
        ag, hg = a[g][:, None], h[g][:, None]
        x = ag + hg * t
        pl, pr = 1 - t, t
        for out, p in ((out1, 1), (out2, 2)):
            f = hg * w / x**p
            out[0, g] = (f * pl * pl).sum(1)
            out[1, g] = (f * pr * pr).sum(1)
            out[2, g] = (f * pl * pr).sum(1)
    return out1, out2


def assemble_radial(mesh: GradedMesh1D, b: float, ell: int = 0) -> Discretization:
    """-w'' + (l(l+1)/r^2 + b/r) w = lambda w on (0, R), w(0) = w(R) = 0, P1 elements.

    The Coulomb and centrifugal terms are integrated exactly against hat products.
    """
    if ell < 0:
        raise ValueError("angular momentum must be >= 0")
    r = mesh.nodes
    n = len(r)
    K, M, _ = p1_matrices_1d(r)
    a, c = r[1:-1], r[2:]
    m1, m2 = _inverse_power_moments(a, c)
    h0 = r[1] - r[0]
    # first element [0, h0]: only the right hat survives the Dirichlet condition
    ll1 = np.r_[0.0, m1[0]]
    rr1 = np.r_[0.5, m1[1]]
    lr1 = np.r_[0.0, m1[2]]
    ll2 = np.r_[0.0, m2[0]]
    rr2 = np.r_[1.0 / h0, m2[1]]
    lr2 = np.r_[0.0, m2[2]]
    pot = b * _tridiag(ll1, rr1, lr1, n)
    if ell:
        pot = pot + ell * (ell + 1) * _tridiag(ll2, rr2, lr2, n)
    A = (K + pot).tocsr()[1:-1, 1:-1]
    M = M.tocsr()[1:-1, 1:-1]
    return Discretization(A.tocsr(), M.tocsr(), mesh, np.arange(1, n - 1))


# -- tensor-product meshes ------------------------------------------------------

def _dual_centers(x):
    """Midpoint of each vertex's dual cell along one axis."""
    hm = np.r_[np.nan, np.diff(x)]
    hp = np.r_[np.diff(x), np.nan]
    c = x + (np.nan_to_num(hp) - np.nan_to_num(hm)) / 4
    return c


def _capped_points(mesh: TensorMesh3D, cap: float):
    """Dual-cell centres of interior vertices, pushed out of the cap ball of every singular point."""
    cx, cy, cz = (_dual_centers(a) for a in mesh.axes)
    C = np.stack(np.meshgrid(cx, cy, cz, indexing="ij"), axis=-1).reshape(-1, 3)
    hv = mesh.local_size()
    interior = np.flatnonzero(mesh.interior_mask())
    C, hv = C[interior], hv[interior]
    for p in mesh.singular_points:
        d = C - np.asarray(p)
        r = np.linalg.norm(d, axis=1)
        rmin = cap * hv
        close = r < rmin
        if np.any(close):
            # direction is irrelevant for radial singular terms; keep it when defined
            safe = np.where(r[close] > 0, r[close], 1.0)
            unit = np.where(r[close, None] > 0, d[close] / safe[:, None], np.array([1.0, 0.0, 0.0]))
            C[close] = np.asarray(p) + unit * rmin[close, None]
    return C, interior


def _tensor_q1(mesh: TensorMesh3D):
    Ks, Ms, mls = zip(*(p1_matrices_1d(a) for a in mesh.axes))
    inner = [slice(1, len(a) - 1) for a in mesh.axes]
    Ks = [K[s, s] for K, s in zip(Ks, inner)]
    Ms = [M[s, s] for M, s in zip(Ms, inner)]
    mls = [ml[s] for ml, s in zip(mls, inner)]
    kron3 = lambda a, b, c: sp.kron(sp.kron(a, b), c)
    K = kron3(Ks[0], Ms[1], Ms[2]) + kron3(Ms[0], Ks[1], Ms[2]) + kron3(Ms[0], Ms[1], Ks[2])
    m = np.einsum("i,j,k->ijk", *mls).ravel()
    return K.tocsr(), m


def coulomb_field(positions, charges):
    """V(x) = sum_j b_j / |x - P_j| as a vectorized callable."""
    P = np.asarray(positions, dtype=float).reshape(-1, 3)
    b = np.asarray(charges, dtype=float).reshape(-1)
    if len(P) != len(b):
        raise ValueError("one charge per position")

    def V(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for p, bj in zip(P, b):
            out += bj / np.linalg.norm(x - p, axis=-1)
        return out

    return V


def assemble_hamiltonian_3d(mesh: TensorMesh3D, positions, charges, cap: float = 0.5) -> Discretization:
    """-Delta + sum_j b_j/|x - P_j| with Q1 stiffness, lumped mass and lumped, capped potential.

    The potential is sampled at the centre of each vertex's dual cell; within
    ``cap`` times the local mesh size of a nucleus it is sampled at that distance.
    """
    positions = [tuple(float(c) for c in p) for p in np.asarray(positions, dtype=float).reshape(-1, 3)]
    for p in positions:
        if p not in mesh.singular_points:
            mesh.vertex_of(p)
    # capping is applied around the nuclei of this operator
    mesh_caps = TensorMesh3D(mesh.axes, tuple(positions), mesh.label)
    K, m = _tensor_q1(mesh)
    C, interior = _capped_points(mesh_caps, cap)
    V = coulomb_field(positions, charges)(C)
    A = (K + sp.diags(m * V)).tocsr()
    return Discretization(A, sp.diags(m).tocsr(), mesh, interior)


# -- element-loop assembly ------------------------------------------------------

_CORNERS = np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)])
_GP = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def _element_geometry(mesh: TensorMesh3D):
    x, y, z = mesh.axes
    nx, ny, nz = mesh.shape
    I, J, K = (g.ravel() for g in np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), np.arange(nz - 1), indexing="ij"))
    nodes = ((I[:, None] + _CORNERS[:, 0]) * ny + (J[:, None] + _CORNERS[:, 1])) * nz + (K[:, None] + _CORNERS[:, 2])
    origin = np.stack([x[I], y[J], z[K]], axis=-1)
    size = np.stack([np.diff(x)[I], np.diff(y)[J], np.diff(z)[K]], axis=-1)
    return nodes, origin, size


def _scatter(mesh, nodes, local, interior_only=True):
    n = mesh.num_vertices
    rows = np.repeat(nodes, 8, axis=1).ravel()
    cols = np.tile(nodes, (1, 8)).ravel()
    A = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    A.sum_duplicates()
    if interior_only:
        interior = np.flatnonzero(mesh.interior_mask())
        A = A[interior][:, interior]
    return A.tocsr()


def q1_stiffness(mesh: TensorMesh3D, coef=None, interior_only=True) -> sp.csr_matrix:
    """Q1 stiffness with one coefficient value per element (exact for constant coefficients)."""
    nodes, _, size = _element_geometry(mesh)
    hx, hy, hz = size.T

    def loc(h):
        K = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h[:, None, None]
        M = h[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]]) / 6
        return K, M

    Kx, Mx = loc(hx)
    Ky, My = loc(hy)
    Kz, Mz = loc(hz)
    spec = "eab,ecd,efg->eacfbdg"
    local = (np.einsum(spec, Kx, My, Mz) + np.einsum(spec, Mx, Ky, Mz) + np.einsum(spec, Mx, My, Kz)).reshape(-1, 8, 8)
    if coef is not None:
        local = local * np.asarray(coef, dtype=float)[:, None, None]
    return _scatter(mesh, nodes, local, interior_only)


def lumped_mass(mesh: TensorMesh3D, interior_only=True) -> np.ndarray:
    mls = [p1_matrices_1d(a)[2] for a in mesh.axes]
    m = np.einsum("i,j,k->ijk", *mls).ravel()
    return m[mesh.interior_mask()] if interior_only else m


def _as_field(k):
    if callable(k):
        return k
    kc = np.asarray(k, dtype=float).reshape(3)
    return lambda x: np.broadcast_to(kc, np.shape(x)[:-1] + (3,))


def assemble_magnetic_3d(mesh: TensorMesh3D, k, V0_over_rS: Callable | None = None,
                         coupling: str = "magnetic", cap: float = 0.5) -> Discretization:
    """Symmetric form of the magnetic Schroedinger operator on interior vertices.

    ``coupling="magnetic"`` assembles sum_j (d_j u + i k_j u) conj(d_j v + i k_j v), a
    Hermitian form that is gauge covariant under u -> exp(-i k.x) u for constant k.
    ``coupling="real"`` assembles sum_j (d_j u + k_j u)(d_j v + k_j v) literally.
    Derivative couplings use 2x2x2 Gauss quadrature, the |k|^2 and potential terms
    are lumped, the potential with the same capping as ``assemble_hamiltonian_3d``.
    """
    if coupling not in ("magnetic", "real"):
        raise ValueError("coupling must be 'magnetic' or 'real'")
    kf = _as_field(k)
    nodes, origin, size = _element_geometry(mesh)
    ne = len(nodes)
    local = np.zeros((ne, 8, 8), dtype=complex if coupling == "magnetic" else float)
    for gx in _GP:
        for gy in _GP:
            for gz in _GP:
                t = np.array([gx, gy, gz])
                # 1D hat values and slopes at the Gauss point, per corner
                val = np.where(_CORNERS == 1, t, 1 - t)  # (8, 3)
                phi = val.prod(axis=1)  # (8,)
                sgn = np.where(_CORNERS == 1, 1.0, -1.0)
                grad = np.empty((ne, 8, 3))
                for d in range(3):
                    others = np.prod(np.delete(val, d, axis=1), axis=1)
                    grad[:, :, d] = sgn[:, d] * others / size[:, d:d + 1]
                wq = size.prod(axis=1) / 8.0
                kq = np.asarray(kf(origin + size * t), dtype=float)  # (ne, 3)
                gg = np.einsum("ead,ebd->eab", grad, grad)
                kg = np.einsum("ed,ead->ea", kq, grad)  # k . grad phi_a
                if coupling == "magnetic":
                    # i k.(phi_b grad phi_a - phi_a grad phi_b)
                    cross = 1j * (kg[:, :, None] * phi[None, None, :] - phi[None, :, None] * kg[:, None, :])
                else:
                    cross = kg[:, :, None] * phi[None, None, :] + phi[None, :, None] * kg[:, None, :]
                local += wq[:, None, None] * (gg + cross)
    A = _scatter(mesh, nodes, local)
    m = lumped_mass(mesh)
    # |k|^2 lumped at the vertices
    coords = mesh.coordinates()[mesh.interior_mask()]
    k2 = np.sum(np.asarray(kf(coords), dtype=float) ** 2, axis=-1)
    diag = m * k2
    if V0_over_rS is not None:
        C, _ = _capped_points(mesh, cap)
        diag = diag + m * np.asarray(V0_over_rS(C), dtype=float)
    A = (A + sp.diags(diag)).tocsr()
    if coupling == "magnetic":
        A = ((A + A.conj().T) / 2).tocsr()
    return Discretization(A, sp.diags(m).tocsr(), mesh, np.flatnonzero(mesh.interior_mask()))


# -- conformal rescaling ------------------------------------------------------

def centered_difference(x, axis: int, shape) -> sp.csr_matrix:
    """Centered first difference along one axis of a tensor grid; zero rows at the ends."""
    n = len(x)
    d = x[2:] - x[:-2]
    rows = np.r_[np.arange(1, n - 1), np.arange(1, n - 1)]
    cols = np.r_[np.arange(2, n), np.arange(0, n - 2)]
    vals = np.r_[1 / d, -1 / d]
    D1 = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    eyes = [sp.identity(s, format="csr") for s in shape]
    eyes[axis] = D1
    return sp.kron(sp.kron(eyes[0], eyes[1]), eyes[2]).tocsr()


def _element_midpoints(mesh: TensorMesh3D) -> np.ndarray:
    _, origin, size = _element_geometry(mesh)
    return origin + size / 2


def laplacian_operator(mesh: TensorMesh3D) -> sp.csr_matrix:
    """Nodal Laplacian -M_L^{-1} K on all vertices (no boundary condition)."""
    K = q1_stiffness(mesh, interior_only=False)
    m = lumped_mass(mesh, interior_only=False)
    return (-sp.diags(1 / m) @ K).tocsr()


def assemble_conformal_laplacian(mesh: TensorMesh3D, W: WeightEvaluator) -> sp.csr_matrix:
    """Delta_h u = rho^2 Delta u - (n-2) rho grad(rho).grad(u), n = 3, on all vertices.

    Written as div(rho^2 grad u) - n rho grad(rho).grad(u). The divergence part
    uses Q1 stiffness with rho^2 at element midpoints and the lumped mass; the
    first-order part uses centered differences.
    """
    if W.ambient_dim != 3:
        raise MeshError("conformal Laplacian needs a weight on R^3")
    rho_mid = W.rho(_element_midpoints(mesh))
    K = q1_stiffness(mesh, rho_mid**2, interior_only=False)
    m = lumped_mass(mesh, interior_only=False)
    rho = W.rho(mesh.coordinates())
    Ds = [centered_difference(a, d, mesh.shape) for d, a in enumerate(mesh.axes)]
    first = sum(sp.diags(rho * (D @ rho)) @ D for D in Ds)
    return (-sp.diags(1 / m) @ K - 3 * first).tocsr()


def dump_operator(A) -> str:
    """COO triplets 'row col value' sorted by (row, col)."""
    C = sp.coo_matrix(A)
    C.sum_duplicates()
    order = np.lexsort((C.col, C.row))
    buf = io.StringIO()
    complex_vals = np.iscomplexobj(C.data)
    for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
        if complex_vals:
            buf.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
        else:
            buf.write(f"{r} {c} {v:.17g}\n")
    return buf.getvalue()
