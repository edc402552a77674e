"""Graded radial meshes, tensor-product hexahedral meshes and nodal functions."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GradedMesh1D:
    """Nodes r_i = R (i/n)^gamma on [0, R]."""

    box: float
    n: int
    grading: float
    nodes: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.box <= 0:
            raise MeshError("box must be positive")
        if self.n < 4:
            raise MeshError("need at least 4 elements")
        if self.grading < 1:
            raise MeshError("grading must be >= 1")
        nodes = self.box * (np.arange(self.n + 1) / self.n) ** self.grading
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def num_vertices(self) -> int:
        return self.n + 1

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def mesh_id(self) -> str:
        return f"radial(R={self.box:g},n={self.n},gamma={self.grading:g})"

    def coordinates(self) -> np.ndarray:
        return self.nodes[:, None]


def build_radial_mesh(R: float, n: int, gamma: float) -> GradedMesh1D:
    return GradedMesh1D(float(R), int(n), float(gamma))


@dataclass(frozen=True, eq=False)
class TensorMesh3D:
    axes: tuple[np.ndarray, np.ndarray, np.ndarray]
    singular_points: tuple[tuple[float, float, float], ...] = ()
    label: str = ""

    def __post_init__(self):
        axes = []
        for a in self.axes:
            a = np.array(a, dtype=float)
            if a.ndim != 1 or len(a) < 3:
                raise MeshError("each axis needs at least 3 nodes")
            if np.min(np.diff(a)) <= 1e-12:
                raise MeshError("axis nodes must be strictly increasing with spacing > 1e-12")
            a.setflags(write=False)
            axes.append(a)
        pts = tuple(tuple(float(c) for c in p) for p in self.singular_points)
        object.__setattr__(self, "axes", tuple(axes))
        object.__setattr__(self, "singular_points", pts)
        for p in pts:
            self.vertex_of(p)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(len(a) for a in self.axes)

    @property
    def num_vertices(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    @property
    def mesh_id(self) -> str:
        return self.label or "tensor(%dx%dx%d)" % self.shape

    def vertex_of(self, p) -> tuple[int, int, int]:
        """Multi-index of the vertex at point ``p``; error when ``p`` is not a vertex."""
        idx = []
        for a, c in zip(self.axes, p):
            k = int(np.argmin(np.abs(a - c)))
            if abs(a[k] - c) > 1e-12 * max(1.0, abs(c)):
                raise MeshError(f"point {tuple(p)} is not a mesh vertex")
            idx.append(k)
        return tuple(idx)

    def flat_index(self, multi) -> int:
        nx, ny, nz = self.shape
        i, j, k = multi
        return (i * ny + j) * nz + k

    def coordinates(self) -> np.ndarray:
        X, Y, Z = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)

    def interior_mask(self) -> np.ndarray:
        masks = [np.zeros(len(a), bool) for a in self.axes]
        for m in masks:
            m[1:-1] = True
        return np.einsum("i,j,k->ijk", *masks).ravel()

    def local_size(self) -> np.ndarray:
        """Minimum incident edge length at every vertex."""
        hv = []
        for a in self.axes:
            h = np.diff(a)
            hv.append(np.minimum(np.r_[h[0], h], np.r_[h, h[-1]]))
        return np.minimum.outer(np.minimum.outer(hv[0], hv[1]), hv[2]).ravel()

    def min_spacing(self) -> float:
        return float(min(np.diff(a).min() for a in self.axes))


def _axis_nodes(box, background, depth, gamma, centers, cluster_radius):
    pinned = sorted(set(float(c) for c in centers))
    tol = 1e-9 * box
    extra = [np.linspace(-box, box, background + 1)]
    if depth > 0:
        t = cluster_radius * (np.arange(1, depth + 1) / depth) ** gamma
        for c in pinned:
            extra.append(c - t)
            extra.append(c + t)
    cand = np.concatenate(extra)
    cand = cand[(cand >= -box - tol) & (cand <= box + tol)]
    cand = np.clip(cand, -box, box)
    nodes = np.array(pinned, dtype=float)
    for v in np.sort(cand):
        if nodes.size == 0 or np.min(np.abs(nodes - v)) > tol:
            nodes = np.append(nodes, v)
    return np.sort(nodes)


def build_tensor_mesh(box: float, background: int, cluster_depth: int = 0, gamma: float = 2.0,
                      singular_points=((0.0, 0.0, 0.0),), cluster_radius: float | None = None) -> TensorMesh3D:
    """Cube [-box, box]^3: uniform background grid plus graded clusters at each singular point."""
    if box <= 0 or background < 2:
        raise MeshError("need box > 0 and background >= 2")
    if gamma < 1:
        raise MeshError("grading must be >= 1")
    pts = [tuple(float(c) for c in p) for p in singular_points]
    for p in pts:
        if len(p) != 3 or any(abs(c) >= box for c in p):
            raise MeshError(f"singular point {p} outside the open box")
    if len(set(pts)) != len(pts):
        raise MeshError("singular points must be distinct")
    rc = box / 4 if cluster_radius is None else float(cluster_radius)
    axes = tuple(
        _axis_nodes(box, background, cluster_depth, gamma, [p[a] for p in pts], rc) for a in range(3)
    )
    label = f"tensor(R={box:g},bg={background},m={cluster_depth},gamma={gamma:g},Rc={rc:g})"
    return TensorMesh3D(axes, tuple(pts), label)


@dataclass(eq=False)
class GridFunction:
    """Nodal values on a mesh; on radial meshes the values are u(r), not r*u(r)."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.mesh.num_vertices,):
            raise MeshError(f"expected {self.mesh.num_vertices} values, got {self.values.shape}")

    def dump(self) -> str:
        """Plain text: vertex index, coordinates, value."""
        coords = self.mesh.coordinates()
        buf = io.StringIO()
        complex_vals = np.iscomplexobj(self.values)
        for i, (c, v) in enumerate(zip(coords, self.values)):
            cs = " ".join(f"{x:.17g}" for x in c)
            vs = f"{v.real:.17g} {v.imag:.17g}" if complex_vals else f"{v:.17g}"
            buf.write(f"{i} {cs} {vs}\n")
        return buf.getvalue()


def dump_mesh(mesh) -> str:
    coords = mesh.coordinates()
    return "".join(f"{i} " + " ".join(f"{x:.17g}" for x in c) + "\n" for i, c in enumerate(coords))
