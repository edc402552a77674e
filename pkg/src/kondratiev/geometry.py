"""Affine singular strata, intersection-closed families and blow-up bookkeeping.

Strata are affine subspaces of R^d stored in a canonical form: the basepoint is
the point of the subspace closest to the origin and the directions form an
orthonormal basis of the direction space. All objects are immutable.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

ORTHO_TOL = 1e-12
# Tolerance for deciding equality/containment of subspaces.
SUBSPACE_TOL = 1e-10
SCATTERING_FACE = "scattering_infinity"


class GeometryError(ValueError):
    """Invalid geometric input (dimension mismatch, improper stratum, ...)."""


class PreconditionError(ValueError):
    """An operation was called on a family that does not satisfy its precondition."""


def _orthonormal_basis(vectors: np.ndarray, d: int, tol: float = 1e-10) -> np.ndarray:
    """Row-orthonormal basis of the span of the rows of ``vectors``."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.size == 0:
        return np.zeros((0, d))
    u, s, vt = np.linalg.svd(vectors, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return vt[:rank].copy()


def _null_space(matrix: np.ndarray, d: int, tol: float = 1e-10) -> np.ndarray:
    """Row-orthonormal basis of the kernel of ``matrix`` (d columns)."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return np.eye(d)
    u, s, vt = np.linalg.svd(matrix, full_matrices=True)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    return vt[rank:].copy()


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    """An affine stratum ``basepoint + span(directions)`` in R^d."""

    ambient_dim: int
    basepoint: np.ndarray
    directions: np.ndarray
    label: str = ""

    def __post_init__(self):
        d = int(self.ambient_dim)
        if d < 1:
            raise GeometryError("ambient_dim must be positive")
        p = np.asarray(self.basepoint, dtype=float).reshape(-1)
        dirs = np.asarray(self.directions, dtype=float).reshape(-1, d) if np.size(self.directions) else np.zeros((0, d))
        if p.shape != (d,):
            raise GeometryError(f"basepoint has shape {p.shape}, expected ({d},)")
        gram = dirs @ dirs.T
        if not np.allclose(gram, np.eye(len(dirs)), atol=ORTHO_TOL * 10):
            raise GeometryError("directions must be orthonormal")
        if len(dirs) > d - 1:
            raise GeometryError("strata must be proper subspaces (dim <= d - 1)")
        # canonical basepoint: closest point to the origin
        p = p - dirs.T @ (dirs @ p)
        p.setflags(write=False)
        dirs.setflags(write=False)
        object.__setattr__(self, "ambient_dim", d)
        object.__setattr__(self, "basepoint", p)
        object.__setattr__(self, "directions", dirs)

    @classmethod
    def from_spanning(cls, basepoint, vectors, label: str = "") -> "AffineSubspace":
        """Build from a basepoint and arbitrary (not necessarily orthonormal) spanning vectors."""
        p = np.asarray(basepoint, dtype=float).reshape(-1)
        return cls(len(p), p, _orthonormal_basis(vectors, len(p)), label)

    @classmethod
    def from_equations(cls, matrix, rhs=None, label: str = "") -> "AffineSubspace":
        """The solution set of ``matrix @ x = rhs``."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        d = matrix.shape[1]
        rhs = np.zeros(matrix.shape[0]) if rhs is None else np.asarray(rhs, dtype=float)
        p, *_ = np.linalg.lstsq(matrix, rhs, rcond=None)
        if np.linalg.norm(matrix @ p - rhs) > SUBSPACE_TOL * max(1.0, np.linalg.norm(rhs)):
            raise GeometryError("inconsistent equations")
        return cls(d, p, _null_space(matrix, d), label)

    @property
    def dim(self) -> int:
        return int(self.directions.shape[0])

    def with_label(self, label: str) -> "AffineSubspace":
        return AffineSubspace(self.ambient_dim, self.basepoint, self.directions, label)

    def project(self, x) -> np.ndarray:
        """Orthogonal projection of points ``x`` (shape (..., d)) onto the subspace."""
        x = np.asarray(x, dtype=float)
        diff = x - self.basepoint
        return self.basepoint + (diff @ self.directions.T) @ self.directions

    def distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim:
            raise GeometryError(f"point dimension {x.shape[-1]} != ambient dimension {self.ambient_dim}")
        diff = x - self.basepoint
        resid = diff - (diff @ self.directions.T) @ self.directions
        return np.linalg.norm(resid, axis=-1)

    def contains_point(self, x, tol: float = SUBSPACE_TOL) -> bool:
        return bool(self.distance(np.asarray(x, dtype=float)) <= tol * max(1.0, np.linalg.norm(x)))

    def is_subset_of(self, other: "AffineSubspace", tol: float = SUBSPACE_TOL) -> bool:
        _check_same_ambient(self, other)
        if self.dim > other.dim or not other.contains_point(self.basepoint, tol):
            return False
        if self.dim == 0:
            return True
        resid = self.directions - (self.directions @ other.directions.T) @ other.directions
        return bool(np.max(np.linalg.norm(resid, axis=1)) <= tol)

    def same_as(self, other: "AffineSubspace", tol: float = SUBSPACE_TOL) -> bool:
        """Equality as affine sets: basepoint in the other set and zero principal angles."""
        _check_same_ambient(self, other)
        if self.dim != other.dim or not other.contains_point(self.basepoint, tol):
            return False
        if self.dim == 0:
            return True
        angles = sla.subspace_angles(self.directions.T, other.directions.T)
        return bool(np.max(angles) < tol)

    def is_strict_subset_of(self, other: "AffineSubspace", tol: float = SUBSPACE_TOL) -> bool:
        return self.dim < other.dim and self.is_subset_of(other, tol)

    def __repr__(self) -> str:
        return f"AffineSubspace({self.label!r}, dim={self.dim}, ambient={self.ambient_dim})"


def _check_same_ambient(a: AffineSubspace, b: AffineSubspace) -> None:
    if a.ambient_dim != b.ambient_dim:
        raise GeometryError(f"ambient dimension mismatch: {a.ambient_dim} vs {b.ambient_dim}")


def intersect(a: AffineSubspace, b: AffineSubspace, label: str | None = None) -> AffineSubspace | None:
    """Affine intersection of two strata, or ``None`` when it is empty."""
    _check_same_ambient(a, b)
    d = a.ambient_dim
    # p + D^T s = q + E^T t
    system = np.hstack([a.directions.T, -b.directions.T])
    rhs = b.basepoint - a.basepoint
    if system.shape[1]:
        coef, *_ = np.linalg.lstsq(system, rhs, rcond=None)
        point = a.basepoint + a.directions.T @ coef[: a.dim]
    else:
        point = a.basepoint
    scale = max(1.0, np.linalg.norm(a.basepoint), np.linalg.norm(b.basepoint))
    if a.distance(point) > SUBSPACE_TOL * scale or b.distance(point) > SUBSPACE_TOL * scale:
        return None
    # v lies in both direction spaces iff both complementary projections kill it
    eye = np.eye(d)
    stacked = np.vstack([eye - a.directions.T @ a.directions, eye - b.directions.T @ b.directions])
    dirs = _null_space(stacked, d)
    if label is None:
        label = f"{a.label}&{b.label}"
    return AffineSubspace(d, point, dirs, label)


@dataclass(frozen=True)
class SingularFamily:
    ambient_dim: int
    members: tuple[AffineSubspace, ...]
    closed_flag: bool = False

    def __post_init__(self):
        members = tuple(self.members)
        for m in members:
            if m.ambient_dim != self.ambient_dim:
                raise GeometryError("member ambient dimension mismatch")
        for i, j in itertools.combinations(range(len(members)), 2):
            if members[i].same_as(members[j]):
                raise GeometryError(f"duplicate members {members[i].label!r} and {members[j].label!r}")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.members]

    def index_of(self, subspace: AffineSubspace) -> int | None:
        for i, m in enumerate(self.members):
            if m.same_as(subspace):
                return i
        return None


def _dedup_append(members: list[AffineSubspace], cand: AffineSubspace) -> bool:
    if any(m.same_as(cand) for m in members):
        return False
    members.append(cand)
    return True


def closure(family: SingularFamily) -> SingularFamily:
    """Smallest intersection-closed family containing ``family``."""
    members: list[AffineSubspace] = []
    for m in family.members:
        _dedup_append(members, m)
    checked: set[tuple[int, int]] = set()
    changed = True
    while changed:
        changed = False
        for i, j in itertools.combinations(range(len(members)), 2):
            if (i, j) in checked:
                continue
            checked.add((i, j))
            cut = intersect(members[i], members[j])
            if cut is not None and _dedup_append(members, cut):
                changed = True
    return SingularFamily(family.ambient_dim, tuple(members), closed_flag=True)


@dataclass(frozen=True)
class TransversalityReport:
    ok: bool
    witness: tuple[int, int, AffineSubspace] | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_weak_transversality(family: SingularFamily) -> TransversalityReport:
    """Affine families are weakly transversal iff they are intersection-closed.

    The tangent-space condition holds automatically for affine subspaces, so the
    check reduces to closure; the first missing pairwise intersection is returned
    as a witness.
    """
    members = family.members
    for i, j in itertools.combinations(range(len(members)), 2):
        cut = intersect(members[i], members[j])
        if cut is not None and family.index_of(cut) is None:
            return TransversalityReport(False, (i, j, cut))
    return TransversalityReport(True)


def _is_closed(members: Sequence[AffineSubspace]) -> bool:
    for a, b in itertools.combinations(members, 2):
        cut = intersect(a, b)
        if cut is not None and not any(m.same_as(cut) for m in members):
            return False
    return True


@dataclass(frozen=True)
class IntersectionLattice:
    family: SingularFamily
    containment: frozenset[tuple[int, int]]
    minimal_set: frozenset[int]

    def contained_in(self, j: int) -> list[int]:
        """Indices of members strictly contained in member ``j``."""
        return sorted(i for (i, k) in self.containment if k == j)


def lattice(family: SingularFamily) -> IntersectionLattice:
    """Containment order (i, j) meaning member i is a strict subset of member j."""
    members = family.members
    pairs = set()
    for i, a in enumerate(members):
        for j, b in enumerate(members):
            if i != j and a.is_strict_subset_of(b):
                pairs.add((i, j))
    minimal = frozenset(j for j in range(len(members)) if not any(k == j for (_, k) in pairs))
    return IntersectionLattice(family, frozenset(pairs), minimal)


def minimal_elements(lat: IntersectionLattice) -> frozenset[int]:
    if not lat.family.closed_flag and not check_weak_transversality(lat.family):
        raise PreconditionError("minimal_elements requires an intersection-closed family")
    return lat.minimal_set


@dataclass(frozen=True)
class AdmissibleOrder:
    permutation: tuple[int, ...]


def is_admissible(family: SingularFamily, order: AdmissibleOrder) -> bool:
    """Every prefix of the ordered family is intersection-closed."""
    perm = order.permutation
    if sorted(perm) != list(range(len(family))):
        return False
    ordered = [family.members[i] for i in perm]
    return all(_is_closed(ordered[:n]) for n in range(1, len(ordered) + 1))


def _require_closed(family: SingularFamily, what: str) -> None:
    if not family.closed_flag and not check_weak_transversality(family):
        raise PreconditionError(f"{what} requires an intersection-closed family")


def admissible_order(family: SingularFamily) -> AdmissibleOrder:
    """Dimension-ascending order, ties broken lexicographically by label."""
    _require_closed(family, "admissible_order")
    perm = sorted(range(len(family)), key=lambda i: (family.members[i].dim, family.members[i].label, i))
    return AdmissibleOrder(tuple(perm))


@dataclass(frozen=True)
class CanonicalStage:
    index: int
    previously_blown: frozenset[int]


@dataclass(frozen=True)
class CanonicalSequence:
    stages: tuple[CanonicalStage, ...]

    def __len__(self) -> int:
        return len(self.stages)


def canonical_sequence(family: SingularFamily, order: AdmissibleOrder) -> CanonicalSequence:
    """Blow-up stages: each stratum together with the earlier strata it strictly contains."""
    if not is_admissible(family, order):
        raise PreconditionError("order is not admissible for this family")
    members = family.members
    stages = []
    for pos, idx in enumerate(order.permutation):
        earlier = order.permutation[:pos]
        blown = frozenset(j for j in earlier if members[j].is_strict_subset_of(members[idx]))
        stages.append(CanonicalStage(idx, blown))
    return CanonicalSequence(tuple(stages))


@dataclass(frozen=True)
class MultiElectronSpec:
    """Coefficients of V(x) = sum_j b_j/|x_j| + sum_{i<j} c_ij/|x_i - x_j| on R^{3N}."""

    n_electrons: int
    b: tuple[float, ...]
    c: tuple[float, ...] = field(default=())

    def __post_init__(self):
        n = int(self.n_electrons)
        if n < 1:
            raise GeometryError("need at least one electron")
        b = tuple(float(v) for v in self.b)
        c = tuple(float(v) for v in self.c) if self.c else (0.0,) * (n * (n - 1) // 2)
        if len(b) != n or len(c) != n * (n - 1) // 2:
            raise GeometryError(f"expected {n} nucleus and {n * (n - 1) // 2} pair coefficients")
        if not all(np.isfinite(b + c)):
            raise GeometryError("coefficients must be finite")
        object.__setattr__(self, "n_electrons", n)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(itertools.combinations(range(self.n_electrons), 2))


def _pair_label(i: int, j: int, n: int) -> str:
    return f"X{i + 1}{j + 1}" if n < 10 else f"X{i + 1},{j + 1}"


def electron_stratum(n: int, j: int) -> AffineSubspace:
    """{x : x_j = 0} in R^{3n} (0-based electron index)."""
    eq = np.zeros((3, 3 * n))
    eq[:, 3 * j : 3 * j + 3] = np.eye(3)
    return AffineSubspace.from_equations(eq, label=f"X{j + 1}")


def pair_stratum(n: int, i: int, j: int) -> AffineSubspace:
    """{x : x_i = x_j} in R^{3n}."""
    eq = np.zeros((3, 3 * n))
    eq[:, 3 * i : 3 * i + 3] = np.eye(3)
    eq[:, 3 * j : 3 * j + 3] = -np.eye(3)
    return AffineSubspace.from_equations(eq, label=_pair_label(i, j, n))


def multi_electron_family(spec: MultiElectronSpec) -> SingularFamily:
    n = spec.n_electrons
    gens = [electron_stratum(n, j) for j in range(n) if spec.b[j] != 0.0]
    gens += [pair_stratum(n, i, j) for (i, j), cij in zip(spec.pairs, spec.c) if cij != 0.0]
    if not gens:
        raise GeometryError("all coefficients vanish: the singular family is empty")
    return closure(SingularFamily(3 * n, tuple(gens)))


def hyperfaces_at_infinity(family: SingularFamily) -> list[str]:
    """One boundary face per blown-up stratum plus the sphere at infinity.

    Connectivity of the faces is not computed; each stratum counts as one face.
    """
    if len(family):
        _require_closed(family, "hyperfaces_at_infinity")
    return [m.label for m in family.members] + [SCATTERING_FACE]


# -- structured text import/export ------------------------------------------------

def family_to_json(family: SingularFamily) -> str:
    records = [
        {
            "label": m.label,
            "ambient_dim": m.ambient_dim,
            "basepoint": [float(v) for v in m.basepoint],
            "directions": [[float(v) for v in row] for row in m.directions],
        }
        for m in family.members
    ]
    doc = {"ambient_dim": family.ambient_dim, "closed": family.closed_flag, "members": records}
    return json.dumps(doc, indent=2, sort_keys=True)


def family_from_json(text: str) -> SingularFamily:
    doc = json.loads(text)
    d = int(doc["ambient_dim"])
    members = []
    for rec in doc["members"]:
        dirs = np.asarray(rec["directions"], dtype=float).reshape(-1, d)
        members.append(AffineSubspace(int(rec["ambient_dim"]), np.asarray(rec["basepoint"]), dirs, rec["label"]))
    fam = SingularFamily(d, tuple(members))
    if doc.get("closed") and check_weak_transversality(fam):
        fam = SingularFamily(d, fam.members, closed_flag=True)
    return fam


def make_family(members: Iterable[AffineSubspace], close: bool = False) -> SingularFamily:
    members = tuple(members)
    if not members:
        raise GeometryError("empty family")
    fam = SingularFamily(members[0].ambient_dim, members)
    if close:
        return closure(fam)
    if check_weak_transversality(fam):
        return SingularFamily(fam.ambient_dim, fam.members, closed_flag=True)
    return fam
