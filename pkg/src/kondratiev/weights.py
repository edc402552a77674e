"""Smoothed distances, face weights, the iterated weight rho and the Coulomb potential.

Everything here is vectorized over leading axes: points have shape ``(..., d)``
and results have shape ``(...)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    AffineSubspace,
    CanonicalSequence,
    GeometryError,
    MultiElectronSpec,
    PreconditionError,
    SingularFamily,
    admissible_order,
    canonical_sequence,
    check_weak_transversality,
    electron_stratum,
    pair_stratum,
)

FACE_WEIGHT_CLIP = 10.0
SINGULAR_DENOM = 1e-300


@dataclass(frozen=True)
class SmoothedDistanceProfile:
    inner_radius: float = 0.5
    outer_radius: float = 2.0

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("need 0 < inner_radius < outer_radius")

    def __call__(self, t):
        return psi(t, self)

    def derivative(self, t):
        return dpsi(t, self)


DEFAULT_PROFILE = SmoothedDistanceProfile()


def _blend(s):
    """C-infinity step h(s) on [0, 1] with h(0)=0, h(1)=1; s must lie in (0, 1)."""
    a = np.exp(-1.0 / s)
    b = np.exp(-1.0 / (1.0 - s))
    return a / (a + b)


def _blend_prime(s):
    a = np.exp(-1.0 / s)
    b = np.exp(-1.0 / (1.0 - s))
    da = a / s**2
    db = -b / (1.0 - s) ** 2
    return (da * b - a * db) / (a + b) ** 2


def psi(t, profile: SmoothedDistanceProfile = DEFAULT_PROFILE):
    """Smoothed distance profile: t near zero, 1 far away, C-infinity in between."""
    t = np.asarray(t, dtype=float)
    lo, hi = profile.inner_radius, profile.outer_radius
    out = np.where(t <= lo, t, 1.0)
    band = (t > lo) & (t < hi)
    if np.any(band):
        tb = t[band]
        h = _blend((tb - lo) / (hi - lo))
        out = np.array(out, dtype=float)
        out[band] = tb * (1.0 - h) + h
    return out if out.ndim else float(out)


def dpsi(t, profile: SmoothedDistanceProfile = DEFAULT_PROFILE):
    t = np.asarray(t, dtype=float)
    lo, hi = profile.inner_radius, profile.outer_radius
    out = np.where(t <= lo, 1.0, 0.0)
    band = (t > lo) & (t < hi)
    if np.any(band):
        tb = t[band]
        s = (tb - lo) / (hi - lo)
        h = _blend(s)
        out = np.array(out, dtype=float)
        out[band] = (1.0 - h) + (1.0 - tb) * _blend_prime(s) / (hi - lo)
    return out if out.ndim else float(out)


def psi_over_t(t, profile: SmoothedDistanceProfile = DEFAULT_PROFILE):
    """psi(t)/t with the removable singularity at t=0 filled in (value 1)."""
    t = np.asarray(t, dtype=float)
    safe = np.where(t <= profile.inner_radius, 1.0, t)
    out = np.where(t <= profile.inner_radius, 1.0, psi(safe, profile) / safe)
    return out if out.ndim else float(out)


def distance_to_subspace(x, A: AffineSubspace):
    return A.distance(x)


def smoothed_distance(x, A: AffineSubspace, profile: SmoothedDistanceProfile = DEFAULT_PROFILE):
    return psi(A.distance(x), profile)


class WeightEvaluator:
    """Weights attached to an intersection-closed family of strata."""

    def __init__(self, family: SingularFamily, profile: SmoothedDistanceProfile = DEFAULT_PROFILE,
                 sequence: CanonicalSequence | None = None):
        if not family.closed_flag and not check_weak_transversality(family):
            raise PreconditionError("weights need an intersection-closed family")
        self.family = family
        self.profile = profile
        self.sequence = sequence if sequence is not None else canonical_sequence(family, admissible_order(family))
        if len(self.sequence) != len(family):
            raise PreconditionError("canonical sequence does not match the family")
        members = family.members
        # substrata of each member, from the full containment relation
        self.substrata = [
            tuple(j for j, b in enumerate(members) if j != i and b.is_strict_subset_of(a))
            for i, a in enumerate(members)
        ]

    @property
    def ambient_dim(self) -> int:
        return self.family.ambient_dim

    def distances(self, x) -> np.ndarray:
        """Euclidean distances to every member, shape (..., n_members)."""
        x = np.asarray(x, dtype=float)
        if not len(self.family):
            raise GeometryError("empty family")
        return np.stack([m.distance(x) for m in self.family.members], axis=-1)

    def r_union(self, x):
        return psi(self.distances(x).min(axis=-1), self.profile)

    def _face_weights(self, dist):
        """Face weights from a precomputed distance table (..., n_members)."""
        r = psi(dist, self.profile)
        fw = np.empty_like(r)
        for i, subs in enumerate(self.substrata):
            if subs:
                rb = psi(dist[..., list(subs)].min(axis=-1), self.profile)
            else:
                rb = np.ones_like(r[..., i])
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(rb > 0, r[..., i] / np.where(rb > 0, rb, 1.0), 0.0)
            fw[..., i] = np.minimum(q, FACE_WEIGHT_CLIP)
        return fw

    def face_weight(self, x, i: int):
        if not 0 <= i < len(self.family):
            raise IndexError(f"member index {i} out of range")
        return self._face_weights(self.distances(x))[..., i]

    def rho(self, x):
        fw = self._face_weights(self.distances(x))
        out = np.ones(fw.shape[:-1])
        for stage in self.sequence.stages:
            out = out * fw[..., stage.index]
        return out if out.ndim else float(out)

    def comparability_estimate(self, samples: int, seed: int, box: float = 3.0):
        """(min, max) of r_union/rho over seeded uniform samples in [-box, box]^d."""
        if samples < 1:
            raise ValueError("samples must be positive")
        rng = np.random.default_rng(seed)
        x = rng.uniform(-box, box, size=(samples, self.ambient_dim))
        dist = self.distances(x)
        keep = dist.min(axis=-1) > SINGULAR_DENOM
        dist = dist[keep]
        fw = self._face_weights(dist)
        ratio = psi(dist.min(axis=-1), self.profile) / np.prod(fw, axis=-1)
        return float(ratio.min()), float(ratio.max())

    def member_index(self, subspace: AffineSubspace) -> int:
        idx = self.family.index_of(subspace)
        if idx is None:
            raise GeometryError(f"stratum {subspace.label!r} is not a family member")
        return idx


def potential_terms(spec: MultiElectronSpec):
    """Yield (coefficient, stratum, slope) so that each Coulomb denominator is slope*dist(x, stratum)."""
    n = spec.n_electrons
    for j, bj in enumerate(spec.b):
        if bj != 0.0:
            yield bj, electron_stratum(n, j), 1.0
    for (i, j), cij in zip(spec.pairs, spec.c):
        if cij != 0.0:
            # |x_i - x_j| = sqrt(2) * dist(x, {x_i = x_j})
            yield cij, pair_stratum(n, i, j), np.sqrt(2.0)


def potential_eval(x, spec: MultiElectronSpec):
    """Coulomb potential on R^{3N}; +-inf where a denominator underflows."""
    x = np.asarray(x, dtype=float)
    n = spec.n_electrons
    if x.shape[-1] != 3 * n:
        raise GeometryError(f"expected points in R^{3 * n}")
    xs = x.reshape(x.shape[:-1] + (n, 3))
    total = np.zeros(x.shape[:-1])
    singular = np.zeros(x.shape[:-1])
    for j, bj in enumerate(spec.b):
        if bj != 0.0:
            den = np.linalg.norm(xs[..., j, :], axis=-1)
            total, singular = _accumulate(total, singular, bj, den)
    for (i, j), cij in zip(spec.pairs, spec.c):
        if cij != 0.0:
            den = np.linalg.norm(xs[..., i, :] - xs[..., j, :], axis=-1)
            total, singular = _accumulate(total, singular, cij, den)
    with np.errstate(invalid="ignore"):
        out = np.where(singular != 0, np.sign(singular) * np.inf, total)
    return out if out.ndim else float(out)


def _accumulate(total, singular, coef, den):
    small = den < SINGULAR_DENOM
    total = total + np.where(small, 0.0, coef / np.where(small, 1.0, den))
    singular = singular + np.where(small, coef, 0.0)
    return total, singular


def rho_times_potential(x, W: WeightEvaluator, spec: MultiElectronSpec):
    """rho(x) V(x) with each 1/dist cancelled analytically against its own face weight.

    Points lying on an intersection of strata (where the face quotient is 0/0)
    give nan.
    """
    x = np.asarray(x, dtype=float)
    dist = W.distances(x)
    fw = W._face_weights(dist)
    rho_val = np.prod(fw, axis=-1)
    out = np.zeros(x.shape[:-1])
    for coef, stratum, slope in potential_terms(spec):
        i = W.member_index(stratum)
        d = dist[..., i]
        subs = W.substrata[i]
        rb = psi(dist[..., list(subs)].min(axis=-1), W.profile) if subs else np.ones_like(d)
        others = np.prod(np.delete(fw, i, axis=-1), axis=-1)
        clipped = fw[..., i] >= FACE_WEIGHT_CLIP
        with np.errstate(divide="ignore", invalid="ignore"):
            # rho / d = (psi(d)/d) / r_B * others, exact when the face weight is unclipped
            smooth = psi_over_t(d, W.profile) / rb * others
            direct = rho_val / d
            term = np.where(clipped, direct, smooth)
            term = np.where(rb > 0, term, np.nan)
        out = out + coef * term / slope
    return out if out.ndim else float(out)


def axes_family_2d() -> SingularFamily:
    """Coordinate axes and the origin in R^2: a small closed family handy for checks."""
    from .geometry import make_family

    xa = AffineSubspace(2, [0.0, 0.0], [[1.0, 0.0]], "x_axis")
    ya = AffineSubspace(2, [0.0, 0.0], [[0.0, 1.0]], "y_axis")
    o = AffineSubspace(2, [0.0, 0.0], np.zeros((0, 2)), "origin")
    return make_family([xa, ya, o])
