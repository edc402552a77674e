import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kondratiev.geometry import (
    AdmissibleOrder,
    AffineSubspace,
    GeometryError,
    MultiElectronSpec,
    PreconditionError,
    SingularFamily,
    admissible_order,
    canonical_sequence,
    check_weak_transversality,
    closure,
    family_from_json,
    family_to_json,
    hyperfaces_at_infinity,
    intersect,
    is_admissible,
    lattice,
    make_family,
    minimal_elements,
    multi_electron_family,
)


def line(p, v, label=""):
    return AffineSubspace.from_spanning(p, [v], label)


def plane_eq(n, c, label=""):
    return AffineSubspace.from_equations([n], [c], label)


def test_distance_and_projection():
    L = line([0, 0, 1], [1, 0, 0])
    assert L.dim == 1
    assert np.isclose(L.distance([3.0, 4.0, 1.0]), 4.0)
    np.testing.assert_allclose(L.project([3.0, 4.0, 5.0]), [3.0, 0.0, 1.0])
    pts = np.array([[0, 0, 1], [0, 3, 5]], dtype=float)
    np.testing.assert_allclose(L.distance(pts), [0.0, 5.0])


def test_equations_round_trip_spanning():
    a = AffineSubspace.from_equations([[1, 1, 0]], [2.0])
    b = AffineSubspace.from_spanning([2, 0, 0], [[1, -1, 0], [0, 0, 3]])
    assert a.same_as(b) and b.same_as(a)
    assert not a.is_strict_subset_of(b)


def test_rejects_bad_input():
    with pytest.raises(GeometryError):
        AffineSubspace(3, [0, 0, 0], [[1, 1, 0]])  # not orthonormal
    with pytest.raises(GeometryError):
        AffineSubspace.from_equations([[1, 0], [1, 0]], [0, 1])
    with pytest.raises(GeometryError):
        AffineSubspace(2, [0, 0], np.eye(2))  # whole space
    with pytest.raises(GeometryError):
        SingularFamily(3, (line([0, 0, 0], [1, 0, 0], "a"), line([5, 0, 0], [2, 0, 0], "b")))


def test_intersect_cases():
    x = line([0, 0, 0], [1, 0, 0], "x")
    y = line([0, 0, 0], [0, 1, 0], "y")
    skew = line([0, 0, 1], [0, 1, 0], "s")
    cut = intersect(x, y)
    assert cut.dim == 0 and cut.label == "x&y" and np.allclose(cut.basepoint, 0)
    assert intersect(x, skew) is None
    p1, p2 = plane_eq([0, 0, 1], 0.0), plane_eq([0, 0, 1], 1.0)
    assert intersect(p1, p2) is None
    assert intersect(x, p1).same_as(x)


def test_two_electron_family():
    fam = multi_electron_family(MultiElectronSpec(2, (-1.0, -1.0), (1.0,)))
    assert fam.labels == ["X1", "X2", "X12", "X1&X2"]
    assert [m.dim for m in fam] == [3, 3, 3, 0]
    origin = fam.members[3]
    assert np.allclose(origin.basepoint, 0)
    lat = lattice(fam)
    assert lat.containment == frozenset({(3, 0), (3, 1), (3, 2)})
    assert minimal_elements(lat) == frozenset({3})
    order = admissible_order(fam)
    assert [fam.labels[i] for i in order.permutation] == ["X1&X2", "X1", "X12", "X2"]
    seq = canonical_sequence(fam, order)
    assert seq.stages[0].previously_blown == frozenset()
    assert all(s.previously_blown == frozenset({3}) for s in seq.stages[1:])
    assert hyperfaces_at_infinity(fam)[-1] == "scattering_infinity"


def _linear_oracle_count(n):
    """Distinct intersections of all nonempty subsets of the generators, compared as projectors."""
    eqs = []
    for j in range(n):
        e = np.zeros((3, 3 * n))
        e[:, 3 * j:3 * j + 3] = np.eye(3)
        eqs.append(e)
    for i, j in itertools.combinations(range(n), 2):
        e = np.zeros((3, 3 * n))
        e[:, 3 * i:3 * i + 3] = np.eye(3)
        e[:, 3 * j:3 * j + 3] = -np.eye(3)
        eqs.append(e)
    projectors = []
    for r in range(1, len(eqs) + 1):
        for sub in itertools.combinations(eqs, r):
            A = np.vstack(sub)
            _, s, vt = np.linalg.svd(A)
            rank = int((s > 1e-10).sum())
            null = vt[rank:]
            P = null.T @ null
            if not any(np.allclose(P, Q) for Q in projectors):
                projectors.append(P)
    return projectors


def test_three_electron_closure_matches_oracle():
    fam = multi_electron_family(MultiElectronSpec(3, (-1.0,) * 3, (1.0,) * 3))
    oracle = _linear_oracle_count(3)
    assert len(fam) == len(oracle) == 14
    for m in fam:
        P = m.directions.T @ m.directions
        assert any(np.allclose(P, Q) for Q in oracle)
    dims = sorted(m.dim for m in fam)
    assert dims.count(6) == 6 and dims.count(3) == 7 and dims.count(0) == 1


def test_zero_coefficients_drop_strata():
    fam = multi_electron_family(MultiElectronSpec(2, (-1.0, 0.0), (0.0,)))
    assert fam.labels == ["X1"]
    with pytest.raises(GeometryError):
        multi_electron_family(MultiElectronSpec(2, (0.0, 0.0), (0.0,)))


def test_preconditions_on_unclosed_family():
    x = line([0, 0, 0], [1, 0, 0], "x")
    y = line([0, 0, 0], [0, 1, 0], "y")
    fam = make_family([x, y])
    rep = check_weak_transversality(fam)
    assert not rep and rep.witness[:2] == (0, 1)
    with pytest.raises(PreconditionError):
        admissible_order(fam)
    with pytest.raises(PreconditionError):
        minimal_elements(lattice(fam))
    closed = closure(fam)
    assert len(closed) == 3
    bad = AdmissibleOrder((0, 1, 2))  # the point comes last: prefix {x, y} is not closed
    assert not is_admissible(closed, bad)
    with pytest.raises(PreconditionError):
        canonical_sequence(closed, bad)


def test_json_round_trip():
    fam = multi_electron_family(MultiElectronSpec(2, (-1.0, -1.0), (1.0,)))
    text = family_to_json(fam)
    back = family_from_json(text)
    assert back.labels == fam.labels and back.closed_flag
    assert all(a.same_as(b) for a, b in zip(fam, back))
    assert json.loads(text)["ambient_dim"] == 6


small_int = st.integers(-2, 2)


@st.composite
def affine_families(draw):
    d = draw(st.integers(2, 4))
    members = []
    for _ in range(draw(st.integers(1, 4))):
        rows = draw(st.integers(1, d - 1))
        A = np.array(draw(st.lists(st.lists(small_int, min_size=d, max_size=d), min_size=rows, max_size=rows)),
                     dtype=float)
        if np.linalg.matrix_rank(A) == 0:
            continue
        x0 = np.array(draw(st.lists(small_int, min_size=d, max_size=d)), dtype=float)
        s = AffineSubspace.from_equations(A, A @ x0, label=f"S{len(members)}")
        if not any(s.same_as(m) for m in members):
            members.append(s)
    if not members:
        members.append(AffineSubspace(d, np.zeros(d), np.zeros((0, d)), "S0"))
    return SingularFamily(d, tuple(members))


@settings(max_examples=100, deadline=None)
@given(affine_families())
def test_closure_idempotent_and_order_admissible(fam):
    closed = closure(fam)
    assert check_weak_transversality(closed)
    again = closure(closed)
    assert len(again) == len(closed)
    assert all(closed.index_of(m) is not None for m in again)
    for m in fam:
        assert closed.index_of(m) is not None
    order = admissible_order(closed)
    assert is_admissible(closed, order)
    dims = [closed.members[i].dim for i in order.permutation]
    assert dims == sorted(dims)
    seq = canonical_sequence(closed, order)
    for pos, stage in enumerate(seq.stages):
        earlier = set(order.permutation[:pos])
        assert stage.previously_blown <= earlier
