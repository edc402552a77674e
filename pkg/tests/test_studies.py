import numpy as np
import pytest

from kondratiev.eigensolve import SolveOptions
from kondratiev.mesh import GridFunction, build_radial_mesh, build_tensor_mesh
from kondratiev.studies import (
    HydrogenProblem,
    StudyError,
    convergence_study,
    decay_fit,
    solve_3d,
    solve_magnetic,
    solve_radial,
)


def test_radial_spectrum_matches_rydberg_series():
    sol = solve_radial(150.0, 4000, 2.0, -1.0, opts=SolveOptions(k=3, tol=1e-10, mode="shift_invert", shift=-0.3))
    np.testing.assert_allclose(sol.eigenvalues, [-1 / 4, -1 / 16, -1 / 36], atol=2e-5)
    p = solve_radial(60.0, 3000, 2.0, -1.0, ell=1)
    assert p.eigenvalues[0] == pytest.approx(-1 / 16, abs=1e-5)


def test_radial_charge_scaling():
    # lambda = -b^2/4 for -Delta + b/|x|
    sol = solve_radial(20.0, 2000, 2.0, -2.0)
    assert sol.eigenvalues[0] == pytest.approx(-1.0, abs=1e-5)


def test_decay_fit_exact_on_exponential():
    m = build_radial_mesh(40, 500, 2.0)
    u = GridFunction(m, 3 * np.exp(-0.7 * m.nodes))
    assert decay_fit(u, 5, 20) == pytest.approx(0.7, rel=1e-10)
    tm = build_tensor_mesh(6, 24, 0, 1.0)
    r = np.linalg.norm(tm.coordinates(), axis=1)
    assert decay_fit(GridFunction(tm, np.exp(-1.3 * r)), 1, 5) == pytest.approx(1.3, rel=1e-10)
    with pytest.raises(StudyError):
        decay_fit(u, 5, 5)
    with pytest.raises(StudyError):
        decay_fit(GridFunction(m, np.zeros(501)), 5, 20)


def test_radial_convergence_rate():
    table = convergence_study(HydrogenProblem(), [250, 500, 1000])
    assert table.reference == -0.25 and table.reference_kind == "analytic"
    rates = [row.rate for row in table.rows[1:]]
    assert all(1.8 < r < 2.2 for r in rates)
    assert table.failure is None


def test_extrapolated_reference():
    table = convergence_study(HydrogenProblem(), [250, 500, 1000], analytic=False)
    assert table.reference_kind == "extrapolated"
    assert table.reference == pytest.approx(-0.25, abs=1e-7)
    with pytest.raises(StudyError):
        convergence_study(HydrogenProblem(), [250, 500])


class Failing:
    def exact(self):
        return 0.0

    def run(self, level):
        if level > 2:
            raise RuntimeError("out of memory")
        return 10 * level, 1.0 / level, 1


def test_partial_table_on_failure():
    table = convergence_study(Failing(), [1, 2, 3, 4])
    assert len(table.rows) == 2 and "level 3" in table.failure


def test_small_3d_hydrogen_and_magnetic_zero_field():
    mesh = build_tensor_mesh(8, 12, 6, 2.0)
    a = solve_3d(mesh, [(0, 0, 0)], [-1.0])
    b = solve_magnetic(mesh, (0, 0, 0), [(0, 0, 0)], [-1.0])
    assert a.eigenvalues[0] == pytest.approx(-0.25, abs=0.02)
    assert b.eigenvalues[0] == pytest.approx(a.eigenvalues[0], abs=1e-7)
    u = a.functions[0]
    assert u.values[mesh.flat_index(mesh.vertex_of((0, 0, 0)))] > 0
