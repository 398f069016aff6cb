import numpy as np
import pytest
import scipy.sparse as sps

from polystokes.assembly import assemble, interpolate, project_pressure, project_zero_mean
from polystokes.divfree import build_basis, build_lifting
from polystokes.harness import PATCH_CASES
from polystokes.solver import (CGBreakdown, CGMaxIter, SolverError, UzawaDiverged, cg,
                               energy_norm, recover_pressure, solve_reduced, solve_velocity,
                               uzawa)

from conftest import system, uniform


def test_cg_diagonal():
    x, info = cg(sps.diags([2.0, 1.0]), np.array([2.0, 1.0]), 1e-14, return_info=True)
    assert np.allclose(x, [1, 1]) and info.iterations <= 2


def test_cg_zero_rhs():
    x, info = cg(np.eye(3), np.zeros(3), return_info=True)
    assert not x.any() and info.iterations == 0


def test_cg_breakdown_on_indefinite():
    with pytest.raises(CGBreakdown):
        cg(np.diag([1.0, -1.0]), np.array([1.0, 1.0]))


def test_cg_max_iter_keeps_iterate():
    A = np.diag(np.arange(1.0, 51.0))
    with pytest.raises(CGMaxIter) as exc:
        cg(A, np.ones(50), 1e-14, max_iter=3)
    assert exc.value.x is not None and exc.value.residual > 1e-14


def test_cg_matches_direct_solve(rng):
    M = rng.standard_normal((30, 30))
    A = M @ M.T + 30 * np.eye(30)
    b = rng.standard_normal(30)
    assert np.allclose(cg(A, b, 1e-13), np.linalg.solve(A, b), atol=1e-10)
    assert np.allclose(cg(lambda v: A @ v, b, 1e-13, precond=lambda r: r / np.diag(A)),
                       np.linalg.solve(A, b), atol=1e-10)


def test_reduced_cg_iterations_small_mesh():
    case = PATCH_CASES[1]
    s = assemble(uniform(4), 1, case.f)
    res = solve_reduced(s.mesh, 1, g=case.u, tol=1e-12, system=s)
    assert res.iterations <= 33
    assert res.method == "reduced" and not res.timed_out


def test_zero_data_gives_zero_solution():
    s = assemble(uniform(4), 2)
    res = solve_reduced(s.mesh, 2, system=s)
    assert not res.u_dofs.any() and not res.p_coeffs.any()


def test_pressure_recovery_on_consistent_data():
    # u exact interpolant, F built so that A u + B p = F for a known p
    s = system("voronoi", 16, 2)
    u = interpolate(s.mesh, 2, PATCH_CASES[2].u, s.dofmap)
    p = project_zero_mean(s, project_pressure(s.mesh, 2, lambda x, y: x * y - 0.3 * x))
    import dataclasses

    s2 = dataclasses.replace(s, F=s.A @ u + s.B @ p)
    got = recover_pressure(s2, u, tol=1e-13)
    assert np.abs(got - p).max() < 1e-9


def test_pressure_recovery_stagnation_is_reported():
    s = system("uniform", 4, 1)
    rhs = np.random.default_rng(0).standard_normal(s.dofmap.n_dof)
    import dataclasses

    with pytest.raises(SolverError):
        recover_pressure(dataclasses.replace(s, F=rhs), np.zeros(s.dofmap.n_dof), 1e-14, max_iter=2)


@pytest.mark.parametrize("k", [1, 2])
def test_uzawa_agrees_with_reduced(k):
    case = PATCH_CASES[k]
    s = assemble(uniform(4), k, case.f)
    red = solve_reduced(s.mesh, k, g=case.u, tol=1e-12, system=s)
    uz = uzawa(s, case.u, tol=1e-10)
    assert not uz.timed_out
    assert energy_norm(s, red.u_dofs - uz.u_dofs) < 1e-7
    assert np.abs(red.p_coeffs - uz.p_coeffs).max() < 1e-6


def test_uzawa_timeout_marker():
    case = PATCH_CASES[2]
    s = assemble(uniform(8), 2, case.f)
    uz = uzawa(s, case.u, tol=1e-14, max_outer=3)
    assert uz.timed_out and uz.iterations == 3
    uz = uzawa(s, case.u, tol=1e-14, time_budget=0.0)
    assert uz.timed_out


def test_uzawa_fixed_unit_step_diverges_for_k2():
    case = PATCH_CASES[2]
    s = assemble(uniform(4), 2, case.f)
    with pytest.raises(UzawaDiverged):
        uzawa(s, case.u, omega=1.0, tol=1e-10)


def test_lifting_plus_basis_reproduces_interpolant():
    case = PATCH_CASES[3]
    s = assemble(uniform(4), 3, case.f)
    u, info = solve_velocity(s, build_basis(s), build_lifting(s, case.u), 1e-12)
    ref = interpolate(s.mesh, 3, case.u, s.dofmap)
    assert energy_norm(s, u - ref) < 1e-9
