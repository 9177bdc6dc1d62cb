import logging

import numpy as np
import pytest

from carreau_darcy.cell import permeability_tensor
from carreau_darcy.darcy import (FIELD_NAMES, DarcyDiscretization, DarcyProblem, ExactEvaluator,
                                 LinearEvaluator, TableEvaluator, assemble_residual, newton_solve,
                                 postprocess, solve_linear_darcy, velocity_l2)
from carreau_darcy.errors import CellSolveError, OuterNewtonDiverged
from carreau_darcy.mesh import TriMesh, generate_domain_mesh
from carreau_darcy.permeability import PermeabilityModel, tabulate

from conftest import params

CHANNEL = ["x2*(0.5-x2)", "0"]


@pytest.fixture(scope="module")
def omega():
    return generate_domain_mesh((0.0, 1.0, 0.0, 0.5), 0.125)


def _linear_problem(omega, forcing, A=np.eye(2), mu=1.0):
    return DarcyProblem(omega, forcing, params(r=2.0, mu=mu), LinearEvaluator(A, mu, 1.0))


def test_single_triangle_residual_closed_form():
    # U = c constant: R_i = c . int grad psi_i, with int grad psi = area * grad(lambda) / 3 at
    # vertices and 4 area (grad lambda_i + grad lambda_j) / 3 at the midpoint of edge ij
    tri = TriMesh(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                  np.zeros((0, 2)), np.zeros(0))
    d = DarcyDiscretization(tri)
    c = np.array([0.3, -1.1])
    R = d.flux_residual(np.tile(c, (1, 3, 1)))
    area = 1.0
    gl = np.array([[-0.5, -1.0], [0.5, 0.0], [0.0, 1.0]])
    nodes = d.space.node_coords
    expected = np.empty(6)
    for n in range(6):
        if n < 3:
            expected[n] = area * gl[n] @ c / 3
        else:
            i, j = d.space.edges[n - 3]
            assert np.allclose(nodes[n], 0.5 * (tri.vertices[i] + tri.vertices[j]))
            expected[n] = 4 * area * (gl[i] + gl[j]) @ c / 3
    assert np.allclose(R[d.space.dof_map[:, 0]], expected, rtol=1e-14, atol=1e-15)
    assert abs(R.sum()) < 1e-14


def test_zero_forcing_gives_zero_pressure(omega):
    res = newton_solve(_linear_problem(omega, ["0", "0"]))
    assert res.iterations == 1
    assert not np.any(res.P)


def test_gradient_forcing_is_absorbed_by_the_pressure(omega):
    # f' = grad g with g quadratic: P = g - mean(g) exactly and the flow vanishes
    g = lambda x: x[:, 0] ** 2 + x[:, 0] * x[:, 1] - 3 * x[:, 1] ** 2  # noqa: E731
    problem = _linear_problem(omega, lambda x: np.column_stack([2 * x[:, 0] + x[:, 1],
                                                                x[:, 0] - 6 * x[:, 1]]))
    res = newton_solve(problem)
    d = problem.disc
    exact = d.space.interpolate(g)
    exact -= d.mean(exact)
    assert np.abs(res.P - exact).max() < 1e-12
    assert np.abs(res.V).max() < 1e-12


def test_newton_matches_the_linear_solver(omega):
    A = np.array([[0.02, 0.003], [0.003, 0.01]])
    lin = solve_linear_darcy(omega, CHANNEL, A, 10.0)
    res = newton_solve(_linear_problem(omega, CHANNEL, A, 10.0))
    assert res.iterations == 1
    assert np.abs(res.P - lin.P).max() <= 1e-12 * np.abs(lin.P).max()
    assert abs(lin.mean()) < 1e-15


def test_linear_solver_rejects_non_spd_tensors(omega):
    with pytest.raises(ValueError):
        solve_linear_darcy(omega, CHANNEL, np.array([[1.0, 0.0], [0.0, -1.0]]), 1.0)
    with pytest.raises(ValueError):
        solve_linear_darcy(omega, CHANNEL, np.array([[1.0, 0.5], [0.0, 1.0]]), 1.0)


def test_newtonian_cells_reproduce_the_linear_law(omega, tiny_disk):
    p = params(r=2.0, mu=10.0)
    A = permeability_tensor(tiny_disk)
    lin = solve_linear_darcy(omega, CHANNEL, A, 10.0)
    model = PermeabilityModel(tiny_disk, p, cell_options={"rtol": 1e-12})
    res = newton_solve(DarcyProblem(omega, CHANNEL, p, ExactEvaluator(model)))
    d = lin.disc
    assert d.l2_norm(res.P - lin.P) <= 1e-6 * d.l2_norm(lin.P)


@pytest.fixture(scope="module")
def coarse_omega():
    return generate_domain_mesh((0.0, 1.0, 0.0, 0.5), 0.25)


@pytest.fixture(scope="module")
def nonlinear_run(coarse_omega, tiny_disk):
    p = params(r=1.3, lam=10.0, mu=1.0)
    model = PermeabilityModel(tiny_disk, p)
    problem = DarcyProblem(coarse_omega, ["x2*(0.5-x2)", "0.5*x1"], p, ExactEvaluator(model))
    return problem, newton_solve(problem, tol=1e-10)


def test_nonlinear_run_converges_with_zero_mean(nonlinear_run):
    problem, res = nonlinear_run
    h = res.residuals
    assert res.iterations >= 2
    assert all(b <= a for a, b in zip(h, h[1:]))
    assert h[-1] <= 1e-10 * h[0]
    assert abs(res.mean()) <= 1e-12 * max(1.0, np.abs(res.P).max())
    # the final residual is recomputed from scratch
    assert np.linalg.norm(assemble_residual(problem, res.P)) == pytest.approx(h[-1], rel=1e-9, abs=1e-300)


def test_cache_is_reused_across_outer_iterations(nonlinear_run):
    _, res = nonlinear_run
    assert res.cache["hits"] > 0
    assert res.misses[0] > 0
    assert len(res.misses) == res.iterations + 1


def test_postprocess_fields(nonlinear_run):
    problem, res = nonlinear_run
    f = postprocess(problem, res)
    assert tuple(f) == FIELD_NAMES
    T = len(problem.omega.triangles)
    for name in FIELD_NAMES[:-1]:
        assert f[name].shape == (T,) and np.all(np.isfinite(f[name]))
    assert f["P"].shape == (problem.omega.n_vertices,)
    assert np.allclose(f["normV"], np.hypot(f["V1"], f["V2"]))
    assert velocity_l2(res) > 0


def test_vertex_mean_jacobian_reaches_the_same_pressure(coarse_omega, tiny_disk, nonlinear_run):
    problem, res = nonlinear_run
    model = PermeabilityModel(tiny_disk, problem.params)
    other = newton_solve(DarcyProblem(coarse_omega, ["x2*(0.5-x2)", "0.5*x1"], problem.params,
                                      ExactEvaluator(model), jacobian_eval="vertex-mean"), tol=1e-10)
    d = res.disc
    assert d.l2_norm(other.P - res.P) <= 1e-8 * d.l2_norm(res.P)


def test_tabulated_mode_is_close_to_exact(coarse_omega, tiny_disk, nonlinear_run):
    problem, res = nonlinear_run
    # the iterates start from P = 0, where xi is the forcing itself
    reach = max(np.linalg.norm(problem.forcing_at_vertices(), axis=-1).max(),
                np.linalg.norm(res.xi, axis=1).max())
    xi_max = 1.5 * reach
    table = tabulate(problem.params, PermeabilityModel(tiny_disk, problem.params),
                     np.linspace(0.0, xi_max, 6), 16, n_validation=8)
    tab = newton_solve(DarcyProblem(coarse_omega, problem.forcing, problem.params, TableEvaluator(table)))
    d = res.disc
    assert d.l2_norm(tab.P - res.P) <= 2 * table.max_rel_err * d.l2_norm(res.P)


def test_disk_velocity_is_parallel_to_the_driving_force(nonlinear_run):
    _, res = nonlinear_run
    cross = res.V[:, 0] * res.xi[:, 1] - res.V[:, 1] * res.xi[:, 0]
    angle = np.arctan2(np.abs(cross), np.sum(res.V * res.xi, axis=1))
    assert angle.max() <= 1e-2


def test_ellipse_velocity_turns_away_from_the_driving_force(omega, tiny_ellipse):
    lin = solve_linear_darcy(omega, CHANNEL, permeability_tensor(tiny_ellipse), 1.0)
    V, xi = lin.V, lin.xi
    keep = np.linalg.norm(xi, axis=1) > 1e-3 * np.linalg.norm(xi, axis=1).max()
    cross = V[keep, 0] * xi[keep, 1] - V[keep, 1] * xi[keep, 0]
    angle = np.arctan2(np.abs(cross), np.sum(V[keep] * xi[keep], axis=1))
    assert angle.max() > 0.1


def test_outer_newton_reports_non_convergence(coarse_omega, tiny_disk):
    p = params(r=1.3, lam=10.0, mu=1.0)
    problem = DarcyProblem(coarse_omega, CHANNEL, p, ExactEvaluator(PermeabilityModel(tiny_disk, p)))
    with pytest.raises(OuterNewtonDiverged) as info:
        newton_solve(problem, tol=1e-300, max_outer=1)
    assert len(info.value.history) == 2


def test_cell_failure_names_the_triangle(omega, tiny_disk):
    p = params(r=1.3, lam=1000.0, mu=0.01)
    model = PermeabilityModel(tiny_disk, p, cell_options={"max_iters": 1})
    problem = DarcyProblem(omega, CHANNEL, p, ExactEvaluator(model))
    with pytest.raises(CellSolveError) as info:
        newton_solve(problem)
    assert info.value.triangle is not None
    tri = omega.triangles[info.value.triangle]
    assert info.value.xi is not None and len(tri) == 3


def test_reynolds_number():
    omega = generate_domain_mesh((0, 1, 0, 1), 0.5)
    problem = _linear_problem(omega, CHANNEL, mu=0.1)
    problem.eps = 0.01
    assert problem.reynolds == pytest.approx(1000.0)


def test_outer_iterations_are_logged(omega, caplog):
    with caplog.at_level(logging.INFO, logger="carreau_darcy.iterations"):
        newton_solve(_linear_problem(omega, CHANNEL))
    assert any(r.getMessage().startswith("outer 1 residual=") for r in caplog.records)
