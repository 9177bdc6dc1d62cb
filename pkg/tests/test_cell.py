import logging

import numpy as np
import pytest

from carreau_darcy import kernels
from carreau_darcy.cell import (CellProblem, permeability_jacobian, permeability_tensor,
                                solve_cell, solve_linearized, solve_stokes_cell)
from carreau_darcy.errors import NewtonDiverged

from conftest import params

STRONG = dict(r=1.3, lam=1000.0, mu=0.1)


def _energy(disc, w, p):
    """Discrete potential ``mu int G(|D w|^2)`` whose gradient is the viscous residual."""
    _, grads, wdet = disc.V.geometry()
    s = kernels.strain_sq(grads, disc.local_velocity(w))
    G = (p.eta0 - p.eta_inf) / (p.lam * p.r) * ((1 + p.lam * s) ** (p.r / 2) - 1) + 0.5 * p.eta_inf * s
    return p.mu * float(np.sum(wdet * G))


def test_zero_force_gives_zero_flow(tiny_disk):
    sol = solve_cell(CellProblem(tiny_disk, params(), [0.0, 0.0]))
    assert sol.newton_iters == 0
    assert not np.any(sol.w) and not np.any(sol.V)


@pytest.mark.parametrize("kw", [dict(r=1.3, lam=1.0, mu=1.0), dict(r=1.3, lam=1000.0, mu=1.0),
                                dict(r=2.6, lam=3.0, mu=1.0, eta_inf=0.2)])
def test_residual_is_gradient_of_energy(tiny_disk, kw, rng):
    p = params(**kw)
    w = 0.05 * rng.standard_normal(tiny_disk.n_u)
    v = rng.standard_normal(tiny_disk.n_u)
    h = 1e-6
    fd = (_energy(tiny_disk, w + h * v, p) - _energy(tiny_disk, w - h * v, p)) / (2 * h)
    an = tiny_disk.viscous_residual(w, p) @ v
    assert fd == pytest.approx(an, rel=1e-6)


@pytest.mark.parametrize("kw", [dict(r=1.3, lam=1.0, mu=1.0), dict(r=1.3, lam=1000.0, mu=0.1),
                                dict(r=2.6, lam=3.0, mu=2.0)])
def test_jacobian_matches_finite_differences(tiny_disk, kw, rng):
    p = params(**kw)
    w = 0.05 * rng.standard_normal(tiny_disk.n_u)
    v = rng.standard_normal(tiny_disk.n_u)
    _, K = tiny_disk.operator(w, p)
    h = 1e-7
    fd = (tiny_disk.viscous_residual(w + h * v, p) - tiny_disk.viscous_residual(w - h * v, p)) / (2 * h)
    assert np.abs(fd - K @ v).max() <= 1e-6 * np.abs(K @ v).max()
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()


def test_newtonian_case_converges_in_one_step(tiny_disk):
    p = params(r=2.0, mu=3.0)
    xi = np.array([0.3, -0.7])
    sol = solve_cell(CellProblem(tiny_disk, p, xi))
    assert sol.newton_iters == 1
    A = permeability_tensor(tiny_disk)
    assert np.allclose(sol.V, A @ xi / 3.0, rtol=1e-10, atol=0)


def test_mu_rescaling_identity(tiny_disk):
    xi = np.array([0.8, 0.3])
    a = solve_cell(CellProblem(tiny_disk, params(r=1.3, lam=10.0, mu=0.25), xi), rtol=1e-13)
    b = solve_cell(CellProblem(tiny_disk, params(r=1.3, lam=10.0, mu=1.0), xi / 0.25), rtol=1e-13)
    assert np.allclose(a.V, b.V, rtol=1e-10, atol=0)


def test_strongly_nonlinear_solve_and_invariants(tiny_disk):
    sol = solve_cell(CellProblem(tiny_disk, params(**STRONG), [1.0, 0.0]))
    h = sol.history
    assert all(b < a for a, b in zip(h[1:], h[2:]))
    assert sol.residual <= 1e-8 * h[0]
    assert np.abs(tiny_disk.divergence(sol.w)).max() <= 1e-10
    assert abs(tiny_disk.pressure_mean @ sol.pi) <= 1e-12
    # strong shear thinning amplifies the flow far beyond the Newtonian value
    A = permeability_tensor(tiny_disk)
    assert sol.V[0] > 100 * A[0, 0] / 0.1
    assert abs(sol.V[1]) <= 1e-3 * abs(sol.V[0])


def test_newton_gives_up_after_max_iters(tiny_disk):
    with pytest.raises(NewtonDiverged) as info:
        solve_cell(CellProblem(tiny_disk, params(**STRONG), [1.0, 0.0]), max_iters=2)
    assert info.value.iterations == 2
    assert np.array_equal(info.value.xi, [1.0, 0.0])


def test_newtonian_tensor_is_spd_and_isotropic_for_the_disk(tiny_disk):
    A = permeability_tensor(tiny_disk)
    assert abs(A[0, 1] - A[1, 0]) <= 1e-6 * np.abs(A).max()
    assert np.all(np.linalg.eigvalsh(A) > 0)
    assert A[0, 0] == pytest.approx(A[1, 1], rel=1e-3)
    assert np.allclose(permeability_tensor(tiny_disk, form="laplacian"), A / 2, rtol=1e-10)
    with pytest.raises(ValueError):
        permeability_tensor(tiny_disk, form="stokes")


def test_ellipse_tensor_is_anisotropic(tiny_ellipse):
    A = permeability_tensor(tiny_ellipse)
    # the long axis lies along y1, so flow along y1 is easier
    assert A[0, 0] > 1.1 * A[1, 1]


def test_stokes_solution_satisfies_constraints(tiny_disk):
    w, pi = solve_stokes_cell(tiny_disk, 0)
    assert np.abs(tiny_disk.divergence(w)).max() <= 1e-10
    assert abs(tiny_disk.pressure_mean @ pi) <= 1e-12


def test_linearized_solution_is_linear_in_direction(tiny_disk):
    problem = CellProblem(tiny_disk, params(r=1.3, lam=100.0, mu=1.0), [0.6, 0.2])
    base = solve_cell(problem)
    h1 = solve_linearized(problem, base, [1.0, 0.0])
    h2 = solve_linearized(problem, base, [0.0, 1.0])
    h = solve_linearized(problem, base, [2.0, -3.0])
    assert np.allclose(h, 2 * h1 - 3 * h2, rtol=1e-9, atol=1e-12 * np.abs(h).max())


def test_dropping_the_linearization_keeps_the_jacobian(tiny_disk):
    problem = CellProblem(tiny_disk, params(r=1.3, lam=100.0, mu=1.0), [0.6, 0.2])
    kept = solve_cell(problem, rtol=1e-13)
    light = solve_cell(problem, rtol=1e-13, keep_linearization=False)
    assert light._jac is None
    assert np.array_equal(light.V, kept.V)
    A = permeability_jacobian(problem, kept)
    assert np.abs(permeability_jacobian(problem, light) - A).max() <= 1e-10 * np.abs(A).max()


def test_permeability_jacobian_matches_finite_differences(tiny_disk):
    p = params(r=1.3, lam=100.0, mu=1.0)
    xi = np.array([0.6, 0.2])
    problem = CellProblem(tiny_disk, p, xi)
    A = permeability_jacobian(problem, solve_cell(problem, rtol=1e-13))
    d = 1e-5
    fd = np.empty((2, 2))
    for j in range(2):
        e = np.eye(2)[j] * d
        up = solve_cell(CellProblem(tiny_disk, p, xi + e), rtol=1e-13).V
        dn = solve_cell(CellProblem(tiny_disk, p, xi - e), rtol=1e-13).V
        fd[:, j] = (up - dn) / (2 * d)
    assert np.abs(A - fd).max() <= 1e-5 * np.abs(A).max()
    assert abs(A[0, 1] - A[1, 0]) <= 1e-6 * np.abs(A).max()


def test_iteration_lines_are_logged(tiny_disk, caplog):
    with caplog.at_level(logging.INFO, logger="carreau_darcy.iterations"):
        sol = solve_cell(CellProblem(tiny_disk, params(r=1.3, lam=10.0, mu=1.0), [1.0, 0.0]))
    lines = [r.getMessage() for r in caplog.records if r.name == "carreau_darcy.iterations"]
    assert len(lines) == sol.newton_iters
    assert lines[0].startswith("iter 1 residual=")


def test_backends_give_the_same_answer(tiny_disk):
    problem = CellProblem(tiny_disk, params(**STRONG), [0.0, 1.0])
    current = kernels.get_backend()
    try:
        out = {}
        for name in ("numpy", "numba") if kernels.HAS_NUMBA else ("numpy",):
            kernels.set_backend(name)
            out[name] = solve_cell(problem, rtol=1e-13).V
    finally:
        kernels.set_backend(current)
    if len(out) == 2:
        assert np.allclose(out["numpy"], out["numba"], rtol=1e-9, atol=0)


def test_newtonian_jacobian_is_the_permeability_tensor(tiny_disk):
    p = params(r=2.0, mu=0.5, eta0=2.0)
    problem = CellProblem(tiny_disk, p, [0.4, -1.2])
    A = permeability_jacobian(problem, solve_cell(problem))
    assert np.allclose(A, permeability_tensor(tiny_disk) / (p.mu * p.eta0), rtol=1e-10, atol=0)


def test_disk_jacobian_and_flow_respect_the_mirror_symmetries(tiny_disk):
    p = params(r=1.3, lam=100.0, mu=1.0)
    problem = CellProblem(tiny_disk, p, [1.0, 0.0])
    sol = solve_cell(problem)
    A = permeability_jacobian(problem, sol)
    assert abs(A[0, 1]) <= 1e-3 * np.abs(A).max()
    assert abs(sol.V[1]) <= 1e-3 * np.linalg.norm(sol.V)
    # the diagonal mirror is only approximate on extruded meshes; see the acceptance suite
