import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from carreau_darcy.errors import SingularSystem, SpaceMeshMismatch
from carreau_darcy.fem import elements
from carreau_darcy.fem.assembly import (SparseSystem, assemble, assemble_matrix, assemble_vector,
                                        load_kernel, mass_kernel, stiffness_kernel)
from carreau_darcy.fem.quadrature import rule
from carreau_darcy.fem.solve import (Factorization, enforce_zero_mean, is_symmetric,
                                     krylov_solve, residual_norm, solve_saddle)
from carreau_darcy.fem.space import FunctionSpace
from carreau_darcy.mesh import generate_domain_mesh


# -- quadrature ---------------------------------------------------------------------------

def _monomial_integral(exps):
    """Integral of prod lambda_i^a_i over the reference simplex of dimension len(exps) - 1."""
    d = len(exps) - 1
    return math.prod(math.factorial(a) for a in exps) / math.factorial(sum(exps) + d)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([2, 3]), st.lists(st.integers(0, 4), min_size=4, max_size=4))
def test_quadrature_is_exact_for_monomials(dim, exps):
    exps = exps[: dim + 1]
    degree = 4 if dim == 2 else 5
    if sum(exps) > degree:
        exps = [0] * (dim + 1)
    pts, wts = rule(dim, degree)
    approx = float(np.sum(wts * np.prod(pts ** np.array(exps), axis=1)))
    assert approx == pytest.approx(_monomial_integral(exps), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("degree", [1, 2])
def test_shape_functions_partition_unity_and_nodal(dim, degree):
    pts, _ = rule(dim, 4)
    phi = elements.values(dim, degree, pts)
    assert np.allclose(phi.sum(axis=1), 1.0, atol=1e-14)
    C = elements.bary_derivatives(dim, degree, pts)
    # the row sums do not depend on k, so the physical gradients sum to zero
    S = C.sum(axis=1)
    assert np.allclose(S, S[:, :1], atol=1e-13)
    nv = dim + 1
    nodes = list(np.eye(nv))
    if degree == 2:
        nodes += [0.5 * (np.eye(nv)[i] + np.eye(nv)[j]) for i, j in elements.edge_list(dim)]
    assert np.allclose(elements.values(dim, degree, np.array(nodes)), np.eye(len(nodes)), atol=1e-14)


# -- spaces and assembly ------------------------------------------------------------------

def _strip():
    return generate_domain_mesh((0.0, 2.0, 0.0, 0.25), 0.125)


def test_dof_counts_on_a_grid():
    mesh = _strip()
    p1 = FunctionSpace(mesh, 1, 1)
    p2 = FunctionSpace(mesh, 2, 2)
    ne = len(mesh.edges()[0])
    assert p1.n_dofs == mesh.n_vertices
    assert p2.n_dofs == 2 * (mesh.n_vertices + ne)


def test_periodic_merge_identifies_translates(tiny_disk_mesh):
    per = {0: (-0.5, 0.5), 1: (-0.5, 0.5)}
    V = FunctionSpace(tiny_disk_mesh, 2, 1, periodic=per)
    x = V.node_coords

    def canon(p):
        p = p.copy()
        p[:, :2][np.abs(p[:, :2] - 0.5) < 1e-12] = -0.5
        return p

    assert np.array_equal(canon(x[V.master]), canon(x))
    assert np.all(V.master[V.master] == V.master)
    # the four copies of a vertical corner edge share one dof per height
    corner = (np.abs(np.abs(x[:, 0]) - 0.5) < 1e-12) & (np.abs(np.abs(x[:, 1]) - 0.5) < 1e-12)
    assert len(np.unique(V.master[corner])) == len(np.unique(x[corner, 2]))


def test_mass_matrix_integrates_constants(tiny_disk_mesh):
    V = FunctionSpace(tiny_disk_mesh, 2, 1)
    M = assemble_matrix(V, V, mass_kernel(V, V))
    one = np.ones(V.n_dofs)
    assert one @ M @ one == pytest.approx(tiny_disk_mesh.volume(), rel=1e-13)
    assert is_symmetric(M)


def test_stiffness_annihilates_constants_and_is_symmetric():
    mesh = _strip()
    V = FunctionSpace(mesh, 2, 1)
    K = assemble_matrix(V, V, stiffness_kernel(V, V))
    assert np.abs(K @ np.ones(V.n_dofs)).max() < 1e-12
    assert is_symmetric(K)


def test_mismatched_spaces_are_rejected(tiny_disk_mesh):
    a = FunctionSpace(_strip(), 1, 1)
    b = FunctionSpace(tiny_disk_mesh, 1, 1)
    with pytest.raises(SpaceMeshMismatch):
        assemble_matrix(a, b, np.zeros((len(a.cell_dofs), 3, 4)))


def _dirichlet_poisson(mesh, degree, exact, source):
    """Solve -Delta u = source with u = exact on the whole boundary."""
    probe = FunctionSpace(mesh, degree, 1)
    if mesh.dim == 2:
        verts = np.unique(mesh.boundary_edges)
    else:
        verts = np.unique(mesh.boundary_faces)
    x = probe.node_coords
    on_bnd = np.isin(np.arange(probe.n_nodes), verts)
    if degree == 2:
        e = probe.edges
        # an edge joining two boundary vertices may still be interior, so test the edge itself
        if mesh.dim == 2:
            be = {tuple(sorted(t)) for t in mesh.boundary_edges.tolist()}
            on_bnd[mesh.n_vertices:] = [tuple(t) in be for t in e.tolist()]
        else:
            fe = np.sort(np.concatenate([mesh.boundary_faces[:, [0, 1]], mesh.boundary_faces[:, [0, 2]],
                                         mesh.boundary_faces[:, [1, 2]]]), axis=1)
            be = {tuple(t) for t in fe.tolist()}
            on_bnd[mesh.n_vertices:] = [tuple(t) in be for t in e.tolist()]
    V = FunctionSpace(mesh, degree, 1, dirichlet=[(np.nonzero(on_bnd)[0], [0])])
    g = exact(x).reshape(-1, 1)
    A, lift = assemble_matrix(V, V, stiffness_kernel(V, V), trial_fixed_values=g)
    b = assemble_vector(V, load_kernel(V, source)) + lift
    u = Factorization(A).solve(b)
    return V.to_nodal(u, g)[:, 0], x


def test_poisson_on_a_strip_is_exact_for_quadratics():
    mesh = _strip()
    exact = lambda p: 1.0 + p[:, 0] * (2.0 - p[:, 0]) + 0.5 * p[:, 1] ** 2  # noqa: E731
    u, x = _dirichlet_poisson(mesh, 2, exact, source=1.0)
    assert np.abs(u - exact(x)).max() < 1e-12


def test_linear_fields_solve_laplace_exactly_with_p1():
    mesh = _strip()
    exact = lambda p: 3.0 - p[:, 0] + 2.0 * p[:, 1]  # noqa: E731
    u, x = _dirichlet_poisson(mesh, 1, exact, source=0.0)
    assert np.abs(u - exact(x)).max() < 1e-12


def test_poisson_on_tets_is_exact_for_quadratics(tiny_disk_mesh):
    exact = lambda p: p[:, 0] ** 2 + p[:, 1] * p[:, 2] - p[:, 2] ** 2  # noqa: E731
    u, x = _dirichlet_poisson(tiny_disk_mesh, 2, exact, source=0.0)
    assert np.abs(u - exact(x)).max() < 1e-11


def test_saddle_system_with_border_imposes_zero_mean():
    mesh = _strip()
    V = FunctionSpace(mesh, 2, 1)
    c = V.basis_integrals()
    f = lambda x: np.cos(math.pi * x[..., 0])  # noqa: E731
    system = assemble(stiffness_kernel, V, rhs_kernel=lambda sp_: load_kernel(sp_, f), border=c)
    u = solve_saddle(system)
    assert abs(c @ u) < 1e-13
    # -u'' = cos(pi x) with Neumann ends: u = cos(pi x) / pi^2
    exact = V.interpolate(lambda x: np.cos(math.pi * x[:, 0]) / math.pi ** 2)
    assert np.abs(u - exact).max() < 2e-4


def test_enforce_zero_mean(tiny_disk_mesh):
    Q = FunctionSpace(tiny_disk_mesh, 1, 1)
    x = Q.interpolate(lambda p: 1.0 + p[:, 0] + p[:, 2])
    y = enforce_zero_mean(Q, x)
    assert abs(Q.integrate(y)) < 1e-13
    assert np.allclose(np.diff(y - x), 0.0)


# -- linear solvers -----------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(5, 40), st.integers(0, 2 ** 31 - 1))
def test_factorization_solves_random_systems(n, seed):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=0.3, random_state=rng) + sp.identity(n) * n
    b = rng.standard_normal(n)
    x = Factorization(A.tocsc()).solve(b)
    assert residual_norm(A, x, b) <= 1e-12 * np.linalg.norm(b)


@pytest.mark.parametrize("backend", ["umfpack", "superlu"])
def test_singular_matrix_raises(backend):
    with pytest.raises(SingularSystem):
        Factorization(sp.csc_matrix(np.array([[1.0, 0.0], [0.0, 0.0]])), backend=backend)


def test_backends_agree(rng):
    A = (sp.random(60, 60, density=0.1, random_state=1) + 10 * sp.identity(60)).tocsc()
    b = rng.standard_normal(60)
    x1 = Factorization(A, backend="umfpack").solve(b)
    x2 = Factorization(A, backend="superlu").solve(b)
    assert np.allclose(x1, x2, rtol=1e-12, atol=1e-14)


def test_krylov_with_nearby_preconditioner(rng):
    A = (sp.random(80, 80, density=0.1, random_state=2) + 10 * sp.identity(80)).tocsc()
    B = (A + 0.05 * sp.identity(80)).tocsc()
    b = rng.standard_normal(80)
    x, n = krylov_solve(A, b, Factorization(B), tol=1e-12)
    assert x is not None and n > 0
    assert residual_norm(A, x, b) <= 1e-12 * np.linalg.norm(b)
    # a useless preconditioner is abandoned instead of looping
    bad = Factorization(sp.identity(80, format="csc") * 1e3)
    y, _ = krylov_solve(A, b, bad, tol=1e-12, max_iters=5)
    assert y is None


def test_sparse_system_bordered_shape():
    A = sp.identity(3, format="csr")
    s = SparseSystem(A, np.ones(3), border=np.ones(3))
    K, rhs = s.bordered()
    assert K.shape == (4, 4) and rhs.shape == (4,)
    assert is_symmetric(K)
