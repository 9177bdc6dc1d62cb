"""Carreau-Stokes cell problem on the lower half cell.

Unknowns are a P2 velocity (three components), a P1 pressure and one
multiplier fixing the mean pressure.  The velocity vanishes on the bottom
plate and on the obstacle, its vertical component vanishes on the
symmetry plane ``y3 = 1/2``, and everything is periodic in ``y1`` and
``y2``.  Averages are doubled to account for the mirrored upper half.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .carreau import CarreauParams
from .errors import NewtonDiverged
from .fem.assembly import assemble_matrix, assemble_vector
from .fem.solve import Factorization, krylov_solve
from .fem.space import FunctionSpace
from .mesh import Tag, TetMesh

log = logging.getLogger(__name__)
iterlog = logging.getLogger("carreau_darcy.iterations")

PERIODIC = {0: (-0.5, 0.5), 1: (-0.5, 0.5)}


def _face_nodes(space, mesh, tags):
    """P2 node ids (vertices and edge midpoints) on faces carrying ``tags``."""
    faces = mesh.boundary_faces[np.isin(mesh.face_tags, [int(t) for t in tags])]
    verts = np.unique(faces)
    if space.degree == 1:
        return verts
    fe = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [0, 2]], faces[:, [1, 2]]]), axis=1)
    fe = np.unique(fe, axis=0)
    nv = mesh.n_vertices
    key = space.edges[:, 0] * nv + space.edges[:, 1]
    pos = np.searchsorted(key, fe[:, 0] * nv + fe[:, 1])
    return np.concatenate([verts, pos + nv])


class CellDiscretization:
    """Everything about a half-cell mesh that does not depend on ``xi`` or the
    rheology: spaces, divergence operator, pressure border, load vectors."""

    def __init__(self, mesh: TetMesh, quad_degree=4):
        self.mesh = mesh
        probe = FunctionSpace(mesh, 2, 1, quad_degree=quad_degree)
        noslip = _face_nodes(probe, mesh, [Tag.BOTTOM, Tag.OBSTACLE])
        top = _face_nodes(probe, mesh, [Tag.SYMMETRY_TOP])
        self.V = FunctionSpace(mesh, 2, 3, periodic=PERIODIC,
                               dirichlet=[(noslip, [0, 1, 2]), (top, [2])],
                               quad_degree=quad_degree)
        self.Q = FunctionSpace(mesh, 1, 1, periodic=PERIODIC, quad_degree=quad_degree)
        phi_v, grads, wdet = self.V.geometry()
        psi = self.Q.geometry()[0]
        # -int q div(phi_a e_c)
        Bloc = -np.einsum("qi,eqac,eq->eiac", psi, grads, wdet, optimize=True)
        self.B = assemble_matrix(self.Q, self.V, Bloc.reshape(len(mesh.tets), 4, -1))
        self.pressure_mean = self.Q.basis_integrals()
        self.basis_int = self.V.basis_integrals()
        comp = np.zeros(self.V.n_dofs, dtype=np.int64)
        nodal = np.zeros((self.V.n_nodes, 3), dtype=np.int64)
        nodal[:] = np.arange(3)
        free = self.V.dof_map >= 0
        comp[self.V.dof_map[free]] = nodal[free]
        self.component = comp
        self.volume = mesh.volume()
        nu, npr = self.V.n_dofs, self.Q.n_dofs
        self.n_u, self.n_p = nu, npr
        self.n_total = nu + npr + 1
        mcol = sp.csr_matrix(self.pressure_mean.reshape(-1, 1))
        self._constraint_block = sp.bmat([[None, self.B.T, None],
                                          [self.B, None, mcol],
                                          [None, mcol.T, None]], format="csr")

    @property
    def n_tets(self):
        return len(self.mesh.tets)

    def load(self, xi):
        """``int xi . phi`` for every free velocity dof."""
        f = np.zeros(self.n_u)
        for c in range(2):
            sel = self.component == c
            f[sel] = xi[c] * self.basis_int[sel]
        return f

    def average(self, w):
        """Doubled integral of the horizontal velocity over the half cell."""
        return np.array([2.0 * w[self.component == c] @ self.basis_int[self.component == c]
                         for c in range(2)])

    def split(self, x):
        return x[: self.n_u], x[self.n_u: self.n_u + self.n_p], x[-1]

    def local_velocity(self, w):
        return np.ascontiguousarray(self.V.cell_values(w))

    def operator(self, w, params: CarreauParams):
        """Viscous residual ``A(w)`` and Jacobian ``K(w)`` on the free dofs."""
        _, grads, wdet = self.V.geometry()
        wl = self.local_velocity(w)
        args = (grads, wdet, wl, float(params.r), float(params.lam), float(params.eta0),
                float(params.eta_inf), float(params.mu))
        Rloc = kernels.carreau_residual(*args)
        Kloc = kernels.carreau_jacobian(*args)
        return assemble_vector(self.V, Rloc), assemble_matrix(self.V, self.V, Kloc)

    def viscous_residual(self, w, params):
        _, grads, wdet = self.V.geometry()
        Rloc = kernels.carreau_residual(grads, wdet, self.local_velocity(w), float(params.r),
                                        float(params.lam), float(params.eta0),
                                        float(params.eta_inf), float(params.mu))
        return assemble_vector(self.V, Rloc)

    def saddle(self, K):
        pad = sp.csr_matrix((self.n_p + 1, self.n_p + 1))
        top = sp.block_diag([K, pad], format="csr")
        return (top + self._constraint_block).tocsc()

    def residual(self, x, params, f):
        w, p, m = self.split(x)
        Aw = self.viscous_residual(w, params)
        r_u = Aw + self.B.T @ p - f
        r_p = self.B @ w + m * self.pressure_mean
        r_m = self.pressure_mean @ p
        return np.concatenate([r_u, r_p, [r_m]])

    def divergence(self, w):
        return self.B @ w

    def w3_ratio(self, w):
        wn = np.abs(w)
        big = wn.max() if wn.size else 0.0
        if big == 0.0:
            return 0.0
        return float(np.abs(w[self.component == 2]).max(initial=0.0) / big)


@dataclass
class CellProblem:
    disc: CellDiscretization
    params: CarreauParams
    xi: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float).reshape(2)
        if not np.all(np.isfinite(self.xi)):
            raise ValueError(f"xi must be finite, got {self.xi}")


class JacobianSolver:
    """Linear solves with the exact saddle-point Jacobian ``J``.

    An existing factorization (of an earlier Newton matrix or of the Stokes
    operator) is tried first as a GMRES preconditioner; only if that does
    not reach the tolerance within ``max_krylov`` steps is ``J`` factored.
    """

    def __init__(self, J, factor=None, symbolic=None, max_krylov=15):
        self.J = J
        self.factor = factor
        self.symbolic = symbolic if symbolic is not None else getattr(factor, "symbolic", None)
        self.max_krylov = max_krylov
        self.factored = False
        self.krylov_steps = 0

    def refactor(self):
        self.factor = Factorization(self.J, symbolic=self.symbolic)
        self.symbolic = self.factor.symbolic
        self.factored = True
        return self.factor

    def solve(self, b, tol=1e-12):
        if self.factor is not None and not self.factored:
            x, n = krylov_solve(self.J, b, self.factor, tol=tol, max_iters=self.max_krylov)
            self.krylov_steps += n
            if x is not None:
                return x
        if not self.factored:
            self.refactor()
        return self.factor.solve(b, tol=tol)


@dataclass
class CellSolution:
    w: np.ndarray
    pi: np.ndarray
    V: np.ndarray
    newton_iters: int
    residual: float
    history: list = field(default_factory=list)
    xi: np.ndarray | None = None
    seconds: float = 0.0
    factorizations: int = 0
    krylov_steps: int = 0
    _jac: object = field(default=None, repr=False, compare=False)


def _converged(res, ref, atol, rtol):
    return res <= atol or res <= rtol * ref


def solve_cell(problem: CellProblem, tol=1e-10, rtol=1e-8, max_iters=30, max_halvings=30,
               lin_tol=1e-12, preconditioner=None, keep_linearization=True) -> CellSolution:
    """Damped Newton iteration for the nonlinear cell problem.

    The first iterate is the Stokes solution with viscosity ``eta0`` (the
    Jacobian at ``w = 0``).  Convergence is declared when the l2 norm of the
    constrained residual drops below ``tol`` or below ``rtol`` times the
    norm of the load vector.

    Every Newton correction solves the exact Jacobian system to relative
    residual ``lin_tol``, relaxed near convergence to at most one hundredth
    of the remaining distance to the target (and never above ``1e-6``).  ``preconditioner`` may be a
    :class:`~carreau_darcy.fem.solve.Factorization` of a nearby saddle
    matrix (typically the Stokes one); it and later factorizations are
    reused through preconditioned GMRES while that converges quickly.

    With ``keep_linearization`` the solution keeps the final Jacobian and the
    last factorization, so :func:`permeability_jacobian` starts from them.
    On fine meshes that factorization is large; pass ``False`` when many
    solutions are kept alive and only their velocities are needed.
    """
    t0 = time.perf_counter()
    d, p = problem.disc, problem.params
    f = d.load(problem.xi)
    ref = float(np.linalg.norm(f))
    x = np.zeros(d.n_total)
    if ref == 0.0:
        return CellSolution(np.zeros(d.n_u), np.zeros(d.n_p), np.zeros(2), 0, 0.0, [0.0],
                            problem.xi.copy(), time.perf_counter() - t0)
    res = ref
    history = [res]
    it = 0
    factor = preconditioner
    n_fact = 0
    krylov = 0
    krylov_failed = False
    while True:
        w = x[: d.n_u]
        _, K = d.operator(w, p)
        # a failed Krylov attempt means the Jacobian moved a lot; factor directly
        jac = JacobianSolver(d.saddle(K), None if krylov_failed else factor,
                             symbolic=getattr(factor, "symbolic", None))
        r = d.residual(x, p, f)
        res = float(np.linalg.norm(r))
        if it > 0 and _converged(res, ref, tol, rtol):
            break
        if it >= max_iters:
            raise NewtonDiverged(f"cell Newton did not converge in {max_iters} iterations "
                                 f"(residual {res:.3e})", it, res, problem.xi)
        # Close to the target the correction needs less relative accuracy; this
        # keeps the request above the rounding floor of badly scaled Jacobians.
        step_tol = max(lin_tol, min(1e-6, 1e-2 * max(tol, rtol * ref) / res))
        dx = jac.solve(-r, tol=step_tol)
        krylov_failed = jac.factored and jac.krylov_steps > 0
        if jac.factored:
            factor = jac.factor
            n_fact += 1
        krylov += jac.krylov_steps
        step = 1.0
        for _ in range(max_halvings + 1):
            trial = x + step * dx
            new = float(np.linalg.norm(d.residual(trial, p, f)))
            if new < res or (it == 0 and step == 1.0):
                break
            step *= 0.5
        else:
            raise NewtonDiverged(f"line search failed at iteration {it} (residual {res:.3e})",
                                 it, res, problem.xi)
        x = trial
        it += 1
        history.append(new)
        iterlog.info("iter %d residual=%.6e step=%g", it, new, step)
    w, pi, _ = d.split(x)
    sol = CellSolution(w.copy(), pi.copy(), d.average(w), it, res, history, problem.xi.copy(),
                       time.perf_counter() - t0, n_fact, krylov)
    if keep_linearization:
        sol._jac = jac
    return sol


def _jacobian_solver(problem, base):
    if base._jac is None:
        _, K = problem.disc.operator(base.w, problem.params)
        base._jac = JacobianSolver(problem.disc.saddle(K))
    return base._jac


def solve_linearized(problem: CellProblem, base: CellSolution, dxi, tol=1e-12):
    """Velocity derivative ``h`` of the cell solution in direction ``dxi``."""
    d = problem.disc
    dxi = np.asarray(dxi, dtype=float).reshape(2)
    if not np.any(dxi):
        return np.zeros(d.n_u)
    rhs = np.zeros(d.n_total)
    rhs[: d.n_u] = d.load(dxi)
    x = _jacobian_solver(problem, base).solve(rhs, tol=tol)
    return x[: d.n_u]


def permeability_jacobian(problem: CellProblem, base: CellSolution, tol=1e-12):
    """2x2 matrix of the derivative of the averaged velocity w.r.t. ``xi``."""
    d = problem.disc
    cols = [d.average(solve_linearized(problem, base, e, tol)) for e in np.eye(2)]
    return np.column_stack(cols)


#: viscous prefactor of the Newtonian cell operator for each tensor convention
NEWTONIAN_FORMS = {"carreau": 1.0, "laplacian": 2.0}


def _disc(cell):
    return cell if isinstance(cell, CellDiscretization) else CellDiscretization(cell)


def _newtonian(form):
    if form not in NEWTONIAN_FORMS:
        raise ValueError(f"form must be one of {sorted(NEWTONIAN_FORMS)}, got {form!r}")
    return CarreauParams.quiet(r=2.0, lam=1.0, mu=NEWTONIAN_FORMS[form], eta0=1.0, eta_inf=0.0)


def solve_stokes_cell(cell, direction, form="carreau", tol=1e-12):
    """Newtonian cell problem driven by the unit force ``e_direction``.

    With ``form="carreau"`` the viscous term is ``int D w : D phi``, the
    ``r = 2`` member of the Carreau family with ``mu eta0 = 1``.  With
    ``form="laplacian"`` it is ``2 int D w : D phi``, which for
    divergence-free fields is the weak form of ``-Delta w``.

    Returns the velocity (free dofs) and pressure.
    """
    disc = _disc(cell)
    e = np.zeros(2)
    e[direction] = 1.0
    _, K = disc.operator(np.zeros(disc.n_u), _newtonian(form))
    rhs = np.zeros(disc.n_total)
    rhs[: disc.n_u] = disc.load(e)
    x = Factorization(disc.saddle(K)).solve(rhs, tol=tol)
    w, pi, _ = disc.split(x)
    return w, pi


def permeability_tensor(cell, form="carreau", tol=1e-12):
    """Newtonian permeability tensor, ``A[i, j] = 2 int_half w^j_i``.

    With the default ``form="carreau"`` the tensor matches the Carreau
    path: for ``r = 2`` the permeability function is exactly
    ``A xi / (mu eta0)``.  ``form="laplacian"`` gives the tensor of the
    ``-Delta`` cell problem, which is half as large.
    """
    disc = _disc(cell)
    _, K = disc.operator(np.zeros(disc.n_u), _newtonian(form))
    lu = Factorization(disc.saddle(K))
    A = np.empty((2, 2))
    for j in range(2):
        rhs = np.zeros(disc.n_total)
        rhs[: disc.n_u] = disc.load(np.eye(2)[j])
        w = lu.solve(rhs, tol=tol)[: disc.n_u]
        A[:, j] = disc.average(w)
    return A
