"""Macroscopic nonlinear Darcy problem on a planar domain.

The pressure ``P`` is continuous piecewise quadratic on a triangulation of
``omega`` and solves

    int_omega U(f' - grad P) . grad psi = 0   for all psi,   int_omega P = 0,

where ``U`` is the permeability function delivered by the cell problems.
The driving force ``xi = f' - grad P`` is formed at the three vertices of
every triangle (``f'`` is interpolated as P1, ``grad P`` is affine), ``U``
is evaluated there and interpolated linearly to the quadrature points.  The
Newton Jacobian uses ``DU`` at one point per triangle.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .carreau import CarreauParams
from .errors import CarreauDarcyError, CellSolveError, OuterNewtonDiverged
from .fem import elements
from .fem.assembly import assemble_matrix, assemble_vector
from .fem.solve import Factorization
from .fem.space import FunctionSpace
from .mesh import TriMesh

log = logging.getLogger(__name__)
iterlog = logging.getLogger("carreau_darcy.iterations")

JACOBIAN_EVAL = ("barycenter", "vertex-mean")


class DarcyDiscretization:
    """P2 pressure space on ``omega`` plus the per-triangle evaluation data."""

    def __init__(self, omega: TriMesh, quad_degree=4):
        self.mesh = omega
        self.space = FunctionSpace(omega, 2, 1, quad_degree=quad_degree)
        self.phi, self.grads, self.wdet = self.space.geometry()
        self.lam_q = self.space.quad_points  # barycentric coords of quadrature points
        glam, _ = elements.barycentric_gradients(omega.vertices, omega.triangles)
        # basis gradients at the three vertices and at the barycenter
        self.grad_vert = self._basis_gradients(glam, np.eye(3))
        self.grad_bary = self._basis_gradients(glam, np.full((1, 3), 1.0 / 3.0))[:, 0]
        self.mean_weights = self.space.basis_integrals()
        self.area = float(self.mesh.signed_areas().sum())
        self._stiff_pattern = None

    @staticmethod
    def _basis_gradients(glam, bary):
        C = elements.bary_derivatives(2, 2, bary)
        return np.einsum("qak,tkd->tqad", C, glam)

    @property
    def n_dofs(self):
        return self.space.n_dofs

    @property
    def n_triangles(self):
        return len(self.mesh.triangles)

    def local(self, P):
        return self.space.cell_values(P)[:, :, 0]

    def pressure_gradients(self, P):
        """``grad P`` at the vertices ``(T, 3, 2)`` and barycenters ``(T, 2)``."""
        loc = self.local(P)
        gv = np.einsum("ta,tvad->tvd", loc, self.grad_vert)
        gb = np.einsum("ta,tad->td", loc, self.grad_bary)
        return gv, gb

    def mean(self, P):
        return float(self.mean_weights @ P) / self.area

    def l2_norm(self, P):
        loc = self.local(P)
        vals = loc @ self.phi.T
        return float(np.sqrt(np.sum(self.wdet * vals ** 2)))

    def vertex_values(self, P):
        """Nodal values of ``P`` at the mesh vertices."""
        return self.space.to_nodal(P)[: self.mesh.n_vertices, 0]

    def flux_residual(self, Uvert):
        """``int U . grad psi`` with ``U`` linear on each triangle from its vertex values."""
        Uq = np.einsum("qv,tvd->tqd", self.lam_q, Uvert)
        loc = np.einsum("tq,tqd,tqad->ta", self.wdet, Uq, self.grads, optimize=True)
        return assemble_vector(self.space, loc)

    def tensor_stiffness(self, A):
        """``int (A_T grad phi_b) . grad phi_a`` with one 2x2 tensor per triangle."""
        loc = np.einsum("tq,tqad,tde,tqbe->tab", self.wdet, self.grads, A, self.grads, optimize=True)
        return assemble_matrix(self.space, self.space, loc)

    def bordered(self, K):
        c = sp.csr_matrix(self.mean_weights.reshape(-1, 1))
        return sp.bmat([[K, c], [c.T, None]], format="csc")


def _forcing_callable(forcing):
    if callable(forcing):
        return forcing
    from .expr import forcing_function
    return forcing_function(forcing)


class ExactEvaluator:
    """Per-point cell solves through a :class:`~carreau_darcy.permeability.PermeabilityModel`."""

    def __init__(self, model, threads=1):
        self.model = model
        self.threads = threads

    def U(self, xis):
        return self.model.map(xis, threads=self.threads)

    def U_DU(self, xis):
        return self.model.map(xis, jacobian=True, threads=self.threads)

    def stats(self):
        return self.model.cache.stats()


class TableEvaluator:
    """Interpolation in a precomputed :class:`~carreau_darcy.permeability.PermTable`."""

    def __init__(self, table):
        self.table = table

    def U(self, xis):
        return np.array([self.table.interp_U(x) for x in np.asarray(xis).reshape(-1, 2)])

    def U_DU(self, xis):
        xis = np.asarray(xis).reshape(-1, 2)
        return self.U(xis), np.array([self.table.interp_DU(x) for x in xis])

    def stats(self):
        return {"hits": 0, "misses": 0, "entries": 0}


class LinearEvaluator:
    """``U(xi) = A xi / (mu eta0)`` with a constant tensor (Newtonian law)."""

    def __init__(self, tensor, mu, eta0):
        self.M = np.asarray(tensor, dtype=float) / (mu * eta0)

    def U(self, xis):
        return np.asarray(xis).reshape(-1, 2) @ self.M.T

    def U_DU(self, xis):
        xis = np.asarray(xis).reshape(-1, 2)
        return self.U(xis), np.broadcast_to(self.M, (len(xis), 2, 2)).copy()

    def stats(self):
        return {"hits": 0, "misses": 0, "entries": 0}


@dataclass
class DarcyProblem:
    """Nonlinear Darcy problem.

    Parameters
    ----------
    omega : TriMesh
    forcing : callable or pair of expressions
        ``f(x) -> (n, 2)`` for points ``x`` of shape ``(n, 2)``, or two
        expression strings in ``x1, x2``.
    params : CarreauParams
    evaluator : object
        Provides ``U(xis)`` and ``U_DU(xis)``; see :class:`ExactEvaluator`,
        :class:`TableEvaluator`, :class:`LinearEvaluator`.
    mode : {"exact", "tabulated", "linear"}
        Reporting label.
    eps : float
        Layer thickness, only used to report the Reynolds number ``1/(eps mu)``.
    jacobian_eval : {"barycenter", "vertex-mean"}
    """

    omega: TriMesh
    forcing: object
    params: CarreauParams
    evaluator: object
    mode: str = "exact"
    eps: float = 0.01
    jacobian_eval: str = "barycenter"

    def __post_init__(self):
        if self.jacobian_eval not in JACOBIAN_EVAL:
            raise ValueError(f"jacobian_eval must be one of {JACOBIAN_EVAL}")
        self.forcing = _forcing_callable(self.forcing)
        self._disc = None
        self._f_vert = None

    @property
    def reynolds(self):
        return 1.0 / (self.eps * self.params.mu)

    @property
    def disc(self) -> DarcyDiscretization:
        if self._disc is None:
            self._disc = DarcyDiscretization(self.omega)
        return self._disc

    def forcing_at_vertices(self):
        """``f'`` at the vertices of every triangle, ``(T, 3, 2)``."""
        if self._f_vert is None:
            f = np.asarray(self.forcing(self.omega.vertices), dtype=float).reshape(-1, 2)
            if not np.all(np.isfinite(f)):
                raise ValueError("forcing is not finite on the domain")
            self._f_vert = f[self.omega.triangles]
        return self._f_vert

    def driving_forces(self, P):
        """``xi = f' - grad P`` at vertices ``(T, 3, 2)`` and barycenters ``(T, 2)``."""
        fv = self.forcing_at_vertices()
        gv, gb = self.disc.pressure_gradients(P)
        return fv - gv, fv.mean(axis=1) - gb


@dataclass
class PressureField:
    P: np.ndarray
    residuals: list
    iterations: int
    xi: np.ndarray  # barycentric driving force per triangle
    V: np.ndarray  # filtration velocity per triangle
    misses: list = field(default_factory=list)
    cache: dict = field(default_factory=dict)
    seconds: float = 0.0
    disc: DarcyDiscretization | None = field(default=None, repr=False)

    def mean(self):
        return self.disc.mean(self.P)

    def l2_norm(self):
        return self.disc.l2_norm(self.P)


def _with_triangle(exc, xis, per_triangle):
    """Attach the offending triangle to a cell-solver failure."""
    xi = getattr(exc, "xi", None)
    tri = None
    if xi is not None:
        hit = np.nonzero(np.all(xis.reshape(-1, 2) == np.asarray(xi).reshape(1, 2), axis=1))[0]
        if len(hit):
            tri = int(hit[0] // per_triangle)
    return CellSolveError(f"cell problem failed for xi={xi} on triangle {tri}: {exc}", xi, tri)


def assemble_residual(problem: DarcyProblem, P):
    """Residual vector ``int U(f' - grad P) . grad psi``; also returns the vertex ``U``."""
    d = problem.disc
    xv, _ = problem.driving_forces(P)
    T = d.n_triangles
    try:
        Uv = problem.evaluator.U(xv.reshape(-1, 2)).reshape(T, 3, 2)
    except CellSolveError:
        raise
    except CarreauDarcyError as exc:
        raise _with_triangle(exc, xv, 3) from exc
    return d.flux_residual(Uv)


def _jacobian_tensors(problem: DarcyProblem, P):
    d = problem.disc
    xv, xb = problem.driving_forces(P)
    T = d.n_triangles
    try:
        if problem.jacobian_eval == "barycenter":
            Vb, Ab = problem.evaluator.U_DU(xb)
            return Ab, Vb, xb
        Vv, Av = problem.evaluator.U_DU(xv.reshape(-1, 2))
        Vb = problem.evaluator.U(xb)
        return Av.reshape(T, 3, 2, 2).mean(axis=1), Vb, xb
    except CellSolveError:
        raise
    except CarreauDarcyError as exc:
        if problem.jacobian_eval == "barycenter":
            raise _with_triangle(exc, xb, 1) from exc
        raise _with_triangle(exc, xv, 3) from exc


def newton_solve(problem: DarcyProblem, tol=1e-8, max_outer=30, max_halvings=10, P0=None,
                 atol=1e-300) -> PressureField:
    """Damped Newton iteration for the pressure.

    Every step solves ``int (A_T grad dP) . grad psi = F(P_k)`` with the
    zero-mean constraint, then sets ``P_{k+1} = P_k + s dP - mean``; the
    step length ``s`` is halved (at most ``max_halvings`` times) until the
    residual does not increase.  Stops when the l2 residual is at most
    ``tol`` times the initial one, after at least one step.
    """
    t0 = time.perf_counter()
    d = problem.disc
    P = np.zeros(d.n_dofs) if P0 is None else np.array(P0, dtype=float)
    P = P - d.mean(P)
    stats = problem.evaluator.stats
    before = stats()["misses"]
    F = assemble_residual(problem, P)
    res0 = res = float(np.linalg.norm(F))
    history = [res0]
    misses = []
    it = 0
    last_V = last_xi = None
    while True:
        A, last_V, last_xi = _jacobian_tensors(problem, P)
        misses.append(stats()["misses"] - before)
        before = stats()["misses"]
        if it > 0 and (res <= tol * res0 or res <= atol):
            break
        if it >= max_outer:
            raise OuterNewtonDiverged(f"outer Newton did not converge in {max_outer} iterations "
                                      f"(residual {res:.3e})", history)
        K = d.bordered(d.tensor_stiffness(A))
        rhs = np.concatenate([F, [0.0]])
        dP = Factorization(K).solve(rhs)[:-1]
        step = 1.0
        for _ in range(max_halvings + 1):
            trial = P + step * dP
            trial -= d.mean(trial)
            F_new = assemble_residual(problem, trial)
            new = float(np.linalg.norm(F_new))
            if new <= res:
                break
            step *= 0.5
        else:
            raise OuterNewtonDiverged(f"line search failed at outer iteration {it}", history + [new])
        P, F, res = trial, F_new, new
        it += 1
        history.append(res)
        iterlog.info("outer %d residual=%.6e step=%g", it, res, step)
    out = PressureField(P, history, it, last_xi, last_V, misses, stats(), time.perf_counter() - t0, d)
    return out


def solve_linear_darcy(omega: TriMesh, forcing, tensor, mu, eta0=1.0) -> PressureField:
    """Linear Darcy law ``V = A (f' - grad P) / (mu eta0)`` with zero-mean ``P``.

    Uses the same discretization as :func:`newton_solve` (P1 forcing,
    P2 pressure), so both agree when ``U`` is linear.
    """
    t0 = time.perf_counter()
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape != (2, 2) or not np.allclose(tensor, tensor.T, rtol=1e-6, atol=0) \
            or np.any(np.linalg.eigvalsh(0.5 * (tensor + tensor.T)) <= 0):
        raise ValueError("the permeability tensor must be symmetric positive definite")
    ev = LinearEvaluator(tensor, mu, eta0)
    params = CarreauParams.quiet(r=2.0, mu=mu, eta0=eta0)
    problem = DarcyProblem(omega, forcing, params, ev, mode="linear")
    d = problem.disc
    fv = problem.forcing_at_vertices()
    Mt = np.broadcast_to(ev.M, (d.n_triangles, 2, 2))
    rhs = d.flux_residual(np.einsum("de,tve->tvd", ev.M, fv))
    K = d.bordered(d.tensor_stiffness(Mt))
    P = Factorization(K).solve(np.concatenate([rhs, [0.0]]))[:-1]
    P -= d.mean(P)
    _, xb = problem.driving_forces(P)
    F = assemble_residual(problem, P)
    return PressureField(P, [float(np.linalg.norm(F))], 1, xb, ev.U(xb), [0], ev.stats(),
                         time.perf_counter() - t0, d)


FIELD_NAMES = ("V1", "V2", "normV", "xi1", "xi2", "normXi", "P")


def postprocess(problem: DarcyProblem, result: PressureField):
    """The seven output fields.

    Six are per triangle (filtration velocity and driving force at the
    barycenter, components and norms); ``P`` holds the pressure at the
    mesh vertices.
    """
    V, xi = result.V, result.xi
    return {
        "V1": V[:, 0].copy(), "V2": V[:, 1].copy(), "normV": np.linalg.norm(V, axis=1),
        "xi1": xi[:, 0].copy(), "xi2": xi[:, 1].copy(), "normXi": np.linalg.norm(xi, axis=1),
        "P": result.disc.vertex_values(result.P),
    }


def velocity_l2(problem_or_result, V=None):
    """L2 norm of a per-triangle vector field on ``omega``."""
    res = problem_or_result
    d = res.disc
    V = res.V if V is None else V
    areas = np.abs(d.mesh.signed_areas())
    return float(np.sqrt(np.sum(areas * np.sum(V ** 2, axis=1))))
