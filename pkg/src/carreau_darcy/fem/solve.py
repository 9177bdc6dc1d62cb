"""Linear solves for assembled systems."""
from __future__ import annotations

import logging
import math
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import SingularSystem, ToleranceNotReached

log = logging.getLogger(__name__)


try:  # UMFPACK through cvxopt; SuperLU from scipy otherwise
    from cvxopt import matrix as _cvx_matrix, spmatrix as _cvx_spmatrix, umfpack as _umfpack
except ImportError:  # pragma: no cover - exercised only without cvxopt
    _umfpack = None

_LU_BACKEND = "umfpack" if _umfpack is not None else "superlu"

#: Below this many unknowns SuperLU is used even when UMFPACK is available.
#: The cell saddle systems fill in heavily; on small ones SuperLU factors
#: about twice as slowly but solves five times faster, and Newton with
#: Krylov reuse does many more solves than factorizations.
SMALL_SYSTEM = 4000


def lu_backend(n=None):
    """Sparse LU used for a system of size ``n`` (``"umfpack"`` or ``"superlu"``)."""
    if n is not None and n <= SMALL_SYSTEM:
        return "superlu"
    return _LU_BACKEND


def _to_cvxopt(K):
    K = K.tocoo()
    return _cvx_spmatrix(_cvx_matrix(K.data.astype(float)), _cvx_matrix(K.row.astype(np.int64)),
                         _cvx_matrix(K.col.astype(np.int64)), K.shape)


class Factorization:
    """Sparse LU of a (possibly bordered) system, reusable for several rhs.

    Parameters
    ----------
    K : sparse matrix
    symbolic : object, optional
        Symbolic analysis returned by a previous factorization of a matrix
        with the same sparsity pattern (UMFPACK only); saves the ordering.
    backend : {"umfpack", "superlu"}, optional
    """

    def __init__(self, K, symbolic=None, backend=None):
        self.shape = K.shape
        self.K = K.tocsc()
        self.backend = backend or lu_backend(K.shape[0])
        self.symbolic = None
        if self.backend == "umfpack":
            self._factor_umfpack(symbolic)
        else:
            self._factor_superlu()

    def _factor_umfpack(self, symbolic):
        self._A = _to_cvxopt(self.K)
        try:
            if symbolic is not None:
                try:
                    self._numeric = _umfpack.numeric(self._A, symbolic)
                    self.symbolic = symbolic
                    return
                except ValueError:  # pattern changed (e.g. dropped explicit zeros)
                    pass
            self.symbolic = _umfpack.symbolic(self._A)
            self._numeric = _umfpack.numeric(self._A, self.symbolic)
        except (ArithmeticError, ValueError) as exc:
            raise SingularSystem(f"sparse LU failed: {exc}") from exc

    def _factor_superlu(self):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                self.lu = spla.splu(self.K, permc_spec="COLAMD")
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SingularSystem(f"sparse LU failed: {exc}") from exc
        d = np.abs(self.lu.U.diagonal())
        if d.min() <= 1e-14 * d.max():
            raise SingularSystem(f"pivot ratio {d.min() / d.max():.2e}")

    def _raw_solve(self, b):
        if self.backend == "umfpack":
            x = _cvx_matrix(np.array(b, dtype=float))
            _umfpack.solve(self._A, self._numeric, x)
            return np.array(x).ravel()
        return self.lu.solve(b)

    def solve(self, b, tol=1e-12, refine=3):
        """Solve with iterative refinement until ``|Kx - b| <= tol |b|``."""
        b = np.asarray(b, dtype=float)
        nb = np.linalg.norm(b)
        if nb == 0.0:
            return np.zeros_like(b)
        x = self._raw_solve(b)
        r = b - self.K @ x
        for _ in range(refine):
            if np.linalg.norm(r) <= tol * nb:
                break
            x += self._raw_solve(r)
            r = b - self.K @ x
        res = np.linalg.norm(r) / nb
        if not np.isfinite(res):
            raise SingularSystem("non-finite solution")
        if res > tol:
            # badly conditioned: let GMRES finish what refinement started
            y, _ = krylov_solve(self.K, b, self, tol=tol, max_iters=50)
            if y is not None:
                return y
            raise ToleranceNotReached(f"relative residual {res:.3e} > {tol:.1e}")
        return x


def solve_saddle(system, tol=1e-12):
    """Solve a :class:`SparseSystem`; returns the primal unknowns only."""
    K, b = system.bordered()
    x = Factorization(K).solve(b, tol=tol)
    return x[: system.matrix.shape[0]]


def enforce_zero_mean(space, x):
    """Subtract the constant that makes ``int x = 0`` over the mesh.

    Only valid for spaces whose constants are free dofs (no Dirichlet).
    """
    x = np.asarray(x, dtype=float)
    ones = space.interpolate(lambda p: np.ones(len(p)))
    measure = space.integrate(ones)
    mean = space.integrate(x) / measure
    return x - mean * ones


def residual_norm(A, x, b):
    return float(np.linalg.norm(b - A @ x))


def is_symmetric(A, tol=1e-12):
    A = sp.csr_matrix(A)
    d = A - A.T
    scale = max(abs(A).max(), 1e-300)
    return (abs(d).max() if d.nnz else 0.0) <= tol * scale


class _SlowKrylov(Exception):
    pass


def krylov_solve(K, b, factor, tol=1e-12, max_iters=40, probe=4):
    """GMRES on ``K`` preconditioned by the LU of a nearby matrix.

    Returns ``(x, iterations)``, or ``(None, iterations)`` if the true
    relative residual did not reach ``tol`` within ``max_iters`` Krylov
    steps; the caller is then expected to factor ``K`` itself.  After
    ``probe`` steps the observed contraction rate is extrapolated and the
    attempt is abandoned early when it could not finish in time.
    """
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b), 0
    M = spla.LinearOperator(K.shape, matvec=factor._raw_solve, dtype=float)
    count = [0]

    x = factor._raw_solve(b)
    for _ in range(3):
        r = b - K @ x
        nr = np.linalg.norm(r)
        if nr <= tol * nb:
            return x, count[0]
        left = max_iters - count[0]
        if left <= 0:
            break
        target = 0.1 * tol * nb / nr
        start = count[0]

        def cb(rel, start=start, target=target, left=left):
            count[0] += 1
            k = count[0] - start
            if k >= probe and 0.0 < rel < 1.0:
                needed = math.log(target) / math.log(rel) * k
                if needed > left:
                    raise _SlowKrylov
            elif k >= probe:
                raise _SlowKrylov

        try:
            dx, _info = spla.gmres(K, r, M=M, rtol=target, atol=0.0, restart=left, maxiter=1,
                                   callback=cb, callback_type="pr_norm")
        except _SlowKrylov:
            return None, count[0]
        if not np.all(np.isfinite(dx)):
            break
        x = x + dx
    r = b - K @ x
    if np.linalg.norm(r) <= tol * nb:
        return x, count[0]
    return None, count[0]
