"""Sparse assembly from element-local arrays.

The CSR pattern of a (test, trial) pair is computed once; afterwards every
assembly is a single ``np.bincount`` over precomputed scatter indices, which
accumulates in a fixed order and is therefore bitwise reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import SpaceMeshMismatch


@dataclass
class SparseSystem:
    """Linear system ``matrix @ x = rhs``, optionally bordered by ``border``.

    With a border vector ``c`` the solved system is
    ``[[A, c], [c^T, 0]] [x; m] = [b; 0]``, which imposes ``c . x = 0``.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    border: np.ndarray | None = None
    symmetric: bool = False

    def bordered(self):
        A = self.matrix
        if self.border is None:
            return A.tocsc(), self.rhs
        c = sp.csr_matrix(self.border.reshape(-1, 1))
        K = sp.bmat([[A, c], [c.T, None]], format="csc")
        return K, np.concatenate([self.rhs, [0.0]])


class _Pattern:
    def __init__(self, test, trial):
        rows = test.cell_dofs[:, :, None]
        cols = trial.cell_dofs[:, None, :]
        rows, cols = np.broadcast_arrays(rows, cols)
        rows = rows.ravel()
        cols = cols.ravel()
        self.valid = (rows >= 0) & (cols >= 0)
        key = rows[self.valid] * trial.n_dofs + cols[self.valid]
        uniq, self.scatter = np.unique(key, return_inverse=True)
        self.scatter = self.scatter.ravel()
        self.shape = (test.n_dofs, trial.n_dofs)
        r = uniq // trial.n_dofs
        self.indices = (uniq % trial.n_dofs).astype(np.int32)
        self.indptr = np.searchsorted(r, np.arange(test.n_dofs + 1)).astype(np.int32)


def _pattern(test, trial):
    cache = test.__dict__.setdefault("_patterns", {})
    key = id(trial)
    if key not in cache:
        if test.mesh is not trial.mesh:
            raise SpaceMeshMismatch("test and trial spaces live on different meshes")
        cache[key] = _Pattern(test, trial)
    return cache[key]


def assemble_matrix(test, trial, local, trial_fixed_values=None):
    """Sum element matrices ``local`` (ncell, nloc_test, nloc_trial) into CSR.

    Rows and columns of constrained dofs are dropped, which is symmetric
    elimination.  If ``trial_fixed_values`` (nodal, ``(n_nodes, value_dim)``)
    is given, also return the lift ``-A[:, fixed] @ g`` to add to the rhs.
    """
    local = np.asarray(local)
    if local.shape != (len(test.cell_dofs), test.cell_dofs.shape[1], trial.cell_dofs.shape[1]):
        raise SpaceMeshMismatch(f"local matrix shape {local.shape} does not match the spaces")
    pat = _pattern(test, trial)
    flat = local.reshape(-1)
    data = np.bincount(pat.scatter, weights=flat[pat.valid], minlength=len(pat.indices))
    A = sp.csr_matrix((data, pat.indices, pat.indptr), shape=pat.shape)
    if trial_fixed_values is None:
        return A
    g = np.asarray(trial_fixed_values, dtype=float).reshape(trial.n_nodes, trial.value_dim)
    gl = g[trial.cell_nodes].reshape(len(trial.cell_dofs), -1)
    gl = np.where(trial.cell_dofs < 0, gl, 0.0)
    contrib = -np.einsum("eab,eb->ea", local, gl)
    return A, assemble_vector(test, contrib)


def assemble_vector(space, local):
    """Sum element vectors ``local`` (ncell, nloc) into the free-dof vector."""
    local = np.asarray(local)
    dofs = space.cell_dofs.ravel()
    ok = dofs >= 0
    return np.bincount(dofs[ok], weights=local.reshape(-1)[ok], minlength=space.n_dofs)


def assemble(kernel, test, trial=None, rhs_kernel=None, border=None, symmetric=False, **kw):
    """Assemble a bilinear form (and optionally a linear form) into a system.

    ``kernel(test, trial, **kw)`` must return element matrices and
    ``rhs_kernel(test, **kw)`` element vectors.
    """
    trial = test if trial is None else trial
    A = assemble_matrix(test, trial, kernel(test, trial, **kw))
    b = assemble_vector(test, rhs_kernel(test, **kw)) if rhs_kernel else np.zeros(test.n_dofs)
    return SparseSystem(A, b, border, symmetric)


# -- generic element kernels ---------------------------------------------------------

def mass_kernel(test, trial, coef=1.0):
    phi_t, _, wdet = test.geometry()
    phi_s, _, _ = trial.geometry()
    return np.einsum("qa,qb,eq->eab", phi_t, phi_s, wdet * coef)


def stiffness_kernel(test, trial, coef=1.0):
    _, g_t, wdet = test.geometry()
    _, g_s, _ = trial.geometry()
    return np.einsum("eqad,eqbd,eq->eab", g_t, g_s, wdet * coef, optimize=True)


def load_kernel(test, f=1.0):
    phi, _, wdet = test.geometry()
    if callable(f):
        x = quadrature_points(test)
        fq = f(x)
        return np.einsum("qa,eq->ea", phi, wdet * fq)
    return np.einsum("qa,eq->ea", phi, wdet * f)


def quadrature_points(space):
    """Physical quadrature points ``(ncell, nq, dim)``."""
    p = space.mesh.vertices[space.mesh.cells]
    return np.einsum("qk,ekd->eqd", space.quad_points, p)
