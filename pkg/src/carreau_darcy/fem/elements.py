"""Lagrange P1/P2 shape functions on simplices, written in barycentric form.

Local node order: the ``d + 1`` vertices, then the edges in the order used
by :meth:`TriMesh.edges` (edge k opposite vertex k) or :meth:`TetMesh.edges`
(01, 02, 03, 12, 13, 23).
"""
import numpy as np

TRI_EDGES = ((1, 2), (2, 0), (0, 1))
TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def edge_list(dim):
    return TRI_EDGES if dim == 2 else TET_EDGES


def n_local(dim, degree):
    nv = dim + 1
    return nv if degree == 1 else nv + len(edge_list(dim))


def values(dim, degree, bary):
    """Shape function values at barycentric points, shape ``(n_pts, n_local)``."""
    lam = np.asarray(bary, dtype=float)
    if degree == 1:
        return lam.copy()
    out = [lam[:, i] * (2 * lam[:, i] - 1) for i in range(dim + 1)]
    out += [4 * lam[:, i] * lam[:, j] for i, j in edge_list(dim)]
    return np.stack(out, axis=1)


def bary_derivatives(dim, degree, bary):
    """``d phi_a / d lambda_k`` at each point, shape ``(n_pts, n_local, dim + 1)``.

    Physical gradients follow as ``sum_k C[q, a, k] * grad(lambda_k)``.
    """
    lam = np.asarray(bary, dtype=float)
    n = len(lam)
    nv = dim + 1
    C = np.zeros((n, n_local(dim, degree), nv))
    if degree == 1:
        C[:, np.arange(nv), np.arange(nv)] = 1.0
        return C
    for i in range(nv):
        C[:, i, i] = 4 * lam[:, i] - 1
    for e, (i, j) in enumerate(edge_list(dim)):
        C[:, nv + e, i] = 4 * lam[:, j]
        C[:, nv + e, j] = 4 * lam[:, i]
    return C


def barycentric_gradients(vertices, cells):
    """Gradients of the barycentric coordinates and |det J| per cell.

    Returns ``(grad_lambda, det)`` with ``grad_lambda`` of shape
    ``(n_cells, dim + 1, dim)``.
    """
    p = vertices[cells]
    J = (p[:, 1:] - p[:, :1]).transpose(0, 2, 1)  # columns are edge vectors
    det = np.linalg.det(J)
    Jinv = np.linalg.inv(J)
    g = np.empty((len(cells), J.shape[1] + 1, J.shape[1]))
    g[:, 1:] = Jinv
    g[:, 0] = -Jinv.sum(axis=1)
    return g, np.abs(det)
