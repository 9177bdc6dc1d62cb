"""Degree-of-freedom maps with periodic identification and Dirichlet removal."""
from __future__ import annotations

import numpy as np

from . import elements
from .quadrature import rule
from ..errors import SpaceMeshMismatch


class FunctionSpace:
    """Scalar or vector Lagrange space on a simplicial mesh.

    Nodes are the mesh vertices (P1) plus the edge midpoints (P2).  Nodes
    related by a periodic translation share their degrees of freedom, and
    Dirichlet nodes are removed from the numbering.  The free dof of
    component ``c`` at node ``n`` is ``dof_map[n, c]`` (``-1`` if
    constrained); element-local dofs are interleaved node-major, i.e.
    local index ``a * value_dim + c``.

    Parameters
    ----------
    mesh : TriMesh or TetMesh
    degree : {1, 2}
    value_dim : int
    periodic : dict, optional
        ``{axis: (lo, hi)}``; nodes with coordinate ``hi`` along ``axis`` are
        identified with their translate at ``lo``.
    dirichlet : list of (nodes, components), optional
        Node *vertex or P2-node* ids and the components fixed there.
    """

    def __init__(self, mesh, degree=2, value_dim=1, periodic=None, dirichlet=None,
                 quad_degree=4):
        if degree not in (1, 2):
            raise ValueError("only P1 and P2 are supported")
        self.mesh = mesh
        self.dim = mesh.dim
        self.degree = degree
        self.value_dim = value_dim
        cells = mesh.cells
        nv = mesh.n_vertices
        if degree == 1:
            self.node_coords = mesh.vertices
            self.cell_nodes = cells.copy()
            self.edges = None
        else:
            edges, c2e = mesh.edges()
            self.edges = edges
            mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            self.node_coords = np.vstack([mesh.vertices, mid])
            self.cell_nodes = np.hstack([cells, c2e + nv])
        self.n_nodes = len(self.node_coords)
        self.n_local = self.cell_nodes.shape[1]

        self.master = np.arange(self.n_nodes)
        self.periodic = dict(periodic or {})
        if self.periodic:
            self._merge_periodic()

        fixed = np.zeros((self.n_nodes, value_dim), dtype=bool)
        for nodes, comps in dirichlet or []:
            nodes = np.asarray(nodes, dtype=np.int64)
            for c in np.atleast_1d(comps):
                fixed[nodes, c] = True
        # a constraint on any copy constrains the merged dof
        fixed_master = np.zeros_like(fixed)
        np.logical_or.at(fixed_master, self.master, fixed)
        self.fixed = fixed_master[self.master]

        masters = np.unique(self.master)
        free = ~fixed_master[masters]
        # node-major numbering: the components of a node are adjacent
        ids = np.where(free, np.cumsum(free.ravel()).reshape(free.shape) - 1, -1)
        numbering = -np.ones((self.n_nodes, value_dim), dtype=np.int64)
        numbering[masters] = ids
        self.dof_map = numbering[self.master]
        self.n_dofs = int(free.sum())
        self.n_raw = self.n_nodes * value_dim
        self.n_merged = self.n_nodes - len(masters)
        self.cell_dofs = self.dof_map[self.cell_nodes].reshape(len(cells), -1)

        self.quad_points, self.quad_weights = rule(self.dim, quad_degree)
        self._geometry = None

    def _merge_periodic(self):
        x = self.node_coords
        tol = 1e-9
        canon = x.copy()
        for axis, (lo, hi) in self.periodic.items():
            on_hi = np.abs(x[:, axis] - hi) < tol
            canon[on_hi, axis] = lo
        key = np.round(canon, 9)
        _, first, inverse, counts = np.unique(key, axis=0, return_index=True,
                                              return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        self.master = first[inverse]
        # every node on a ``hi`` face must have found a partner on ``lo``
        for axis, (lo, hi) in self.periodic.items():
            on_hi = np.abs(x[:, axis] - hi) < tol
            if np.any(counts[inverse[on_hi]] < 2):
                raise SpaceMeshMismatch(f"periodic face at axis {axis} has unmatched nodes")

    # -- geometry at quadrature points -------------------------------------------------

    def geometry(self):
        """Cached ``(phi, grads, wdet)``: shape values ``(nq, nloc)``, physical
        gradients ``(ncell, nq, nloc, dim)`` and weights times |det J|
        ``(ncell, nq)``."""
        if self._geometry is None:
            glam, det = elements.barycentric_gradients(self.mesh.vertices, self.mesh.cells)
            C = elements.bary_derivatives(self.dim, self.degree, self.quad_points)
            grads = np.einsum("qak,ekd->eqad", C, glam, optimize=True)
            phi = elements.values(self.dim, self.degree, self.quad_points)
            wdet = det[:, None] * self.quad_weights[None, :]
            self._geometry = (phi, np.ascontiguousarray(grads), wdet)
        return self._geometry

    # -- conversions -------------------------------------------------------------------

    def to_nodal(self, x, fixed_values=None):
        """Free-dof vector -> nodal values ``(n_nodes, value_dim)``."""
        out = np.zeros((self.n_nodes, self.value_dim))
        if fixed_values is not None:
            out[:] = fixed_values
        free = self.dof_map >= 0
        out[free] = np.asarray(x)[self.dof_map[free]]
        return out

    def from_nodal(self, values):
        """Nodal values -> free-dof vector (masters only)."""
        values = np.asarray(values, dtype=float).reshape(self.n_nodes, self.value_dim)
        x = np.zeros(self.n_dofs)
        free = self.dof_map >= 0
        x[self.dof_map[free]] = values[free]
        return x

    def interpolate(self, func):
        """Nodal interpolant of ``func(coords) -> (n, value_dim)`` as free dofs."""
        vals = np.asarray(func(self.node_coords), dtype=float).reshape(self.n_nodes, self.value_dim)
        return self.from_nodal(vals)

    def cell_values(self, x):
        """Local coefficient arrays ``(ncell, nloc, value_dim)`` of a free-dof vector."""
        return self.to_nodal(x)[self.cell_nodes]

    def integrate(self, x, component=0):
        """Integral of one component over the mesh."""
        phi, _, wdet = self.geometry()
        loc = self.cell_values(x)[:, :, component]
        return float(np.einsum("ea,qa,eq->", loc, phi, wdet))

    def basis_integrals(self):
        """``int phi_i`` for every free dof (vector spaces: per component)."""
        phi, _, wdet = self.geometry()
        loc = np.einsum("qa,eq->ea", phi, wdet)
        loc = np.repeat(loc, self.value_dim, axis=1)
        from .assembly import assemble_vector
        return assemble_vector(self, loc)
