"""Meshes of the macroscopic domain and of the periodic fluid cell.

The cell cross-section is built as a block-structured O-grid: a ring of
quadrilaterals between the inclusion boundary and the square frame, each
split into two triangles.  Diagonals alternate between octants so that the
mesh is invariant under the symmetries of the square, and the nodes on
opposite sides of the frame are translates of each other, which makes
periodic identification exact.
"""
from __future__ import annotations

import enum
import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleResolution, InvalidShape, NonConformingSplit, NonTilingEps

log = logging.getLogger(__name__)

PERIODIC_TOL = 1e-12


class Tag(enum.IntEnum):
    """Boundary tags; the integer values double as MSH physical tags."""

    OUTER = 1
    HOLE = 2
    PERIODIC_LEFT = 3
    PERIODIC_RIGHT = 4
    PERIODIC_FRONT = 5
    PERIODIC_BACK = 6
    BOTTOM = 7
    SYMMETRY_TOP = 8
    OBSTACLE = 9


@dataclass(frozen=True)
class InclusionShape:
    """Cross-section of the solid cylinder, centred in ``(-1/2, 1/2)^2``.

    For a disk only ``R`` is used; for an ellipse ``a`` is the semi-axis
    along y1 and ``b`` the one along y2.
    """

    kind: str = "disk"
    R: float = 0.25
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind == "disk":
            if not 0.0 < self.R < 0.5:
                raise InvalidShape(f"disk radius must lie in (0, 1/2), got {self.R}")
            object.__setattr__(self, "a", self.R)
            object.__setattr__(self, "b", self.R)
        elif kind == "ellipse":
            if not (0.0 < self.b <= self.a < 0.5):
                raise InvalidShape(f"ellipse needs 0 < b <= a < 1/2, got a={self.a}, b={self.b}")
        else:
            raise InvalidShape(f"unknown inclusion kind {self.kind!r}")

    @classmethod
    def disk(cls, R=0.25):
        return cls("disk", R=R)

    @classmethod
    def ellipse(cls, a=0.35, b=None, R=0.25):
        """Ellipse with the same area as the disk of radius ``R`` unless ``b`` is given."""
        if b is None:
            b = R * R / a
        return cls("ellipse", R=R, a=a, b=b)

    @property
    def area(self):
        return math.pi * self.a * self.b

    @property
    def perimeter(self):
        # Ramanujan's second approximation; exact for the circle
        a, b = self.a, self.b
        hh = ((a - b) / (a + b)) ** 2
        return math.pi * (a + b) * (1 + 3 * hh / (10 + math.sqrt(4 - 3 * hh)))

    def boundary_point(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([self.a * np.cos(t), self.b * np.sin(t)], axis=-1)


@dataclass
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.edge_tags = np.ascontiguousarray(self.edge_tags, dtype=np.int64)

    dim = 2

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def cells(self):
        return self.triangles

    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self):
        return float(self.signed_areas().sum())

    def aspect_ratios(self):
        """Longest edge over shortest altitude, normalised to 1 for equilateral triangles."""
        p = self.vertices[self.triangles]
        edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        lengths = np.linalg.norm(edges, axis=2)
        longest = lengths.max(axis=1)
        min_alt = 2.0 * np.abs(self.signed_areas()) / longest
        return longest / min_alt * (math.sqrt(3) / 2)

    def edges(self):
        """Unique edges (sorted vertex pairs) and the triangle-to-edge map.

        Local edge k of a triangle is opposite to local vertex k.
        """
        t = self.triangles
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        local = np.sort(local, axis=1)
        uniq, inv = np.unique(local, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 3)

    def nodes_with_tag(self, *tags):
        mask = np.isin(self.edge_tags, [int(t) for t in tags])
        return np.unique(self.boundary_edges[mask])

    def hash(self):
        return _mesh_hash(self.vertices, self.triangles)


@dataclass
class TetMesh:
    vertices: np.ndarray
    tets: np.ndarray
    boundary_faces: np.ndarray
    face_tags: np.ndarray
    periodic_pairs: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.tets = np.ascontiguousarray(self.tets, dtype=np.int64)
        self.boundary_faces = np.ascontiguousarray(self.boundary_faces, dtype=np.int64).reshape(-1, 3)
        self.face_tags = np.ascontiguousarray(self.face_tags, dtype=np.int64)

    dim = 3

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def cells(self):
        return self.tets

    def signed_volumes(self):
        p = self.vertices[self.tets]
        d = p[:, 1:] - p[:, :1]
        return np.linalg.det(d) / 6.0

    def volume(self):
        return float(self.signed_volumes().sum())

    def edges(self):
        """Unique edges and the tet-to-edge map in the order 01,02,03,12,13,23."""
        t = self.tets
        pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        local = np.stack([t[:, [i, j]] for i, j in pairs], axis=1).reshape(-1, 2)
        local = np.sort(local, axis=1)
        uniq, inv = np.unique(local, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 6)

    def nodes_with_tag(self, *tags):
        mask = np.isin(self.face_tags, [int(t) for t in tags])
        return np.unique(self.boundary_faces[mask])

    def hash(self):
        return _mesh_hash(self.vertices, self.tets)


def _mesh_hash(vertices, cells):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(vertices, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(cells, dtype="<i8").tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# 2D cell cross-section
# ---------------------------------------------------------------------------

def _frame_point(i, n):
    """Point ``i`` of ``n`` on the boundary of the unit square, counterclockwise
    from the midpoint of the right side, uniformly spaced along each side."""
    q = n // 8  # segments per half side
    side, k = divmod((i + q) % n, 2 * q)
    s = -0.5 + k / (2 * q)  # position along the side, from -1/2 to 1/2
    if side == 0:
        return (0.5, s)
    if side == 1:
        return (-s, 0.5)
    if side == 2:
        return (-0.5, -s)
    return (s, -0.5)


def cell_resolution(shape: InclusionShape, h: float):
    """Angular and radial segment counts for a target edge length ``h``."""
    n_ang = max(16, math.ceil(shape.perimeter / h))
    n_ang = 8 * math.ceil(n_ang / 8)
    gap_min = 0.5 - shape.a
    gap_max = math.hypot(0.5, 0.5) - shape.b
    n_rad = max(2, math.ceil(0.5 * (gap_min + gap_max) / h))
    return n_ang, n_rad


def generate_cell_mesh_2d(shape: InclusionShape, h: float | None = None, *, n_angular=None,
                          n_radial=None, grading=1.0, preserve_area=True,
                          max_aspect=10.0) -> TriMesh:
    """Triangulate ``Y' \\ T'`` with a symmetric O-grid.

    Parameters
    ----------
    shape : InclusionShape
    h : float
        Target edge length, ``0 < h < 1/4``.  Ignored for a count that is
        given explicitly through ``n_angular`` / ``n_radial``.
    grading : float
        Ratio between the outermost and the innermost radial spacing.
    preserve_area : bool
        Scale the inclusion polygon so that its area equals the exact area
        of the inclusion (the fluid fraction is then exact).

    Raises
    ------
    InfeasibleResolution
        If ``h`` is out of range or the resulting triangles are too skewed.
    """
    if h is not None and not 0.0 < h < 0.25:
        raise InfeasibleResolution(f"target edge length h={h} must lie in (0, 1/4)")
    if h is None and (n_angular is None or n_radial is None):
        raise InfeasibleResolution("either h or both n_angular and n_radial are required")
    if h is not None:
        na, nr = cell_resolution(shape, h)
        n_angular = n_angular or na
        n_radial = n_radial or nr
    if n_angular % 8 or n_angular < 16:
        raise InfeasibleResolution(f"n_angular must be a multiple of 8 and >= 16, got {n_angular}")
    if n_radial < 1:
        raise InfeasibleResolution("n_radial must be positive")

    t = 2.0 * np.pi * np.arange(n_angular) / n_angular
    inner = shape.boundary_point(t)
    if preserve_area:
        x, y = inner[:, 0], inner[:, 1]
        poly = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        inner = inner * math.sqrt(shape.area / poly)
    outer = np.array([_frame_point(i, n_angular) for i in range(n_angular)], dtype=float)

    if grading == 1.0:
        s = np.linspace(0.0, 1.0, n_radial + 1)
    else:
        q = grading ** (1.0 / max(n_radial - 1, 1))
        d = q ** np.arange(n_radial)
        s = np.concatenate([[0.0], np.cumsum(d) / d.sum()])
        s[-1] = 1.0

    # node (i, j) -> j * n_angular + i ; ring j=0 is the hole boundary
    rings = inner[None, :, :] + s[:, None, None] * (outer - inner)[None, :, :]
    vertices = rings.reshape(-1, 2)
    # frame nodes exactly on the frame
    vertices[n_radial * n_angular:] = outer

    tris = []
    q8 = n_angular // 8
    for j in range(n_radial):
        for i in range(n_angular):
            i1 = (i + 1) % n_angular
            a = j * n_angular + i
            b = j * n_angular + i1
            c = (j + 1) * n_angular + i1
            d = (j + 1) * n_angular + i
            if (i // q8) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    tris = np.array(tris, dtype=np.int64)
    p = vertices[tris]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    neg = cross < 0
    tris[neg, 1], tris[neg, 2] = tris[neg, 2].copy(), tris[neg, 1].copy()

    edges, tags = [], []
    for i in range(n_angular):
        i1 = (i + 1) % n_angular
        edges.append((i1, i))  # hole traversed clockwise: fluid on the left
        tags.append(Tag.HOLE)
    base = n_radial * n_angular
    for i in range(n_angular):
        i1 = (i + 1) % n_angular
        p, q = outer[i], outer[i1]
        mid = 0.5 * (p + q)
        if abs(mid[0] - 0.5) < 1e-14:
            tag = Tag.PERIODIC_RIGHT
        elif abs(mid[0] + 0.5) < 1e-14:
            tag = Tag.PERIODIC_LEFT
        elif abs(mid[1] - 0.5) < 1e-14:
            tag = Tag.PERIODIC_BACK
        else:
            tag = Tag.PERIODIC_FRONT
        edges.append((base + i, base + i1))
        tags.append(tag)

    mesh = TriMesh(vertices, tris, np.array(edges), np.array(tags, dtype=np.int64),
                   info={"kind": "cell", "shape": shape.kind, "a": shape.a, "b": shape.b,
                         "n_angular": n_angular, "n_radial": n_radial, "grading": grading})
    if np.any(mesh.signed_areas() <= 0):
        raise InfeasibleResolution("O-grid produced inverted triangles")
    worst = float(mesh.aspect_ratios().max())
    if worst >= max_aspect:
        raise InfeasibleResolution(f"worst triangle aspect ratio {worst:.2f} >= {max_aspect}")
    return mesh


def generate_domain_mesh(rect, h) -> TriMesh:
    """Structured triangulation of a rectangle, two triangles per grid square."""
    x0, x1, y0, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {rect}")
    if h <= 0:
        raise ValueError("h must be positive")
    nx = max(1, int(round((x1 - x0) / h)))
    ny = max(1, int(round((y1 - y0) / h)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])
    bottom = np.column_stack([idx[0, :-1], idx[0, 1:]])
    right = np.column_stack([idx[:-1, -1], idx[1:, -1]])
    top = np.column_stack([idx[-1, 1:], idx[-1, :-1]])
    left = np.column_stack([idx[1:, 0], idx[:-1, 0]])
    edges = np.vstack([bottom, right, top, left])
    return TriMesh(vertices, tris, edges, np.full(len(edges), int(Tag.OUTER)),
                   info={"kind": "domain", "rect": [x0, x1, y0, y1], "nx": nx, "ny": ny})


# ---------------------------------------------------------------------------
# extrusion
# ---------------------------------------------------------------------------

_LATERAL_TAG = {Tag.HOLE: Tag.OBSTACLE}


def extrude(base: TriMesh, n_layers: int, height: float, *, bottom_tag=Tag.BOTTOM,
            top_tag=Tag.SYMMETRY_TOP) -> TetMesh:
    """Extrude ``base`` into ``n_layers`` layers of prisms, three tets each.

    Vertex ``v`` of layer ``k`` gets global index ``k * n_v + v``.  Every
    prism is split with the diagonals of its quadrilateral faces running
    from the smallest global index, which is the same rule seen from both
    sides of a face, so the result is conforming.
    """
    nv = base.n_vertices
    z = height * np.arange(n_layers + 1) / n_layers
    vertices = np.column_stack([np.tile(base.vertices, (n_layers + 1, 1)), np.repeat(z, nv)])

    tri = np.sort(base.triangles, axis=1)
    tets = []
    for k in range(n_layers):
        b = tri + k * nv
        t = tri + (k + 1) * nv
        tets.append(np.column_stack([b[:, 0], b[:, 1], b[:, 2], t[:, 2]]))
        tets.append(np.column_stack([b[:, 0], b[:, 1], t[:, 1], t[:, 2]]))
        tets.append(np.column_stack([b[:, 0], t[:, 0], t[:, 1], t[:, 2]]))
    tets = np.vstack(tets)
    p = vertices[tets]
    vol = np.linalg.det(p[:, 1:] - p[:, :1])
    flip = vol < 0
    tets[flip, 0], tets[flip, 1] = tets[flip, 1].copy(), tets[flip, 0].copy()

    faces, ftags = [base.triangles, base.triangles + n_layers * nv], [
        np.full(len(base.triangles), int(bottom_tag)), np.full(len(base.triangles), int(top_tag))]
    e = np.sort(base.boundary_edges, axis=1)
    etag = np.array([int(_LATERAL_TAG.get(Tag(t), Tag(t))) for t in base.edge_tags])
    for k in range(n_layers):
        lo, hi = e[:, 0], e[:, 1]
        faces.append(np.column_stack([lo + k * nv, hi + k * nv, hi + (k + 1) * nv]))
        faces.append(np.column_stack([lo + k * nv, hi + (k + 1) * nv, lo + (k + 1) * nv]))
        ftags += [etag, etag]
    mesh = TetMesh(vertices, tets, np.vstack(faces), np.concatenate(ftags))
    _check_conforming(mesh)
    return mesh


def _check_conforming(mesh: TetMesh):
    t = mesh.tets
    faces = np.sort(np.concatenate([t[:, [1, 2, 3]], t[:, [0, 2, 3]], t[:, [0, 1, 3]], t[:, [0, 1, 2]]]), axis=1)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise NonConformingSplit("a face is shared by more than two tetrahedra")
    outer = uniq[counts == 1]
    declared = np.unique(np.sort(mesh.boundary_faces, axis=1), axis=0)
    if len(outer) != len(declared) or np.any(outer != declared):
        raise NonConformingSplit("prism split produced faces that do not match across prisms")
    if np.any(mesh.signed_volumes() <= 0):
        raise NonConformingSplit("degenerate tetrahedron after split")


def _pair_nodes(vertices, slave, master, axis, shift):
    """Match nodes ``slave`` to ``master`` by the coordinates other than ``axis``."""
    keep = [d for d in range(vertices.shape[1]) if d != axis]
    ms = vertices[master]
    key = {tuple(np.round(ms[i, keep], 9)): master[i] for i in range(len(master))}
    pairs = []
    for s in slave:
        k = tuple(np.round(vertices[s, keep], 9))
        if k not in key:
            raise NonConformingSplit(f"periodic partner missing for node {s}")
        m = key[k]
        diff = vertices[s] - vertices[m]
        expected = np.zeros(vertices.shape[1])
        expected[axis] = shift
        if np.max(np.abs(diff - expected)) > PERIODIC_TOL:
            raise NonConformingSplit(f"periodic nodes {s}/{m} are not translates")
        pairs.append((s, m))
    if len(slave) != len(master):
        raise NonConformingSplit("periodic node sets have different sizes")
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def extrude_half_cell(base: TriMesh, n_layers: int) -> TetMesh:
    """Tetrahedral mesh of the lower half cell ``Y'_f x (0, 1/2)``."""
    if n_layers < 2:
        raise ValueError(f"n_layers must be >= 2, got {n_layers}")
    mesh = extrude(base, n_layers, 0.5)
    v = mesh.vertices
    right = mesh.nodes_with_tag(Tag.PERIODIC_RIGHT)
    left = mesh.nodes_with_tag(Tag.PERIODIC_LEFT)
    back = mesh.nodes_with_tag(Tag.PERIODIC_BACK)
    front = mesh.nodes_with_tag(Tag.PERIODIC_FRONT)
    mesh.periodic_pairs = {
        "x": _pair_nodes(v, right, left, 0, 1.0),
        "y": _pair_nodes(v, back, front, 1, 1.0),
    }
    mesh.info = dict(base.info, kind="half_cell", n_layers=n_layers, base_triangles=len(base.triangles))
    return mesh


def build_cell_mesh(shape: InclusionShape, h=None, n_layers=4, **kw) -> TetMesh:
    return extrude_half_cell(generate_cell_mesh_2d(shape, h, **kw), n_layers)


# ---------------------------------------------------------------------------
# physical perforated layer (export only)
# ---------------------------------------------------------------------------

def generate_perforated_layer(rect, eps, shape: InclusionShape, *, n_angular=16, n_radial=2,
                              n_layers=2) -> TetMesh:
    """Tile ``rect`` with cells of size ``eps`` and extrude to thickness ``eps``."""
    x0, x1, y0, y1 = map(float, rect)
    fx, fy = (x1 - x0) / eps, (y1 - y0) / eps
    nx, ny = int(round(fx)), int(round(fy))
    if nx < 1 or ny < 1 or abs(fx - nx) > 1e-9 or abs(fy - ny) > 1e-9:
        raise NonTilingEps(f"eps={eps} does not tile the rectangle {rect}")
    cell = generate_cell_mesh_2d(shape, n_angular=n_angular, n_radial=n_radial)
    verts, tris, edges, tags = [], [], [], []
    offset = 0
    for i in range(nx):
        for j in range(ny):
            centre = np.array([x0 + (i + 0.5) * eps, y0 + (j + 0.5) * eps])
            verts.append(cell.vertices * eps + centre)
            tris.append(cell.triangles + offset)
            keep = cell.edge_tags == Tag.HOLE
            edges.append(cell.boundary_edges[keep] + offset)
            tags.append(cell.edge_tags[keep])
            offset += cell.n_vertices
    verts = np.vstack(verts)
    # merge coincident nodes on shared cell sides
    key = np.round(verts / eps, 9)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.sort(first)
    renum = np.empty(len(first), dtype=np.int64)
    renum[np.argsort(first)] = np.arange(len(first))
    new_id = renum[inverse.ravel()]
    verts = verts[order]
    tris = new_id[np.vstack(tris)]
    hole_edges = new_id[np.vstack(edges)]
    tm = TriMesh(verts, tris, np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64))
    # exterior boundary edges
    all_e, t2e = tm.edges()
    counts = np.bincount(t2e.ravel(), minlength=len(all_e))
    bnd = all_e[counts == 1]
    hole_set = {tuple(sorted(e)) for e in hole_edges.tolist()}
    outer = np.array([e for e in bnd.tolist() if tuple(e) not in hole_set], dtype=np.int64).reshape(-1, 2)
    tm.boundary_edges = np.vstack([hole_edges, outer])
    tm.edge_tags = np.concatenate([np.full(len(hole_edges), int(Tag.HOLE)),
                                   np.full(len(outer), int(Tag.OUTER))])
    mesh = extrude(tm, n_layers, eps, top_tag=Tag.OUTER, bottom_tag=Tag.OUTER)
    mesh.info = {"kind": "perforated_layer", "n_holes": nx * ny, "eps": eps, "rect": [x0, x1, y0, y1]}
    return mesh
