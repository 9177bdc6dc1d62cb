"""Mesh and field files: Gmsh MSH 2.2 (ASCII) and legacy VTK (ASCII).

Physical tags in MSH files are the integer values of :class:`~carreau_darcy.mesh.Tag`:

====  ===============  =========================================
tag   name             meaning
====  ===============  =========================================
1     outer            outer boundary of a planar domain
2     hole             inclusion boundary in a cross-section
3/4   periodic_left/   faces y1 = -1/2 and y1 = +1/2
      periodic_right
5/6   periodic_front/  faces y2 = -1/2 and y2 = +1/2
      periodic_back
7     bottom           plate y3 = 0
8     symmetry_top     symmetry plane y3 = 1/2
9     obstacle         lateral surface of the solid cylinder
100   domain           cells (triangles of a TriMesh, tets of a TetMesh)
====  ===============  =========================================

Numbers are written with ``repr`` (17 significant digits) so that a write
followed by a read reproduces coordinates bit for bit.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError, UnsupportedElementType
from .mesh import Tag, TetMesh, TriMesh, _pair_nodes

DOMAIN_TAG = 100
_NODES_PER_TYPE = {1: 2, 2: 3, 4: 4}


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# MSH
# ---------------------------------------------------------------------------

def write_msh(mesh, path):
    """Write a :class:`TriMesh` or :class:`TetMesh` as MSH 2.2 ASCII."""
    if mesh.dim == 2:
        bnd_type, cell_type = 1, 2
        bnd, btags = mesh.boundary_edges, mesh.edge_tags
        coords = np.column_stack([mesh.vertices, np.zeros(mesh.n_vertices)])
    else:
        bnd_type, cell_type = 2, 4
        bnd, btags = mesh.boundary_faces, mesh.face_tags
        coords = mesh.vertices
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames"]
    used = sorted(set(int(t) for t in btags))
    lines.append(str(len(used) + 1))
    for t in used:
        lines.append(f'{mesh.dim - 1} {t} "{Tag(t).name.lower()}"')
    lines.append(f'{mesh.dim} {DOMAIN_TAG} "domain"')
    lines += ["$EndPhysicalNames", "$Nodes", str(mesh.n_vertices)]
    for i, p in enumerate(coords, start=1):
        lines.append(f"{i} {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    lines += ["$EndNodes", "$Elements", str(len(bnd) + len(mesh.cells))]
    eid = 1
    for nodes, tag in zip(bnd, btags):
        lines.append(f"{eid} {bnd_type} 2 {int(tag)} {int(tag)} " + " ".join(str(n + 1) for n in nodes))
        eid += 1
    for nodes in mesh.cells:
        lines.append(f"{eid} {cell_type} 2 {DOMAIN_TAG} {DOMAIN_TAG} " + " ".join(str(n + 1) for n in nodes))
        eid += 1
    lines.append("$EndElements")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, what):
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise ParseError(f"unexpected end of file while reading {what}", self.pos)

    def ints(self, line, what):
        try:
            return [int(t) for t in line.split()]
        except ValueError:
            raise ParseError(f"malformed {what}: {line!r}", self.pos) from None


def read_msh(path):
    """Read an MSH 2.2 ASCII file into a :class:`TriMesh` or :class:`TetMesh`.

    Supported element types are 1 (line), 2 (triangle) and 4 (tetrahedron).
    A file containing tetrahedra yields a ``TetMesh`` whose boundary faces
    are its triangles; otherwise triangles are the cells and lines the
    boundary edges.  Periodic node pairs of a half-cell mesh are rebuilt
    from the periodic face tags.
    """
    text = Path(path).read_text(encoding="utf-8")
    rd = _Lines(text)
    if not text.strip():
        raise ParseError("empty MSH file", 1)
    nodes = None
    elements = {1: [], 2: [], 4: []}
    tags = {1: [], 2: [], 4: []}
    seen_format = False
    while True:
        try:
            head = rd.next("section header")
        except ParseError:
            break
        if head == "$MeshFormat":
            parts = rd.next("mesh format").split()
            if len(parts) < 3 or not parts[0].startswith("2"):
                raise ParseError(f"unsupported MSH version {parts[:1]}", rd.pos)
            if parts[1] != "0":
                raise ParseError("binary MSH files are not supported", rd.pos)
            seen_format = True
            _expect(rd, "$EndMeshFormat")
        elif head == "$PhysicalNames":
            n = _count(rd, "physical name count")
            for _ in range(n):
                rd.next("physical name")
            _expect(rd, "$EndPhysicalNames")
        elif head == "$Nodes":
            n = _count(rd, "node count")
            ids = np.empty(n, dtype=np.int64)
            nodes = np.empty((n, 3))
            for i in range(n):
                line = rd.next("node")
                parts = line.split()
                try:
                    ids[i] = int(parts[0])
                    nodes[i] = [float(t) for t in parts[1:4]]
                except (ValueError, IndexError):
                    raise ParseError(f"malformed node line: {line!r}", rd.pos) from None
            _expect(rd, "$EndNodes")
            index = {int(k): i for i, k in enumerate(ids)}
        elif head == "$Elements":
            if nodes is None:
                raise ParseError("$Elements before $Nodes", rd.pos)
            n = _count(rd, "element count")
            for _ in range(n):
                vals = rd.ints(rd.next("element"), "element line")
                if len(vals) < 3:
                    raise ParseError("element line too short", rd.pos)
                etype, ntags = vals[1], vals[2]
                if etype not in _NODES_PER_TYPE:
                    raise UnsupportedElementType(f"element type {etype} at line {rd.pos}")
                conn = vals[3 + ntags:]
                if len(conn) != _NODES_PER_TYPE[etype] or ntags < 1:
                    raise ParseError(f"element of type {etype} has wrong arity", rd.pos)
                try:
                    elements[etype].append([index[c] for c in conn])
                except KeyError as exc:
                    raise ParseError(f"element refers to unknown node {exc.args[0]}", rd.pos) from None
                tags[etype].append(vals[3])
            _expect(rd, "$EndElements")
        elif head.startswith("$"):
            end = "$End" + head[1:]
            while rd.next(f"section {head}") != end:
                pass
        else:
            raise ParseError(f"unexpected content {head!r}", rd.pos)
    if not seen_format:
        raise ParseError("missing $MeshFormat section", 1)
    if nodes is None:
        raise ParseError("missing $Nodes section", rd.pos)

    def arr(t, k):
        return np.array(elements[t], dtype=np.int64).reshape(-1, k)

    if elements[4]:
        mesh = TetMesh(nodes, arr(4, 4), arr(2, 3), np.array(tags[2], dtype=np.int64))
        _rebuild_periodic(mesh)
        return mesh
    if not elements[2]:
        raise ParseError("no triangles or tetrahedra in file", rd.pos)
    return TriMesh(nodes[:, :2], arr(2, 3), arr(1, 2), np.array(tags[1], dtype=np.int64))


def _expect(rd, token):
    line = rd.next(token)
    if line != token:
        raise ParseError(f"expected {token}, found {line!r}", rd.pos)


def _count(rd, what):
    vals = rd.ints(rd.next(what), what)
    if len(vals) != 1 or vals[0] < 0:
        raise ParseError(f"malformed {what}", rd.pos)
    return vals[0]


def _rebuild_periodic(mesh):
    pairs = {}
    for name, (lo, hi, axis) in {"x": (Tag.PERIODIC_LEFT, Tag.PERIODIC_RIGHT, 0),
                                 "y": (Tag.PERIODIC_FRONT, Tag.PERIODIC_BACK, 1)}.items():
        slave, master = mesh.nodes_with_tag(hi), mesh.nodes_with_tag(lo)
        if len(slave) and len(master):
            pairs[name] = _pair_nodes(mesh.vertices, slave, master, axis, 1.0)
    mesh.periodic_pairs = pairs


# ---------------------------------------------------------------------------
# VTK legacy
# ---------------------------------------------------------------------------

_VTK_CELL = {2: 5, 3: 10}  # triangle, tetra


def write_vtk(mesh, fields, path, title="carreau_darcy"):
    """Write ``mesh`` and named fields as a legacy ASCII VTK unstructured grid.

    A field whose first dimension equals the number of vertices becomes
    point data, one matching the number of cells becomes cell data.  Arrays
    of shape ``(n, 2)`` or ``(n, 3)`` are written as vectors (2D vectors
    padded with a zero third component), everything else as scalars.
    """
    nv, nc = mesh.n_vertices, len(mesh.cells)
    point, cell = {}, {}
    for name, values in (fields or {}).items():
        values = np.asarray(values, dtype=float)
        if " " in name:
            raise ValueError(f"VTK field names cannot contain spaces: {name!r}")
        if values.shape[0] == nv:
            point[name] = values
        elif values.shape[0] == nc:
            cell[name] = values
        else:
            raise ValueError(f"field {name!r} has {values.shape[0]} entries; "
                             f"expected {nv} (points) or {nc} (cells)")
    coords = mesh.vertices
    if coords.shape[1] == 2:
        coords = np.column_stack([coords, np.zeros(nv)])
    k = mesh.cells.shape[1]
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {nv} double"]
    out += [" ".join(_fmt(c) for c in p) for p in coords]
    out.append(f"CELLS {nc} {nc * (k + 1)}")
    out += [f"{k} " + " ".join(str(int(i)) for i in c) for c in mesh.cells]
    out.append(f"CELL_TYPES {nc}")
    out += [str(_VTK_CELL[mesh.dim])] * nc
    for section, data, n in (("POINT_DATA", point, nv), ("CELL_DATA", cell, nc)):
        if not data:
            continue
        out.append(f"{section} {n}")
        for name, values in data.items():
            if values.ndim == 2 and values.shape[1] in (2, 3):
                if values.shape[1] == 2:
                    values = np.column_stack([values, np.zeros(n)])
                out.append(f"VECTORS {name} double")
                out += [" ".join(_fmt(c) for c in row) for row in values]
            else:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [_fmt(v) for v in values.reshape(n)]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_vtk(path):
    """Read a file written by :func:`write_vtk`.

    Returns ``(mesh, point_data, cell_data)``; the mesh carries no boundary
    tags.  Vectors come back with three components.
    """
    text = Path(path).read_text(encoding="utf-8")
    rd = _Lines(text)
    if not text.strip():
        raise ParseError("empty VTK file", 1)
    rd.next("header")
    rd.next("title")
    if rd.next("format") != "ASCII":
        raise ParseError("only ASCII VTK is supported", rd.pos)
    if rd.next("dataset") != "DATASET UNSTRUCTURED_GRID":
        raise ParseError("expected DATASET UNSTRUCTURED_GRID", rd.pos)
    coords = cells = types = None
    point, cell = {}, {}
    target = None
    while True:
        try:
            line = rd.next("section")
        except ParseError:
            break
        parts = line.split()
        key = parts[0]
        try:
            if key == "POINTS":
                n = int(parts[1])
                coords = np.array([[float(t) for t in rd.next("point").split()] for _ in range(n)])
            elif key == "CELLS":
                n = int(parts[1])
                cells = [[int(t) for t in rd.next("cell").split()][1:] for _ in range(n)]
            elif key == "CELL_TYPES":
                n = int(parts[1])
                types = [int(rd.next("cell type")) for _ in range(n)]
            elif key in ("POINT_DATA", "CELL_DATA"):
                target = (point, int(parts[1])) if key == "POINT_DATA" else (cell, int(parts[1]))
            elif key == "SCALARS":
                if target is None:
                    raise ParseError("SCALARS outside a data section", rd.pos)
                rd.next("lookup table")
                store, n = target
                store[parts[1]] = np.array([float(rd.next("scalar")) for _ in range(n)])
            elif key == "VECTORS":
                if target is None:
                    raise ParseError("VECTORS outside a data section", rd.pos)
                store, n = target
                store[parts[1]] = np.array([[float(t) for t in rd.next("vector").split()]
                                            for _ in range(n)])
            else:
                raise ParseError(f"unexpected VTK keyword {key!r}", rd.pos)
        except (ValueError, IndexError):
            raise ParseError(f"malformed VTK data near {line!r}", rd.pos) from None
    if coords is None or cells is None or types is None:
        raise ParseError("VTK file lacks POINTS, CELLS or CELL_TYPES", rd.pos)
    cells = np.array(cells, dtype=np.int64)
    kinds = set(types)
    if kinds == {10}:
        mesh = TetMesh(coords, cells, np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64))
    elif kinds == {5}:
        mesh = TriMesh(coords[:, :2], cells, np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64))
    else:
        raise UnsupportedElementType(f"VTK cell types {sorted(kinds)}")
    return mesh, point, cell
