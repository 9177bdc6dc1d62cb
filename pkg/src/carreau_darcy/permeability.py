"""Memoized evaluation of the permeability function and its derivative.

``U(xi)`` is the doubled half-cell average of the cell velocity for the
driving force ``xi`` and ``DU(xi)`` its 2x2 Jacobian.  A
:class:`PermeabilityModel` binds a cell discretization and rheology to a
:class:`PermCache`; :func:`tabulate` samples ``U`` on a polar grid for the
cheap interpolated mode of the Darcy solver.
"""
from __future__ import annotations

import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .carreau import CarreauParams
from .cell import (CellDiscretization, CellProblem, permeability_jacobian, solve_cell)
from .errors import CarreauDarcyError, OutOfTableRange
from .fem.solve import Factorization
from .mesh import TetMesh

TABLE_VERSION = 1


class PermCache:
    """Thread-safe map from a key derived from ``xi`` to ``(V, A, meta)``.

    With ``rounding=None`` the key is the exact bit pattern of ``xi``.  A
    positive ``rounding`` merges driving forces that agree to that relative
    precision (useful on symmetric meshes where mirrored vertices produce
    values differing in the last bits).
    """

    def __init__(self, rounding=None):
        if rounding is not None and not rounding > 0:
            raise ValueError("rounding must be positive or None")
        self.rounding = rounding
        self._store = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def key(self, xi):
        xi = np.asarray(xi, dtype=float).reshape(2)
        if self.rounding is not None:
            scale = max(float(np.max(np.abs(xi))), 1e-300)
            step = self.rounding * 2.0 ** math.ceil(math.log2(scale))
            xi = np.round(xi / step) * step
        return (xi + 0.0).astype("<f8").tobytes()  # + 0.0 folds -0.0 into 0.0

    def lookup(self, key, need_jacobian=False):
        with self._lock:
            entry = self._store.get(key)
            if entry is not None and (entry[1] is not None or not need_jacobian):
                self.hits += 1
                return entry
            self.misses += 1
            return None

    def insert(self, key, V, A=None, meta=None):
        with self._lock:
            old = self._store.get(key)
            if old is not None and A is None:
                A = old[1]
            self._store[key] = (V, A, meta or {})

    def __len__(self):
        return len(self._store)

    def __contains__(self, xi):
        return self.key(xi) in self._store

    def stats(self):
        return {"hits": self.hits, "misses": self.misses, "entries": len(self._store)}

    def clear(self):
        with self._lock:
            self._store.clear()
            self.hits = self.misses = 0


class PermeabilityModel:
    """Cache-through evaluator of ``U`` and ``DU`` on one cell mesh.

    Parameters
    ----------
    cell : TetMesh or CellDiscretization
    params : CarreauParams
    cache : PermCache, optional
    cell_options : dict, optional
        Keyword arguments for :func:`~carreau_darcy.cell.solve_cell`.
    reuse_stokes : bool
        Precondition every Newton correction with one factorization of the
        zero-shear Stokes operator.  Results still satisfy the same linear
        residual contract; it only changes how that residual is reached.
    """

    def __init__(self, cell, params: CarreauParams, cache=None, cell_options=None,
                 reuse_stokes=True):
        self.disc = cell if isinstance(cell, CellDiscretization) else CellDiscretization(cell)
        self.params = params
        self.cache = cache if cache is not None else PermCache()
        self.cell_options = dict(cell_options or {})
        self.reuse_stokes = reuse_stokes
        self._stokes = None
        self._lock = threading.Lock()
        self.solves = 0

    @property
    def mesh(self) -> TetMesh:
        return self.disc.mesh

    def stokes_factor(self):
        """LU of the saddle matrix linearized at ``w = 0`` (built once)."""
        with self._lock:
            if self._stokes is None:
                _, K = self.disc.operator(np.zeros(self.disc.n_u), self.params)
                self._stokes = Factorization(self.disc.saddle(K))
            return self._stokes

    def problem(self, xi):
        return CellProblem(self.disc, self.params, xi)

    def solve(self, xi):
        """Direct cell solve with this model's options (no cache)."""
        opts = dict(self.cell_options)
        if self.reuse_stokes:
            opts.setdefault("preconditioner", self.stokes_factor())
        problem = self.problem(xi)
        try:
            sol = solve_cell(problem, **opts)
        except CarreauDarcyError as exc:
            if getattr(exc, "xi", None) is None:
                exc.xi = problem.xi.copy()
            raise
        self.solves += 1
        return problem, sol

    def _compute(self, xi, jacobian):
        problem, sol = self.solve(xi)
        A = permeability_jacobian(problem, sol) if jacobian else None
        meta = {"newton_iters": sol.newton_iters, "residual": sol.residual}
        return sol.V, A, meta

    def _get(self, xi, jacobian):
        key = self.cache.key(xi)
        entry = self.cache.lookup(key, need_jacobian=jacobian)
        if entry is None:
            V, A, meta = self._compute(xi, jacobian)
            self.cache.insert(key, V, A, meta)
            entry = (V, A, meta)
        return entry

    def eval_U(self, xi):
        """Filtration velocity ``U(xi)``."""
        return self._get(xi, False)[0].copy()

    def eval_DU(self, xi):
        """Jacobian ``DU(xi)`` (2x2)."""
        return self._get(xi, True)[1].copy()

    def eval_both(self, xi):
        V, A, _ = self._get(xi, True)
        return V.copy(), A.copy()

    def map(self, xis, jacobian=False, threads=1):
        """Evaluate many driving forces; duplicates are solved once.

        Misses are computed (in a thread pool when ``threads > 1``) and the
        results are returned in input order, so the output does not depend
        on the scheduling.
        """
        xis = np.asarray(xis, dtype=float).reshape(-1, 2)
        keys = [self.cache.key(x) for x in xis]
        todo = {}
        for k, x in zip(keys, xis):
            if k in todo:
                with self.cache._lock:
                    self.cache.hits += 1
            elif self.cache.lookup(k, need_jacobian=jacobian) is None:
                todo[k] = x
        items = list(todo.items())

        def work(item):
            k, x = item
            V, A, meta = self._compute(x, jacobian)
            self.cache.insert(k, V, A, meta)

        if threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, items))
        else:
            for it in items:
                work(it)
        store = self.cache._store
        V = np.array([store[k][0] for k in keys]).reshape(-1, 2)
        if not jacobian:
            return V
        return V, np.array([store[k][1] for k in keys]).reshape(-1, 2, 2)


_MODELS = {}


def _model(params, mesh):
    if isinstance(mesh, PermeabilityModel):
        return mesh
    key = (id(mesh), params)
    if key not in _MODELS:
        _MODELS.clear()
        _MODELS[key] = PermeabilityModel(mesh, params)
    return _MODELS[key]


def eval_U(params, mesh, xi):
    """``U(xi)`` on ``mesh`` (a TetMesh, CellDiscretization or model)."""
    return _model(params, mesh).eval_U(xi)


def eval_DU(params, mesh, xi):
    """``DU(xi)`` on ``mesh`` (a TetMesh, CellDiscretization or model)."""
    return _model(params, mesh).eval_DU(xi)


# ---------------------------------------------------------------------------
# polar tables
# ---------------------------------------------------------------------------

def _d4_elements():
    """The eight orthogonal symmetries of the square as 2x2 matrices."""
    mats = []
    for k in range(4):
        c, s = round(math.cos(k * math.pi / 2)), round(math.sin(k * math.pi / 2))
        R = np.array([[c, -s], [s, c]], dtype=float)
        mats.append(R)
        mats.append(R @ np.diag([1.0, -1.0]))
    return mats


@dataclass
class PermTable:
    """Samples of ``U`` and ``DU`` at ``xi = r (cos t, sin t)``.

    ``V[i, k]`` and ``A[i, k]`` belong to ``radii[i]`` and
    ``t = 2 pi k / n_angles``.
    """

    radii: np.ndarray
    n_angles: int
    V: np.ndarray
    A: np.ndarray
    params: dict = field(default_factory=dict)
    mesh_hash: str = ""
    max_rel_err: float | None = None

    @property
    def angles(self):
        return 2.0 * np.pi * np.arange(self.n_angles) / self.n_angles

    def _locate(self, xi):
        xi = np.asarray(xi, dtype=float).reshape(2)
        r = float(np.hypot(xi[0], xi[1]))
        if not (self.radii[0] <= r <= self.radii[-1]):
            raise OutOfTableRange(xi, f"|xi| = {r:.6g} outside [{self.radii[0]:.6g}, "
                                      f"{self.radii[-1]:.6g}]")
        i = int(np.clip(np.searchsorted(self.radii, r, side="right") - 1, 0, len(self.radii) - 2))
        s = (r - self.radii[i]) / (self.radii[i + 1] - self.radii[i])
        t = math.atan2(xi[1], xi[0]) % (2.0 * math.pi)
        dt = 2.0 * math.pi / self.n_angles
        k = int(t // dt) % self.n_angles
        u = (t - k * dt) / dt
        return i, s, k, u

    def _blend(self, data, xi):
        i, s, k, u = self._locate(xi)
        k1 = (k + 1) % self.n_angles
        return ((1 - s) * ((1 - u) * data[i, k] + u * data[i, k1])
                + s * ((1 - u) * data[i + 1, k] + u * data[i + 1, k1]))

    def interp_U(self, xi):
        return self._blend(self.V, xi)

    def interp_DU(self, xi):
        return self._blend(self.A, xi)

    def to_json(self):
        entries = []
        for i, r in enumerate(self.radii):
            for k, t in enumerate(self.angles):
                entries.append({"r": float(r), "theta": float(t), "V": [float(v) for v in self.V[i, k]],
                                "A": [float(a) for a in self.A[i, k].ravel()]})
        doc = {"version": TABLE_VERSION, "params": self.params, "mesh_hash": self.mesh_hash,
               "radii": [float(r) for r in self.radii], "angles": int(self.n_angles),
               "entries": entries, "validation": {"max_rel_err": self.max_rel_err}}
        return json.dumps(doc, indent=1, sort_keys=True)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("version") != TABLE_VERSION:
            raise ValueError(f"unsupported table version {doc.get('version')}")
        radii = np.array(doc["radii"], dtype=float)
        n = int(doc["angles"])
        V = np.zeros((len(radii), n, 2))
        A = np.zeros((len(radii), n, 2, 2))
        for idx, e in enumerate(doc["entries"]):
            i, k = divmod(idx, n)
            V[i, k] = e["V"]
            A[i, k] = np.reshape(e["A"], (2, 2))
        return cls(radii, n, V, A, doc.get("params", {}), doc.get("mesh_hash", ""),
                   doc.get("validation", {}).get("max_rel_err"))


def interp_U(table: PermTable, xi):
    """Bilinear (in radius and angle) interpolation of ``U`` from ``table``."""
    return table.interp_U(xi)


def tabulate(params, mesh, radii, n_angles, *, use_symmetry=False, n_validation=8,
             seed=0, threads=1) -> PermTable:
    """Sample ``U`` and ``DU`` on a polar grid and validate the interpolant.

    Parameters
    ----------
    radii : sequence of float
        Strictly increasing, at least two values, first one ``>= 0``.
    n_angles : int
        At least 8; a multiple of 8 when ``use_symmetry`` is set.
    use_symmetry : bool
        Solve only in the sector ``0 <= t <= pi/4`` and map the other
        nodes with the symmetries of the square.  Only valid when the cell
        has those symmetries (centred disk).
    n_validation : int
        Off-grid points compared against direct solves; the largest
        relative error is stored as ``max_rel_err``.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) < 2 or np.any(np.diff(radii) <= 0) or radii[0] < 0:
        raise ValueError("radii must be a strictly increasing list of >= 2 non-negative values")
    if n_angles < 8 or (use_symmetry and n_angles % 8):
        raise ValueError("n_angles must be >= 8 (and a multiple of 8 with use_symmetry)")
    model = _model(params, mesh)
    angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
    V = np.zeros((len(radii), n_angles, 2))
    A = np.zeros((len(radii), n_angles, 2, 2))
    if use_symmetry:
        group = _d4_elements()
        base_idx = [k for k in range(n_angles) if 8 * k <= n_angles]
        mapping = []
        for k in range(n_angles):
            for g in group:
                d = g @ np.array([math.cos(angles[k]), math.sin(angles[k])])
                t = math.atan2(d[1], d[0]) % (2 * math.pi)
                kb = int(round(t / (2 * math.pi / n_angles))) % n_angles
                if kb in base_idx and abs(t - angles[kb]) < 1e-9:
                    mapping.append((k, kb, g))
                    break
    else:
        base_idx = list(range(n_angles))
    xis = np.array([[r * math.cos(angles[k]), r * math.sin(angles[k])]
                    for r in radii for k in base_idx])
    Vb, Ab = model.map(xis, jacobian=True, threads=threads)
    Vb = Vb.reshape(len(radii), len(base_idx), 2)
    Ab = Ab.reshape(len(radii), len(base_idx), 2, 2)
    if use_symmetry:
        pos = {kb: j for j, kb in enumerate(base_idx)}
        for k, kb, g in mapping:
            # U(g^T y) = g^T U(y) with y = g x
            V[:, k] = Vb[:, pos[kb]] @ g
            A[:, k] = np.einsum("ji,rjk,kl->ril", g, Ab[:, pos[kb]], g)
    else:
        V[:], A[:] = Vb, Ab
    table = PermTable(radii, n_angles, V, A, params.as_dict(), model.mesh.hash())
    if n_validation:
        rng = np.random.default_rng(seed)
        rs = rng.uniform(radii[1] * 0.5, radii[-1], n_validation)
        ts = rng.uniform(0.0, 2.0 * np.pi, n_validation)
        pts = np.column_stack([rs * np.cos(ts), rs * np.sin(ts)])
        exact = model.map(pts)
        err = 0.0
        for x, v in zip(pts, exact):
            err = max(err, float(np.linalg.norm(table.interp_U(x) - v) / np.linalg.norm(v)))
        table.max_rel_err = err
    return table
