"""Run configuration: one JSON document plus dotted command-line overrides.

Every key has a default (see :data:`DEFAULTS`), so an empty document is a
valid configuration; the defaults describe the channel-flow experiment
with disk inclusions.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

from .carreau import CarreauParams
from .errors import ConfigError
from .mesh import InclusionShape

DEFAULTS = {
    "geometry": {
        "shape": "disk",        # "disk" or "ellipse"
        "R": 0.25,              # disk radius; also fixes the ellipse area pi R^2
        "a": 0.35,              # ellipse semi-axis along y1
        "b": None,              # ellipse semi-axis along y2 (default R^2 / a)
        "h_cell": 0.04,         # cell cross-section edge length (cell commands)
        "n_layers": 4,          # tet layers across the half cell
        "h_omega": 0.05,        # macroscopic mesh size
        "rect": [0.0, 1.0, 0.0, 0.5],
        "eps": 0.01,            # layer thickness, only used to report Re
    },
    "carreau": {"r": 1.3, "lambda": 1.0, "mu": 10.0, "eta0": 1.0, "etaInf": 0.0},
    "forcing": ["x2*(0.5-x2)", "0"],
    "cell": {"xi": [1.0, 0.0]},
    "solver": {
        "cell_tol": 1e-10,
        "cell_rtol": 1e-8,
        "outer_tol": 1e-8,
        "max_iters": 30,
        "max_halvings": 30,
        "max_outer": 30,
        "max_outer_halvings": 10,
        "jacobian_eval": "barycenter",
        "mode": "exact",        # "exact" or "tabulated"
        "cache_rounding": None,
        "darcy_h_cell": 0.1,    # cell mesh used inside the Darcy solver
        "darcy_n_layers": 2,
        "table": {"r_max": 0.2, "n_radii": 16, "n_angles": 32, "use_symmetry": False,
                  "n_validation": 8, "path": None},
        "table_tolerance": 0.05,
        "threads": 1,
    },
    "outputs": {"dir": "out", "vtk": True, "record_timings": False},
}


def _merge(base, update, path=""):
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def load(cls, path=None, overrides=()):
        """Defaults, then the JSON file at ``path``, then ``key=value`` overrides."""
        data = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    doc = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise ConfigError("the configuration must be a JSON object")
            _merge(data, doc)
        for item in overrides:
            cls._override(data, item)
        cfg = cls(data)
        cfg.validate()
        return cfg

    @staticmethod
    def _override(data, item):
        key, sep, value = item.partition("=")
        key = key.lstrip("-")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown configuration key {key!r}")
            node = node[p]
        if parts[-1] not in node or isinstance(node[parts[-1]], dict):
            raise ConfigError(f"unknown configuration key {key!r}")
        node[parts[-1]] = _parse_value(value)

    def __getitem__(self, key):
        return self.data[key]

    def get(self, dotted):
        node = self.data
        for p in dotted.split("."):
            node = node[p]
        return node

    def to_json(self):
        return json.dumps(self.data, indent=2, sort_keys=True)

    # -- derived objects ------------------------------------------------------------

    def shape(self) -> InclusionShape:
        g = self.data["geometry"]
        if g["shape"] == "disk":
            return InclusionShape.disk(g["R"])
        return InclusionShape.ellipse(a=g["a"], b=g["b"], R=g["R"])

    def params(self, **kw) -> CarreauParams:
        c = self.data["carreau"]
        p = CarreauParams.quiet(r=c["r"], lam=c["lambda"], mu=c["mu"], eta0=c["eta0"],
                                    eta_inf=c["etaInf"])
        return p.replace(**kw) if kw else p

    def cell_options(self):
        s = self.data["solver"]
        return {"tol": s["cell_tol"], "rtol": s["cell_rtol"], "max_iters": s["max_iters"],
                "max_halvings": s["max_halvings"]}

    def table_radii(self):
        t = self.data["solver"]["table"]
        n = int(t["n_radii"])
        return [t["r_max"] * i / (n - 1) for i in range(n)]

    # -- validation -----------------------------------------------------------------

    def validate(self):
        g, c, s = self.data["geometry"], self.data["carreau"], self.data["solver"]

        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        def num(x):
            return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)

        need(g["shape"] in ("disk", "ellipse"), "geometry.shape must be 'disk' or 'ellipse'")
        for k in ("R", "a", "h_cell", "h_omega", "eps"):
            need(num(g[k]) and g[k] > 0, f"geometry.{k} must be a positive number")
        need(g["b"] is None or (num(g["b"]) and g["b"] > 0), "geometry.b must be positive or null")
        need(isinstance(g["n_layers"], int) and g["n_layers"] >= 2, "geometry.n_layers must be an integer >= 2")
        rect = g["rect"]
        need(isinstance(rect, list) and len(rect) == 4 and all(num(v) for v in rect)
             and rect[1] > rect[0] and rect[3] > rect[2], "geometry.rect must be [x0, x1, y0, y1]")
        for k in ("r", "lambda", "mu", "eta0", "etaInf"):
            need(num(c[k]), f"carreau.{k} must be a number")
        try:
            self.params()
            self.shape()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        f = self.data["forcing"]
        need(isinstance(f, list) and len(f) == 2 and all(isinstance(e, str) for e in f),
             "forcing must be a list of two expression strings")
        from .expr import parse_expr
        for e in f:
            parse_expr(e)
        xi = self.data["cell"]["xi"]
        need(isinstance(xi, list) and len(xi) == 2 and all(num(v) for v in xi), "cell.xi must be two numbers")
        for k in ("cell_tol", "cell_rtol", "outer_tol"):
            need(num(s[k]) and s[k] > 0, f"solver.{k} must be positive")
        for k in ("max_iters", "max_halvings", "max_outer", "max_outer_halvings", "darcy_n_layers", "threads"):
            need(isinstance(s[k], int) and s[k] >= 1, f"solver.{k} must be a positive integer")
        need(s["darcy_n_layers"] >= 2, "solver.darcy_n_layers must be >= 2")
        need(num(s["darcy_h_cell"]) and s["darcy_h_cell"] > 0, "solver.darcy_h_cell must be positive")
        need(s["jacobian_eval"] in ("barycenter", "vertex-mean"),
             "solver.jacobian_eval must be 'barycenter' or 'vertex-mean'")
        need(s["mode"] in ("exact", "tabulated"), "solver.mode must be 'exact' or 'tabulated'")
        need(s["cache_rounding"] is None or (num(s["cache_rounding"]) and s["cache_rounding"] > 0),
             "solver.cache_rounding must be positive or null")
        t = s["table"]
        need(num(t["r_max"]) and t["r_max"] > 0, "solver.table.r_max must be positive")
        need(isinstance(t["n_radii"], int) and t["n_radii"] >= 2, "solver.table.n_radii must be >= 2")
        need(isinstance(t["n_angles"], int) and t["n_angles"] >= 8, "solver.table.n_angles must be >= 8")
        need(not t["use_symmetry"] or t["n_angles"] % 8 == 0,
             "solver.table.n_angles must be a multiple of 8 with use_symmetry")
        need(num(s["table_tolerance"]) and s["table_tolerance"] > 0, "solver.table_tolerance must be positive")
        return self
