"""Command-line entry point ``carreau-darcy``.

Usage::

    carreau-darcy <command> [--config FILE] [--out DIR] [--threads N] [key=value ...]

Overrides address the configuration by dotted path, either as
``carreau.mu=0.1`` or ``--carreau.mu=0.1``.  Exit codes: 0 success,
2 configuration error, 3 mesh error, 4 solver failure, 5 results outside
the configured tolerance.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cell import (CellDiscretization, CellProblem, permeability_jacobian, permeability_tensor,
                   solve_cell)
from .config import RunConfig
from .errors import (ConfigError, ExprEvalError, ExprSyntaxError, InfeasibleResolution,
                     InvalidShape, NonConformingSplit, NonTilingEps, ParseError,
                     UnsupportedElementType, CarreauDarcyError)
from .mesh import InclusionShape, build_cell_mesh, generate_domain_mesh
from .mesh_io import write_msh, write_vtk
from .reference import TABLES

log = logging.getLogger("carreau_darcy")

EXIT_OK, EXIT_CONFIG, EXIT_MESH, EXIT_SOLVER, EXIT_TOLERANCE = 0, 2, 3, 4, 5
MESH_ERRORS = (InvalidShape, InfeasibleResolution, NonConformingSplit, NonTilingEps, ParseError,
               UnsupportedElementType)
CELL_COLUMNS = ["xi1", "xi2", "lambda", "mu", "V1", "V2", "normV"]


def fmt(x):
    """CSV number format: 9 significant digits, locale independent."""
    x = float(x)
    if x == 0.0:
        return "0"
    return f"{x:.9g}"


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([r if isinstance(r, str) else fmt(r) for r in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _versions():
    import numba
    import scipy
    out = {"carreau_darcy": __version__, "python": platform.python_version(),
           "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}
    try:
        import cvxopt
        out["cvxopt"] = cvxopt.__version__
    except ImportError:  # pragma: no cover
        pass
    return out


class Run:
    """Shared state of one CLI invocation: config, output folder, manifest."""

    def __init__(self, command, cfg: RunConfig, out=None):
        self.command = command
        self.cfg = cfg
        self.out = Path(out or cfg["outputs"]["dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.meshes = {}
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def cell_mesh(self, shape=None, h=None, n_layers=None, label="cell"):
        g = self.cfg["geometry"]
        mesh = build_cell_mesh(shape or self.cfg.shape(), h or g["h_cell"],
                               n_layers=n_layers or g["n_layers"])
        self.meshes[label] = {"hash": mesh.hash(), "tets": int(len(mesh.tets)),
                              "vertices": int(mesh.n_vertices)}
        return mesh

    def omega_mesh(self):
        g = self.cfg["geometry"]
        mesh = generate_domain_mesh(tuple(g["rect"]), g["h_omega"])
        self.meshes["omega"] = {"hash": mesh.hash(), "triangles": int(len(mesh.triangles)),
                                "vertices": int(mesh.n_vertices)}
        return mesh

    def manifest(self):
        doc = {"command": self.command, "config": self.cfg.data, "meshes": self.meshes,
               "versions": _versions(), "outputs": sorted(set(self.files))}
        _write_json(self.out / "manifest.json", doc)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cell_row(xi, params, V):
    return [xi[0], xi[1], params.lam, params.mu, V[0], V[1], float(np.linalg.norm(V))]


def cmd_cell(run: Run):
    cfg = run.cfg
    params = cfg.params()
    disc = CellDiscretization(run.cell_mesh())
    xi = np.array(cfg["cell"]["xi"], dtype=float)
    sol = solve_cell(CellProblem(disc, params, xi), **cfg.cell_options())
    _write_csv(run.path("cell.csv"), CELL_COLUMNS, [_cell_row(xi, params, sol.V)])
    _write_json(run.path("cell.json"), {"xi": xi.tolist(), "V": sol.V.tolist(),
                                        "newton_iters": sol.newton_iters,
                                        "residuals": [float(r) for r in sol.history]})
    if cfg["outputs"]["vtk"]:
        nv = disc.mesh.n_vertices
        w = disc.V.to_nodal(sol.w)[:nv]
        pi = disc.Q.to_nodal(sol.pi)[:nv, 0]
        write_vtk(disc.mesh, {"w": w, "pi": pi}, run.path("cell.vtk"))
    print(f"V = ({fmt(sol.V[0])}, {fmt(sol.V[1])})  newton_iters = {sol.newton_iters}")
    return EXIT_OK


def cmd_jacobian(run: Run):
    cfg = run.cfg
    params = cfg.params()
    disc = CellDiscretization(run.cell_mesh())
    xi = np.array(cfg["cell"]["xi"], dtype=float)
    problem = CellProblem(disc, params, xi)
    sol = solve_cell(problem, **cfg.cell_options())
    A = permeability_jacobian(problem, sol)
    _write_json(run.path("jacobian.json"), {"xi": xi.tolist(), "V": sol.V.tolist(),
                                            "A": A.tolist()})
    print("A =", np.array2string(A, precision=9))
    return EXIT_OK


def _darcy_model(run, params):
    from .permeability import PermCache, PermeabilityModel
    cfg = run.cfg
    s = cfg["solver"]
    mesh = run.cell_mesh(h=s["darcy_h_cell"], n_layers=s["darcy_n_layers"], label="darcy_cell")
    opts = cfg.cell_options()
    # inner tolerance two orders tighter than the outer one
    opts["rtol"] = min(opts["rtol"], s["outer_tol"] / 100.0)
    return PermeabilityModel(mesh, params, cache=PermCache(s["cache_rounding"]), cell_options=opts)


def _table(run, model):
    from .permeability import PermTable, tabulate
    t = run.cfg["solver"]["table"]
    if t["path"]:
        return PermTable.load(t["path"])
    return tabulate(model.params, model, run.cfg.table_radii(), t["n_angles"],
                    use_symmetry=t["use_symmetry"], n_validation=t["n_validation"],
                    threads=run.cfg["solver"]["threads"])


def cmd_tabulate(run: Run):
    params = run.cfg.params()
    model = _darcy_model(run, params)
    table = _table(run, model)
    table.save(run.path("perm-table.json"))
    print(f"tabulated {len(table.radii)} x {table.n_angles} nodes; "
          f"max validation error {table.max_rel_err}")
    return EXIT_OK


def _darcy_outputs(run, problem, result, name, extra=None):
    from .darcy import postprocess, velocity_l2
    fields = postprocess(problem, result)
    doc = {"config": run.cfg.data, "mode": problem.mode, "reynolds": problem.reynolds,
           "residuals": [float(r) for r in result.residuals], "iters": result.iterations,
           "cache": result.cache, "misses_per_iteration": [int(m) for m in result.misses],
           "P_l2": result.l2_norm(), "V_l2": velocity_l2(result)}
    doc.update(extra or {})
    if run.cfg["outputs"]["record_timings"]:
        doc["timings"] = {"total_seconds": result.seconds}
    _write_json(run.path(f"{name}.json"), doc)
    if run.cfg["outputs"]["vtk"]:
        write_vtk(problem.omega, fields, run.path(f"{name}.vtk"))
    return doc


def cmd_darcy(run: Run):
    from .darcy import DarcyProblem, ExactEvaluator, TableEvaluator, newton_solve
    cfg = run.cfg
    s = cfg["solver"]
    params = cfg.params()
    omega = run.omega_mesh()
    model = _darcy_model(run, params)
    if s["mode"] == "exact":
        ev = ExactEvaluator(model, threads=s["threads"])
    else:
        ev = TableEvaluator(_table(run, model))
    problem = DarcyProblem(omega, cfg["forcing"], params, ev, mode=s["mode"],
                           eps=cfg["geometry"]["eps"], jacobian_eval=s["jacobian_eval"])
    result = newton_solve(problem, tol=s["outer_tol"], max_outer=s["max_outer"],
                          max_halvings=s["max_outer_halvings"])
    doc = _darcy_outputs(run, problem, result, "darcy-run")
    print(f"outer iterations {doc['iters']}, final residual {doc['residuals'][-1]:.3e}, "
          f"|P| = {doc['P_l2']:.6g}, |V| = {doc['V_l2']:.6g}")
    return EXIT_OK


def cmd_darcy_linear(run: Run):
    from .darcy import DarcyProblem, LinearEvaluator, solve_linear_darcy
    cfg = run.cfg
    s = cfg["solver"]
    params = cfg.params()
    omega = run.omega_mesh()
    mesh = run.cell_mesh(h=s["darcy_h_cell"], n_layers=s["darcy_n_layers"], label="darcy_cell")
    A = permeability_tensor(mesh)
    result = solve_linear_darcy(omega, cfg["forcing"], A, params.mu, params.eta0)
    problem = DarcyProblem(omega, cfg["forcing"], params, LinearEvaluator(A, params.mu, params.eta0),
                           mode="linear", eps=cfg["geometry"]["eps"])
    doc = _darcy_outputs(run, problem, result, "darcy-linear", {"tensor": A.tolist()})
    print(f"|P| = {doc['P_l2']:.6g}, |V| = {doc['V_l2']:.6g}")
    return EXIT_OK


def cmd_mesh(run: Run):
    mesh = run.cell_mesh()
    omega = run.omega_mesh()
    write_msh(mesh, run.path("cell.msh"))
    write_msh(omega, run.path("omega.msh"))
    if run.cfg["outputs"]["vtk"]:
        write_vtk(mesh, {}, run.path("cell-mesh.vtk"))
        write_vtk(omega, {}, run.path("omega-mesh.vtk"))
    print(f"cell: {len(mesh.tets)} tets, omega: {len(omega.triangles)} triangles")
    return EXIT_OK


def cmd_reproduce_tables(run: Run):
    cfg = run.cfg
    tol = cfg["solver"]["table_tolerance"]
    worst = 0.0
    g = cfg["geometry"]
    base = cfg.params()
    for kind, rows in TABLES.items():
        shape = InclusionShape.disk(g["R"]) if kind == "disk" else \
            InclusionShape.ellipse(a=g["a"], b=g["b"], R=g["R"])
        disc = CellDiscretization(run.cell_mesh(shape=shape, label=f"cell_{kind}"))
        out = []
        for xi1, xi2, lam, mu, *_ref, ref_norm in rows:
            params = base.replace(lam=lam, mu=mu)
            xi = np.array([xi1, xi2])
            sol = solve_cell(CellProblem(disc, params, xi), **cfg.cell_options())
            norm = float(np.linalg.norm(sol.V))
            dev = abs(norm - ref_norm) / ref_norm
            worst = max(worst, dev)
            out.append(_cell_row(xi, params, sol.V) + [ref_norm, dev])
            print(f"{kind:8s} xi=({xi1:.4f},{xi2:.4f}) lambda={lam:<5g} mu={mu:<4g} "
                  f"|V|={norm:.6g} reference={ref_norm:.6g} deviation={100 * dev:.2f}%", flush=True)
        _write_csv(run.path(f"tables-{kind}.csv"), CELL_COLUMNS + ["ref_normV", "rel_dev"], out)
    print(f"largest relative deviation {100 * worst:.2f}% (tolerance {100 * tol:.2f}%)")
    return EXIT_OK if worst <= tol else EXIT_TOLERANCE


COMMANDS = {
    "cell": cmd_cell,
    "jacobian": cmd_jacobian,
    "tabulate": cmd_tabulate,
    "darcy": cmd_darcy,
    "darcy-linear": cmd_darcy_linear,
    "mesh": cmd_mesh,
    "reproduce-tables": cmd_reproduce_tables,
}


def build_parser():
    p = argparse.ArgumentParser(prog="carreau-darcy",
                                description="Homogenized Carreau flow in thin porous media.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", help="output folder (overrides outputs.dir)")
    p.add_argument("--threads", type=int, help="worker threads for cell solves")
    p.add_argument("--log-iterations", help="append Newton iteration lines to this file")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    overrides = []
    for item in rest:
        if "=" not in item:
            parser.error(f"unrecognized argument {item!r}")
        overrides.append(item)
    if args.threads is not None:
        overrides.append(f"solver.threads={args.threads}")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    handler = None
    if args.log_iterations:
        handler = logging.FileHandler(args.log_iterations, encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(message)s"))
        it = logging.getLogger("carreau_darcy.iterations")
        it.addHandler(handler)
        it.setLevel(logging.INFO)
        # the file gets the lines; the console only with --verbose
        it.propagate = args.verbose
    try:
        cfg = RunConfig.load(args.config, overrides)
        run = Run(args.command, cfg, args.out)
        code = COMMANDS[args.command](run)
        run.manifest()
        return code
    except (ConfigError, ExprSyntaxError, ExprEvalError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MESH_ERRORS as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except CarreauDarcyError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    finally:
        if handler is not None:
            it.removeHandler(handler)
            it.propagate = True
            handler.close()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
