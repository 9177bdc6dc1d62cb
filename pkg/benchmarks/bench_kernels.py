"""Compare the numba and numpy element kernels on a cell mesh.

Run with ``python benchmarks/bench_kernels.py [h] [n_layers]``.  Prints the
best-of-N wall time of the residual and Jacobian kernels for both backends
and the largest difference between their outputs.
"""
import sys
import time
import warnings

import numpy as np

from carreau_darcy.cell import CellDiscretization
from carreau_darcy.kernels import backend_module
from carreau_darcy.mesh import InclusionShape, build_cell_mesh


def best_of(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(h=0.05, n_layers=4):
    warnings.simplefilter("ignore")
    mesh = build_cell_mesh(InclusionShape.disk(), h, n_layers=n_layers)
    disc = CellDiscretization(mesh)
    _, grads, wdet = disc.V.geometry()
    rng = np.random.default_rng(0)
    w = disc.local_velocity(rng.standard_normal(disc.n_u))
    args = (grads, wdet, w, 1.3, 1000.0, 1.0, 0.0, 0.1)
    print(f"{len(mesh.tets)} tets, {disc.n_u} velocity dofs")
    out = {}
    for name in ("numba", "numpy"):
        mod = backend_module(name)
        mod.carreau_residual(*args)  # compile / warm up
        mod.carreau_jacobian(*args)
        tr = best_of(lambda: mod.carreau_residual(*args))
        tj = best_of(lambda: mod.carreau_jacobian(*args), repeat=3)
        out[name] = (mod.carreau_residual(*args), mod.carreau_jacobian(*args))
        print(f"{name:6s} residual {1e3 * tr:8.2f} ms   jacobian {1e3 * tj:8.2f} ms")
    dr = np.abs(out["numba"][0] - out["numpy"][0]).max() / np.abs(out["numpy"][0]).max()
    dj = np.abs(out["numba"][1] - out["numpy"][1]).max() / np.abs(out["numpy"][1]).max()
    print(f"max relative difference: residual {dr:.2e}, jacobian {dj:.2e}")


if __name__ == "__main__":
    a = sys.argv[1:]
    main(float(a[0]) if a else 0.05, int(a[1]) if len(a) > 1 else 4)
