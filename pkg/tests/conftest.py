import numpy as np
import pytest

from carreau_darcy.carreau import CarreauParams
from carreau_darcy.cell import CellDiscretization
from carreau_darcy.mesh import InclusionShape, build_cell_mesh

# Criterion outcomes reported by the acceptance suite, printed at the end of the run.
ACCEPTANCE_LINES = {}


def record(criterion, ok, detail):
    """Store the PASS/FAIL line of one acceptance criterion (or sub-check)."""
    ACCEPTANCE_LINES[criterion] = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: [int(p) if p.isdigit() else p
                                                       for p in k.replace(".", " ").split()]):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def params(**kw):
    """Carreau parameters without the eta_inf = 0 warning."""
    return CarreauParams.quiet(**kw)


@pytest.fixture(scope="session")
def tiny_disk_mesh():
    """384 tets: 16 angular by 2 radial segments, 2 layers."""
    return build_cell_mesh(InclusionShape.disk(), n_angular=16, n_radial=2, n_layers=2)


@pytest.fixture(scope="session")
def tiny_disk(tiny_disk_mesh):
    return CellDiscretization(tiny_disk_mesh)


@pytest.fixture(scope="session")
def tiny_ellipse():
    mesh = build_cell_mesh(InclusionShape.ellipse(), n_angular=16, n_radial=2, n_layers=2)
    return CellDiscretization(mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
