import numpy as np
import pytest

from carreau_darcy.cell import CellProblem, permeability_tensor, solve_cell
from carreau_darcy.errors import NewtonDiverged, OutOfTableRange
from carreau_darcy.permeability import (PermCache, PermeabilityModel, PermTable, eval_DU, eval_U,
                                        interp_U, tabulate)

from conftest import params

P = params(r=1.3, lam=10.0, mu=1.0)


@pytest.fixture(scope="module")
def model(tiny_disk):
    return PermeabilityModel(tiny_disk, P)


@pytest.fixture(scope="module")
def table(tiny_disk):
    return tabulate(P, PermeabilityModel(tiny_disk, P), [0.0, 0.5, 1.0, 1.5], 16, n_validation=4)


def test_cache_counts_hits_and_misses():
    c = PermCache()
    k = c.key([1.0, 2.0])
    assert c.lookup(k) is None
    c.insert(k, np.array([3.0, 4.0]))
    assert c.lookup(k)[0].tolist() == [3.0, 4.0]
    assert c.lookup(k, need_jacobian=True) is None
    c.insert(k, np.array([3.0, 4.0]), np.eye(2))
    assert c.lookup(k, need_jacobian=True) is not None
    assert c.stats() == {"hits": 2, "misses": 2, "entries": 1}
    c.clear()
    assert len(c) == 0 and c.hits == 0


def test_cache_keys():
    exact = PermCache()
    assert exact.key([0.1, 0.2]) != exact.key([0.1, np.nextafter(0.2, 1.0)])
    assert exact.key([0.0, 0.0]) == exact.key([-0.0, 0.0])
    rounded = PermCache(rounding=1e-12)
    assert rounded.key([0.1, 0.2]) == rounded.key([0.1, np.nextafter(0.2, 1.0)])
    assert rounded.key([0.1, 0.2]) != rounded.key([0.1, 0.2 + 1e-6])
    with pytest.raises(ValueError):
        PermCache(rounding=0.0)


def test_zero_force(model):
    assert not np.any(model.eval_U([0.0, 0.0]))


def test_cached_value_is_the_solver_value(model, tiny_disk):
    xi = np.array([0.37, -0.21])
    direct = solve_cell(CellProblem(tiny_disk, P, xi), preconditioner=model.stokes_factor()).V
    first = model.eval_U(xi)
    hits = model.cache.hits
    again = model.eval_U(xi)
    assert model.cache.hits == hits + 1
    assert np.array_equal(first, direct) and np.array_equal(again, direct)


def test_stokes_preconditioning_does_not_change_the_answer(tiny_disk):
    xi = [0.9, 0.4]
    a = PermeabilityModel(tiny_disk, P, reuse_stokes=True, cell_options={"rtol": 1e-13}).eval_U(xi)
    b = PermeabilityModel(tiny_disk, P, reuse_stokes=False, cell_options={"rtol": 1e-13}).eval_U(xi)
    assert np.allclose(a, b, rtol=1e-11, atol=0)


def test_derivative_at_zero_is_the_newtonian_tensor(tiny_disk):
    p = params(r=1.3, lam=10.0, mu=2.0, eta0=1.5)
    A = permeability_tensor(tiny_disk)
    assert np.allclose(eval_DU(p, tiny_disk, [0.0, 0.0]), A / (2.0 * 1.5), rtol=1e-10)


def test_module_level_evaluators(tiny_disk):
    xi = [0.2, 0.1]
    assert np.array_equal(eval_U(P, tiny_disk, xi), eval_U(P, tiny_disk, xi))
    assert eval_DU(P, tiny_disk, xi).shape == (2, 2)


def test_map_deduplicates_and_keeps_order(tiny_disk):
    m = PermeabilityModel(tiny_disk, P)
    xis = np.array([[0.1, 0.0], [0.0, 0.1], [0.1, 0.0], [0.0, 0.1], [0.1, 0.0]])
    V = m.map(xis)
    assert m.solves == 2
    assert m.cache.stats()["hits"] == 3
    assert np.array_equal(V[0], V[2]) and np.array_equal(V[1], V[3])
    assert V[0][0] > 0 and V[1][1] > 0


def test_threaded_map_matches_serial(tiny_disk):
    xis = np.array([[0.3 * np.cos(t), 0.3 * np.sin(t)] for t in np.linspace(0, 3, 6)])
    serial = PermeabilityModel(tiny_disk, P).map(xis, jacobian=True)
    threaded = PermeabilityModel(tiny_disk, P).map(xis, jacobian=True, threads=3)
    assert np.array_equal(serial[0], threaded[0])
    assert np.array_equal(serial[1], threaded[1])


def test_failures_carry_the_driving_force(tiny_disk):
    m = PermeabilityModel(tiny_disk, params(r=1.3, lam=1000.0, mu=0.1),
                          cell_options={"max_iters": 1})
    with pytest.raises(NewtonDiverged) as info:
        m.eval_U([1.0, 0.5])
    assert np.array_equal(info.value.xi, [1.0, 0.5])


def test_table_reproduces_nodes(table, model):
    for i, r in enumerate(table.radii):
        for k, t in enumerate(table.angles):
            xi = np.array([r * np.cos(t), r * np.sin(t)])
            assert np.allclose(table.interp_U(xi), table.V[i, k], rtol=1e-12, atol=1e-15)
    assert np.allclose(table.V[2, 3], model.eval_U([np.cos(table.angles[3]), np.sin(table.angles[3])]),
                       rtol=1e-12)


def test_table_validation_error_is_recorded(table):
    assert table.max_rel_err is not None
    assert 0.0 < table.max_rel_err < 0.1


def test_table_range(table):
    with pytest.raises(OutOfTableRange):
        interp_U(table, [1.2, 1.2])
    assert interp_U(table, [1.5, 0.0]) == pytest.approx(table.V[-1, 0])


def test_table_json_round_trip(table, tmp_path):
    path = tmp_path / "table.json"
    table.save(path)
    back = PermTable.load(path)
    assert np.array_equal(back.radii, table.radii)
    assert np.array_equal(back.V, table.V) and np.array_equal(back.A, table.A)
    assert back.mesh_hash == table.mesh_hash and back.max_rel_err == table.max_rel_err
    assert back.to_json() == table.to_json()


def test_symmetric_tabulation_matches_full(tiny_disk, table):
    sym = tabulate(P, PermeabilityModel(tiny_disk, P), table.radii, 16, use_symmetry=True,
                   n_validation=0)
    scale = np.abs(table.V).max()
    # the extruded mesh is only approximately invariant under the square's symmetries
    assert np.abs(sym.V - table.V).max() <= 2e-3 * scale
    assert np.abs(sym.A - table.A).max() <= 2e-3 * np.abs(table.A).max()


@pytest.mark.parametrize("radii, n", [([0.0], 8), ([0.0, 0.0, 1.0], 8), ([0.0, 1.0], 4)])
def test_tabulate_rejects_bad_grids(tiny_disk, radii, n):
    with pytest.raises(ValueError):
        tabulate(P, tiny_disk, radii, n)
