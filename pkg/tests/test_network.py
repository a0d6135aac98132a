import pytest
import numpy as np

from src.exceptions import SymmetryError
from src.gaussian import energy, is_pure, twisted_shift
from src.matchgate import covariance_from_generating
from src.network import *
from src.tiling import build_tiling


def triangle(a):
    return np.array([[0.0, a, a], [-a, 0.0, a], [-a, -a, 0.0]])


orbit_cases = {
    "triangle_k1": {"p": 3, "k": 1, "count": 1},
    "square_k1": {"p": 4, "k": 1, "count": 2},
    "triangle_k2": {"p": 3, "k": 2, "count": 4},
}

network_cases = {
    "37_n1": {"p": 3, "q": 7, "n": 1, "bulk": [0.6]},
    "37_n2": {"p": 3, "q": 7, "n": 2, "bulk": [0.55]},
    "45_n1": {"p": 4, "q": 5, "n": 1, "bulk": [0.4, 0.2]},
}


@pytest.fixture
def tiling_n1():
    return build_tiling(3, 7, 1)


@pytest.fixture
def tiling_n2():
    return build_tiling(3, 7, 2)


@pytest.mark.parametrize("id, setting", orbit_cases.items())
def test_01_symmetric_orbits(id, setting):
    p, k = setting["p"], setting["k"]
    orbits = symmetric_orbits(p, k)
    assert len(orbits) == setting["count"]
    size = p * k
    assert sum(len(orbit) for orbit in orbits) == size * (size - 1) // 2


def test_02_cap_orbits():
    assert len(cap_orbits(1)) == 1
    assert cap_orbits(2) == [[(0, 1)], [(0, 2), (1, 2)]]


def test_03_orbit_matrix_round_trip():
    orbits = symmetric_orbits(3, 2)
    values = [0.1, -0.2, 0.3, 0.4]
    matrix = orbit_matrix(orbits, values, 6)
    assert np.allclose(matrix, -matrix.T)
    assert np.allclose(orbit_values(orbits, matrix), values)
    broken = matrix.copy()
    broken[0, 1] += 0.5
    broken[1, 0] -= 0.5
    with pytest.raises(SymmetryError):
        orbit_values(orbits, broken)
    with pytest.raises(ValueError):
        orbit_matrix(orbits, [0.1], 6)


def test_04_bulk_input():
    bulk = BulkInput(p=3, bulk=[0.6])
    assert np.allclose(bulk.tile_matrix(5), triangle(0.6))
    assert np.allclose(BulkInput(p=3, bulk=triangle(0.6)).bulk, [0.6])
    overridden = bulk.with_overrides({0: [0.1]})
    assert np.allclose(overridden.tile_matrix(0), triangle(0.1))
    assert np.allclose(overridden.tile_matrix(1), triangle(0.6))
    assert BulkInput.from_named(3, ["a"], {"a": 0.25}).bulk.tolist() == [0.25]
    with pytest.raises(ValueError):
        BulkInput(p=3, bulk=[0.1, 0.2])
    with pytest.raises(ValueError):
        BulkInput(p=3, k=2, bulk=[0.1, 0.2, 0.3, 0.4])


def test_05_from_flat_splits_caps():
    bulk = BulkInput.from_flat(3, 2, [0.1, 0.2, 0.3, 0.4, 0.9, 0.5])
    assert bulk.bulk.tolist() == [0.1, 0.2, 0.3, 0.4]
    assert bulk.cap.tolist() == [0.9, 0.5]
    assert np.allclose(bulk.flat, [0.1, 0.2, 0.3, 0.4, 0.9, 0.5])


def test_06_single_tile():
    tiling = build_tiling(3, 7, 0)
    state = contract_network(tiling, BulkInput(p=3, bulk=[0.45]))
    assert state.n_sites == 3
    assert np.allclose(state.covariance, covariance_from_generating(triangle(0.45)).matrix)
    assert state.log_weight == pytest.approx(0.0)


@pytest.mark.parametrize("id, setting", network_cases.items())
def test_07_contract_network_is_pure(id, setting):
    tiling = build_tiling(setting["p"], setting["q"], setting["n"])
    state = contract_network(tiling, BulkInput(p=setting["p"], bulk=setting["bulk"]))
    assert state.n_sites == tiling.boundary_size
    assert is_pure(state.covariance)
    assert np.isfinite(state.log_weight)


def test_08_schedules_agree(tiling_n2):
    bulk = BulkInput(p=3, bulk=[0.55])
    ccw = contract_network(tiling_n2, bulk, "layer_ccw")
    cw = contract_network(tiling_n2, bulk, "layer_cw")
    assert np.allclose(ccw.covariance, cw.covariance, atol=1e-9)
    assert ccw.log_weight == pytest.approx(cw.log_weight, abs=1e-9)


@pytest.mark.parametrize("n", [1, 2])
def test_09_threefold_symmetry(n):
    tiling = build_tiling(3, 7, n)
    gamma = contract_network(tiling, BulkInput(p=3, bulk=[0.58])).covariance
    third = 2 * tiling.boundary_size // 3
    assert np.allclose(twisted_shift(gamma, third), gamma, atol=1e-9)


def test_10_trivial_cap(tiling_n1):
    plain = contract_network(tiling_n1, BulkInput(p=3, bulk=[0.6]))
    capped = contract_network(tiling_n1, BulkInput(p=3, k=1, bulk=[0.6], cap=[1.0]))
    assert np.allclose(plain.covariance, capped.covariance, atol=1e-10)


def test_11_high_bond_dimension(tiling_n1):
    state = build_high_chi(tiling_n1, 2, [0.2, 0.1, -0.1, 0.15], [0.5, 0.3])
    assert state.n_sites == tiling_n1.boundary_size
    assert is_pure(state.covariance)


def test_12_target_hamiltonian():
    assert np.allclose(target_hamiltonian("zero", 4), 0.0)
    assert target_hamiltonian("ising", 4)[0, 1] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        target_hamiltonian("heisenberg", 4)


def test_13_zero_target_is_degenerate(tiling_n1):
    point = find_critical_point(tiling_n1, "zero")
    assert point.degenerate
    assert np.isnan(point.fidelity)


def test_14_critical_point_is_variational(tiling_n1):
    point = find_critical_point(tiling_n1, "ising")
    low, high = (0.0, 0.99)
    assert low < point.params[0] < high
    assert point.energy >= point.ground_energy - 1e-9
    state = contract_network(tiling_n1, BulkInput(p=3, bulk=point.params))
    assert energy(target_hamiltonian("ising", tiling_n1.boundary_size), state.covariance) == pytest.approx(point.energy, abs=1e-9)
    assert 0.0 < point.fidelity <= 1.0 + 1e-9


def test_15_high_chi_threads_agree():
    tiling = build_tiling(3, 7, 0)
    serial = optimize_high_chi(tiling, 2, restarts=2, seed=5, threads=1)
    threaded = optimize_high_chi(tiling, 2, restarts=2, seed=5, threads=2)
    assert np.allclose(serial.params, threaded.params)
    assert serial.energy == pytest.approx(threaded.energy)
    assert serial.evaluations == threaded.evaluations
    assert serial.energy >= serial.ground_energy - 1e-9
