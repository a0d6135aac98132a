import pytest
import numpy as np

from src.exceptions import DimensionError, GeometryError, SymmetryError
from src.excite import *
from src.gaussian import block_diagonalize, excited_covariance, ising_covariance, ising_hamiltonian, twisted_shift
from src.network import BulkInput, contract_network
from src.tiling import build_tiling

label_cases = {
    "E0": {"label": "E0", "modes": 4, "expected": [1, 1, 1, 1]},
    "E1": {"label": "E1", "modes": 6, "expected": [-1, -1, 1, 1, 1, 1]},
    "E3": {"label": "E3", "modes": 6, "expected": [-1, -1, -1, -1, 1, 1]},
    "E5": {"label": "E5", "modes": 6, "expected": [-1, -1, 1, 1, -1, -1]},
}

readout_cases = {
    "ground": {"occupation": [1, 1, 1, 1, 1, 1], "label": "E0"},
    "E1": {"occupation": [-1, -1, 1, 1, 1, 1], "label": "E1"},
    "E2": {"occupation": [1, 1, -1, -1, 1, 1], "label": "E2"},
    "single": {"occupation": [-1, 1, 1, 1, 1, 1], "label": "modes[1]"},
    "mixed": {"occupation": [1, 1, -1, 1, 1, -1], "label": "modes[3,6]"},
}


@pytest.fixture
def ising_basis():
    return block_diagonalize(ising_hamiltonian(6))


@pytest.fixture
def tiling_n1():
    return build_tiling(3, 7, 1)


@pytest.fixture
def bulk():
    return BulkInput(p=3, bulk=[0.6])


@pytest.mark.parametrize("id, setting", label_cases.items())
def test_01_occupation_from_label(id, setting):
    assert occupation_from_label(setting["label"], setting["modes"]).tolist() == setting["expected"]


def test_02_occupation_label_errors():
    with pytest.raises(ValueError):
        occupation_from_label("X1", 4)
    with pytest.raises(DimensionError):
        occupation_from_label("E4", 4)


@pytest.mark.parametrize("id, setting", readout_cases.items())
def test_03_occupations(id, setting, ising_basis):
    gamma = excited_covariance(ising_basis, setting["occupation"])
    readout = occupations(gamma, ising_basis)
    assert np.allclose(readout.e, setting["occupation"], atol=1e-10)
    assert readout.leakage == pytest.approx(0.0, abs=1e-10)
    assert readout.label == setting["label"]


def test_04_perturbed_state_has_no_label(ising_basis):
    gamma = 0.8 * excited_covariance(ising_basis, np.ones(6, dtype=int))
    assert occupations(gamma, ising_basis).label is None


def test_05_readout_basis_of_uniform_state():
    gamma = ising_covariance(6)
    basis = readout_basis(gamma, np.ones(12))
    readout = occupations(gamma, basis)
    assert np.allclose(readout.e, 1.0, atol=1e-9)
    assert readout.label == "E0"
    with pytest.raises(DimensionError):
        readout_basis(gamma, np.ones(10))


def test_06_defect_spec(tiling_n1, bulk):
    spec = DefectSpec({0: -1.2, 3: 0.1}, "D3")
    assert DefectSpec.from_json(spec.to_json()) == spec
    spec.validate(tiling_n1)
    applied = spec.apply(bulk)
    assert applied.tile_matrix(0)[0, 1] == pytest.approx(-1.2)
    assert applied.tile_matrix(3)[0, 1] == pytest.approx(0.1)
    assert applied.tile_matrix(1)[0, 1] == pytest.approx(0.6)
    with pytest.raises(GeometryError):
        DefectSpec({99: 0.0}).validate(tiling_n1)


def test_07_parameter_grid():
    assert parameter_grid([-1.0, 1.0, 0.5]).tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert len(parameter_grid([-5.0, 2.0, 0.01])) == 701


def test_08_d3_orbits(tiling_n1):
    assert sorted(len(orbit) for orbit in d3_orbits(tiling_n1, 1)) == [1, 3, 6, 6]
    with pytest.raises(SymmetryError):
        d3_orbits(build_tiling(4, 5, 1))


def test_09_symmetric_defects_keep_rotation_symmetry(bulk):
    tiling = build_tiling(3, 7, 2)
    orbits = d3_orbits(tiling, 1)
    values = [-0.8, 0.3, 0.5, 0.7]
    spec = DefectSpec({t: value for orbit, value in zip(orbits, values) for t in orbit}, "D3")
    gamma = contract_network(tiling, spec.apply(bulk)).covariance
    assert np.allclose(twisted_shift(gamma, 2 * tiling.boundary_size // 3), gamma, atol=1e-9)


def test_10_background_disorder(bulk):
    tiling = build_tiling(3, 7, 2)
    state = contract_network(tiling, bulk)
    g = background_disorder(state.covariance)
    assert g.size == 2 * tiling.boundary_size
    assert np.all(g > 0)
    assert g.mean() == pytest.approx(1.0)


def test_11_sweep_central(tiling_n1, bulk):
    basis = block_diagonalize(ising_hamiltonian(tiling_n1.boundary_size))
    sweep = sweep_central(tiling_n1, bulk, basis, [-0.5, 0.0, 0.6], threads=2)
    assert sweep.table["a0"].tolist() == [-0.5, 0.0, 0.6]
    assert {"e1", "e2", "e3", "e4", "leakage", "label"} <= set(sweep.table.columns)
    assert {"ground", "flip", "bell"} <= set(sweep.landmarks)
    assert sweep.landmarks["ground"] in (-0.5, 0.0, 0.6)


def test_12_sweep_ring(tiling_n1, bulk):
    basis = block_diagonalize(ising_hamiltonian(tiling_n1.boundary_size))
    sweep = sweep_ring(tiling_n1, bulk, basis, [0.0, 0.6], [0.0, 0.6])
    assert sweep.best_a1 in (0.0, 0.6)
    assert len(sweep.table) == 2
    assert len(sweep.central.table) == 2


def test_13_eigenstate_search(tiling_n1, bulk):
    basis = block_diagonalize(ising_hamiltonian(tiling_n1.boundary_size))
    fit = optimize_bulk_for_eigenstate(tiling_n1, bulk, basis, target="E1", layers=1)
    assert fit.defects.symmetry == "D3"
    assert len(fit.orbits) == 4
    assert sorted(fit.defects.overrides) == list(range(len(tiling_n1.tiles)))
    assert 0.0 <= fit.fidelity <= 1.0 + 1e-9
    assert fit.distance >= 0.0
    assert fit.evaluations > 0
