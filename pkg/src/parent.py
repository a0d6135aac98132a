"""
This module reconstructs free-fermion parent Hamiltonians of boundary states.
- MDIHamiltonian: nearest-neighbour chain with couplings J_j = 1 / (g_j g_{j+1}) from a disorder vector
- spectrum_comparison: MDI, Ising and continuum single-particle spectra side by side
- classify_parents: mode basis and sign pattern of the parents of a pure state, with the
  nearest-neighbour feasibility flags
- linear_feasibility: linear program for a nearest-neighbour parent in a fixed mode basis
- fit_nearest_neighbor: couplings whose ground state has maximal fidelity with a target

A Hamiltonian M has the pure state Gamma as its ground state iff [M, Gamma] = 0 and
Gamma M is positive semidefinite.

Dependencies:
- gaussian.py, disorder.py
- run_config.py: parent tolerances
- numpy, scipy (sparse, linalg.eigh, optimize.linprog/minimize), pandas
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
import logging

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.optimize import linprog, minimize

from src.disorder import DisorderVector
from src.exceptions import DimensionError, FitError, PurityError
from src.gaussian import (ModeBasis, block_diagonalize, ising_spectrum, is_pure,
                          nearest_neighbor_hamiltonian, purify, state_fidelity)
from src.run_config import settings


# =============================================================================
# Modulated disorder Ising chain
# =============================================================================
@dataclass
class MDIHamiltonian:
    """
    :param g: disorder vector with mean 1
    :param matrix: M with M_{j,j+1} = 1 / (2 g_j g_{j+1}) and the antiperiodic wrap

    Example Usage:
    mdi = mdi_hamiltonian(np.ones(8))
    np.allclose(mdi.matrix, ising_hamiltonian(4))  # True
    """
    g: np.ndarray
    matrix: np.ndarray

    @property
    def couplings(self) -> np.ndarray:
        return 1.0 / (self.g * np.roll(self.g, -1))

    @property
    def n_sites(self) -> int:
        return self.g.size // 2

    def spectrum(self) -> np.ndarray:
        return block_diagonalize(self.matrix).energies


def mdi_hamiltonian(g) -> MDIHamiltonian:
    values = DisorderVector(g).values
    if values.size % 2:
        raise DimensionError(f"Disorder vector of odd length {values.size}")
    return MDIHamiltonian(values, nearest_neighbor_hamiltonian(1.0 / (values * np.roll(values, -1))))


def mdi_continuum_spectrum(g, count: Optional[int] = None) -> np.ndarray:
    """
    Low-energy levels (2k - 1) pi / sum_j g_j^2 of the continuum chain with stretched length.
    """
    values = DisorderVector(g).values
    count = values.size // 2 if count is None else count
    k = np.arange(1, count + 1)
    return (2 * k - 1) * np.pi / np.sum(values ** 2)


@dataclass
class SpectrumComparison:
    table: pd.DataFrame
    summary: Dict


def spectrum_comparison(g_by_size: Dict[int, Sequence[float]]) -> SpectrumComparison:
    """
    One row per (N, k) with the MDI, Ising and continuum levels and their 2N-rescaled values.
    The summary holds, per N, the relative deviation of the lowest levels from Ising and the
    top MDI level, plus the exponent of the MDI gap against N when several sizes are given.
    """
    fraction = settings().parent["low_mode_fraction"]
    frames, per_size = [], {}
    for n_sites, g in sorted(g_by_size.items()):
        values = np.asarray(g, dtype=float)
        if values.size != 2 * n_sites:
            raise DimensionError(f"Disorder vector of length {values.size} for N={n_sites}")
        mdi = mdi_hamiltonian(values).spectrum()
        ising = ising_spectrum(n_sites)
        continuum = mdi_continuum_spectrum(values, n_sites)
        frames.append(pd.DataFrame({
            "n_sites": n_sites,
            "k": np.arange(1, n_sites + 1),
            "mdi": mdi,
            "ising": ising,
            "continuum": continuum,
            "mdi_rescaled": 2 * n_sites * mdi,
            "ising_rescaled": 2 * n_sites * ising,
            "continuum_rescaled": 2 * n_sites * continuum,
        }))
        low = max(1, int(np.ceil(fraction * n_sites)))
        per_size[n_sites] = {
            "low_mode_deviation": float(np.max(np.abs(mdi[:low] - ising[:low]) / ising[:low])),
            "top_level": float(mdi[-1]),
            "gap": float(mdi[0]),
        }
    summary: Dict = {"sizes": per_size}
    if len(per_size) >= 2:
        sizes = np.array(sorted(per_size))
        gaps = np.array([per_size[n]["gap"] for n in sizes])
        slope, _ = np.polyfit(np.log(sizes), np.log(gaps), 1)
        summary["gap_exponent"] = float(-slope)
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    return SpectrumComparison(table, summary)


# =============================================================================
# Parent classification
# =============================================================================
def _commutator_gram(gamma: np.ndarray) -> np.ndarray:
    """
    Gram matrix of the linear map J -> [M(J), Gamma] over the 2N nearest-neighbour couplings.
    Column k is supported on two rows and two columns of the commutator.
    """
    size = gamma.shape[0]
    index = np.arange(size)
    flat, cols, data = [], [], []
    for k in range(size):
        a, b, s = (k, k + 1, 0.5) if k < size - 1 else (size - 1, 0, -0.5)
        # rows of M Gamma, then columns of -Gamma M
        flat += [a * size + index, b * size + index, index * size + b, index * size + a]
        data += [s * gamma[b, :], -s * gamma[a, :], -s * gamma[:, a], s * gamma[:, b]]
        cols += [np.full(4 * size, k)]
    operator = sp.coo_matrix((np.concatenate(data), (np.concatenate(flat), np.concatenate(cols))),
                             shape=(size * size, size)).tocsc()
    return (operator.T @ operator).toarray()


def _commuting_couplings(gamma: np.ndarray):
    """
    Couplings J with [M(J), Gamma] closest to zero, oriented so that Gamma M has a nonnegative
    trace. A null space with several directions is represented by the projection of the uniform
    chain onto it.
    """
    values, vectors = eigh(_commutator_gram(gamma))
    singular = np.sqrt(np.clip(values, 0.0, None))
    null_dimension = int(np.sum(singular <= settings().parent["null_tolerance"] * max(singular[-1], 1.0)))
    vector = vectors[:, 0]
    if null_dimension > 1:
        null = vectors[:, :null_dimension]
        projected = null @ (null.T @ np.ones(null.shape[0]))
        norm = np.linalg.norm(projected)
        if norm > 1e-3 * np.sqrt(null.shape[0]):
            vector = projected / norm
    if np.trace(gamma @ nearest_neighbor_hamiltonian(vector)) < 0:
        vector = -vector
    return vector, null_dimension, singular


def commutant_projection(matrix: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    return (matrix - gamma @ matrix @ gamma) / 2


def _nearest_neighbor_couplings(matrix: np.ndarray) -> np.ndarray:
    size = matrix.shape[0]
    couplings = 2 * matrix[np.arange(size - 1), np.arange(1, size)]
    return np.append(couplings, 2 * matrix[0, size - 1])


@dataclass
class LinearFeasibility:
    feasible: bool
    energies: Optional[np.ndarray]
    couplings: Optional[np.ndarray]
    message: str


@dataclass
class ParentClassification:
    """
    :param basis: mode basis of the commutant-projected least-squares parent
    :param signs: a_k = +1 where the state is empty in mode k, -1 where it is occupied
    :param least_squares: 2N unit-norm couplings minimizing |[M(J), Gamma]|, sign fixed so that
        Gamma M has a nonnegative trace; the member closest to uniform when the null space has
        several directions
    :param null_dimension: number of independent commuting nearest-neighbour chains; the critical
        Ising state has three (uniform, cos and sin of pi j / N)
    :param singular_values: lowest singular values of J -> [M(J), Gamma]
    """
    basis: ModeBasis
    signs: np.ndarray
    least_squares: np.ndarray
    null_dimension: int
    singular_values: np.ndarray
    nearest_neighbor: bool
    unique: bool
    ground: bool
    feasibility: Optional[LinearFeasibility] = None

    @property
    def couplings(self) -> Optional[np.ndarray]:
        return self.least_squares if self.nearest_neighbor else None


def classify_parents(gamma, feasibility: bool = True) -> ParentClassification:
    """
    Example Usage:
    result = classify_parents(ising_covariance(8))
    result.ground, result.null_dimension  # True, 3
    """
    gamma = np.asarray(getattr(gamma, "matrix", gamma), dtype=float)
    if not is_pure(gamma):
        raise PurityError("Parent Hamiltonians are only defined for pure covariances")
    config = settings().parent

    vector, null_dimension, singular = _commuting_couplings(gamma)
    matrix = nearest_neighbor_hamiltonian(vector)

    basis = block_diagonalize(commutant_projection(matrix, gamma))
    rotated = basis.rotate(gamma)
    index = np.arange(basis.n_modes)
    signs = np.where(-rotated[2 * index, 2 * index + 1] >= 0, 1, -1)
    positive = (gamma @ matrix + (gamma @ matrix).T) / 2
    ground = bool(np.linalg.eigvalsh(positive).min() >= -config["null_tolerance"] * max(1.0, np.abs(positive).max()))
    logging.info(f"Parent classification: null dimension {null_dimension}, "
                 f"smallest singular value {singular[0]:.3e}, {int(np.sum(signs < 0))} occupied modes")

    result = ParentClassification(basis, signs, vector, null_dimension, singular[:4],
                                  null_dimension >= 1, null_dimension == 1, ground)
    if feasibility:
        if basis.n_modes <= config["lp_max_modes"]:
            result.feasibility = linear_feasibility(basis, signs)
        else:
            logging.warning(f"Skipping the linear program for {basis.n_modes} modes")
    return result


def linear_feasibility(basis: ModeBasis, signs: Sequence[int], margin: Optional[float] = None) -> LinearFeasibility:
    """
    Searches lambda with a_k lambda_k >= margin such that O^T Mt(lambda) O vanishes outside the
    nearest-neighbour ring, up to the configured residual.
    """
    config = settings().parent
    margin = config["lp_margin"] if margin is None else margin
    signs = np.asarray(signs, dtype=float)
    if signs.size != basis.n_modes:
        raise DimensionError(f"{signs.size} signs for {basis.n_modes} modes")
    size = 2 * basis.n_modes
    rows, cols = np.triu_indices(size, k=1)
    keep = ~((cols == rows + 1) | ((rows == 0) & (cols == size - 1)))
    rows, cols = rows[keep], cols[keep]
    first, second = basis.orthogonal[0::2], basis.orthogonal[1::2]
    entries = (first[:, rows] * second[:, cols] - second[:, rows] * first[:, cols]).T

    residual = config["lp_residual"] * basis.n_modes
    bounds = [(margin, None) if a > 0 else (None, -margin) for a in signs]
    try:
        result = linprog(c=signs, A_ub=np.vstack([entries, -entries]),
                         b_ub=np.full(2 * entries.shape[0], residual), bounds=bounds, method="highs")
    except Exception as e:
        logging.error(f"Failed to solve the parent feasibility program: {e}")
        raise
    if result.status != 0:
        return LinearFeasibility(False, None, None, result.message)
    energies = np.asarray(result.x)
    matrix = basis.orthogonal.T @ basis.block_matrix(energies) @ basis.orthogonal
    return LinearFeasibility(True, energies, _nearest_neighbor_couplings(matrix), result.message)


# =============================================================================
# Nearest-neighbour fit
# =============================================================================
@dataclass
class ParentFitResult:
    """
    :param restart_spread: largest deviation between the couplings of restarts that reach the
        best fidelity; small values mean the optimum is unique
    """
    couplings: np.ndarray
    fidelity: float
    converged: bool
    start_fidelity: float
    iterations: int
    restart_spread: float = 0.0
    unique: bool = True
    trace: List[float] = field(default_factory=list)


def _ground_from_couplings(couplings: np.ndarray) -> np.ndarray:
    return purify(-nearest_neighbor_hamiltonian(couplings))


def _canonical_couplings(couplings: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """
    Couplings with mean 1. Chains sharing the ground state of the input form a cone in the
    commuting null space; its member closest to uniform replaces the input when it keeps the
    fidelity with the target.
    """
    couplings = couplings / couplings.mean()
    try:
        ground = _ground_from_couplings(couplings)
        vector, null_dimension, _ = _commuting_couplings(ground)
    except (PurityError, ArithmeticError):
        return couplings
    if null_dimension < 2 or np.any(vector <= 0):
        return couplings
    candidate = vector / vector.mean()
    reference = state_fidelity(ground, gamma)
    if state_fidelity(_ground_from_couplings(candidate), gamma) >= reference - 1e-9:
        return candidate
    return couplings


def fit_nearest_neighbor(gamma, seed: int = 0, restarts: Optional[int] = None) -> ParentFitResult:
    """
    Maximizes the fidelity between the target and the ground state of a nearest-neighbour chain
    over log-couplings, starting from the least-squares commuting couplings and from perturbed
    copies of them. Every optimum is reduced to its representative closest to uniform and
    returned with mean 1.
    """
    gamma = np.asarray(getattr(gamma, "matrix", gamma), dtype=float)
    config = settings().parent
    restarts = config["fit_restarts"] if restarts is None else restarts
    rng = np.random.default_rng(seed)
    start = classify_parents(gamma, feasibility=False).least_squares
    start = start / np.abs(start).mean()
    if np.any(start <= 0):
        bad = start <= 0
        logging.warning(f"{int(bad.sum())} least-squares couplings are not positive; restarting them near 1")
        start[bad] = 1.0 + 0.1 * rng.standard_normal(int(bad.sum())) ** 2
    trace: List[float] = []

    def objective(x):
        try:
            value = state_fidelity(_ground_from_couplings(np.exp(x)), gamma)
        except (PurityError, ArithmeticError):
            value = 0.0
        trace.append(value)
        return -value

    x0 = np.log(start)
    start_fidelity = -objective(x0)
    starts = [x0] + [x0 + config["restart_scale"] * rng.standard_normal(x0.size) for _ in range(restarts)]
    optima, iterations = [], 0
    for x_start in starts:
        try:
            result = minimize(objective, x0=x_start, method="L-BFGS-B", options={"maxiter": config["maxiter"]})
        except Exception as e:
            logging.error(f"Failed to fit nearest-neighbour couplings: {e}")
            raise FitError(f"Nearest-neighbour fit failed: {e}")
        iterations += int(result.nit)
        x = result.x if -result.fun >= -objective(x_start) else x_start
        couplings = _canonical_couplings(np.exp(x), gamma)
        optima.append((state_fidelity(_ground_from_couplings(couplings), gamma), couplings))

    best = max(value for value, _ in optima)
    close = [other for value, other in optima if value >= best - config["restart_tolerance"]]
    fidelity, couplings = next(item for item in optima if item[0] >= best - config["restart_tolerance"])
    spread = float(max(np.abs(other - couplings).max() for other in close))
    unique = spread <= config["restart_spread"]
    converged = fidelity >= config["fidelity_threshold"]
    if not converged:
        logging.warning(f"No nearest-neighbour parent: fidelity plateaus at {fidelity:.6f}")
    if not unique:
        logging.warning(f"Restarts reach fidelity {fidelity:.6f} with couplings differing by {spread:.3e}")
    return ParentFitResult(couplings, fidelity, converged, start_fidelity, iterations, spread, unique, trace)
