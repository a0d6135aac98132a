"""
This module contains the free-fermion linear algebra shared by the analysis modules.
- QuadraticHamiltonian: H = i sum_jk M_jk gamma_j gamma_k with real antisymmetric M
- ModeBasis: orthogonal O and ascending mode energies with M = O^T Mt O
- Ising chain, ground/excited covariances, energies, fidelities and covariance helpers

Mt has 2x2 blocks Mt_{2k,2k+1} = lambda_k >= 0. The ground covariance has blocks -1 at
(2k, 2k+1) in the same basis, and an occupation pattern a_k = +1/-1 (empty/occupied) flips
the sign of block k.

Dependencies:
- run_config.py: tolerances
- numpy, scipy.linalg
"""

from dataclasses import dataclass
from typing import Optional, Sequence
import logging

import numpy as np
import scipy.linalg as sla

from src.exceptions import (ConditioningError, DegenerateGroundStateError, DimensionError,
                            PurityError)
from src.run_config import settings
from src.utils import DataUtilities


def _as_matrix(value) -> np.ndarray:
    return np.asarray(getattr(value, "matrix", value), dtype=float)


@dataclass
class QuadraticHamiltonian:
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
            raise DimensionError(f"Hamiltonian matrix must be square with even size, got {matrix.shape}")
        if np.abs(matrix + matrix.T).max(initial=0.0) > settings().tolerances["antisymmetry"] * max(1.0, np.abs(matrix).max(initial=0.0)):
            raise ValueError("Hamiltonian matrix is not antisymmetric")
        self.matrix = DataUtilities.antisymmetrize(matrix)

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2


# =============================================================================
# Ising chain and nearest-neighbour chains
# =============================================================================
def nearest_neighbor_hamiltonian(couplings: Sequence[float]) -> np.ndarray:
    """
    M_{k,k+1} = J_k / 2 for the 2N couplings, with the antiperiodic wrap M_{2N-1,0} = -J_{2N-1}/2.
    """
    couplings = np.asarray(couplings, dtype=float)
    size = couplings.size
    if size < 2 or size % 2:
        raise DimensionError(f"A chain of Majoranas needs an even number of couplings, got {size}")
    matrix = np.zeros((size, size))
    for k in range(size - 1):
        matrix[k, k + 1] += couplings[k] / 2
        matrix[k + 1, k] -= couplings[k] / 2
    matrix[size - 1, 0] -= couplings[-1] / 2
    matrix[0, size - 1] += couplings[-1] / 2
    return matrix


def ising_hamiltonian(n_sites: int) -> np.ndarray:
    return nearest_neighbor_hamiltonian(np.ones(2 * n_sites))


def ising_spectrum(n_sites: int) -> np.ndarray:
    m = np.arange(n_sites)
    return np.sort(np.sin((2 * m + 1) * np.pi / (2 * n_sites)))


def ising_covariance(n_sites: int) -> np.ndarray:
    """
    Gamma_jk = 1 / (N sin(pi (j - k) / 2N)) for odd j - k, 0 otherwise.
    """
    index = np.arange(2 * n_sites)
    separation = index[:, None] - index[None, :]
    gamma = np.zeros((2 * n_sites, 2 * n_sites))
    odd = separation % 2 == 1
    gamma[odd] = 1.0 / (n_sites * np.sin(np.pi * separation[odd] / (2 * n_sites)))
    return gamma


# =============================================================================
# Mode basis
# =============================================================================
@dataclass
class ModeBasis:
    """
    :param orthogonal: O with rows (2k, 2k+1) spanning mode k
    :param energies: lambda_k, ascending

    Example Usage:
    basis = block_diagonalize(ising_hamiltonian(8))
    basis.energies[0]  # sin(pi / 16)
    """
    orthogonal: np.ndarray
    energies: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.energies.size

    def block_matrix(self, values: Sequence[float]) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        matrix = np.zeros((2 * values.size, 2 * values.size))
        index = np.arange(values.size)
        matrix[2 * index, 2 * index + 1] = values
        matrix[2 * index + 1, 2 * index] = -values
        return matrix

    def reconstruct(self) -> np.ndarray:
        return self.orthogonal.T @ self.block_matrix(self.energies) @ self.orthogonal

    def rotate(self, gamma) -> np.ndarray:
        """
        O Gamma O^T: the covariance expressed in the mode basis.
        """
        gamma = _as_matrix(gamma)
        if gamma.shape != self.orthogonal.shape:
            raise DimensionError(f"Covariance of shape {gamma.shape} does not match a {self.n_modes}-mode basis")
        return self.orthogonal @ gamma @ self.orthogonal.T


def _canonical_cluster(columns: np.ndarray, tol: float) -> np.ndarray:
    """
    Rebuilds the complex vectors w = o1 + i o2 of a degenerate cluster from projected unit vectors.
    columns holds the pairs (o1, o2) side by side.
    """
    size, width = columns.shape
    modes = width // 2
    w = (columns[:, 0::2] + 1j * columns[:, 1::2]) / np.sqrt(2)
    projector = w @ w.conj().T
    basis = []
    for unit in range(size):
        candidate = projector[:, unit].copy()
        for vector in basis:
            candidate = candidate - vector * np.vdot(vector, candidate)
        norm = np.linalg.norm(candidate)
        if norm > tol:
            basis.append(candidate / norm)
        if len(basis) == modes:
            break
    rebuilt = np.zeros_like(columns)
    for k, vector in enumerate(basis):
        rebuilt[:, 2 * k] = np.sqrt(2) * vector.real
        rebuilt[:, 2 * k + 1] = np.sqrt(2) * vector.imag
    return rebuilt


def block_diagonalize(hamiltonian) -> ModeBasis:
    """
    Real Schur decomposition of the antisymmetric M into 2x2 blocks with lambda_k >= 0.
    Degenerate clusters get a canonical basis by Gram-Schmidt of projected unit vectors.
    With all lambda_k > 0, det O equals the sign of Pf(M).
    """
    matrix = QuadraticHamiltonian(_as_matrix(hamiltonian)).matrix
    size = matrix.shape[0]
    tolerances = settings().tolerances
    try:
        T, Z = sla.schur(matrix, output="real")
    except Exception as e:
        logging.error(f"Failed to block-diagonalize Hamiltonian: {e}")
        raise

    scale = max(1.0, np.abs(matrix).max(initial=0.0))
    pairs, zeros = [], []
    i = 0
    while i < size:
        if i + 1 < size and abs(T[i + 1, i]) > tolerances["zero_eigenvalue"] * scale:
            first, second = Z[:, i].copy(), Z[:, i + 1].copy()
            value = (T[i, i + 1] - T[i + 1, i]) / 2
            if value < 0:
                first, second, value = second, first, -value
            pairs.append((value, first, second))
            i += 2
        else:
            zeros.append(Z[:, i].copy())
            i += 1
    for j in range(0, len(zeros) - 1, 2):
        pairs.append((0.0, zeros[j], zeros[j + 1]))

    pairs.sort(key=lambda item: item[0])
    energies = np.array([item[0] for item in pairs])
    columns = np.zeros((size, size))
    for k, (_, first, second) in enumerate(pairs):
        columns[:, 2 * k] = first
        columns[:, 2 * k + 1] = second

    # Canonical basis inside every degenerate cluster with lambda > 0
    threshold = tolerances["degenerate_eigenvalue"]
    start = 0
    while start < energies.size:
        stop = start + 1
        while stop < energies.size and abs(energies[stop] - energies[start]) <= threshold * max(1.0, energies[start]):
            stop += 1
        if stop - start > 1 and energies[start] > threshold:
            columns[:, 2 * start:2 * stop] = _canonical_cluster(columns[:, 2 * start:2 * stop], threshold)
            energies[start:stop] = energies[start:stop].mean()
        start = stop
    return ModeBasis(orthogonal=columns.T, energies=energies)


# =============================================================================
# Covariances and energies
# =============================================================================
def excited_covariance(basis: ModeBasis, occupation: Sequence[int]) -> np.ndarray:
    occupation = np.asarray(occupation, dtype=float)
    if occupation.size != basis.n_modes:
        raise DimensionError(f"Occupation pattern of length {occupation.size} for {basis.n_modes} modes")
    if not np.all(np.isin(occupation, (-1.0, 1.0))):
        raise ValueError("Occupation signs must be +1 (empty) or -1 (occupied)")
    blocks = basis.block_matrix(-occupation)
    return basis.orthogonal.T @ blocks @ basis.orthogonal


def ground_covariance(basis: ModeBasis) -> np.ndarray:
    if basis.n_modes and basis.energies.min() < settings().tolerances["zero_eigenvalue"]:
        raise DegenerateGroundStateError(f"Zero mode energy {basis.energies.min():.3e}: ground state is not unique")
    return excited_covariance(basis, np.ones(basis.n_modes))


def ground_energy(basis: ModeBasis) -> float:
    return -float(np.sum(basis.energies))


def energy(hamiltonian, gamma) -> float:
    matrix, gamma = _as_matrix(hamiltonian), _as_matrix(gamma)
    if matrix.shape != gamma.shape:
        raise DimensionError(f"Hamiltonian {matrix.shape} and covariance {gamma.shape} differ in size")
    return 0.5 * float(np.sum(matrix * gamma))


def state_fidelity(gamma_1, gamma_2) -> float:
    """
    F = det((Gamma_1 + Gamma_2) / 2)^(1/2) for pure Gaussian states.
    """
    gamma_1, gamma_2 = _as_matrix(gamma_1), _as_matrix(gamma_2)
    if gamma_1.shape != gamma_2.shape:
        raise DimensionError(f"Covariances of shapes {gamma_1.shape} and {gamma_2.shape} differ")
    determinant = np.linalg.det((gamma_1 + gamma_2) / 2)
    if determinant < -settings().tolerances["negative_determinant"]:
        raise ConditioningError(f"Negative overlap determinant {determinant:.3e}")
    return float(np.sqrt(max(determinant, 0.0)))


def is_pure(gamma, tol: Optional[float] = None) -> bool:
    gamma = _as_matrix(gamma)
    tol = settings().tolerances["purity"] if tol is None else tol
    return bool(np.abs(gamma.T @ gamma - np.eye(gamma.shape[0])).max(initial=0.0) <= tol)


def purify(gamma) -> np.ndarray:
    """
    Nearest pure covariance: Gamma (Gamma^T Gamma)^(-1/2) through an eigendecomposition.
    """
    gamma = DataUtilities.antisymmetrize(_as_matrix(gamma))
    values, vectors = np.linalg.eigh(gamma.T @ gamma)
    if values.min(initial=1.0) <= settings().tolerances["zero_eigenvalue"]:
        raise PurityError("Covariance has a vanishing singular value and cannot be purified")
    polar = gamma @ (vectors / np.sqrt(values)) @ vectors.T
    return DataUtilities.antisymmetrize(polar)


def random_pure_covariance(n_modes: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.normal(size=(2 * n_modes, 2 * n_modes))
    return ground_covariance(block_diagonalize(DataUtilities.antisymmetrize(raw)))


def twisted_shift(gamma, shift: int) -> np.ndarray:
    """
    Translation by `shift` Majoranas; indices that wrap around pick up a sign.
    """
    gamma = _as_matrix(gamma)
    size = gamma.shape[0]
    index = np.arange(size) + shift
    signs = np.where((index // size) % 2 == 0, 1.0, -1.0)
    index %= size
    return gamma[np.ix_(index, index)] * np.outer(signs, signs)
