"""
This module implements the matchgate tensor algebra used by the network engine.
- GeneratingMatrix: real antisymmetric matrix A with a log-normalization
- MatchgateTensor: generating matrix plus ordered leg labels
- CovarianceMatrix: Majorana covariance of a pure Gaussian state

A tensor with L legs has the amplitudes T(S) = c * Pf(A[S]) for every even occupied set S,
where |S> = f+_{s1} ... f+_{sm} |0> with s1 < ... < sm. Contracting legs sums over equal
occupations with the planar sign, which in generating-matrix form is the Schur complement of
B = A + J on the contracted legs.

A dense Fock-space oracle (Jordan-Wigner, scipy.sparse) is kept next to the algebra for
validation on small tensors; it refuses more than the configured number of modes.

Dependencies:
- run_config.py: tolerances and oracle size
- numpy, scipy (linalg, sparse), pfapack
"""

from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple
import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from pfapack import pfaffian as pfa

from src.exceptions import (ConditioningError, ContractionSingularityError, LegStateError,
                            OracleSizeError)
from src.run_config import settings
from src.utils import DataUtilities, JsonReader, JsonWriter


def pfaffian(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape[0] == 0:
        return 1.0
    if matrix.shape[0] % 2:
        return 0.0
    return float(pfa.pfaffian(DataUtilities.antisymmetrize(matrix)))


# =============================================================================
# Generating matrices and tensors
# =============================================================================
@dataclass
class GeneratingMatrix:
    """
    Real antisymmetric generating matrix with the log-magnitude of its normalization.
    Deviations from antisymmetry up to the configured tolerance are removed; larger ones raise.
    :param matrix: square real matrix
    :param log_norm: log |c| of the amplitude prefactor

    Example Usage:
    gen = GeneratingMatrix(np.array([[0.0, 0.5], [-0.5, 0.0]]))
    gen.amplitude([0, 1])  # 0.5
    """
    matrix: np.ndarray
    log_norm: float = 0.0

    def __post_init__(self):
        matrix = np.asarray(self.matrix)
        if np.iscomplexobj(matrix):
            if np.any(np.abs(matrix.imag) > 0):
                raise TypeError("Complex generating matrices are not supported")
            matrix = matrix.real
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float)) if matrix.size else np.zeros((0, 0))
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Generating matrix must be square, got shape {matrix.shape}")
        tol = settings().tolerances["antisymmetry"]
        scale = max(1.0, float(np.abs(matrix).max())) if matrix.size else 1.0
        if matrix.size and np.abs(matrix + matrix.T).max() > tol * scale:
            raise ValueError("Generating matrix is not antisymmetric")
        self.matrix = DataUtilities.antisymmetrize(matrix)
        self.log_norm = float(self.log_norm)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def amplitude(self, occupied: Sequence[int]) -> float:
        occupied = sorted(occupied)
        return float(np.exp(self.log_norm)) * pfaffian(self.matrix[np.ix_(occupied, occupied)])

    def to_json(self) -> Dict:
        return {"schema": "generating-v1", "matrix": self.matrix.tolist(), "log_norm": self.log_norm}

    @classmethod
    def from_json(cls, payload: Dict) -> "GeneratingMatrix":
        return cls(np.array(payload["matrix"], dtype=float), payload.get("log_norm", 0.0))


def save_generating(gen: GeneratingMatrix, output_filepath: str):
    JsonWriter(output_filepath).write(gen.to_json())


def load_generating(filepath: str) -> GeneratingMatrix:
    reader = JsonReader(filepath)
    return GeneratingMatrix(np.array(reader.extract("matrix"), dtype=float), reader.get("log_norm", 0.0))


@dataclass
class MatchgateTensor:
    """
    Generating matrix with ordered leg labels. Contracted legs are removed from the label
    list and remembered, so reusing them raises LegStateError.
    """
    generating: GeneratingMatrix
    labels: Tuple[Hashable, ...] = ()
    closed: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.labels:
            self.labels = tuple(range(self.generating.size))
        self.labels = tuple(self.labels)
        if len(self.labels) != self.generating.size:
            raise LegStateError(f"{len(self.labels)} labels for a {self.generating.size}-leg tensor")
        if len(set(self.labels)) != len(self.labels):
            raise LegStateError("Leg labels must be unique")

    @classmethod
    def from_matrix(cls, matrix, labels: Optional[Sequence[Hashable]] = None, log_norm: float = 0.0) -> "MatchgateTensor":
        return cls(GeneratingMatrix(np.asarray(matrix, dtype=float), log_norm), tuple(labels or ()))

    @property
    def matrix(self) -> np.ndarray:
        return self.generating.matrix

    @property
    def log_norm(self) -> float:
        return self.generating.log_norm

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: Hashable) -> int:
        if label in self.closed:
            raise LegStateError(f"Leg {label!r} is already contracted")
        try:
            return self.labels.index(label)
        except ValueError:
            raise LegStateError(f"Leg {label!r} is not an open leg of this tensor")


def direct_sum(first: MatchgateTensor, second: MatchgateTensor) -> MatchgateTensor:
    n1, n2 = first.size, second.size
    matrix = np.zeros((n1 + n2, n1 + n2))
    matrix[:n1, :n1] = first.matrix
    matrix[n1:, n1:] = second.matrix
    return MatchgateTensor(GeneratingMatrix(matrix, first.log_norm + second.log_norm),
                           first.labels + second.labels, first.closed | second.closed)


# =============================================================================
# Contractions
# =============================================================================
def contract_pairs(tensor: MatchgateTensor, pairs: Iterable[Tuple[Hashable, Hashable]],
                   location: Optional[str] = None) -> MatchgateTensor:
    """
    Contracts several leg pairs at once.
    Each pair (a, b) adds +1 at (earlier, later) of B = A + J; the result is the Schur
    complement A' = B_OO - B_OC B_CC^-1 B_CO and the weight |Pf(B_CC)| enters the log-norm.
    :param tensor: tensor holding every leg of the pairs
    :param pairs: leg label pairs
    :param location: description attached to a singularity error
    """
    pairs = list(pairs)
    positions = []
    for leg_a, leg_b in pairs:
        i, j = tensor.index(leg_a), tensor.index(leg_b)
        if i == j:
            raise LegStateError(f"Cannot contract leg {leg_a!r} with itself")
        positions.append((min(i, j), max(i, j)))
    contracted = [i for pair in positions for i in pair]
    if len(set(contracted)) != len(contracted):
        raise LegStateError("A leg appears in more than one contracted pair")

    B = tensor.matrix.copy()
    for i, j in positions:
        B[i, j] += 1.0
        B[j, i] -= 1.0
    keep = [i for i in range(tensor.size) if i not in set(contracted)]
    B_cc = B[np.ix_(contracted, contracted)]
    smallest = np.linalg.svd(B_cc, compute_uv=False).min()
    if smallest < settings().tolerances["singular_denominator"]:
        logging.error(f"Failed to contract legs {pairs}: vanishing denominator {smallest:.3e}")
        raise ContractionSingularityError(f"Vanishing contraction denominator {smallest:.3e}", location)

    _, logdet = np.linalg.slogdet(B_cc)
    B_oc = B[np.ix_(keep, contracted)]
    B_co = B[np.ix_(contracted, keep)]
    reduced = B[np.ix_(keep, keep)] - B_oc @ sla.solve(B_cc, B_co)
    labels = tuple(tensor.labels[i] for i in keep)
    closed = tensor.closed | {tensor.labels[i] for i in contracted}
    return MatchgateTensor(GeneratingMatrix(DataUtilities.antisymmetrize(reduced), tensor.log_norm + 0.5 * logdet),
                           labels, closed)


def contract_self(tensor: MatchgateTensor, leg_a: Hashable, leg_b: Hashable) -> MatchgateTensor:
    return contract_pairs(tensor, [(leg_a, leg_b)])


def contract_pair(first: MatchgateTensor, second: MatchgateTensor, leg_1: Hashable, leg_2: Hashable) -> MatchgateTensor:
    """
    Glues leg_1 of the first tensor to leg_2 of the second. Legs keep the order
    (first legs, second legs) minus the contracted pair.
    """
    first.index(leg_1)
    second.index(leg_2)
    return contract_self(direct_sum(first, second), leg_1, leg_2)


def rotate_legs(tensor: MatchgateTensor, shift: int) -> MatchgateTensor:
    """
    Bosonic cyclic relabeling: the first `shift` legs move to the end without changing any
    occupation amplitude. Rows and columns of the moved legs change sign.
    """
    size = tensor.size
    if size == 0:
        return tensor
    shift %= size
    if shift == 0:
        return tensor
    order = list(range(shift, size)) + list(range(shift))
    signs = np.ones(size)
    signs[size - shift:] = -1.0
    matrix = tensor.matrix[np.ix_(order, order)] * np.outer(signs, signs)
    return MatchgateTensor(GeneratingMatrix(matrix, tensor.log_norm),
                           tuple(tensor.labels[i] for i in order), tensor.closed)


# =============================================================================
# Covariance matrices
# =============================================================================
@dataclass
class CovarianceMatrix:
    """
    Majorana covariance matrix Gamma_jk = (i/2) <[gamma_j, gamma_k]> of 2N Majoranas.
    """
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
            raise ValueError(f"Covariance matrix must be square with even size, got {matrix.shape}")
        if matrix.size and np.abs(matrix + matrix.T).max() > settings().tolerances["purity"]:
            raise ValueError("Covariance matrix is not antisymmetric")
        self.matrix = DataUtilities.antisymmetrize(matrix)

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    @property
    def purity_error(self) -> float:
        size = self.matrix.shape[0]
        return float(np.abs(self.matrix.T @ self.matrix - np.eye(size)).max()) if size else 0.0

    def is_pure(self, tol: Optional[float] = None) -> bool:
        tol = settings().tolerances["purity"] if tol is None else tol
        return self.purity_error <= tol


def covariance_from_generating(gen) -> CovarianceMatrix:
    """
    Covariance of the normalized state with generating matrix A (K = A^T A):
    Gamma_{2j,2k+1} = [(-1 - 2A + K)(1 + K)^-1]_{jk}, Gamma_{2j+1,2k} = -Gamma_{2k,2j+1},
    and vanishing even-even and odd-odd blocks.
    """
    A = gen.matrix if isinstance(gen, (GeneratingMatrix, MatchgateTensor)) else GeneratingMatrix(gen).matrix
    n = A.shape[0]
    K = A.T @ A
    denominator = np.eye(n) + K
    condition = np.linalg.cond(denominator) if n else 1.0
    if condition > settings().tolerances["conditioning"]:
        logging.error(f"Failed to compute covariance: condition number {condition:.3e}")
        raise ConditioningError(f"(1 + A^T A) is ill-conditioned (condition number {condition:.3e})")
    numerator = -np.eye(n) - 2 * A + K
    # X (1 + K)^-1 with (1 + K) symmetric
    cross = sla.solve(denominator, numerator.T, assume_a="pos").T
    gamma = np.zeros((2 * n, 2 * n))
    gamma[0::2, 1::2] = cross
    gamma[1::2, 0::2] = -cross.T
    return CovarianceMatrix(gamma)


# =============================================================================
# Dense Fock-space oracle
# =============================================================================
def _check_oracle_size(modes: int):
    limit = settings().oracle["max_modes"]
    if modes > limit:
        raise OracleSizeError(f"Dense oracle refuses {modes} modes (limit {limit})")


def creation_operators(modes: int) -> List[sp.csr_matrix]:
    """
    Jordan-Wigner creation operators; mode 0 is the most significant bit and carries no string.
    """
    _check_oracle_size(modes)
    raising = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
    parity = sp.csr_matrix(np.diag([1.0, -1.0]))
    identity = sp.identity(2, format="csr")
    operators = []
    for mode in range(modes):
        factors = [parity] * mode + [raising] + [identity] * (modes - mode - 1)
        op = sp.csr_matrix(np.ones((1, 1)))
        for factor in factors:
            op = sp.kron(op, factor, format="csr")
        operators.append(op)
    return operators


def majorana_operators(modes: int) -> List[sp.csr_matrix]:
    operators = []
    for create in creation_operators(modes):
        annihilate = create.getH().tocsr()
        operators.append((create + annihilate).tocsr())
        operators.append((-1j * (annihilate - create)).tocsr())
    return operators


def tensor_from_generating(gen, log_norm: Optional[float] = None) -> np.ndarray:
    """
    Dense amplitudes exp(X)|0> with X = sum_{a<b} A_ab f+_a f+_b, returned with one axis per leg
    (index 1 = occupied).

    Example Usage:
    T = tensor_from_generating(np.array([[0, a, a], [-a, 0, a], [-a, -a, 0]]))
    T[1, 1, 0]  # a
    """
    if not isinstance(gen, GeneratingMatrix):
        gen = GeneratingMatrix(gen.matrix if isinstance(gen, MatchgateTensor) else gen)
    modes = gen.size
    _check_oracle_size(modes)
    scale = np.exp(gen.log_norm if log_norm is None else log_norm)
    if modes == 0:
        return np.array(scale)
    creators = creation_operators(modes)
    pairing = sp.csr_matrix((2 ** modes, 2 ** modes))
    for a in range(modes):
        for b in range(a + 1, modes):
            if gen.matrix[a, b] != 0:
                pairing = pairing + gen.matrix[a, b] * (creators[a] @ creators[b])
    state = np.zeros(2 ** modes)
    state[0] = 1.0
    term = state.copy()
    for order in range(1, modes // 2 + 1):
        term = pairing @ term / order
        state = state + term
    return (scale * state).reshape((2,) * modes)


def dense_contract(psi: np.ndarray, leg_a: int, leg_b: int) -> np.ndarray:
    """
    T' = T(n_a = n_b = 0) + (-1)^(occupied legs strictly between a and b) T(n_a = n_b = 1).
    """
    psi = np.asarray(psi)
    a, b = min(leg_a, leg_b), max(leg_a, leg_b)
    if a == b or b >= psi.ndim:
        raise LegStateError(f"Cannot contract legs {leg_a} and {leg_b} of a {psi.ndim}-leg tensor")
    empty = psi.take(0, axis=b).take(0, axis=a)
    full = psi.take(1, axis=b).take(1, axis=a)
    between = b - a - 1
    if between:
        occupations = np.indices((2,) * between).sum(axis=0)
        sign = (-1.0) ** occupations
        shape = [1] * empty.ndim
        shape[a:a + between] = [2] * between
        full = full * sign.reshape(shape)
    return empty + full


def covariance_from_state(psi: np.ndarray) -> CovarianceMatrix:
    """
    Gamma_jk = i <gamma_j gamma_k> (j != k) of the normalized dense state.
    """
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    modes = int(round(np.log2(psi.size)))
    if 2 ** modes != psi.size:
        raise ValueError(f"State of size {psi.size} is not a qubit register")
    norm = np.vdot(psi, psi).real
    if norm <= 0:
        raise ValueError("Cannot take the covariance of a zero state")
    psi = psi / np.sqrt(norm)
    majoranas = majorana_operators(modes)
    images = [op @ psi for op in majoranas]
    size = 2 * modes
    gamma = np.zeros((size, size))
    for j in range(size):
        for k in range(j + 1, size):
            value = 1j * np.vdot(images[j], images[k])
            gamma[j, k] = value.real
            gamma[k, j] = -value.real
    return CovarianceMatrix(gamma)
