"""
This module assembles and contracts the matchgate network on a hyperbolic tiling.
- BulkInput: tile and cap parameters (symmetric orbit values), per-tile overrides
- BoundaryState: covariance of the boundary fermions with the network log-weight
- contract_network: grows a disk tile by tile and glues caps for higher bond dimension
- find_critical_point / optimize_high_chi: parameter searches against a target Hamiltonian

Every tile edge carries k fermions (bond dimension 2^k). A leg is keyed (edge id, f) where
f counts along the edge from its smaller to its larger vertex id. Legs are glued in nested
order so that every contracted pair is adjacent, and the cyclic order of a tensor is changed
with bosonic rotations only.

Dependencies:
- tiling.py, matchgate.py, gaussian.py
- run_config.py: optimizer budgets
- numpy, scipy (linalg.block_diag, optimize)
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy.linalg import block_diag
from scipy.optimize import minimize, minimize_scalar

from src.exceptions import (ContractionSingularityError, LegStateError, OptimizationError,
                            SymmetryError)
from src.gaussian import (block_diagonalize, energy, ground_covariance, ground_energy,
                          ising_hamiltonian, state_fidelity)
from src.matchgate import (GeneratingMatrix, MatchgateTensor, contract_pairs,
                           covariance_from_generating, rotate_legs)
from src.run_config import settings
from src.tiling import Tiling, contraction_schedule

SINGULAR_PENALTY = 1e6

# =============================================================================
# Symmetric parametrization
# =============================================================================
def _pair_orbits(size: int, group: List[List[int]]) -> List[List[Tuple[int, int]]]:
    seen = set()
    orbits = []
    for i in range(size):
        for j in range(i + 1, size):
            if (i, j) in seen:
                continue
            orbit = sorted({tuple(sorted((g[i], g[j]))) for g in group})
            seen.update(orbit)
            orbits.append(orbit)
    return orbits


def symmetric_orbits(p: int, k: int) -> List[List[Tuple[int, int]]]:
    """
    Orbits of leg pairs of a p-gon tile with k fermions per edge under its dihedral symmetry
    (rotation by one edge, reflection i -> -1-i).
    """
    size = p * k
    group = []
    for turn in range(p):
        rotation = [(i + turn * k) % size for i in range(size)]
        group.append(rotation)
        group.append([rotation[(-1 - i) % size] for i in range(size)])
    return _pair_orbits(size, group)


def cap_orbits(k: int) -> List[List[Tuple[int, int]]]:
    """
    Orbits of a cap with k glued legs and one open leg under the reflection of the glued legs.
    """
    identity = list(range(k + 1))
    reflection = [k - 1 - i for i in range(k)] + [k]
    return _pair_orbits(k + 1, [identity, reflection])


def orbit_matrix(orbits: List[List[Tuple[int, int]]], values: Sequence[float], size: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.size != len(orbits):
        raise ValueError(f"Expected {len(orbits)} orbit parameters, got {values.size}")
    matrix = np.zeros((size, size))
    for orbit, value in zip(orbits, values):
        for i, j in orbit:
            matrix[i, j] = value
            matrix[j, i] = -value
    return matrix


def orbit_values(orbits: List[List[Tuple[int, int]]], matrix: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """
    Reads the orbit parameters back from a tile matrix; a matrix that is not constant on the
    orbits raises SymmetryError.
    """
    matrix = np.asarray(matrix, dtype=float)
    values = []
    for orbit in orbits:
        entries = np.array([matrix[i, j] for i, j in orbit])
        if np.ptp(entries) > tol:
            raise SymmetryError(f"Tile matrix is not symmetric on the leg pairs {orbit}")
        values.append(entries[0])
    return np.array(values)


# =============================================================================
# Bulk input and boundary state
# =============================================================================
@dataclass
class BulkInput:
    """
    Parameters of every tensor in the network.
    :param p: tile polygon size
    :param k: fermions per edge (bond dimension 2^k)
    :param bulk: orbit values of the tile matrix (see symmetric_orbits)
    :param cap: orbit values of the cap tensor (see cap_orbits); None is the identity cap
    :param overrides: tile id -> orbit values replacing the bulk ones

    Example Usage:
    bulk = BulkInput(p=3, k=1, bulk=[0.6])
    bulk.tile_matrix(0)
    """
    p: int
    k: int = 1
    bulk: Sequence[float] = (0.0,)
    cap: Optional[Sequence[float]] = None
    overrides: Dict[int, Sequence[float]] = field(default_factory=dict)

    def __post_init__(self):
        self.orbits = symmetric_orbits(self.p, self.k)
        self.bulk = np.atleast_1d(np.asarray(self.bulk, dtype=float))
        if self.bulk.ndim == 2:
            self.bulk = orbit_values(self.orbits, self.bulk)
        if self.bulk.size != len(self.orbits):
            raise ValueError(f"{{p={self.p}, k={self.k}}} tiles take {len(self.orbits)} parameters, got {self.bulk.size}")
        self.cap_orbit_list = cap_orbits(self.k)
        if self.cap is None:
            if self.k > 1:
                raise ValueError(f"k={self.k} needs {len(self.cap_orbit_list)} cap parameters")
        else:
            self.cap = np.atleast_1d(np.asarray(self.cap, dtype=float))
            if self.cap.size != len(self.cap_orbit_list):
                raise ValueError(f"Caps with k={self.k} take {len(self.cap_orbit_list)} parameters, got {self.cap.size}")
        self.overrides = {int(t): np.atleast_1d(np.asarray(v, dtype=float)) for t, v in self.overrides.items()}

    @classmethod
    def from_named(cls, p: int, names: Sequence[str], values: Dict[str, float]) -> "BulkInput":
        return cls(p=p, k=1, bulk=[values[name] for name in names])

    @classmethod
    def from_flat(cls, p: int, k: int, params: Sequence[float]) -> "BulkInput":
        """
        Splits a flat parameter list into bulk orbits followed by cap orbits.
        """
        count = len(symmetric_orbits(p, k))
        params = np.asarray(params, dtype=float)
        cap = params[count:] if k > 1 else None
        return cls(p=p, k=k, bulk=params[:count], cap=cap)

    @property
    def flat(self) -> np.ndarray:
        return self.bulk if self.cap is None else np.concatenate([self.bulk, self.cap])

    def with_overrides(self, overrides: Dict[int, Sequence[float]]) -> "BulkInput":
        return BulkInput(self.p, self.k, self.bulk, self.cap, overrides)

    def tile_matrix(self, tile_id: int) -> np.ndarray:
        values = self.overrides.get(tile_id, self.bulk)
        return orbit_matrix(self.orbits, values, self.p * self.k)

    def cap_matrix(self) -> np.ndarray:
        values = np.ones(1) if self.cap is None else self.cap
        return orbit_matrix(self.cap_orbit_list, values, self.k + 1)


@dataclass
class BoundaryState:
    covariance: np.ndarray
    generating: np.ndarray
    tiling: Tiling
    bulk: BulkInput
    log_weight: float

    @property
    def n_sites(self) -> int:
        return self.covariance.shape[0] // 2


# =============================================================================
# Disk absorption
# =============================================================================
def _cyclic_start(positions: Sequence[int], size: int) -> int:
    """
    First position of a cyclically contiguous block; -1 when the positions are not contiguous.
    """
    chosen = set(positions)
    if len(chosen) == size:
        return 0
    starts = [i for i in chosen if (i - 1) % size not in chosen]
    if len(starts) != 1:
        return -1
    return starts[0]


def tile_legs(tiling: Tiling, tile_id: int, k: int) -> List[Tuple[int, int]]:
    tile = tiling.tiles[tile_id]
    p = len(tile.vertices)
    keys = []
    for g in range(p):
        start, stop = tile.vertices[g], tile.vertices[(g + 1) % p]
        for f in range(k):
            keys.append((tile.edges[g], f if start < stop else k - 1 - f))
    return keys


def absorb(disk: MatchgateTensor, tensor: MatchgateTensor, location: Optional[str] = None) -> MatchgateTensor:
    """
    Glues every leg that tensor shares with the disk. The shared legs must form one contiguous
    block on both; the disk block is rotated to the end and the tensor block to the front so
    that the pairs are nested. The result lists the remaining disk legs followed by the
    remaining tensor legs.
    """
    disk_set = set(disk.labels)
    tensor_positions = [i for i, label in enumerate(tensor.labels) if label in disk_set]
    if not tensor_positions:
        raise LegStateError(f"Tensor shares no leg with the disk ({location})")
    glued = [tensor.labels[i] for i in tensor_positions]
    disk_positions = [disk.labels.index(label) for label in glued]
    disk_start = _cyclic_start(disk_positions, disk.size)
    tensor_start = _cyclic_start(tensor_positions, tensor.size)
    if disk_start < 0 or tensor_start < 0:
        logging.error(f"Failed to glue at {location}: shared legs are not contiguous")
        raise LegStateError(f"Shared legs are not contiguous on the disk and the tensor ({location})")

    count = len(glued)
    disk = rotate_legs(disk, (disk_start + count) % disk.size)
    tensor = rotate_legs(tensor, tensor_start)
    size = disk.size
    for i in range(count):
        if disk.labels[size - 1 - i] != tensor.labels[i]:
            raise LegStateError(f"Shared legs are not in nested order ({location})")

    joined = MatchgateTensor(GeneratingMatrix(block_diag(disk.matrix, tensor.matrix), disk.log_norm + tensor.log_norm))
    pairs = [(size - 1 - i, size + i) for i in range(count)]
    reduced = contract_pairs(joined, pairs, location)
    labels = disk.labels[:size - count] + tensor.labels[count:]
    return MatchgateTensor(reduced.generating, labels)


def _rotate_to(disk: MatchgateTensor, first) -> MatchgateTensor:
    return rotate_legs(disk, disk.labels.index(first))


def contract_network(tiling: Tiling, bulk: BulkInput, schedule: str = "layer_ccw") -> BoundaryState:
    """
    Contracts the bulk tiles in schedule order and, for k > 1, one cap per boundary edge.
    Boundary fermions are ordered counterclockwise starting at boundary edge 0.

    Example Usage:
    tiling = build_tiling(3, 7, 2)
    state = contract_network(tiling, BulkInput(p=3, bulk=[0.6]))
    state.covariance.shape  # (66, 66)
    """
    if bulk.p != tiling.p:
        raise ValueError(f"Bulk input for p={bulk.p} on a {{{tiling.p},{tiling.q}}} tiling")
    k = bulk.k
    disk = None
    for tile_id in contraction_schedule(tiling, schedule):
        tensor = MatchgateTensor.from_matrix(bulk.tile_matrix(tile_id), tile_legs(tiling, tile_id, k))
        if disk is None:
            disk = tensor
            continue
        disk = absorb(disk, tensor, location=f"tile {tile_id}")

    # Start at the first leg of boundary edge 0
    first_edge = tiling.boundary_edges[0]
    starts = [i for i, (edge, _) in enumerate(disk.labels)
              if edge == first_edge and disk.labels[i - 1][0] != first_edge]
    disk = rotate_legs(disk, starts[0])

    if k > 1 or bulk.cap is not None:
        cap = bulk.cap_matrix()
        for j, edge_id in enumerate(tiling.boundary_edges):
            block = [label for label in disk.labels if label[0] == edge_id]
            labels = list(reversed(block)) + [("open", j)]
            disk = absorb(disk, MatchgateTensor.from_matrix(cap, labels), location=f"cap on edge {edge_id}")
        disk = _rotate_to(disk, ("open", 0))

    covariance = covariance_from_generating(disk.generating).matrix
    logging.info(f"Contracted {len(tiling.tiles)} tiles into {disk.size} boundary fermions")
    return BoundaryState(covariance, disk.matrix, tiling, bulk, disk.log_norm)


def build_high_chi(tiling: Tiling, k: int, bulk_params, cap_params) -> BoundaryState:
    """
    Network with bond dimension 2^k. bulk_params are orbit values or a full pk x pk matrix,
    which must be symmetric under the tile's dihedral action.
    """
    bulk = BulkInput(p=tiling.p, k=k, bulk=bulk_params, cap=cap_params)
    return contract_network(tiling, bulk)


# =============================================================================
# Parameter searches
# =============================================================================
@dataclass
class CriticalPoint:
    params: np.ndarray
    energy: float
    ground_energy: float
    fidelity: float
    degenerate: bool = False
    evaluations: int = 0


def target_hamiltonian(target: str, n_sites: int) -> np.ndarray:
    if target == "ising":
        return ising_hamiltonian(n_sites)
    if target == "zero":
        return np.zeros((2 * n_sites, 2 * n_sites))
    raise ValueError(f"Unknown target Hamiltonian '{target}'")


def _summarize(state: BoundaryState, hamiltonian: np.ndarray, params, value: float, evaluations: int) -> CriticalPoint:
    basis = block_diagonalize(hamiltonian)
    fidelity = state_fidelity(state.covariance, ground_covariance(basis))
    return CriticalPoint(np.asarray(params, dtype=float), value, ground_energy(basis), fidelity, False, evaluations)


def find_critical_point(tiling: Tiling, target: str = "ising") -> CriticalPoint:
    """
    Minimizes the target energy of the boundary state over the bond-dimension-2 tile parameters:
    a bounded scalar search for one parameter, Nelder-Mead otherwise.
    """
    n_sites = tiling.boundary_size
    hamiltonian = target_hamiltonian(target, n_sites)
    count = len(symmetric_orbits(tiling.p, 1))
    if target == "zero":
        logging.warning("Zero target Hamiltonian: every tile parameter is optimal")
        return CriticalPoint(np.zeros(count), 0.0, 0.0, float("nan"), True, 0)

    network = settings().network
    trace = []

    def objective(x):
        try:
            value = energy(hamiltonian, contract_network(tiling, BulkInput(p=tiling.p, bulk=np.atleast_1d(x))).covariance)
        except ContractionSingularityError:
            value = SINGULAR_PENALTY
        trace.append((np.atleast_1d(x).tolist(), value))
        return value

    if count == 1:
        low, high = network["critical_bounds"]
        result = minimize_scalar(objective, bounds=(low, high), method="bounded",
                                 options={"xatol": network["critical_xatol"], "maxiter": network["nelder_mead"]["maxfev"]})
        x = np.atleast_1d(result.x)
    else:
        options = dict(network["nelder_mead"])
        result = minimize(objective, x0=np.full(count, 0.3), method="Nelder-Mead", options=options)
        x = result.x
    if not result.success:
        logging.error(f"Failed to find the critical point: {result.message}")
        raise OptimizationError(f"Critical point search did not converge: {result.message}", trace)
    state = contract_network(tiling, BulkInput(p=tiling.p, bulk=x))
    return _summarize(state, hamiltonian, x, float(result.fun), len(trace))


def optimize_high_chi(tiling: Tiling, k: int, target: str = "ising", restarts: Optional[int] = None,
                      seed: int = 0, threads: int = 1, start: Optional[Sequence[float]] = None) -> CriticalPoint:
    """
    Nelder-Mead over bulk and cap orbit parameters from seeded restarts; the best run wins.
    """
    network = settings().network
    restarts = network["restarts"] if restarts is None else restarts
    hamiltonian = target_hamiltonian(target, tiling.boundary_size)
    size = len(symmetric_orbits(tiling.p, k)) + (len(cap_orbits(k)) if k > 1 else 0)
    rng = np.random.default_rng(seed)
    starts = [rng.normal(0.0, network["restart_scale"], size) for _ in range(restarts)]
    if start is not None:
        starts.insert(0, np.asarray(start, dtype=float))

    def objective(x):
        try:
            return energy(hamiltonian, contract_network(tiling, BulkInput.from_flat(tiling.p, k, x)).covariance)
        except (ContractionSingularityError, ArithmeticError):
            return SINGULAR_PENALTY

    def run(x0):
        return minimize(objective, x0=x0, method="Nelder-Mead", options=dict(network["nelder_mead"]))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, starts))
    best = min(results, key=lambda r: r.fun)
    if best.fun >= SINGULAR_PENALTY:
        raise OptimizationError("Every restart ended on a singular contraction", [r.fun for r in results])
    if not best.success:
        logging.warning(f"High bond dimension search stopped early: {best.message}")
    state = contract_network(tiling, BulkInput.from_flat(tiling.p, k, best.x))
    return _summarize(state, hamiltonian, best.x, float(best.fun), int(sum(r.nfev for r in results)))
