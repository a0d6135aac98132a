"""
This module creates and reads out excitations of the {3,7} boundary state through bulk defects.
- DefectSpec: tile id -> tile parameter overrides, with an optional symmetry tag
- OccupationReadout: mode occupations e_k of a covariance in a frozen mode basis
- sweep_central / sweep_ring: single-tile and ring defect scans with landmark detection
- optimize_bulk_for_eigenstate: D3-symmetric bulk search towards a target excited eigenstate

The readout basis comes from the MDI parent of the defect-free state, projected onto the
commutant of that state, so the background reads e_k = 1 for every mode. Excitation labels
E_m occupy mode pair j (modes 2j+1 and 2j+2, counted from 1) for every bit j set in m.

Dependencies:
- tiling.py, network.py, gaussian.py, disorder.py, parent.py
- run_config.py: excitation thresholds and grids
- numpy, scipy (optimize.brentq/minimize), pandas
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
import logging
import re

import numpy as np
import pandas as pd
from scipy.optimize import brentq, minimize

from src.disorder import decay_adjust, extract_disorder
from src.exceptions import (ConditioningError, ContractionSingularityError, DimensionError,
                            GeometryError, SymmetryError)
from src.gaussian import ModeBasis, block_diagonalize, excited_covariance, state_fidelity
from src.network import SINGULAR_PENALTY, BulkInput, contract_network
from src.parent import commutant_projection, mdi_hamiltonian
from src.run_config import settings
from src.tiling import Tiling, tile_neighbours, tile_orbits

CENTRAL_TILE = 0
_FAILURES = (ContractionSingularityError, ConditioningError)


# =============================================================================
# Defects and readout
# =============================================================================
@dataclass
class DefectSpec:
    """
    :param overrides: tile id -> tile parameter a
    :param symmetry: 'D3' when the overrides are constant on dihedral tile orbits

    Example Usage:
    spec = DefectSpec({0: -1.2})
    bulk = spec.apply(BulkInput(p=3, bulk=[0.6]))
    """
    overrides: Dict[int, float] = field(default_factory=dict)
    symmetry: Optional[str] = None

    def validate(self, tiling: Tiling):
        unknown = sorted(t for t in self.overrides if not 0 <= t < len(tiling.tiles))
        if unknown:
            raise GeometryError(f"Defects on unknown tiles {unknown}")

    def apply(self, bulk: BulkInput) -> BulkInput:
        return bulk.with_overrides({t: [a] for t, a in self.overrides.items()})

    def to_json(self) -> Dict:
        return {"symmetry": self.symmetry,
                "overrides": [{"tile": int(t), "a": float(a)} for t, a in sorted(self.overrides.items())]}

    @classmethod
    def from_json(cls, payload: Dict) -> "DefectSpec":
        return cls({int(item["tile"]): float(item["a"]) for item in payload["overrides"]}, payload.get("symmetry"))


@dataclass
class OccupationReadout:
    e: np.ndarray
    leakage: float
    label: Optional[str]


def background_disorder(gamma, p: int = 3, q: int = 7) -> np.ndarray:
    fraction = settings().tiling(p, q)["symmetry_fraction"]
    return extract_disorder(decay_adjust(gamma), fraction).values


def readout_basis(gamma, g: Optional[Sequence[float]] = None) -> ModeBasis:
    """
    Mode basis of the MDI parent of the defect-free state, projected onto the commutant of that
    state. The disorder vector is extracted from the state when not given.
    """
    gamma = np.asarray(getattr(gamma, "covariance", gamma), dtype=float)
    g = background_disorder(gamma) if g is None else np.asarray(g, dtype=float)
    if g.size != gamma.shape[0]:
        raise DimensionError(f"Disorder vector of length {g.size} for a {gamma.shape[0]}-Majorana state")
    return block_diagonalize(commutant_projection(mdi_hamiltonian(g).matrix, gamma))


def _label(e: np.ndarray, leakage: float) -> Optional[str]:
    config = settings().excite
    if leakage > config["leakage_threshold"] or np.any(np.abs(np.abs(e) - 1) > config["perturbed_threshold"]):
        return None
    occupied = np.flatnonzero(e < 0)
    pairs = set(occupied // 2)
    if all(2 * j in occupied and 2 * j + 1 in occupied for j in pairs):
        return f"E{sum(2 ** int(j) for j in pairs)}"
    return "modes[" + ",".join(str(m + 1) for m in occupied) + "]"


def occupations(gamma, basis: ModeBasis) -> OccupationReadout:
    """
    e_k = (O Gamma O^T)_{2k+1, 2k}; the leakage is the Frobenius norm outside the 2x2 blocks.
    """
    rotated = basis.rotate(getattr(gamma, "covariance", gamma))
    index = np.arange(basis.n_modes)
    e = rotated[2 * index + 1, 2 * index]
    outside = rotated.copy()
    outside[2 * index, 2 * index + 1] = 0.0
    outside[2 * index + 1, 2 * index] = 0.0
    leakage = float(np.linalg.norm(outside))
    return OccupationReadout(e, leakage, _label(e, leakage))


def occupation_from_label(label: str, n_modes: int) -> np.ndarray:
    """
    Occupation signs (+1 empty, -1 occupied) of E_m.
    """
    match = re.fullmatch(r"E(\d+)", label)
    if match is None:
        raise ValueError(f"Excitation label must look like 'E3', got '{label}'")
    m = int(match.group(1))
    occupation = np.ones(n_modes, dtype=int)
    j = 0
    while m:
        if m & 1:
            if 2 * j + 1 >= n_modes:
                raise DimensionError(f"{label} needs more than {n_modes} modes")
            occupation[2 * j:2 * j + 2] = -1
        m >>= 1
        j += 1
    return occupation


def parameter_grid(grid: Sequence[float]) -> np.ndarray:
    start, stop, step = grid
    return np.round(np.arange(start, stop + step / 2, step), 10)


# =============================================================================
# Defect sweeps
# =============================================================================
@dataclass
class CentralSweep:
    table: pd.DataFrame
    landmarks: Dict


@dataclass
class RingSweep:
    table: pd.DataFrame
    best_a1: float
    central: CentralSweep


def _readout_row(tiling: Tiling, bulk: BulkInput, basis: ModeBasis, overrides: Dict[int, float]) -> Dict:
    try:
        state = contract_network(tiling, DefectSpec(overrides).apply(bulk))
    except _FAILURES as e:
        logging.info(f"Defect {overrides} skipped: {e}")
        return {"leakage": np.nan}
    rotated = basis.rotate(state.covariance)
    readout = occupations(state.covariance, basis)
    row = {"gamma_12": rotated[0, 1], "gamma_13": rotated[0, 2], "gamma_14": rotated[0, 3],
           "leakage": readout.leakage, "label": readout.label}
    for k in range(min(4, basis.n_modes)):
        row[f"e{k + 1}"] = readout.e[k]
    return row


def _pair_mean(tiling: Tiling, bulk: BulkInput, basis: ModeBasis, a0: float) -> float:
    row = _readout_row(tiling, bulk, basis, {CENTRAL_TILE: a0})
    return (row.get("e1", np.nan) + row.get("e2", np.nan)) / 2


def _landmarks(tiling: Tiling, bulk: BulkInput, basis: ModeBasis, table: pd.DataFrame) -> Dict:
    finite = table.dropna(subset=["e1", "e2"]).reset_index(drop=True)
    if finite.empty:
        return {"ground": None, "bell": None, "flip": None}
    mean = ((finite["e1"] + finite["e2"]) / 2).to_numpy()
    a0 = finite["a0"].to_numpy()
    ground, flip = int(np.argmax(mean)), int(np.argmin(mean))
    landmarks = {"ground": float(a0[ground]), "flip": float(a0[flip]),
                 "e_at_flip": [float(finite["e1"][flip]), float(finite["e2"][flip])], "bell": None}

    crossings = [i for i in range(len(a0) - 1) if mean[i] * mean[i + 1] < 0]
    if crossings:
        i = min(crossings, key=lambda c: abs(a0[c] - a0[ground]))
        try:
            landmarks["bell"] = float(brentq(lambda x: _pair_mean(tiling, bulk, basis, x), a0[i], a0[i + 1]))
        except (ValueError, RuntimeError) as e:
            logging.warning(f"Bell point refinement failed, interpolating the grid: {e}")
            landmarks["bell"] = float(a0[i] - mean[i] * (a0[i + 1] - a0[i]) / (mean[i + 1] - mean[i]))
    return landmarks


def sweep_central(tiling: Tiling, bulk: BulkInput, basis: ModeBasis, a0_values: Sequence[float],
                  threads: int = 1) -> CentralSweep:
    """
    Scans the central tile parameter a0 and locates the ground point (pair mean e maximal),
    the Bell point where the lowest pair crosses e = 0, and the flip point (pair mean minimal).

    Example Usage:
    state = contract_network(tiling, bulk)
    sweep = sweep_central(tiling, bulk, readout_basis(state), parameter_grid([-5, 2, 0.01]))
    sweep.landmarks["bell"]
    """
    a0_values = np.asarray(a0_values, dtype=float)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda a0: _readout_row(tiling, bulk, basis, {CENTRAL_TILE: a0}), a0_values))
    table = pd.DataFrame(rows)
    table.insert(0, "a0", a0_values)
    for column in ("e1", "e2"):
        if column not in table:
            table[column] = np.nan
    landmarks = _landmarks(tiling, bulk, basis, table)
    logging.info(f"Central sweep landmarks: {landmarks}")
    return CentralSweep(table, landmarks)


def sweep_ring(tiling: Tiling, bulk: BulkInput, basis: ModeBasis, a1_values: Sequence[float],
               a0_values: Sequence[float], threads: int = 1) -> RingSweep:
    """
    Scans the ring of tiles around the central tile at the background a0, then repeats the
    central scan at the ring value that depletes the second mode pair the most.
    """
    ring = tile_neighbours(tiling, CENTRAL_TILE)
    a1_values = np.asarray(a1_values, dtype=float)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda a1: _readout_row(tiling, bulk, basis, {t: a1 for t in ring}), a1_values))
    table = pd.DataFrame(rows)
    table.insert(0, "a1", a1_values)
    if "e4" not in table or table[["e3", "e4"]].isna().all(axis=None):
        raise ContractionSingularityError("Every ring defect value produced a singular contraction")
    second = ((table["e3"] + table["e4"]) / 2).to_numpy()
    best_a1 = float(a1_values[int(np.nanargmin(second))])
    ring_bulk = DefectSpec({t: best_a1 for t in ring}).apply(bulk)
    central = sweep_central(tiling, ring_bulk, basis, a0_values, threads)
    return RingSweep(table, best_a1, central)


# =============================================================================
# Symmetric eigenstate search
# =============================================================================
def d3_orbits(tiling: Tiling, layers: Optional[int] = None) -> List[List[int]]:
    if tiling.p != 3:
        raise SymmetryError(f"D3 tile orbits need triangular tiles, got p={tiling.p}")
    layers = settings().excite["eigenstate_layers"] if layers is None else layers
    return tile_orbits(tiling, layers)


@dataclass
class EigenstateFit:
    defects: DefectSpec
    target: str
    fidelity: float
    distance: float
    stagnated: bool
    evaluations: int
    orbits: List[List[int]]
    readout: Optional[OccupationReadout] = None


def optimize_bulk_for_eigenstate(tiling: Tiling, bulk: BulkInput, basis: ModeBasis, target: str = "E1",
                                 layers: Optional[int] = None, seed: int = 0) -> EigenstateFit:
    """
    Nelder-Mead over one tile parameter per D3 orbit, minimizing |Gamma - Gamma_target|_F^2 / 4N,
    which stays smooth where the fidelity to an orthogonal target vanishes.
    """
    config = settings().excite
    orbits = d3_orbits(tiling, layers)
    target_gamma = excited_covariance(basis, occupation_from_label(target, basis.n_modes))
    size = target_gamma.shape[0]

    def defects(x) -> DefectSpec:
        return DefectSpec({t: float(value) for orbit, value in zip(orbits, x) for t in orbit}, "D3")

    def objective(x):
        try:
            gamma = contract_network(tiling, defects(x).apply(bulk)).covariance
        except _FAILURES:
            return SINGULAR_PENALTY
        return float(np.sum((gamma - target_gamma) ** 2)) / (2 * size)

    rng = np.random.default_rng(seed)
    x0 = np.full(len(orbits), float(bulk.bulk[0])) + rng.normal(0.0, 0.05, len(orbits))
    start = objective(x0)
    result = minimize(objective, x0=x0, method="Nelder-Mead", options=dict(settings().network["nelder_mead"]))
    stagnated = (not result.success) or start - result.fun < config["stagnation_tolerance"]
    if stagnated:
        logging.warning(f"Eigenstate search for {target} stagnated at distance {result.fun:.6f}")

    best = defects(result.x)
    fidelity, readout = 0.0, None
    if result.fun < SINGULAR_PENALTY:
        gamma = contract_network(tiling, best.apply(bulk)).covariance
        fidelity = state_fidelity(gamma, target_gamma)
        readout = occupations(gamma, basis)
    return EigenstateFit(best, target, fidelity, float(result.fun), bool(stagnated), int(result.nfev), orbits, readout)
