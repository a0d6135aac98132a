"""
This module extracts and analyzes the quasiperiodic disorder of boundary states.
- DecayProfile: site-averaged correlation decay c(d) with a power-law fit
- DisorderVector: 2N positive reals with mean 1 such that Gamma_jk ~ g_j g_k sgn(j-k) c(|j-k|)
- Self-similarity diagnostics (sequence fidelities, translation scans), h-profile,
  disorder auto-correlations and site-averaged two-point functions

Majorana separations are cyclic; an index that wraps past 2N picks up the antiperiodic sign
when site averages are taken.

Dependencies:
- run_config.py: decay window and thresholds
- numpy, pandas
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd

from src.exceptions import ConfigurationError, DimensionError, FitError
from src.run_config import settings
from src.utils import DataUtilities


def _as_fraction(value) -> Fraction:
    if isinstance(value, (list, tuple)):
        return Fraction(int(value[0]), int(value[1]))
    return Fraction(value).limit_denominator(64)


# =============================================================================
# Decay profile
# =============================================================================
@dataclass
class DecayProfile:
    """
    :param values: c(d) for d = 0..2N-1
    :param exponent: fitted power p of c(d) ~ x(d)^-p
    :param prefactor: fitted amplitude
    :param window: (d_min, d_max) of the fit
    :param distance: 'chord' or 'linear'
    """
    values: np.ndarray
    exponent: float
    prefactor: float
    window: tuple
    distance: str

    @property
    def size(self) -> int:
        return self.values.size

    def fitted(self, separations) -> np.ndarray:
        return self.prefactor * distance_measure(separations, self.size, self.distance) ** (-self.exponent)


def distance_measure(separations, size: int, distance: str = "chord") -> np.ndarray:
    separations = np.asarray(separations, dtype=float)
    if distance == "chord":
        return size / np.pi * np.sin(np.pi * separations / size)
    if distance == "linear":
        return separations
    raise ValueError(f"Unknown distance measure '{distance}'")


def correlation_profile(gamma) -> np.ndarray:
    """
    c(d) = (1/2N) sum_j |Gamma_{j, j+d mod 2N}|.
    """
    gamma = np.asarray(gamma, dtype=float)
    size = gamma.shape[0]
    index = np.arange(size)
    return np.array([np.abs(gamma[index, (index + d) % size]).mean() for d in range(size)])


def correlation_decay(gamma, d_min: Optional[int] = None, d_max: Optional[int] = None,
                      distance: Optional[str] = None) -> DecayProfile:
    """
    Least-squares power fit of log c(d) against log x(d) over odd d in [d_min, d_max].
    """
    config = settings().decay
    gamma = np.asarray(gamma, dtype=float)
    size = gamma.shape[0]
    d_min = config["d_min"] if d_min is None else d_min
    d_max = int(size * config["d_max_fraction"]) if d_max is None else d_max
    distance = config["distance"] if distance is None else distance
    values = correlation_profile(gamma)

    separations = np.arange(size)
    chosen = (separations >= d_min) & (separations <= d_max) & (separations % 2 == 1)
    chosen &= values > 0
    if chosen.sum() < 2:
        logging.error(f"Failed to fit the correlation decay: window [{d_min}, {d_max}] has {chosen.sum()} nonzero points")
        raise FitError(f"Correlation decay vanishes on the fit window [{d_min}, {d_max}]")
    x = np.log(distance_measure(separations[chosen], size, distance))
    slope, intercept = np.polyfit(x, np.log(values[chosen]), 1)
    return DecayProfile(values, float(-slope), float(np.exp(intercept)), (int(d_min), int(d_max)), distance)


@dataclass
class DecayAdjusted:
    matrix: np.ndarray
    mask: np.ndarray
    masked: int


def decay_adjust(gamma, profile: Optional[np.ndarray] = None) -> DecayAdjusted:
    """
    Gamma_t_jk = Gamma_jk / c(k - j). Even separations are masked to 0, as are odd separations
    with vanishing c; the number of the latter is reported.
    """
    gamma = np.asarray(gamma, dtype=float)
    size = gamma.shape[0]
    values = correlation_profile(gamma) if profile is None else np.asarray(profile, dtype=float)
    separation = DataUtilities.separation_matrix(size)
    decay = values[separation]
    mask = (separation % 2 == 1) & (decay > 0)
    adjusted = np.zeros_like(gamma)
    adjusted[mask] = gamma[mask] / decay[mask]
    masked = int(((separation % 2 == 1) & ~mask).sum())
    if masked:
        logging.warning(f"Masked {masked} odd-separation entries with vanishing c(d)")
    return DecayAdjusted(adjusted, mask, masked)


# =============================================================================
# Disorder vector
# =============================================================================
@dataclass
class DisorderVector:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise DimensionError("Disorder vector must be a nonempty 1D array")
        if np.any(values <= 0):
            raise FitError("Disorder vector has non-positive entries")
        self.values = values / values.mean()

    def __len__(self):
        return self.values.size


def extract_disorder(adjusted, symmetry_fraction) -> DisorderVector:
    """
    g_j proportional to sum_{k=1..2Nf} |Gamma_t_{j, j+N(1-f)+k}|: the row average over the
    window of 2Nf Majoranas centred on the antipode.
    """
    matrix = np.asarray(getattr(adjusted, "matrix", adjusted), dtype=float)
    size = matrix.shape[0]
    n_sites = size // 2
    fraction = _as_fraction(symmetry_fraction)
    width = size * fraction
    offset = n_sites * (1 - fraction)
    if width.denominator != 1 or offset.denominator != 1 or not 0 < fraction <= 1:
        raise ConfigurationError(f"N={n_sites} is not divisible for the symmetry fraction {fraction}")
    index = np.arange(size)
    columns = (index[:, None] + int(offset) + np.arange(1, int(width) + 1)[None, :]) % size
    weights = np.abs(matrix[index[:, None], columns]).sum(axis=1)
    if np.any(weights <= 0):
        raise FitError("Row average vanishes; the covariance has no support in the estimator window")
    return DisorderVector(weights)


def reordering_residual(adjusted, g, band: Optional[int] = None) -> float:
    """
    max |Gamma_t_jk / (g_j g_k) - sgn(j - k)| over unmasked entries further than band from the
    diagonal.
    """
    matrix = np.asarray(getattr(adjusted, "matrix", adjusted), dtype=float)
    g = np.asarray(getattr(g, "values", g), dtype=float)
    band = settings().disorder["band"] if band is None else band
    size = matrix.shape[0]
    index = np.arange(size)
    difference = index[:, None] - index[None, :]
    cyclic = np.minimum(np.abs(difference), size - np.abs(difference))
    chosen = (cyclic > band) & (difference % 2 == 1)
    if not chosen.any():
        return 0.0
    ratio = matrix / np.outer(g, g)
    return float(np.abs(ratio - np.sign(difference))[chosen].max())


@dataclass
class HProfile:
    values: np.ndarray
    score: float
    local_score: float
    scale: int


def h_profile(g, scale: int = 1) -> HProfile:
    """
    h_k = sum_{j<=k} g_j^2. score = max_k |h_k - k h_2N / 2N| / h_2N; local_score is the
    largest relative deviation of h over windows of `scale` Majoranas from its mean slope.
    """
    g = np.asarray(getattr(g, "values", g), dtype=float)
    size = g.size
    h = np.cumsum(g ** 2)
    total = h[-1]
    k = np.arange(1, size + 1)
    score = float(np.abs(h - k * total / size).max() / total)
    scale = max(1, min(int(scale), size))
    padded = np.concatenate([[0.0], h, h[-1] + h])
    increments = padded[scale:scale + size] - padded[:size]
    expected = scale * total / size
    local = float(np.abs(increments - expected).max() / expected)
    return HProfile(h, score, local, scale)


# =============================================================================
# Self-similarity
# =============================================================================
def sequence_fidelity(g, g_other) -> float:
    g = np.asarray(getattr(g, "values", g), dtype=float)
    g_other = np.asarray(getattr(g_other, "values", g_other), dtype=float)
    if g.shape != g_other.shape:
        raise DimensionError(f"Sequences of lengths {g.size} and {g_other.size} cannot be compared")
    norm = np.linalg.norm(g) * np.linalg.norm(g_other)
    if norm == 0:
        raise FitError("Sequence fidelity of a zero vector")
    return float(np.dot(g, g_other) / norm)


def _windows(g: np.ndarray, length: int) -> np.ndarray:
    index = (np.arange(g.size)[:, None] + np.arange(length)[None, :]) % g.size
    return g[index]


def aligned_fidelity(g_small, g_large):
    """
    Best fidelity of g_small against every cyclic window of g_large with the same length.
    Returns (fidelity, offset).
    """
    g_small = np.asarray(getattr(g_small, "values", g_small), dtype=float)
    g_large = np.asarray(getattr(g_large, "values", g_large), dtype=float)
    if g_small.size > g_large.size:
        raise DimensionError("The reference sequence is longer than the target")
    windows = _windows(g_large, g_small.size)
    scores = windows @ g_small / (np.linalg.norm(windows, axis=1) * np.linalg.norm(g_small))
    offset = int(np.argmax(np.round(scores, 14)))
    return float(scores[offset]), offset


@dataclass
class TranslationScan:
    offsets: np.ndarray
    fidelity: np.ndarray
    baseline: float
    peaks: np.ndarray


def translation_scan(g, length: int, threshold: Optional[float] = None) -> TranslationScan:
    """
    F(delta) between the subsystem g[0..l) and g[delta..delta+l) for every cyclic offset, l < 2N/3
    for the 2N Majorana entries of g.
    """
    g = np.asarray(getattr(g, "values", g), dtype=float)
    threshold = settings().disorder["peak_threshold"] if threshold is None else threshold
    if not 0 < 3 * length < g.size:
        raise ValueError(f"Subsystem length {length} outside (0, {g.size / 3:.1f})")
    windows = _windows(g, length)
    reference = windows[0]
    fidelity = windows @ reference / (np.linalg.norm(windows, axis=1) * np.linalg.norm(reference))
    offsets = np.arange(g.size)
    peaks = offsets[(fidelity > threshold) & (offsets > 0)]
    return TranslationScan(offsets, fidelity, float(np.median(fidelity)), peaks)


def coarse_grain(g, parents: Sequence[int]) -> DisorderVector:
    """
    Averages g over the entries that share a parent index.
    """
    g = np.asarray(getattr(g, "values", g), dtype=float)
    parents = np.asarray(parents, dtype=int)
    if parents.shape != g.shape:
        raise DimensionError("Every entry needs a parent index")
    counts = np.bincount(parents)
    if np.any(counts == 0):
        raise ValueError("Parent indices must cover 0..max without gaps")
    return DisorderVector(np.bincount(parents, weights=g) / counts)


def majorana_parents(vertex_parents: Sequence[int], coarse_sites: int) -> np.ndarray:
    """
    Lifts a boundary-vertex ancestor map to Majoranas: gamma_{2i-1} and gamma_{2i} sit at
    vertex i and inherit the matching Majorana of its parent vertex.
    """
    vertex_parents = np.asarray(vertex_parents, dtype=int)
    n_sites = vertex_parents.size
    index = np.arange(2 * n_sites)
    vertex = ((index + 1) // 2) % n_sites
    parent = vertex_parents[vertex]
    return np.where(index % 2 == 1, 2 * parent - 1, 2 * parent) % (2 * coarse_sites)


# =============================================================================
# Auto-correlations and two-point functions
# =============================================================================
def _pair_autocorrelation(g: np.ndarray, separation: int, parity: int) -> float:
    size = g.size
    index = 2 * np.arange(size // 2) + parity
    return float(np.sum(g[index] * g[(index + separation) % size]))


def disorder_autocorrelation(g, block: int, d: int) -> float:
    """
    block 1: sum_k g_{2k+1} g_{2k+1+d}; block 2: sum_k g_{2k} g_{2k+1} g_{2k+2d} g_{2k+2d+1}.
    """
    g = np.asarray(getattr(g, "values", g), dtype=float)
    size = g.size
    if block == 1:
        return _pair_autocorrelation(g, d, 1)
    if block == 2:
        index = 2 * np.arange(size // 2)
        pair = g[index] * g[index + 1]
        shifted = (index + 2 * d) % size
        return float(np.sum(pair * g[shifted] * g[(shifted + 1) % size]))
    raise ValueError(f"block must be 1 or 2, got {block}")


def _twisted(gamma: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    size = gamma.shape[0]
    signs = np.where((rows // size + cols // size) % 2 == 0, 1.0, -1.0)
    return signs * gamma[rows % size, cols % size]


def averaged_two_point(gamma, g, distances: Optional[Iterable[int]] = None) -> pd.DataFrame:
    """
    Site-averaged <psi psi>(d) and connected <eps eps>(d), directly from Gamma and through the
    factorized form Gamma'(m) G(m), with relative deviations.
    """
    gamma = np.asarray(gamma, dtype=float)
    g = np.asarray(getattr(g, "values", g), dtype=float)
    size = gamma.shape[0]
    n_sites = size // 2
    distances = list(range(1, n_sites // 2)) if distances is None else list(distances)
    sites = np.arange(n_sites)
    profile = correlation_profile(gamma)

    def reduced(m: int) -> float:
        # Gamma'(m): signed translation-invariant part at Majorana separation m
        mean = _twisted(gamma, 2 * sites, 2 * sites + m).mean() + _twisted(gamma, 2 * sites + 1, 2 * sites + 1 + m).mean()
        return float(np.sign(mean) * profile[m % size])

    rows = []
    for d in distances:
        first = _twisted(gamma, 2 * sites + 1, 2 * sites + 2 * d)
        second = _twisted(gamma, 2 * sites, 2 * sites + 2 * d + 1)
        psi_direct = float(np.mean(first + second) / 4)
        eps_direct = float(np.mean(first * second) / 4)
        psi_factor = (reduced(2 * d - 1) * _pair_autocorrelation(g, 2 * d - 1, 1)
                      + reduced(2 * d + 1) * _pair_autocorrelation(g, 2 * d + 1, 0)) / (4 * n_sites)
        eps_factor = reduced(2 * d + 1) * reduced(2 * d - 1) * disorder_autocorrelation(g, 2, d) / (4 * n_sites)
        rows.append({
            "d": d,
            "psipsi_direct": psi_direct,
            "psipsi_factorized": psi_factor,
            "psipsi_deviation": _relative(psi_factor, psi_direct),
            "epseps_direct": eps_direct,
            "epseps_factorized": eps_factor,
            "epseps_deviation": _relative(eps_factor, eps_direct),
        })
    return pd.DataFrame(rows)


def _relative(value: float, reference: float) -> float:
    return abs(value - reference) / abs(reference) if reference != 0 else float("nan")
