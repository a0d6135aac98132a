"""
This module builds the multi-scale quasicrystal ansatz (MQA) for boundary couplings.
- MQAStack: inflation layers of a seed with the ancestor of every final-layer column
- MQAWeights: positive weight j_l per letter
- CouplingVector: 2N nearest-neighbour couplings; the odd entries J_{2i+1} link sites i, i+1

The MQA coupling of column c is the product of the weights of its ancestor letters over all
layers. Requiring the weighted substitution matrix to keep the Perron eigenvalue fixes one
weight as a function of the free one.

Dependencies:
- tiling.py: inflation rules and letter sequences
- run_config.py: fit tolerance
- numpy, scipy.optimize
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
import logging

import numpy as np
from scipy.optimize import minimize_scalar

from src.exceptions import AlphabetError, ConstraintError, DimensionError, FitError
from src.run_config import settings
from src.tiling import InflationRule, LetterSequence, inflate, scaling_factor
from src.utils import DataUtilities


@dataclass
class MQAWeights:
    values: Dict[str, float]

    def __post_init__(self):
        self.values = {letter: float(v) for letter, v in self.values.items()}
        bad = [letter for letter, v in self.values.items() if not v > 0]
        if bad:
            raise ConstraintError(f"MQA weights must be positive; offending letters: {bad}")

    def __getitem__(self, letter: str) -> float:
        try:
            return self.values[letter]
        except KeyError:
            raise AlphabetError(f"No MQA weight for letter '{letter}'")


@dataclass
class CouplingVector:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size % 2:
            raise DimensionError("Coupling vector must hold an even number of entries")

    @property
    def inter_site(self) -> np.ndarray:
        return self.values[1::2]

    @classmethod
    def from_disorder(cls, g) -> "CouplingVector":
        """
        J_k = 1 / (g_k g_{k+1}) with cyclic indices.
        """
        g = np.asarray(getattr(g, "values", g), dtype=float)
        return cls(1.0 / (g * np.roll(g, -1)))


def complete_couplings(inter_site: Sequence[float]) -> CouplingVector:
    """
    Fills the intra-site couplings with the midpoint rule J_{2i} = (J_{2i-1} + J_{2i+1}) / 2.
    """
    inter_site = np.asarray(inter_site, dtype=float)
    full = np.zeros(2 * inter_site.size)
    full[1::2] = inter_site
    full[0::2] = (np.roll(inter_site, 1) + inter_site) / 2
    return CouplingVector(full)


def links_to_vertices(inter_site: Sequence[float]) -> np.ndarray:
    """
    Reindexes inter-site couplings by boundary vertex: link i sits on vertex i + 1.
    """
    return np.roll(np.asarray(inter_site, dtype=float), 1)


# =============================================================================
# Stack
# =============================================================================
@dataclass
class MQAStack:
    """
    :param layers: inflate(seed, r) for r = 0..n
    :param ancestors: (n+1) x width array; ancestors[r, c] indexes layer r
    """
    layers: List[LetterSequence]
    ancestors: np.ndarray
    rule: InflationRule = field(repr=False, default=None)

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def width(self) -> int:
        return self.ancestors.shape[1]

    def letter_matrix(self) -> List[str]:
        """
        Rows of the stack expanded to the final width by ancestor duplication.
        """
        return ["".join(layer.word[i] for i in row) for layer, row in zip(self.layers, self.ancestors)]


def build_stack(rule: InflationRule, seed: str, n: int) -> MQAStack:
    """
    Example Usage:
    stack = build_stack(known_rule(3, 7), "g", 2)
    stack.letter_matrix()  # ['gggggggg', 'ggggggrr', 'ggrggrgr']
    """
    if n < 1:
        raise ValueError("An MQA stack needs n >= 1")
    layers = [LetterSequence.from_word(seed, rule.alphabet, cyclic=True, layer=0)]
    parents = []
    for _ in range(n):
        previous = layers[-1]
        lengths = [len(rule.replacements[ch]) for ch in previous.word]
        parents.append(np.repeat(np.arange(len(previous)), lengths))
        layers.append(inflate(previous, rule, 1))
    width = len(layers[-1])
    ancestors = np.zeros((n + 1, width), dtype=np.int64)
    ancestors[n] = np.arange(width)
    for r in range(n - 1, -1, -1):
        ancestors[r] = parents[r][ancestors[r + 1]]
    return MQAStack(layers, ancestors, rule)


def column_products(stack: MQAStack, weights) -> np.ndarray:
    if not isinstance(weights, MQAWeights):
        weights = MQAWeights(dict(weights))
    products = np.ones(stack.width)
    for layer, row in zip(stack.layers, stack.ancestors):
        table = np.array([weights[letter] if letter in layer.word else 1.0 for letter in layer.alphabet])
        products *= table[layer.codes[row]]
    return products


def reflection_axis(stack: MQAStack) -> Optional[int]:
    """
    Smallest s with column c and column s - c (mod width) sharing every ancestor letter.
    """
    rows = stack.letter_matrix()
    width = stack.width
    index = np.arange(width)
    codes = np.array([[ord(ch) for ch in row] for row in rows])
    for s in range(width):
        if np.array_equal(codes, codes[:, (s - index) % width]):
            return s
    return None


def max_product_fraction(stack: MQAStack, letter: str) -> float:
    """
    Fraction of columns whose ancestors below the seed layer are all `letter`.
    """
    rows = stack.letter_matrix()[1:]
    matches = np.ones(stack.width, dtype=bool)
    for row in rows:
        matches &= np.array([ch == letter for ch in row])
    return float(matches.mean())


def stack_to_json(stack: MQAStack) -> Dict:
    return {
        "layers": [layer.word for layer in stack.layers],
        "ancestors": stack.ancestors.tolist(),
        "alphabet": list(stack.layers[0].alphabet),
    }


# =============================================================================
# Weighted substitution
# =============================================================================
def modified_substitution(rule: InflationRule, weights):
    """
    M' = M with column l multiplied by j_l. Returns (M', lambda') with lambda' the Perron
    eigenvalue on the recurrent letters.
    """
    if not isinstance(weights, MQAWeights):
        weights = MQAWeights(dict(weights))
    scale = np.array([weights[letter] for letter in rule.alphabet])
    matrix = rule.substitution_matrix * scale[None, :]
    rows = [rule.index(letter) for letter in rule.recurrent_letters]
    eigenvalues = np.linalg.eigvals(matrix[np.ix_(rows, rows)])
    return matrix, float(np.max(eigenvalues.real))


def weighted_counts(rule: InflationRule, seed: str, weights, n: int) -> np.ndarray:
    """
    v'(n) = v'(0) M'^n with v'(0) the seed letter counts times their weights.
    """
    if not isinstance(weights, MQAWeights):
        weights = MQAWeights(dict(weights))
    matrix, _ = modified_substitution(rule, weights)
    counts = np.array([seed.count(letter) * weights[letter] if letter in seed else 0.0 for letter in rule.alphabet])
    return counts @ np.linalg.matrix_power(matrix, n)


def average_coupling(rule: InflationRule, seed: str, weights, n: int) -> float:
    """
    <j>(n) = sum v'(n) / sum v(n): the mean column product after n inflations.
    """
    counts = np.array([seed.count(letter) for letter in rule.alphabet], dtype=float)
    plain = counts @ np.linalg.matrix_power(rule.substitution_matrix.astype(float), n)
    return float(weighted_counts(rule, seed, weights, n).sum() / plain.sum())


def admissible_interval(rule: InflationRule, free_letter: str):
    """
    [1, upper): upper is where the dependent weight of a two-letter constraint vanishes.
    """
    free, _, m11, _, _, _ = _constraint_entries(rule, free_letter)
    return 1.0, scaling_factor(rule) / m11


def _constraint_entries(rule: InflationRule, free_letter: str):
    recurrent = rule.recurrent_letters
    if len(recurrent) != 2:
        raise ConstraintError(f"Closed-form constraint needs two recurrent letters, got {recurrent}")
    if free_letter not in recurrent:
        raise ConstraintError(f"Free letter '{free_letter}' is not recurrent in {recurrent}")
    dependent = recurrent[1] if recurrent[0] == free_letter else recurrent[0]
    M = rule.substitution_matrix
    f, d = rule.index(free_letter), rule.index(dependent)
    return free_letter, dependent, M[f, f], M[f, d], M[d, f], M[d, d]


def constrain_weights(rule: InflationRule, free_weight: float, free_letter: str,
                      extra: Optional[Dict[str, float]] = None) -> MQAWeights:
    """
    Solves lambda' = lambda for the dependent recurrent weight:
    w2 = lam (m11 w1 - lam) / (m22 (m11 w1 - lam) - m12 m21 w1).
    Letters outside the recurrent pair get weight 1 unless given in `extra`.
    """
    free, dependent, m11, m12, m21, m22 = _constraint_entries(rule, free_letter)
    lam = scaling_factor(rule)
    low, high = 1.0, lam / m11
    w1 = float(free_weight)
    if not low <= w1 < high:
        logging.error(f"Failed to constrain weights: j_{free} = {w1} outside [{low}, {high:.6f})")
        raise ConstraintError(f"j_{free} = {w1} outside the admissible interval [{low}, {high:.6f})")
    shifted = m11 * w1 - lam
    w2 = lam * shifted / (m22 * shifted - m12 * m21 * w1)
    if not w2 > 0:
        raise ConstraintError(f"Dependent weight j_{dependent} = {w2} is not positive")
    values = {letter: 1.0 for letter in rule.alphabet}
    values.update(extra or {})
    values[free] = w1
    values[dependent] = w2
    return MQAWeights(values)


# =============================================================================
# Fit
# =============================================================================
@dataclass
class MQAFit:
    weights: MQAWeights
    residual: float
    shift: int
    scale: float
    couplings: np.ndarray
    target: np.ndarray
    axis: Optional[int]


def symmetrize(values: np.ndarray, axis: Optional[int]) -> np.ndarray:
    if axis is None:
        return values
    index = np.arange(values.size)
    return (values + values[(axis - index) % values.size]) / 2


def _aligned_residual(model: np.ndarray, target: np.ndarray):
    best = (np.inf, 0)
    for shift in range(target.size):
        residual = np.sqrt(np.mean((model - DataUtilities.cyclic_shift(target, shift)) ** 2))
        if residual < best[0] - 1e-15:
            best = (residual, shift)
    return best


def fit_weights(rule: InflationRule, seed: str, n: int, target, free_letter: str) -> MQAFit:
    """
    One-parameter bounded search along the constraint curve. The target (indexed by boundary
    vertex) is normalized to mean 1 and symmetrized about the stack's reflection axis; model
    couplings are normalized to mean 1 and compared after the best cyclic shift.
    """
    stack = build_stack(rule, seed, n)
    target = np.asarray(target, dtype=float)
    if target.size != stack.width:
        raise DimensionError(f"Target has {target.size} couplings, the MQA stack has {stack.width} columns")
    axis = reflection_axis(stack)
    if axis is None:
        logging.warning("MQA stack has no reflection axis; fitting the raw target")
    target = symmetrize(DataUtilities.normalize_mean(target), axis)
    low, high = admissible_interval(rule, free_letter)

    def objective(w1):
        products = column_products(stack, constrain_weights(rule, w1, free_letter))
        return _aligned_residual(products / products.mean(), target)[0]

    result = minimize_scalar(objective, bounds=(low, high * (1 - 1e-9)), method="bounded",
                             options={"xatol": settings().mqa["fit_xatol"]})
    if not result.success or not np.isfinite(result.fun):
        logging.error(f"Failed to fit MQA weights: {result.message}")
        raise FitError(f"No admissible MQA optimum: {result.message}")

    weights = constrain_weights(rule, result.x, free_letter)
    products = column_products(stack, weights)
    scale = 1.0 / products.mean()
    # Seed-letter weight carries the overall normalization when it is not recurrent
    seed_letters = set(seed) - set(rule.recurrent_letters)
    if len(seed_letters) == 1:
        letter = seed_letters.pop()
        weights = MQAWeights({**weights.values, letter: weights[letter] * scale})
    residual, shift = _aligned_residual(products * scale, target)
    return MQAFit(weights, float(residual), int(shift), float(scale), products * scale, target, axis)
