import pytest
import numpy as np

from src.exceptions import AlphabetError, ConstraintError, DimensionError
from src.mqa import *
from src.disorder import decay_adjust, extract_disorder
from src.network import BulkInput, contract_network, find_critical_point
from src.tiling import build_tiling, inflation_rule, known_rule, scaling_factor

constraint_cases = {
    "37_g": {"key": (3, 7), "free": "g", "weight": 1.14, "dependent": "r", "expected": 0.5988},
    "45_b": {"key": (4, 5), "free": "b", "weight": 1.55, "dependent": "g", "expected": 0.3988},
}

interval_cases = {
    "37_g": {"key": (3, 7), "free": "g", "upper": (3 + np.sqrt(5)) / 4},
    "45_b": {"key": (4, 5), "free": "b", "upper": (2 + np.sqrt(3)) / 2},
}


@pytest.fixture
def rule_37():
    return known_rule(3, 7)


@pytest.fixture
def stack_g2(rule_37):
    return build_stack(rule_37, "g", 2)


def test_01_build_stack(stack_g2):
    assert stack_g2.letter_matrix() == ["gggggggg", "ggggggrr", "ggrggrgr"]
    assert stack_g2.depth == 2
    assert stack_g2.ancestors[1].tolist() == [0, 0, 0, 1, 1, 1, 2, 2]
    assert stack_to_json(stack_g2)["layers"] == ["g", "ggr", "ggrggrgr"]
    with pytest.raises(ValueError):
        build_stack(known_rule(3, 7), "g", 0)


def test_02_column_products(stack_g2):
    products = column_products(stack_g2, {"b": 1.0, "g": 2.0, "r": 3.0})
    assert products.tolist() == [8.0, 8.0, 12.0, 8.0, 8.0, 12.0, 12.0, 18.0]
    assert max_product_fraction(stack_g2, "g") == pytest.approx(0.5)


def test_03_weights_must_be_positive():
    with pytest.raises(ConstraintError):
        MQAWeights({"g": 0.0})
    with pytest.raises(AlphabetError):
        MQAWeights({"g": 1.0})["r"]


def test_04_average_coupling(rule_37, stack_g2):
    weights = {"b": 1.0, "g": 2.0, "r": 3.0}
    assert weighted_counts(rule_37, "g", weights, 2).tolist() == [0.0, 44.0, 42.0]
    assert average_coupling(rule_37, "g", weights, 2) == pytest.approx(column_products(stack_g2, weights).mean())
    assert average_coupling(rule_37, "bbb", {"b": 1.0, "g": 1.0, "r": 1.0}, 4) == pytest.approx(1.0)


@pytest.mark.parametrize("id, setting", constraint_cases.items())
def test_05_constrain_weights(id, setting):
    rule = known_rule(*setting["key"])
    weights = constrain_weights(rule, setting["weight"], setting["free"])
    assert weights[setting["free"]] == pytest.approx(setting["weight"])
    assert weights[setting["dependent"]] == pytest.approx(setting["expected"], abs=1e-4)
    _, eigenvalue = modified_substitution(rule, weights)
    assert eigenvalue == pytest.approx(scaling_factor(rule), abs=1e-9)


@pytest.mark.parametrize("id, setting", interval_cases.items())
def test_06_admissible_interval(id, setting):
    rule = known_rule(*setting["key"])
    low, high = admissible_interval(rule, setting["free"])
    assert low == 1.0
    assert high == pytest.approx(setting["upper"], abs=1e-12)
    with pytest.raises(ConstraintError):
        constrain_weights(rule, high + 0.01, setting["free"])
    with pytest.raises(ConstraintError):
        constrain_weights(rule, 0.9, setting["free"])


def test_07_constraint_needs_recurrent_letter(rule_37):
    with pytest.raises(ConstraintError):
        constrain_weights(rule_37, 1.1, "b")


def test_08_couplings():
    assert np.allclose(CouplingVector.from_disorder(np.ones(6)).values, 1.0)
    assert np.allclose(CouplingVector.from_disorder([1.0, 2.0]).values, [0.5, 0.5])
    assert complete_couplings([1.0, 3.0]).values.tolist() == [2.0, 1.0, 2.0, 3.0]
    assert complete_couplings([1.0, 3.0]).inter_site.tolist() == [1.0, 3.0]
    assert links_to_vertices([1.0, 2.0, 3.0]).tolist() == [3.0, 1.0, 2.0]
    with pytest.raises(DimensionError):
        CouplingVector([1.0, 2.0, 3.0])


def test_09_symmetrize():
    assert symmetrize(np.array([1.0, 2.0, 3.0, 4.0]), 0).tolist() == [1.0, 3.0, 3.0, 3.0]
    assert symmetrize(np.array([1.0, 2.0]), None).tolist() == [1.0, 2.0]


def test_10_fit_recovers_constrained_weights(rule_37):
    stack = build_stack(rule_37, "g", 3)
    products = column_products(stack, constrain_weights(rule_37, 1.2, "g"))
    fit = fit_weights(rule_37, "g", 3, products, "g")
    assert fit.residual < 1e-4
    assert fit.weights["g"] == pytest.approx(1.2, abs=1e-3)
    assert fit.couplings.mean() == pytest.approx(1.0)


def test_11_fit_rejects_wrong_width(rule_37):
    with pytest.raises(DimensionError):
        fit_weights(rule_37, "g", 2, np.ones(7), "g")


def test_12_fit_network_disorder():
    tiling = build_tiling(3, 7, 2)
    point = find_critical_point(tiling)
    state = contract_network(tiling, BulkInput(p=3, bulk=point.params))
    g = extract_disorder(decay_adjust(state.covariance), [1, 3]).values
    target = links_to_vertices(CouplingVector.from_disorder(g).inter_site)
    rule = inflation_rule(3, 7)

    fit = fit_weights(rule, "bbb", 2, target, "g")
    low, high = admissible_interval(rule, "g")
    assert low <= fit.weights["g"] < high
    assert fit.couplings.size == 33
    assert fit.couplings.mean() == pytest.approx(1.0)

    flat = np.sqrt(np.mean((fit.target - 1.0) ** 2))
    assert fit.residual <= flat + 1e-3
    _, eigenvalue = modified_substitution(rule, fit.weights)
    assert eigenvalue == pytest.approx(scaling_factor(rule), rel=1e-6)
