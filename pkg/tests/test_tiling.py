import pytest
import numpy as np

from src.exceptions import AlphabetError, GeometryError, SpectralError
from src.tiling import *

golden = (1 + np.sqrt(5)) / 2

inflation_cases = {
    "37_seed": {"rule": ("known", (3, 7)), "word": "bbb", "steps": 1, "expected": "gggrgggrgggr"},
    "37_grgg": {"rule": ("known", (3, 7)), "word": "grgg", "steps": 1, "expected": "ggrgrggrggr"},
    "fibonacci": {"rule": ("sequence", "fibonacci"), "word": "aaa", "steps": 1, "expected": "ababab"},
    "45_seed": {"rule": ("known", (4, 5)), "word": "bbbb", "steps": 1, "expected": "gbgbg" * 4},
    "zero_steps": {"rule": ("known", (3, 7)), "word": "grgg", "steps": 0, "expected": "grgg"},
}

scaling_cases = {
    "37": {"rule": ("known", (3, 7)), "expected": (3 + np.sqrt(5)) / 2},
    "45": {"rule": ("known", (4, 5)), "expected": 2 + np.sqrt(3)},
    "fibonacci": {"rule": ("sequence", "fibonacci"), "expected": golden},
    "doubling": {"rule": ("sequence", "doubling"), "expected": 2.0},
}

tiling_cases = {
    "37_n0": {"p": 3, "q": 7, "n": 0, "boundary": 3, "tiles": 1},
    "37_n1": {"p": 3, "q": 7, "n": 1, "boundary": 12, "tiles": 16},
    "37_n2": {"p": 3, "q": 7, "n": 2, "boundary": 33, "tiles": None},
    "45_n1": {"p": 4, "q": 5, "n": 1, "boundary": 20, "tiles": None},
    "45_n2": {"p": 4, "q": 5, "n": 2, "boundary": None, "tiles": None},
}


def make_rule(kind):
    source, key = kind
    return known_rule(*key) if source == "known" else sequence_rule(key)


@pytest.fixture
def tiling_37():
    return build_tiling(3, 7, 2)


@pytest.mark.parametrize("id, setting", inflation_cases.items())
def test_01_inflate(id, setting):
    rule = make_rule(setting["rule"])
    seq = LetterSequence.from_word(setting["word"], rule.alphabet)
    assert inflate(seq, rule, setting["steps"]).word == setting["expected"]


def test_02_inflate_unknown_letter():
    rule = known_rule(3, 7)
    seq = LetterSequence.from_word("ab", ("a", "b"))
    with pytest.raises(AlphabetError):
        inflate(seq, rule, 1)


@pytest.mark.parametrize("id, setting", scaling_cases.items())
def test_03_scaling_factor(id, setting):
    assert scaling_factor(make_rule(setting["rule"])) == pytest.approx(setting["expected"], abs=1e-12)


def test_04_scaling_factor_not_primitive():
    with pytest.raises(SpectralError):
        scaling_factor(InflationRule({"a": "b", "b": "a"}, name="swap"))


def test_05_length_law():
    rule = known_rule(3, 7)
    seed = seed_sequence(3)
    assert [predicted_length(seed, rule, n) for n in range(6)] == [3, 12, 33, 87, 228, 597]
    for n in range(9):
        assert len(inflate(seed, rule, n)) == predicted_length(seed, rule, n)


def test_06_grgg_self_similarity():
    rule = known_rule(3, 7)
    seq = LetterSequence.from_word("grgg", rule.alphabet)
    inflated = inflate(seq, rule, 3)
    assert len(inflated) == 76
    assert find_subword(inflated, "grgg")
    assert (76 / 4) ** (1 / 3) == pytest.approx(19 ** (1 / 3), abs=1e-12)


def test_07_b_never_reappears():
    rule = known_rule(3, 7)
    word = inflate(seed_sequence(3), rule, 4).word
    assert "b" not in word
    assert rule.recurrent_letters == ("g", "r")


@pytest.mark.parametrize("p, q", [(3, 7), (4, 5)])
def test_08_derived_rule_matches_configuration(p, q):
    derived = inflation_rule(p, q)
    configured = known_rule(p, q)
    assert derived.alphabet == configured.alphabet
    assert derived.replacements == configured.replacements


@pytest.mark.parametrize("p, q", [(3, 6), (4, 4), (6, 3), (2, 9)])
def test_09_non_hyperbolic(p, q):
    with pytest.raises(GeometryError):
        build_tiling(p, q, 1)


@pytest.mark.parametrize("id, setting", tiling_cases.items())
def test_10_build_tiling(id, setting):
    p, q, n = setting["p"], setting["q"], setting["n"]
    tiling = build_tiling(p, q, n)
    if setting["boundary"] is not None:
        assert tiling.boundary_size == setting["boundary"]
    if setting["tiles"] is not None:
        assert len(tiling.tiles) == setting["tiles"]
    assert len(tiling.boundary_vertices) == len(tiling.boundary_edges)

    # Classification read from the structure equals the inflated seed
    expected = inflate(seed_sequence(p), inflation_rule(p, q), n).word
    assert tiling.boundary_word.word == expected

    # Interior vertices touch q tiles, every tile is a p-gon
    counts = tiling.vertex_tile_counts()
    assert all(counts[v] == q for v in tiling.interior_vertices())
    assert all(len(tile.vertices) == p for tile in tiling.tiles)

    # Boundary edges carry one tile, interior edges two
    boundary = set(tiling.boundary_edges)
    for edge in tiling.edges:
        assert len(edge.tiles) == (1 if edge.id in boundary else 2)


def test_11_single_triangle():
    tiling = build_tiling(3, 7, 0)
    assert tiling.boundary_word.word == "bbb"
    assert tiling.interior_vertices() == []


def test_12_boundary_edges_join_consecutive_vertices(tiling_37):
    size = tiling_37.boundary_size
    for i, edge_id in enumerate(tiling_37.boundary_edges):
        u, v = tiling_37.boundary_vertices[i], tiling_37.boundary_vertices[(i + 1) % size]
        assert set(tiling_37.edges[edge_id].vertices) == {u, v}


def test_13_contraction_schedules(tiling_37):
    ccw = contraction_schedule(tiling_37, "layer_ccw")
    cw = contraction_schedule(tiling_37, "layer_cw")
    assert ccw == list(range(len(tiling_37.tiles)))
    assert cw[0] == 0 and sorted(cw) == ccw
    with pytest.raises(ValueError):
        contraction_schedule(tiling_37, "spiral")


def test_14_tile_neighbours(tiling_37):
    ring = tile_neighbours(tiling_37, 0)
    assert len(ring) == 3
    assert all(tiling_37.tiles[t].layer == 1 for t in ring)
    for t in ring:
        assert tiling_37.edge_between(0, t) is not None


def test_15_boundary_rotation(tiling_37):
    rotated = boundary_rotation(tiling_37, 5)
    assert rotated.boundary_vertices[0] == tiling_37.boundary_vertices[5]
    assert rotated.boundary_edges[-5] == tiling_37.boundary_edges[0]
    assert rotated.boundary_word.word == tiling_37.boundary_word.word[5:] + tiling_37.boundary_word.word[:5]
    assert boundary_rotation(tiling_37, tiling_37.boundary_size).boundary_vertices == tiling_37.boundary_vertices


def test_16_vertex_symmetries(tiling_37):
    generators = vertex_symmetries(tiling_37)
    identity = np.arange(tiling_37.vertex_count)
    rotation, reflection = generators["rotation"], generators["reflection"]
    assert np.array_equal(rotation[rotation[rotation]], identity)
    assert np.array_equal(reflection[reflection], identity)
    assert sorted(rotation.tolist()) == identity.tolist()


def test_17_tile_orbits(tiling_37):
    orbits = tile_orbits(tiling_37, 1)
    assert sorted(len(orbit) for orbit in orbits) == [1, 3, 6, 6]
    assert orbits[0] == [0]
    assert sum(len(orbit) for orbit in tile_orbits(tiling_37)) == len(tiling_37.tiles)


def test_18_tiling_json(tiling_37):
    document = tiling_to_json(tiling_37)
    assert document["schema"] == "tiling-v1"
    assert document["layers"][-1] == tiling_37.boundary_word.word
    assert len(document["boundary"]["edges"]) == 33


def test_19_tiling_json_follows_rotated_origin(tiling_37):
    rotated = boundary_rotation(tiling_37, 5)
    assert tiling_to_json(tiling_37)["boundary"]["origin"] == tiling_37.boundary_vertices[0]
    document = tiling_to_json(rotated)
    assert document["boundary"]["origin"] == tiling_37.boundary_vertices[5]
    assert document["boundary"]["vertices"][0] == document["boundary"]["origin"]
