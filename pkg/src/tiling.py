"""
This module generates regular hyperbolic {p,q} tilings by vertex inflation.
- InflationRule: letter substitution with its substitution matrix and scaling factor
- LetterSequence: cyclic word over a letter alphabet stored as an integer array
- Tiling: combinatorial tiles/edges/boundary produced by the vertex-closing sweep

Boundary vertices are classified by the number of edges they share with the interior:
b (0), g (1), r (2). One sweep step turns every boundary vertex into an interior vertex by
adding the missing tiles around it, which acts on the boundary word as the inflation rule.

Dependencies:
- run_config.py: tiling_config.json settings (known rules and seeds)
- exceptions.py
"""

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from src.exceptions import AlphabetError, GeometryError, SpectralError, SymmetryError
from src.run_config import settings

LETTER_TAGS = ("b", "g", "r")

# =============================================================================
# Letter sequences and inflation rules
# =============================================================================
@dataclass(frozen=True)
class InflationRule:
    """
    Letter substitution rule.
    :param replacements: letter -> nonempty replacement word
    :param alphabet: letter order used for matrices (defaults to the key order)

    Example Usage:
    rule = InflationRule({"b": "gggr", "g": "ggr", "r": "gr"}, name="{3,7}")
    rule.substitution_matrix
    """
    replacements: Dict[str, str]
    alphabet: Tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        if not self.alphabet:
            object.__setattr__(self, "alphabet", tuple(self.replacements))
        for letter in self.alphabet:
            word = self.replacements.get(letter)
            if not word:
                raise AlphabetError(f"Letter '{letter}' needs a nonempty replacement")
            unknown = set(word) - set(self.alphabet)
            if unknown:
                raise AlphabetError(f"Replacement of '{letter}' uses letters outside the alphabet: {sorted(unknown)}")

    @property
    def substitution_matrix(self) -> np.ndarray:
        size = len(self.alphabet)
        matrix = np.zeros((size, size), dtype=np.int64)
        for row, letter in enumerate(self.alphabet):
            for col, target in enumerate(self.alphabet):
                matrix[row, col] = self.replacements[letter].count(target)
        return matrix

    @property
    def recurrent_letters(self) -> Tuple[str, ...]:
        """
        Letters that keep appearing after the first inflation step.
        """
        reached = {ch for word in self.replacements.values() for ch in word}
        while True:
            grown = reached | {ch for letter in reached for ch in self.replacements[letter]}
            if grown == reached:
                break
            reached = grown
        return tuple(letter for letter in self.alphabet if letter in reached)

    def index(self, letter: str) -> int:
        try:
            return self.alphabet.index(letter)
        except ValueError:
            raise AlphabetError(f"Letter '{letter}' is not in the alphabet {self.alphabet}")


@dataclass(frozen=True)
class LetterSequence:
    codes: np.ndarray
    alphabet: Tuple[str, ...]
    cyclic: bool = True
    layer: int = 0

    @classmethod
    def from_word(cls, word: str, alphabet: Sequence[str], cyclic: bool = True, layer: int = 0) -> "LetterSequence":
        lookup = {letter: i for i, letter in enumerate(alphabet)}
        try:
            codes = np.fromiter((lookup[ch] for ch in word), dtype=np.int8, count=len(word))
        except KeyError as e:
            raise AlphabetError(f"Letter {e} is not in the alphabet {tuple(alphabet)}")
        return cls(codes=codes, alphabet=tuple(alphabet), cyclic=cyclic, layer=layer)

    @property
    def word(self) -> str:
        return "".join(self.alphabet[c] for c in self.codes)

    def __len__(self):
        return int(self.codes.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.codes, minlength=len(self.alphabet)).astype(np.int64)


def inflate(seq: LetterSequence, rule: InflationRule, steps: int) -> LetterSequence:
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if steps == 0:
        return seq
    word = seq.word
    for _ in range(steps):
        try:
            word = "".join(rule.replacements[ch] for ch in word)
        except KeyError as e:
            logging.error(f"Failed to inflate with rule '{rule.name}': unknown letter {e}")
            raise AlphabetError(f"Letter {e} is not covered by rule '{rule.name}'")
    return LetterSequence.from_word(word, rule.alphabet, cyclic=seq.cyclic, layer=seq.layer + steps)


def predicted_length(seq: LetterSequence, rule: InflationRule, steps: int) -> int:
    """
    Length law: sum of v0 M^n for the letter-count vector v0 of seq.
    """
    counts = np.array([seq.word.count(letter) for letter in rule.alphabet], dtype=np.int64)
    return int((counts @ np.linalg.matrix_power(rule.substitution_matrix, steps)).sum())


def scaling_factor(rule: InflationRule) -> float:
    letters = rule.recurrent_letters
    rows = [rule.index(letter) for letter in letters]
    sub = rule.substitution_matrix[np.ix_(rows, rows)]
    size = len(rows)

    # Primitivity: some power up to Wielandt's bound must be strictly positive
    support = (sub > 0).astype(np.int64)
    power = np.eye(size, dtype=np.int64)
    primitive = False
    for _ in range((size - 1) ** 2 + 1):
        power = np.minimum(power @ support, 1)
        if np.all(power > 0):
            primitive = True
            break
    if not primitive:
        raise SpectralError(f"Substitution matrix of '{rule.name}' is not primitive on {letters}")

    eigenvalues = np.linalg.eigvals(sub.astype(float))
    order = np.argsort(-np.abs(eigenvalues))
    leading = eigenvalues[order[0]]
    if abs(leading.imag) > 1e-12 or leading.real <= 1:
        raise SpectralError(f"No Perron eigenvalue > 1 for '{rule.name}'")
    if size > 1 and abs(eigenvalues[order[1]]) >= leading.real - 1e-12:
        raise SpectralError(f"Perron eigenvalue of '{rule.name}' is degenerate")
    return float(leading.real)


def find_subword(seq: LetterSequence, word: str) -> List[int]:
    """
    Start positions of word in seq; wraps around when seq is cyclic.
    """
    text = seq.word
    span = len(word)
    if span == 0 or span > len(text):
        return []
    haystack = text + text[:span - 1] if seq.cyclic else text
    limit = len(text) if seq.cyclic else len(text) - span + 1
    return [i for i in range(limit) if haystack.startswith(word, i)]


def known_rule(p: int, q: int) -> InflationRule:
    entry = settings().tiling(p, q)
    if entry is None:
        raise GeometryError(f"No configured inflation rule for {{{p},{q}}}")
    return InflationRule(dict(entry["rule"]), tuple(entry["alphabet"]), name=f"{{{p},{q}}}")


def sequence_rule(name: str) -> InflationRule:
    rules = settings().sequence_rules
    if name not in rules:
        raise KeyError(f"Unknown sequence rule '{name}'")
    return InflationRule(dict(rules[name]), name=name)


def seed_sequence(p: int) -> LetterSequence:
    return LetterSequence.from_word("b" * p, LETTER_TAGS, cyclic=True, layer=0)


def _check_hyperbolic(p: int, q: int):
    if p < 3 or q < 3 or p * q <= 2 * (p + q):
        raise GeometryError(f"{{{p},{q}}} is not a hyperbolic tiling (pq must exceed 2(p+q))")


def _vertex_tile_count(p: int, q: int, interior: int) -> int:
    """
    Number of tiles that fit between the radial edges of a boundary vertex.
    """
    m = q - interior - 3
    if m < 0 or (p == 3 and m < 1):
        raise GeometryError(f"Boundary vertex with {interior} interior edges cannot be closed in {{{p},{q}}}")
    return m


def inflation_rule(p: int, q: int) -> InflationRule:
    """
    Derives the vertex inflation rule produced by the vertex-closing sweep.
    """
    _check_hyperbolic(p, q)
    replacements = {}
    for interior, letter in enumerate(LETTER_TAGS):
        if p >= 4 and interior > 1:
            break
        m = _vertex_tile_count(p, q, interior)
        if p == 3:
            replacements[letter] = "g" * (m - 1) + "r"
        else:
            replacements[letter] = "g" + ("b" * (p - 3) + "g") * m + "b" * (p - 4)
    used = {ch for word in replacements.values() for ch in word} | {"b"}
    alphabet = tuple(letter for letter in LETTER_TAGS if letter in used)
    replacements = {letter: replacements[letter] for letter in alphabet}
    return InflationRule(replacements, alphabet, name=f"{{{p},{q}}}")


# =============================================================================
# Combinatorial tiling
# =============================================================================
@dataclass(frozen=True)
class Tile:
    id: int
    layer: int
    vertices: Tuple[int, ...]
    edges: Tuple[int, ...]


@dataclass(frozen=True)
class Edge:
    id: int
    vertices: Tuple[int, int]
    tiles: Tuple[int, ...]


@dataclass(frozen=True)
class Tiling:
    """
    Combinatorial {p,q} tiling after n sweep steps.
    Tile ids follow the contraction order: layer by layer, counterclockwise, each layer
    starting with the edge tile that closes the old boundary origin.
    The boundary runs counterclockwise from the vertex produced first by the old origin;
    boundary edge i joins boundary vertices i and i+1.
    """
    p: int
    q: int
    n: int
    tiles: Tuple[Tile, ...]
    edges: Tuple[Edge, ...]
    boundary_vertices: Tuple[int, ...]
    boundary_edges: Tuple[int, ...]
    layer_words: Tuple[LetterSequence, ...]
    vertex_count: int
    layer_boundaries: Tuple[Tuple[int, ...], ...] = ()

    @property
    def boundary_size(self) -> int:
        return len(self.boundary_edges)

    @property
    def boundary_word(self) -> LetterSequence:
        return self.layer_words[-1]

    @property
    def origin(self) -> int:
        return self.boundary_vertices[0]

    def tiles_in_layer(self, layer: int) -> List[int]:
        return [tile.id for tile in self.tiles if tile.layer == layer]

    def edge_between(self, tile_a: int, tile_b: int) -> Optional[int]:
        shared = set(self.tiles[tile_a].edges) & set(self.tiles[tile_b].edges)
        return shared.pop() if shared else None

    def vertex_tile_counts(self) -> np.ndarray:
        counts = np.zeros(self.vertex_count, dtype=np.int64)
        for tile in self.tiles:
            counts[list(tile.vertices)] += 1
        return counts

    def interior_vertices(self) -> List[int]:
        boundary = set(self.boundary_vertices)
        return [v for v in range(self.vertex_count) if v not in boundary]


def tile_neighbours(tiling: Tiling, tile_id: int) -> List[int]:
    neighbours = []
    for edge_id in tiling.tiles[tile_id].edges:
        neighbours.extend(t for t in tiling.edges[edge_id].tiles if t != tile_id)
    return neighbours


def contraction_schedule(tiling: Tiling, name: str = "layer_ccw") -> List[int]:
    """
    Tile absorption order. Both schedules grow the disk layer by layer; 'layer_cw' walks
    every layer clockwise after its first edge tile.
    """
    if name == "layer_ccw":
        return [tile.id for tile in tiling.tiles]
    if name == "layer_cw":
        order = [0]
        for layer in range(1, tiling.n + 1):
            ids = tiling.tiles_in_layer(layer)
            order.extend([ids[0]] + ids[:0:-1])
        return order
    raise ValueError(f"Unknown contraction schedule '{name}'")


def boundary_rotation(tiling: Tiling, steps: int) -> Tiling:
    """
    Moves the boundary origin `steps` vertices counterclockwise. Tiles and edges are unchanged.
    """
    size = tiling.boundary_size
    steps %= size
    vertices = tiling.boundary_vertices[steps:] + tiling.boundary_vertices[:steps]
    edges = tiling.boundary_edges[steps:] + tiling.boundary_edges[:steps]
    last = tiling.boundary_word
    word = LetterSequence(np.roll(last.codes, -steps), last.alphabet, cyclic=True, layer=last.layer)
    return replace(tiling, boundary_vertices=vertices, boundary_edges=edges,
                   layer_words=tiling.layer_words[:-1] + (word,))


# -----------------------------------------------------------------------------
# Dihedral symmetry of the seed tile
# -----------------------------------------------------------------------------
def vertex_symmetries(tiling: Tiling) -> Dict[str, np.ndarray]:
    """
    Vertex permutations of the two generators of the seed's dihedral group: 'rotation' by one
    seed vertex and the 'reflection' fixing seed vertex 0. Every layer boundary is mapped by an
    affine index map i -> s + e i (e = +1 or -1); s is found by requiring tiles to map onto tiles.
    """
    if not tiling.layer_boundaries:
        raise SymmetryError("Tiling carries no layer boundaries")
    lookup = {frozenset(tile.vertices): tile.id for tile in tiling.tiles}
    generators = {}
    for name, sign, offset in (("rotation", 1, 1), ("reflection", -1, 0)):
        perm = np.full(tiling.vertex_count, -1, dtype=np.int64)
        seed = tiling.layer_boundaries[0]
        for i, v in enumerate(seed):
            perm[v] = seed[(offset + sign * i) % len(seed)]
        for layer in range(1, tiling.n + 1):
            boundary = tiling.layer_boundaries[layer]
            size = len(boundary)
            tiles = [list(tiling.tiles[t].vertices) for t in tiling.tiles_in_layer(layer)]
            for shift in range(size):
                trial = perm.copy()
                for i, v in enumerate(boundary):
                    trial[v] = boundary[(shift + sign * i) % size]
                if all(frozenset(trial[vertices].tolist()) in lookup for vertices in tiles):
                    perm = trial
                    break
            else:
                raise SymmetryError(f"No {name} of layer {layer} maps tiles onto tiles")
        generators[name] = perm
    return generators


def tile_orbits(tiling: Tiling, max_layer: Optional[int] = None) -> List[List[int]]:
    """
    Orbits of tiles in layers <= max_layer under the seed's dihedral group, ordered by their
    smallest tile id.
    """
    max_layer = tiling.n if max_layer is None else min(max_layer, tiling.n)
    lookup = {frozenset(tile.vertices): tile.id for tile in tiling.tiles}
    maps = []
    for perm in vertex_symmetries(tiling).values():
        maps.append([lookup[frozenset(perm[list(tile.vertices)].tolist())] for tile in tiling.tiles])

    seen, orbits = set(), []
    for tile in tiling.tiles:
        if tile.layer > max_layer or tile.id in seen:
            continue
        orbit, stack = {tile.id}, [tile.id]
        while stack:
            current = stack.pop()
            for image in (m[current] for m in maps):
                if image not in orbit:
                    orbit.add(image)
                    stack.append(image)
        seen |= orbit
        orbits.append(sorted(orbit))
    return orbits


class _TilingBuilder:
    def __init__(self, p: int, q: int):
        self.p = p
        self.q = q
        self.vertex_count = 0
        self.tiles: List[Tile] = []
        self.edge_lookup: Dict[Tuple[int, int], int] = {}
        self.edge_vertices: List[Tuple[int, int]] = []
        self.edge_tiles: List[List[int]] = []
        self.adjacency: Dict[int, set] = {}

    def new_vertex(self) -> int:
        vertex = self.vertex_count
        self.vertex_count += 1
        self.adjacency[vertex] = set()
        return vertex

    def edge(self, u: int, v: int) -> int:
        key = (min(u, v), max(u, v))
        if key not in self.edge_lookup:
            self.edge_lookup[key] = len(self.edge_vertices)
            self.edge_vertices.append(key)
            self.edge_tiles.append([])
            self.adjacency[u].add(v)
            self.adjacency[v].add(u)
        return self.edge_lookup[key]

    def add_tile(self, vertices: Sequence[int], layer: int) -> int:
        if len(vertices) != self.p or len(set(vertices)) != self.p:
            raise GeometryError(f"Tile {vertices} is not a {self.p}-gon")
        tile_id = len(self.tiles)
        edges = []
        for i, u in enumerate(vertices):
            edge_id = self.edge(u, vertices[(i + 1) % self.p])
            self.edge_tiles[edge_id].append(tile_id)
            edges.append(edge_id)
        self.tiles.append(Tile(tile_id, layer, tuple(vertices), tuple(edges)))
        return tile_id

    def classify(self, boundary: Sequence[int]) -> List[int]:
        """
        Interior edge count of every boundary vertex, read from the adjacency.
        """
        on_boundary = set(boundary)
        return [sum(1 for w in self.adjacency[v] if w not in on_boundary) for v in boundary]

    def word(self, boundary: Sequence[int], layer: int) -> LetterSequence:
        counts = self.classify(boundary)
        if max(counts) >= len(LETTER_TAGS):
            raise GeometryError(f"Boundary vertex with {max(counts)} interior edges has no letter")
        return LetterSequence(np.array(counts, dtype=np.int8), LETTER_TAGS, cyclic=True, layer=layer)

    def grow(self, boundary: List[int], layer: int) -> List[int]:
        p = self.p
        interior = self.classify(boundary)
        size = len(boundary)
        counts = [_vertex_tile_count(p, self.q, k) for k in interior]

        # Create the new vertices in counterclockwise order
        radial: List[List[Optional[int]]] = []
        vertex_mids: List[List[List[int]]] = []
        edge_mids: List[List[int]] = []
        blocks: List[List[int]] = []
        for i in range(size):
            m = counts[i]
            ends: List[Optional[int]] = [None] * (m + 1)
            mids: List[List[int]] = []
            block: List[int] = []
            if p >= 4:
                ends[0] = self.new_vertex()
                block.append(ends[0])
            for j in range(m):
                mid = [self.new_vertex() for _ in range(p - 3)]
                ends[j + 1] = self.new_vertex()
                mids.append(mid)
                block.extend(mid + [ends[j + 1]])
            tail = [self.new_vertex() for _ in range(p - 4)] if p >= 4 else []
            block.extend(tail)
            radial.append(ends)
            vertex_mids.append(mids)
            edge_mids.append(tail)
            blocks.append(block)
        if p == 3:
            # Triangles merge the last radial of a vertex with the first radial of the next
            for i in range(size):
                radial[(i + 1) % size][0] = radial[i][-1]

        def edge_tile(i: int):
            j = (i + 1) % size
            ring = [boundary[j], boundary[i], radial[i][-1]] + edge_mids[i]
            if p >= 4:
                ring.append(radial[j][0])
            self.add_tile(ring, layer)

        def vertex_tiles(i: int):
            for j in range(counts[i]):
                self.add_tile([boundary[i], radial[i][j]] + vertex_mids[i][j] + [radial[i][j + 1]], layer)

        edge_tile(size - 1)
        for i in range(size):
            vertex_tiles(i)
            if i < size - 1:
                edge_tile(i)
        return [v for block in blocks for v in block]


def build_tiling(p: int, q: int, n: int) -> Tiling:
    _check_hyperbolic(p, q)
    if n < 0:
        raise ValueError("n must be non-negative")
    builder = _TilingBuilder(p, q)
    boundary = [builder.new_vertex() for _ in range(p)]
    builder.add_tile(boundary, 0)
    words = [builder.word(boundary, 0)]
    boundaries = [tuple(boundary)]
    for layer in range(1, n + 1):
        boundary = builder.grow(boundary, layer)
        words.append(builder.word(boundary, layer))
        boundaries.append(tuple(boundary))

    size = len(boundary)
    boundary_edges = tuple(builder.edge_lookup[(min(boundary[i], boundary[(i + 1) % size]),
                                                max(boundary[i], boundary[(i + 1) % size]))]
                           for i in range(size))
    edges = tuple(Edge(i, builder.edge_vertices[i], tuple(builder.edge_tiles[i])) for i in range(len(builder.edge_vertices)))
    logging.info(f"Built {{{p},{q}}} tiling with n={n}: {len(builder.tiles)} tiles, {size} boundary edges")
    return Tiling(p, q, n, tuple(builder.tiles), edges, tuple(boundary), boundary_edges, tuple(words), builder.vertex_count,
                  tuple(boundaries))


def tiling_to_json(tiling: Tiling) -> Dict:
    return {
        "schema": settings().schema_version,
        "p": tiling.p,
        "q": tiling.q,
        "n": tiling.n,
        "tiles": [{"id": t.id, "layer": t.layer, "vertices": list(t.vertices), "edges": list(t.edges)} for t in tiling.tiles],
        "edges": [{"id": e.id, "vertices": list(e.vertices), "tiles": list(e.tiles)} for e in tiling.edges],
        "boundary": {"origin": tiling.origin, "vertices": list(tiling.boundary_vertices), "edges": list(tiling.boundary_edges)},
        "layers": [word.word for word in tiling.layer_words],
    }
