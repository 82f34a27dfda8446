"""Defining-graph analysis for right-angled Coxeter groups.

Everything here is exact finite graph theory: enumerate induced 4-cycles,
build the square-adjacency graph (two squares adjacent when they share a
pair of nonadjacent vertices, i.e. a diagonal), test the
constructed-from-squares property, check the standing assumptions that make
the group one-ended and non-trivially curved, and emit the four-way
classification that predicts the shape of the group's boundary:

  * ``boundary-is-point``        -- suspension of an n-cycle (n >= 4) or of a
                                    broken line,
  * ``CKA-type-poset``           -- constructed from squares but not the above,
  * ``mixed-manifold``           -- a separating induced 4-cycle and not CFS,
  * ``relhyp-hyperbolic-pieces`` -- no separating induced 4-cycle and not CFS.

A bundled corpus of hand-verified graphs exercises every branch.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import networkx as nx

from .errors import QRLabError

__all__ = [
    "DefiningGraph",
    "FourCycleGraph",
    "StandingAssumptions",
    "CFSWitness",
    "PredictionRecord",
    "four_cycle_graph",
    "is_cfs",
    "standing_assumptions",
    "planarity_1skeleton",
    "suspension_base",
    "is_broken_line",
    "separating_induced_four_cycles",
    "classify",
    "peripheral_cfs_subgraphs",
    "corpus",
    "graph_from_edges",
    "graph_from_json",
]


# ---------------------------------------------------------------------------
# defining graphs and induced 4-cycles
# ---------------------------------------------------------------------------


@dataclass
class DefiningGraph:
    """A finite simple graph of Coxeter generators with cached cell data."""

    graph: nx.Graph
    name: str = ""

    def __post_init__(self):
        g = self.graph
        if any(u == v for u, v in g.edges):
            raise QRLabError("bad-graph", "defining graph must have no loops")
        if g.number_of_nodes() > 64:
            raise QRLabError("bad-graph", "defining graphs above 64 vertices are not supported")
        self._triangles = tuple(
            tuple(sorted(t))
            for t in nx.enumerate_all_cliques(g)
            if len(t) == 3
        )
        self._squares = _induced_four_cycles(g)

    @property
    def vertices(self) -> tuple:
        return tuple(sorted(self.graph.nodes))

    @property
    def triangles(self) -> tuple:
        return self._triangles

    @property
    def induced_four_cycles(self) -> tuple:
        """Each cycle as (vertexset frozenset, diagonal pair 1, diagonal pair 2)."""
        return self._squares


def _induced_four_cycles(g: nx.Graph) -> tuple:
    """All induced 4-cycles, each with its two diagonals.

    A 4-subset induces a 4-cycle exactly when it has 4 edges and both
    "missing" pairs are nonadjacent, which forces the cycle structure; the
    two nonadjacent pairs are the diagonals.
    """
    out = []
    nodes = sorted(g.nodes)
    adj = {v: set(g.neighbors(v)) for v in nodes}
    for quad in itertools.combinations(nodes, 4):
        non_edges = [
            (a, b) for a, b in itertools.combinations(quad, 2) if b not in adj[a]
        ]
        if len(non_edges) != 2:
            continue
        (a, b), (c, d) = non_edges
        if len({a, b, c, d}) == 4:  # two disjoint diagonals => induced C4
            out.append((frozenset(quad), frozenset((a, b)), frozenset((c, d))))
    return tuple(out)


@dataclass
class FourCycleGraph:
    """The square graph: vertices are induced 4-cycles, edges shared diagonals."""

    cycles: tuple  # frozensets of 4 vertices, sorted for determinism
    graph: nx.Graph  # nodes are indices into ``cycles``

    @property
    def components(self) -> tuple:
        return tuple(
            tuple(sorted(comp)) for comp in sorted(
                nx.connected_components(self.graph), key=lambda c: sorted(c)
            )
        )

    def component_cover(self, comp: Sequence[int]) -> frozenset:
        cover: set = set()
        for i in comp:
            cover |= self.cycles[i]
        return frozenset(cover)


def four_cycle_graph(gamma: DefiningGraph | nx.Graph) -> FourCycleGraph:
    """Build the square-adjacency graph of the defining graph.

    Two induced 4-cycles sharing two nonadjacent vertices necessarily share
    a diagonal (a nonadjacent pair inside an induced square is one of its
    diagonals), so adjacency is computed by bucketing squares by diagonal.
    """
    if isinstance(gamma, nx.Graph):
        gamma = DefiningGraph(gamma)
    squares = gamma.induced_four_cycles
    order = sorted(range(len(squares)), key=lambda i: sorted(squares[i][0]))
    cycles = tuple(squares[i][0] for i in order)
    sq = nx.Graph()
    sq.add_nodes_from(range(len(cycles)))
    buckets: dict = {}
    for idx, oi in enumerate(order):
        for diag in squares[oi][1:]:
            buckets.setdefault(diag, []).append(idx)
    for diag, members in buckets.items():
        for a, b in itertools.combinations(members, 2):
            sq.add_edge(a, b)
    return FourCycleGraph(cycles, sq)


# ---------------------------------------------------------------------------
# constructed-from-squares
# ---------------------------------------------------------------------------


@dataclass
class CFSWitness:
    """Join decomposition and covering component certifying the property."""

    omega: tuple  # vertices of the non-clique part
    clique: tuple  # vertices of the clique factor K
    component_cycles: tuple  # 4-cycles (as sorted vertex tuples) of the component


def is_cfs(gamma: DefiningGraph | nx.Graph) -> tuple:
    """Whether the graph is a join Omega * K (K a clique) with a component of
    Omega's square graph covering all of Omega.  Returns (bool, witness).

    Only vertices adjacent to everything else can sit in K, and a vertex
    adjacent to everything cannot lie on any induced 4-cycle (its diagonal
    partner would be a neighbor), so moving such a vertex into Omega can
    only break coverage: it suffices to test the single decomposition whose
    K is the full set of universal vertices.
    """
    if isinstance(gamma, nx.Graph):
        gamma = DefiningGraph(gamma)
    g = gamma.graph
    n = g.number_of_nodes()
    universal = sorted(v for v in g.nodes if g.degree(v) == n - 1)
    omega = sorted(set(g.nodes) - set(universal))
    if not omega:
        return False, None
    sub = DefiningGraph(g.subgraph(omega).copy())
    fc = four_cycle_graph(sub)
    for comp in fc.components:
        if fc.component_cover(comp) == frozenset(omega):
            witness = CFSWitness(
                omega=tuple(omega),
                clique=tuple(universal),
                component_cycles=tuple(tuple(sorted(fc.cycles[i])) for i in comp),
            )
            return True, witness
    return False, None


# ---------------------------------------------------------------------------
# standing assumptions
# ---------------------------------------------------------------------------


@dataclass
class StandingAssumptions:
    """The six pre-flight checks, each with a witness on failure."""

    connected: bool
    no_separating_vertex: bool
    no_separating_edge: bool
    has_induced_four_cycle: bool
    not_four_cycle: bool
    not_cone_of_four_cycle: bool
    witnesses: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(
            (
                self.connected,
                self.no_separating_vertex,
                self.no_separating_edge,
                self.has_induced_four_cycle,
                self.not_four_cycle,
                self.not_cone_of_four_cycle,
            )
        )


def standing_assumptions(gamma: DefiningGraph | nx.Graph) -> StandingAssumptions:
    if isinstance(gamma, nx.Graph):
        gamma = DefiningGraph(gamma)
    g = gamma.graph
    w: dict = {}
    connected = nx.is_connected(g) if g.number_of_nodes() else False
    if not connected:
        w["connected"] = tuple(tuple(sorted(c))[:4] for c in nx.connected_components(g))
    arts = sorted(nx.articulation_points(g)) if connected else []
    if arts:
        w["separating_vertex"] = arts[0]
    bridges = sorted(tuple(sorted(e)) for e in nx.bridges(g)) if connected else []
    if bridges:
        w["separating_edge"] = bridges[0]
    squares = gamma.induced_four_cycles
    if not squares:
        w["induced_four_cycle"] = None
    n = g.number_of_nodes()
    is_c4 = n == 4 and len(squares) == 1 and g.number_of_edges() == 4
    if is_c4:
        w["four_cycle"] = tuple(sorted(g.nodes))
    is_cone_c4 = False
    if n == 5:
        for v in g.nodes:
            if g.degree(v) == 4:
                rest = nx.Graph(g.subgraph(set(g.nodes) - {v}))
                if rest.number_of_edges() == 4 and all(rest.degree(u) == 2 for u in rest):
                    is_cone_c4 = True
                    w["cone_of_four_cycle"] = v
                    break
    return StandingAssumptions(
        connected=connected,
        no_separating_vertex=not arts,
        no_separating_edge=not bridges,
        has_induced_four_cycle=bool(squares),
        not_four_cycle=not is_c4,
        not_cone_of_four_cycle=not is_cone_c4,
        witnesses=w,
    )


# ---------------------------------------------------------------------------
# planarity and shape detectors
# ---------------------------------------------------------------------------


def planarity_1skeleton(gamma: DefiningGraph | nx.Graph) -> tuple:
    """Planarity of the 1-skeleton; the flag 2-cells are not examined.

    Returns (is_planar, note).  The ambient assumption concerns embedding
    the whole flag complex in the sphere; testing the 1-skeleton is the
    computable proxy and can over-approximate, hence the caveat note.
    """
    g = gamma.graph if isinstance(gamma, DefiningGraph) else gamma
    ok, _cert = nx.check_planarity(g)
    return bool(ok), "1-skeleton planarity only; flag 2-cells not embedded"


def suspension_base(gamma: DefiningGraph | nx.Graph) -> Optional[tuple]:
    """Apexes and base when the graph is a suspension, else None.

    A suspension has two nonadjacent vertices whose common neighborhood is
    everything else; returns ((apex1, apex2), base_vertices).
    """
    g = gamma.graph if isinstance(gamma, DefiningGraph) else gamma
    nodes = sorted(g.nodes)
    rest_count = len(nodes) - 2
    for u, v in itertools.combinations(nodes, 2):
        if g.has_edge(u, v):
            continue
        rest = [x for x in nodes if x not in (u, v)]
        if len(rest) != rest_count:
            continue
        if all(g.has_edge(u, x) and g.has_edge(v, x) for x in rest):
            return (u, v), tuple(rest)
    return None


def is_broken_line(g: nx.Graph) -> bool:
    """Disjoint union of vertices and paths (trees with degrees <= 2)."""
    if g.number_of_nodes() == 0:
        return False
    if any(g.degree(v) > 2 for v in g.nodes):
        return False
    return nx.is_forest(g)


def _is_cycle_graph(g: nx.Graph, minimum: int = 4) -> bool:
    n = g.number_of_nodes()
    return (
        n >= minimum
        and nx.is_connected(g)
        and g.number_of_edges() == n
        and all(g.degree(v) == 2 for v in g.nodes)
    )


def separating_induced_four_cycles(gamma: DefiningGraph | nx.Graph) -> tuple:
    """Induced 4-cycles whose vertex removal disconnects the graph."""
    if isinstance(gamma, nx.Graph):
        gamma = DefiningGraph(gamma)
    g = gamma.graph
    out = []
    for quad, _d1, _d2 in gamma.induced_four_cycles:
        rest = set(g.nodes) - quad
        if not rest:
            continue
        sub = g.subgraph(rest)
        if sub.number_of_nodes() and not nx.is_connected(sub):
            out.append(tuple(sorted(quad)))
    return tuple(out)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass
class PredictionRecord:
    """Classification verdict plus all the evidence used to reach it."""

    name: str
    verdict: str
    standing: StandingAssumptions
    planar_1skeleton: bool
    planarity_note: str
    cfs: bool
    cfs_witness: Optional[CFSWitness]
    suspension: Optional[tuple]  # ((apex, apex), base) when a suspension
    suspension_shape: Optional[str]  # "cycle" | "broken-line" | "other"
    separating_four_cycles: tuple
    peripheral_cfs: tuple  # vertex tuples of derived CFS subgraphs
    caveats: tuple


def classify(gamma: DefiningGraph | nx.Graph, name: str = "") -> PredictionRecord:
    """Predict the boundary shape from the defining graph.

    The four branches follow the classification verbatim: a suspension of a
    long cycle or a broken line wins, then constructed-from-squares, then
    the presence of a separating induced 4-cycle splits the rest.  Standing
    assumption failures and non-planarity do not abort -- they are recorded
    as caveats so corpus tables stay total.
    """
    if isinstance(gamma, nx.Graph):
        gamma = DefiningGraph(gamma, name=name)
    name = name or gamma.name
    standing = standing_assumptions(gamma)
    planar, note = planarity_1skeleton(gamma)
    cfs, witness = is_cfs(gamma)
    susp = suspension_base(gamma)
    shape = None
    if susp is not None:
        base = gamma.graph.subgraph(susp[1])
        if _is_cycle_graph(base, minimum=4):
            shape = "cycle"
        elif is_broken_line(nx.Graph(base)):
            shape = "broken-line"
        else:
            shape = "other"
    separating = separating_induced_four_cycles(gamma)

    if susp is not None and shape in ("cycle", "broken-line"):
        verdict = "boundary-is-point"
    elif cfs:
        verdict = "CKA-type-poset"
    elif separating:
        verdict = "mixed-manifold"
    else:
        verdict = "relhyp-hyperbolic-pieces"

    caveats = []
    if not standing.all_pass:
        failed = [
            label
            for label, ok in (
                ("connected", standing.connected),
                ("no-separating-vertex", standing.no_separating_vertex),
                ("no-separating-edge", standing.no_separating_edge),
                ("has-induced-4-cycle", standing.has_induced_four_cycle),
                ("not-4-cycle", standing.not_four_cycle),
                ("not-cone-of-4-cycle", standing.not_cone_of_four_cycle),
            )
            if not ok
        ]
        caveats.append("standing assumptions failed: " + ", ".join(failed))
    if not planar:
        caveats.append("1-skeleton is non-planar; prediction is outside the planar theory")
    return PredictionRecord(
        name=name,
        verdict=verdict,
        standing=standing,
        planar_1skeleton=planar,
        planarity_note=note,
        cfs=cfs,
        cfs_witness=witness,
        suspension=susp,
        suspension_shape=shape,
        separating_four_cycles=separating,
        peripheral_cfs=peripheral_cfs_subgraphs(gamma),
        caveats=tuple(caveats),
    )


def peripheral_cfs_subgraphs(gamma: DefiningGraph | nx.Graph) -> tuple:
    """Candidate CFS subgraphs: one per square-graph component, coned.

    Each connected component of the square graph spans the union of its
    4-cycles; vertices adjacent to that whole union are appended when they
    form a clique.  Components whose subgraph passes ``is_cfs`` are emitted
    (evidence for a peripheral collection, not a certified one).
    """
    if isinstance(gamma, nx.Graph):
        gamma = DefiningGraph(gamma)
    g = gamma.graph
    fc = four_cycle_graph(gamma)
    out = []
    for comp in fc.components:
        core = set(fc.component_cover(comp))
        cone = [
            v for v in sorted(set(g.nodes) - core)
            if all(g.has_edge(v, u) for u in core)
        ]
        candidates = [tuple(sorted(core | set(cone))), tuple(sorted(core))]
        for cand in candidates:
            ok, _w = is_cfs(nx.Graph(g.subgraph(cand)))
            if ok:
                out.append(cand)
                break
    return tuple(sorted(set(out)))


# ---------------------------------------------------------------------------
# input formats and the bundled corpus
# ---------------------------------------------------------------------------


def graph_from_edges(edges: Sequence, name: str = "", isolated: Sequence = ()) -> DefiningGraph:
    g = nx.Graph()
    g.add_nodes_from(isolated)
    g.add_edges_from(edges)
    return DefiningGraph(g, name=name)


def graph_from_json(source) -> DefiningGraph:
    """Adjacency-list JSON: {"name": ..., "adjacency": {"v": ["w", ...]}}."""
    import json

    if isinstance(source, str):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = dict(source)
    g = nx.Graph()
    for v, nbrs in data["adjacency"].items():
        g.add_node(v)
        g.add_edges_from((v, w) for w in nbrs)
    return DefiningGraph(g, name=data.get("name", ""))


def _cycle(n: int, prefix: str = "v") -> list:
    return [(f"{prefix}{i}", f"{prefix}{(i + 1) % n}") for i in range(n)]


def _suspension(base_edges: list, base_nodes: list) -> list:
    edges = list(base_edges)
    for apex in ("n", "s"):
        edges.extend((apex, v) for v in base_nodes)
    return edges


def corpus() -> dict:
    """Hand-verified defining graphs keyed by name, with expected labels.

    Each value is (DefiningGraph, expected_verdict, expected_cfs,
    expected_standing_pass).
    """
    out = {}

    # C4 is the suspension of two points (a broken line); the group is
    # virtually Z^2, whose boundary is a single point.
    c4 = graph_from_edges(_cycle(4), "C4")
    out["C4"] = (c4, "boundary-is-point", True, False)

    c5 = graph_from_edges(_cycle(5), "C5")
    out["C5"] = (c5, "relhyp-hyperbolic-pieces", False, False)

    c6 = graph_from_edges(_cycle(6), "C6")
    out["C6"] = (c6, "relhyp-hyperbolic-pieces", False, False)

    cone_c4 = graph_from_edges(_cycle(4) + [("apex", f"v{i}") for i in range(4)], "cone-C4")
    out["cone-C4"] = (cone_c4, "boundary-is-point", True, False)

    cone_c5 = graph_from_edges(_cycle(5) + [("apex", f"v{i}") for i in range(5)], "cone-C5")
    out["cone-C5"] = (cone_c5, "relhyp-hyperbolic-pieces", False, False)

    for n in (4, 5, 6):
        name = f"susp-C{n}"
        gg = graph_from_edges(
            _suspension(_cycle(n), [f"v{i}" for i in range(n)]), name
        )
        out[name] = (gg, "boundary-is-point", True, True)

    # suspensions of broken lines: one path, and a path plus an isolated pair
    p4 = [("p0", "p1"), ("p1", "p2"), ("p2", "p3")]
    out["susp-P4"] = (
        graph_from_edges(
            _suspension(p4, ["p0", "p1", "p2", "p3"]), "susp-P4"
        ),
        "boundary-is-point",
        True,
        True,
    )
    broken = p4 + [("q0", "q1")]
    out["susp-broken-line"] = (
        graph_from_edges(
            _suspension(broken, ["p0", "p1", "p2", "p3", "q0", "q1"]),
            "susp-broken-line",
        ),
        "boundary-is-point",
        True,
        True,
    )

    # three squares chained along alternating diagonals: CFS, not a suspension
    chain = [
        ("a", "p"), ("p", "b"), ("b", "q"), ("q", "a"),  # square a-p-b-q
        ("p", "r"), ("r", "q"), ("q", "s"), ("s", "p"),  # square p-r-q-s
        ("r", "c"), ("c", "s"), ("s", "d"), ("d", "r"),  # square r-c-s-d
    ]
    out["square-chain"] = (
        graph_from_edges(chain, "square-chain"),
        "CKA-type-poset",
        True,
        True,
    )

    # central square with two pentagons glued on opposite sides: the square
    # separates, and no component of the square graph covers the vertex set
    mixed = _cycle(4, "x") + [
        ("x0", "a1"), ("a1", "a2"), ("a2", "a3"), ("a3", "x1"),
        ("x2", "b1"), ("b1", "b2"), ("b2", "b3"), ("b3", "x3"),
    ]
    out["square-with-pentagons"] = (
        graph_from_edges(mixed, "square-with-pentagons"),
        "mixed-manifold",
        False,
        True,
    )

    # the 3-cube: faces are the only induced squares, none separating, no
    # component covers all eight vertices
    cube = [
        ("000", "001"), ("000", "010"), ("000", "100"),
        ("001", "011"), ("001", "101"), ("010", "011"),
        ("010", "110"), ("100", "101"), ("100", "110"),
        ("011", "111"), ("101", "111"), ("110", "111"),
    ]
    out["cube"] = (
        graph_from_edges(cube, "cube"),
        "relhyp-hyperbolic-pieces",
        False,
        True,
    )

    k5 = graph_from_edges(list(itertools.combinations("abcde", 2)), "K5")
    out["K5"] = (k5, "relhyp-hyperbolic-pieces", False, False)

    k33 = graph_from_edges(
        [(a, b) for a in "abc" for b in "xyz"], "K33"
    )
    out["K33"] = (k33, "CKA-type-poset", True, True)

    return out
