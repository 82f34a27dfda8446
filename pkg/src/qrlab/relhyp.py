"""Coned-off Cayley graphs and deep/transition decompositions at desk scale.

The groups handled here are free products of finitely many free-abelian
factors (enough for the two bundled corpora: the free group F2 = Z * Z
relative to an axis subgroup, and Z^2 * Z relative to the Z^2 factor).
Elements are kept in syllable normal form, balls are enumerated by
breadth-first search, and every metric quantity is computed exactly on the
finite ball, so each decomposition claim can be re-checked brute force.

A *peripheral system* is a choice of factor subgroups; their cosets induce
subgraphs of the ball, and the coned-off graph adds one apex per coset with
half-length edges.  A point of a path is *deep* in a coset when the path
touches the coset's M-neighborhood both at least c before and at least c
after it; the other points are *transition* points.  Everything downstream
(transience verdicts, saturations, shadows) is phrased in terms of this
decomposition.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import QRLabError

__all__ = [
    "Presentation",
    "MarkedGraph",
    "ConedGraph",
    "DeepInterval",
    "DeepDecomposition",
    "TransienceReport",
    "SaturationShadow",
    "presentation_from_json",
    "marked_graph",
    "cone_off",
    "deep_transition_decompose",
    "transient_prefix",
    "saturation_and_shadow",
    "tail_shadow",
    "random_quasi_geodesic",
    "thin_triangle_delta",
    "transition_hausdorff",
]


# ---------------------------------------------------------------------------
# presentations and normal forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Presentation:
    """A free product of free-abelian factors with marked peripheral factors.

    ``relators`` may only be commutators of generator pairs; the commutation
    graph they span must be a disjoint union of cliques, and each clique
    (or lone generator) becomes one free-abelian factor.  Peripherals must
    each be exactly the generator set of one factor.
    """

    generators: tuple
    relators: tuple
    peripherals: tuple
    radius: int

    def __post_init__(self):
        gens = tuple(self.generators)
        if len(set(gens)) != len(gens) or not gens:
            raise QRLabError("unsupported-presentation", "generators must be distinct and nonempty")
        for g in gens:
            if not (isinstance(g, str) and len(g) == 1 and g.isalpha() and g.islower()):
                raise QRLabError(
                    "unsupported-presentation",
                    f"generators must be single lowercase letters, got {g!r}",
                )
        if self.radius < 1:
            raise QRLabError("unsupported-presentation", "radius must be >= 1")

    @property
    def factors(self) -> tuple:
        """Generator blocks of the free-product decomposition."""
        pairs = set()
        for rel in self.relators:
            pairs.add(_commutator_pair(rel, self.generators))
        blocks, seen = [], set()
        for g in self.generators:
            if g in seen:
                continue
            block = {g}
            changed = True
            while changed:
                changed = False
                for x, y in pairs:
                    if (x in block) != (y in block):
                        block.update((x, y))
                        changed = True
            for x, y in itertools.combinations(sorted(block), 2):
                if (x, y) not in pairs and (y, x) not in pairs:
                    raise QRLabError(
                        "unsupported-presentation",
                        f"generators {x},{y} are linked by relators but do not commute",
                    )
            seen |= block
            blocks.append(tuple(g2 for g2 in self.generators if g2 in block))
        return tuple(blocks)

    def peripheral_factor_indices(self) -> tuple:
        out = []
        factors = self.factors
        for per in self.peripherals:
            key = tuple(sorted(per))
            match = [i for i, f in enumerate(factors) if tuple(sorted(f)) == key]
            if not match:
                raise QRLabError(
                    "unsupported-presentation",
                    f"peripheral {per} is not a free-product factor of the presentation",
                )
            out.append(match[0])
        return tuple(out)


def _commutator_pair(rel: str, gens: Sequence[str]) -> tuple:
    """Parse a relator that must be a commutator of two generators."""
    s = rel.replace(" ", "")
    if s.startswith("[") and s.endswith("]") and "," in s:
        x, y = s[1:-1].split(",")
        if x in gens and y in gens and x != y:
            return (x, y)
    if len(s) == 4:  # xyXY with uppercase = inverse
        x, y = s[0], s[1]
        if s[2] == x.upper() and s[3] == y.upper() and x in gens and y in gens and x != y:
            return (x, y)
    raise QRLabError(
        "unsupported-presentation",
        f"relator {rel!r} is not a commutator of two generators",
    )


def presentation_from_json(source) -> Presentation:
    """Load {generators, relators, peripherals, radius} from a dict or path."""
    if isinstance(source, (str,)):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = dict(source)
    return Presentation(
        generators=tuple(data["generators"]),
        relators=tuple(data.get("relators", ())),
        peripherals=tuple(tuple(p) for p in data["peripherals"]),
        radius=int(data["radius"]),
    )


# Normal form: a word is a tuple of syllables (factor_index, exponents) with
# nonzero exponent vectors and no two consecutive syllables from one factor.


def _syllable_label(factor: tuple, vec: tuple) -> str:
    return "".join(f"{g}{e}" for g, e in zip(factor, vec) if e)


def _word_label(word: tuple, factors: tuple) -> str:
    if not word:
        return "e"
    return ".".join(_syllable_label(factors[fi], vec) for fi, vec in word)


def _word_length(word: tuple) -> int:
    return sum(sum(abs(e) for e in vec) for _, vec in word)


def _multiply(word: tuple, fi: int, gi: int, sign: int, factors: tuple) -> tuple:
    """Right-multiply a normal form by one generator (factor fi, slot gi)."""
    if word and word[-1][0] == fi:
        vec = list(word[-1][1])
        vec[gi] += sign
        if any(vec):
            return word[:-1] + ((fi, tuple(vec)),)
        return word[:-1]
    vec = [0] * len(factors[fi])
    vec[gi] = sign
    return word + ((fi, tuple(vec)),)


# ---------------------------------------------------------------------------
# marked graphs (balls) and coset systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coset:
    """One peripheral coset restricted to the ball."""

    peripheral: str
    coset_id: str
    members: tuple  # vertex indices, sorted


@dataclass
class MarkedGraph:
    """A Cayley-graph ball with unit edges and peripheral coset systems.

    ``labels[i]`` is the normal form of vertex ``i`` (identity = "e"),
    ``word_length[i]`` its distance from the identity, and ``cosets`` maps a
    peripheral name ``P<k>`` to the list of its cosets meeting the ball.
    """

    presentation: Presentation
    labels: list
    adjacency: sparse.csr_matrix
    word_length: np.ndarray
    cosets: dict
    coset_index: dict  # peripheral -> np.ndarray vertex -> coset position

    @property
    def n_vertices(self) -> int:
        return len(self.labels)

    @property
    def radius(self) -> int:
        return self.presentation.radius

    def distances_from(self, sources: Sequence[int], limit: Optional[float] = None) -> np.ndarray:
        """BFS distances from each source (rows); inf beyond ``limit``."""
        return csgraph.dijkstra(
            self.adjacency,
            indices=np.asarray(list(sources), dtype=np.intp),
            unweighted=True,
            limit=np.inf if limit is None else float(limit),
        )

    def geodesic(self, u: int, v: int) -> list:
        """A deterministic geodesic vertex path from u to v."""
        dist, pred = csgraph.dijkstra(
            self.adjacency, indices=[u], unweighted=True, return_predecessors=True
        )
        if not np.isfinite(dist[0, v]):
            raise QRLabError("disconnected-concat", "no path between the requested vertices")
        path = [v]
        while path[-1] != u:
            path.append(int(pred[0, path[-1]]))
        return path[::-1]

    def margin(self, path: Sequence[int]) -> int:
        """Distance from the path to the ball boundary."""
        return int(self.radius - max(self.word_length[list(path)]))


def marked_graph(presentation: Presentation) -> MarkedGraph:
    """Enumerate the ball of the presentation's radius and its coset systems."""
    factors = presentation.factors
    per_idx = presentation.peripheral_factor_indices()

    radius = presentation.radius
    words = {(): 0}
    order = [()]
    frontier = [()]
    for _ in range(radius):
        nxt = []
        for w in frontier:
            for fi, fgens in enumerate(factors):
                for gi in range(len(fgens)):
                    for sign in (1, -1):
                        w2 = _multiply(w, fi, gi, sign, factors)
                        if w2 not in words and _word_length(w2) <= radius:
                            words[w2] = len(order)
                            order.append(w2)
                            nxt.append(w2)
        frontier = nxt
    n = len(order)

    rows, cols = [], []
    for w, i in words.items():
        for fi, fgens in enumerate(factors):
            for gi in range(len(fgens)):
                w2 = _multiply(w, fi, gi, 1, factors)
                j = words.get(w2)
                if j is not None:
                    rows.extend((i, j))
                    cols.extend((j, i))
    data = np.ones(len(rows), dtype=np.int8)
    adjacency = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    adjacency.data[:] = 1  # collapse duplicate entries from the symmetric fill

    labels = [_word_label(w, factors) for w in order]
    lengths = np.array([_word_length(w) for w in order], dtype=np.int64)

    cosets: dict = {}
    coset_index: dict = {}
    for k, fi in enumerate(per_idx):
        name = f"P{k}"
        groups: dict = {}
        for w, i in words.items():
            base = w[:-1] if (w and w[-1][0] == fi) else w
            groups.setdefault(base, []).append(i)
        items = sorted(groups.items(), key=lambda kv: (_word_length(kv[0]), _word_label(kv[0], factors)))
        idx = np.full(n, -1, dtype=np.int64)
        lst = []
        for pos, (base, members) in enumerate(items):
            members = tuple(sorted(members))
            if not members:
                raise QRLabError("empty-coset", f"coset {base} has no vertices in the ball")
            lst.append(Coset(name, _word_label(base, factors), members))
            idx[list(members)] = pos
        cosets[name] = lst
        coset_index[name] = idx

    g = MarkedGraph(presentation, labels, adjacency, lengths, cosets, coset_index)
    _validate_marked_graph(g)
    return g


def _validate_marked_graph(g: MarkedGraph) -> None:
    n_comp = csgraph.connected_components(g.adjacency, directed=False, return_labels=False)
    if n_comp != 1:
        raise QRLabError("disconnected-concat", "ball graph is not connected")
    for name, lst in g.cosets.items():
        seen: set = set()
        for coset in lst:
            if seen.intersection(coset.members):
                raise QRLabError("empty-coset", f"cosets of {name} overlap")
            seen.update(coset.members)
            sub = g.adjacency[np.ix_(coset.members, coset.members)]
            if len(coset.members) > 1:
                k = csgraph.connected_components(sub, directed=False, return_labels=False)
                if k != 1:
                    raise QRLabError("empty-coset", f"coset {coset.coset_id} is not connected in the ball")


# ---------------------------------------------------------------------------
# coned-off graph
# ---------------------------------------------------------------------------


@dataclass
class ConedGraph:
    """The ball plus one apex per coset, joined by half-length edges."""

    base: MarkedGraph
    adjacency: sparse.csr_matrix  # weighted; apexes indexed after base vertices
    apex_of: dict  # (peripheral, coset_id) -> apex vertex index

    @property
    def n_apexes(self) -> int:
        return len(self.apex_of)

    def distances_from(self, sources: Sequence[int]) -> np.ndarray:
        return csgraph.dijkstra(self.adjacency, indices=np.asarray(list(sources), dtype=np.intp))


def cone_off(g: MarkedGraph) -> ConedGraph:
    """Add an apex per coset with weight-1/2 edges to each coset vertex."""
    if not g.cosets:
        raise QRLabError("empty-coset", "no peripheral system to cone off")
    n = g.n_vertices
    apex_of = {}
    rows, cols, data = [], [], []
    base = g.adjacency.tocoo()
    rows.extend(base.row.tolist())
    cols.extend(base.col.tolist())
    data.extend([1.0] * base.nnz)
    apex = n
    for name in sorted(g.cosets):
        for coset in g.cosets[name]:
            if not coset.members:
                raise QRLabError("empty-coset", f"coset {coset.coset_id} is empty")
            apex_of[(name, coset.coset_id)] = apex
            for v in coset.members:
                rows.extend((apex, v))
                cols.extend((v, apex))
                data.extend((0.5, 0.5))
            apex += 1
    adjacency = sparse.csr_matrix((data, (rows, cols)), shape=(apex, apex))
    return ConedGraph(g, adjacency, apex_of)


# ---------------------------------------------------------------------------
# deep/transition decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeepInterval:
    """A maximal run of path indices deep in one coset."""

    start: int  # first deep index (inclusive)
    stop: int  # last deep index (inclusive)
    peripheral: str
    coset_id: str
    max_coset_distance: float  # sup over the run of d(point, coset)


@dataclass
class DeepDecomposition:
    """Deep intervals of a vertex path and the complementary transition set."""

    path: tuple
    M: float
    c: float
    intervals: list
    transition_indices: tuple
    truncated: bool  # path runs within M+c of the ball boundary
    rho_measured: float  # max over deep points of d(point, its coset)/M
    deep_mask: np.ndarray = field(repr=False, default=None)

    @property
    def deep_indices(self) -> tuple:
        return tuple(np.nonzero(self.deep_mask)[0].tolist())

    def interval_of(self, index: int) -> Optional[DeepInterval]:
        for iv in self.intervals:
            if iv.start <= index <= iv.stop:
                return iv
        return None


def _validate_vertex_path(g: MarkedGraph, path: Sequence[int]) -> np.ndarray:
    arr = np.asarray(list(path), dtype=np.int64)
    if arr.size == 0:
        raise QRLabError("empty-path", "vertex path has no vertices")
    if arr.min() < 0 or arr.max() >= g.n_vertices:
        raise QRLabError("empty-path", "vertex index out of range")
    adj = g.adjacency
    for a, b in zip(arr[:-1], arr[1:]):
        if a != b and adj[a, b] == 0:
            raise QRLabError("disconnected-concat", f"vertices {a} and {b} are not adjacent")
    return arr


def deep_transition_decompose(
    g: MarkedGraph,
    path: Sequence[int],
    M: float,
    c: float,
    distance_cap: Optional[float] = None,
) -> DeepDecomposition:
    """Exact deep/transition split of a vertex path.

    Index m is deep in coset A when some earlier index i and later index j
    have their vertices within M of A and the graph distance from m's vertex
    to each witness is at least c.  (The two witness conditions decouple, so
    a prefix/suffix sweep per coset is exact.)  Distances are computed with
    a cap just above max(M, c, rho-measurement range); everything beyond the
    cap can only make the same comparisons true, so the result is exact.
    """
    if M <= 0 or c <= 0:
        raise ValueError("M and c must be positive")
    arr = _validate_vertex_path(g, path)
    L = len(arr)
    cap = float(distance_cap) if distance_cap is not None else max(M, c) * 3.0 + 3.0
    D = g.distances_from(arr, limit=cap)  # rows: path points, cols: all vertices

    truncated = g.margin(arr) < M + c

    deep_mask = np.zeros(L, dtype=bool)
    owner = np.full(L, -1, dtype=np.int64)  # flattened (peripheral, coset) tag
    owner_dist = np.zeros(L, dtype=float)
    tags = []

    pairwise = D[:, arr]  # d(path_i, path_j), capped
    rows_pts, cols_verts = np.nonzero(D <= M)  # path point near vertex

    for name in sorted(g.cosets):
        coset_list = g.cosets[name]
        idx_of = g.coset_index[name]
        touched = {}
        for p, v in zip(rows_pts, cols_verts):
            ci = idx_of[v]
            if ci >= 0:
                touched.setdefault(int(ci), set()).add(int(p))
        for ci, pts in sorted(touched.items()):
            if len(pts) < 2:
                continue
            pts = sorted(pts)
            # witness_before[m]: some i in pts, i <= m, d(path_m, path_i) >= c
            before = np.zeros(L, dtype=bool)
            after = np.zeros(L, dtype=bool)
            for m in range(L):
                dm = pairwise[m]
                before[m] = any(i <= m and dm[i] >= c for i in pts)
                after[m] = any(j >= m and dm[j] >= c for j in pts)
            mask = before & after
            if not mask.any():
                continue
            members = np.array(coset_list[ci].members)
            dist_to_A = D[:, members].min(axis=1)
            tag = len(tags)
            tags.append((name, coset_list[ci].coset_id))
            newly = mask & (~deep_mask | (dist_to_A < owner_dist))
            deep_mask |= mask
            owner[newly] = tag
            owner_dist[newly] = dist_to_A[newly]

    intervals = []
    rho = 0.0
    m = 0
    while m < L:
        if not deep_mask[m]:
            m += 1
            continue
        start = m
        tag = owner[m]
        while m + 1 < L and deep_mask[m + 1] and owner[m + 1] == tag:
            m += 1
        name, cid = tags[tag]
        run_dist = float(owner_dist[start : m + 1].max())
        intervals.append(DeepInterval(start, m, name, cid, run_dist))
        rho = max(rho, run_dist / M)
        m += 1

    transition = tuple(int(i) for i in np.nonzero(~deep_mask)[0])
    return DeepDecomposition(
        path=tuple(int(v) for v in arr),
        M=float(M),
        c=float(c),
        intervals=intervals,
        transition_indices=transition,
        truncated=bool(truncated),
        rho_measured=float(rho),
        deep_mask=deep_mask,
    )


# ---------------------------------------------------------------------------
# transience verdicts
# ---------------------------------------------------------------------------


@dataclass
class TransienceReport:
    """Finite-horizon evidence about whether transitions persist."""

    decomposition: DeepDecomposition
    window: int
    transition_times: tuple
    density: float
    largest_gap: int
    verdict: str  # "transient-consistent" | "deep-tail-detected"
    absorbing_coset: Optional[tuple]  # (peripheral, coset_id) when deep-tailed


def transient_prefix(
    g: MarkedGraph, path: Sequence[int], M: float, c: float, window: int
) -> TransienceReport:
    """Check whether transition points persist to the end of the path.

    On a finite segment the last ~c indices are transition points for free
    (they cannot have an after-witness), so the check trims that boundary
    ring: the verdict is ``transient-consistent`` when the final ``window``
    indices before the ring contain a transition point, and
    ``deep-tail-detected`` otherwise, reporting the coset of the terminal
    deep interval.  ``largest_gap`` (the longest transition-free stretch
    anywhere) is reported so callers can see when the chosen window
    undersamples sparse transitions.
    """
    dec = deep_transition_decompose(g, path, M, c)
    L = len(dec.path)
    ring = math.ceil(c)
    end = L - ring  # indices >= end are endpoint-effect transitions
    if not (1 <= window <= max(end, 1)):
        raise ValueError(f"window must lie in [1, {max(end, 1)}], got {window}")
    trans = np.asarray(dec.transition_indices, dtype=np.int64)
    density = len(trans) / L
    if len(trans):
        gaps = np.diff(np.concatenate(([-1], trans, [L])))
        largest_gap = int(gaps.max() - 1)
    else:
        largest_gap = L
    interior = trans[trans < end]
    tail_ok = bool(len(interior) and interior[-1] >= end - window)
    if tail_ok:
        verdict, absorbing = "transient-consistent", None
    else:
        verdict = "deep-tail-detected"
        last = dec.interval_of(max(end - 1, 0))
        absorbing = (last.peripheral, last.coset_id) if last else None
    return TransienceReport(
        decomposition=dec,
        window=int(window),
        transition_times=tuple(int(t) for t in trans),
        density=float(density),
        largest_gap=largest_gap,
        verdict=verdict,
        absorbing_coset=absorbing,
    )


# ---------------------------------------------------------------------------
# saturation and shadows
# ---------------------------------------------------------------------------


@dataclass
class SaturationShadow:
    """Saturation vertex set plus tamed shadows per deep coset."""

    saturation: tuple  # sorted vertex indices
    touched_cosets: tuple  # (peripheral, coset_id) with N_M(A) meeting the path
    shadows: dict  # (peripheral, coset_id) -> tamed projected vertex path
    lipschitz: dict  # same keys -> measured max step length
    lipschitz_bound: Optional[float]  # 2(q+Q) when constants declared
    lipschitz_ok: Optional[bool]


def saturation_and_shadow(
    g: MarkedGraph,
    path: Sequence[int],
    M: float,
    c: Optional[float] = None,
    q: Optional[float] = None,
    Q: Optional[float] = None,
) -> SaturationShadow:
    """Saturation of the path and tamed shadows of its deep intervals.

    The saturation collects the path plus every coset whose M-neighborhood
    it meets.  For each coset carrying a deep interval, the interval is
    projected pointwise to a nearest coset vertex and consecutive
    projections are joined by geodesics inside the coset subgraph.  When
    (q, Q) are declared, each projection step is checked against the
    2(q+Q) Lipschitz bound.
    """
    arr = _validate_vertex_path(g, path)
    c = float(c) if c is not None else max(1.0, M)
    dec = deep_transition_decompose(g, arr, M, c)
    D = g.distances_from(arr)

    sat = set(int(v) for v in arr)
    touched = []
    for name in sorted(g.cosets):
        for coset in g.cosets[name]:
            members = np.array(coset.members)
            if D[:, members].min() <= M:
                touched.append((name, coset.coset_id))
                sat.update(int(v) for v in coset.members)

    coset_lookup = {
        (name, coset.coset_id): coset
        for name in g.cosets
        for coset in g.cosets[name]
    }
    shadows: dict = {}
    lipschitz: dict = {}
    for iv in dec.intervals:
        coset = coset_lookup[(iv.peripheral, iv.coset_id)]
        members = np.array(coset.members)
        seg = list(range(iv.start, iv.stop + 1))
        block = D[np.ix_(seg, members)]
        proj = [int(members[int(np.argmin(row))]) for row in block]  # ties: lowest index
        tamed = [proj[0]]
        steps = []
        sub_index = {v: k for k, v in enumerate(coset.members)}
        sub = g.adjacency[np.ix_(coset.members, coset.members)]
        for a, b in zip(proj[:-1], proj[1:]):
            if a == b:
                steps.append(0.0)
                continue
            dist, pred = csgraph.dijkstra(
                sub, indices=[sub_index[a]], unweighted=True, return_predecessors=True
            )
            steps.append(float(dist[0, sub_index[b]]))
            hop = [sub_index[b]]
            while hop[-1] != sub_index[a]:
                hop.append(int(pred[0, hop[-1]]))
            tamed.extend(int(coset.members[k]) for k in hop[-2::-1])
        key = (iv.peripheral, iv.coset_id)
        shadows[key] = tuple(tamed)
        lipschitz[key] = max(steps) if steps else 0.0

    bound = 2.0 * (q + Q) if (q is not None and Q is not None) else None
    ok = None
    if bound is not None:
        ok = all(v <= bound + 1e-9 for v in lipschitz.values())
    return SaturationShadow(
        saturation=tuple(sorted(sat)),
        touched_cosets=tuple(touched),
        shadows=shadows,
        lipschitz=lipschitz,
        lipschitz_bound=bound,
        lipschitz_ok=ok,
    )


def tail_shadow(
    g: MarkedGraph,
    path: Sequence[int],
    M: float,
    c: float,
    q: Optional[float] = None,
    Q: Optional[float] = None,
):
    """Shadow of the terminal deep interval; errors when the tail is shallow.

    The last ~c indices of a finite path cannot be deep (no after-witness),
    so the tail is judged at the last index before that boundary ring.
    """
    dec = deep_transition_decompose(g, path, M, c)
    last = dec.interval_of(max(len(dec.path) - 1 - math.ceil(c), 0))
    if last is None:
        raise QRLabError("no-deep-tail", "path does not end inside a deep interval")
    sat = saturation_and_shadow(g, path, M, c, q, Q)
    return sat.shadows[(last.peripheral, last.coset_id)], last


# ---------------------------------------------------------------------------
# sampling helpers and measured constants
# ---------------------------------------------------------------------------


def random_quasi_geodesic(
    g: MarkedGraph,
    rng: np.random.Generator,
    length: int,
    detours: int = 0,
    interior_margin: int = 0,
) -> list:
    """A random vertex path: a geodesic with optional unit detours.

    Starts at a uniformly chosen vertex with enough room, walks a geodesic
    toward a far target, and splices in ``detours`` one-step excursions
    (step off the path and back) at random positions, which keeps the path
    a quasi-geodesic with small constants on a tree-like ball.
    """
    room = np.nonzero(g.word_length <= g.radius - interior_margin)[0]
    for _ in range(64):
        u = int(rng.choice(room))
        dist = g.distances_from([u])[0]
        candidates = np.nonzero((dist >= length) & np.isfinite(dist))[0]
        inside = candidates[g.word_length[candidates] <= g.radius - interior_margin]
        if len(inside):
            v = int(inside[rng.integers(len(inside))])
            break
    else:
        raise QRLabError("family-exhausted", "no room for a path of the requested length")
    path = g.geodesic(u, v)
    adj = g.adjacency
    for _ in range(detours):
        pos = int(rng.integers(1, len(path) - 1))
        x = path[pos]
        nbrs = adj.indices[adj.indptr[x] : adj.indptr[x + 1]]
        off = [int(w) for w in nbrs if w != path[pos - 1] and w != path[pos + 1]]
        if off:
            w = off[int(rng.integers(len(off)))]
            path = path[: pos + 1] + [w] + path[pos:]
    return path


def path_constants(g: MarkedGraph, path: Sequence[int]) -> tuple:
    """Fitted (q, Q=1) of a vertex path under the graph metric."""
    arr = np.asarray(list(path))
    D = g.distances_from(arr)[:, arr]
    n = len(arr)
    i, j = np.triu_indices(n, k=1)
    dt = (j - i).astype(float)
    d = D[i, j]
    q_upper = float(np.max(dt / np.maximum(d + 1.0, 1e-12)))  # lower-bound side, Q=1
    return max(1.0, q_upper), 1.0


def transition_hausdorff(
    g: MarkedGraph, path_a: Sequence[int], path_b: Sequence[int], M: float, c: float
) -> float:
    """Hausdorff distance between the transition sets of two paths."""
    dec_a = deep_transition_decompose(g, path_a, M, c)
    dec_b = deep_transition_decompose(g, path_b, M, c)
    ta = [dec_a.path[i] for i in dec_a.transition_indices]
    tb = [dec_b.path[i] for i in dec_b.transition_indices]
    if not ta and not tb:
        return 0.0
    if not ta or not tb:
        return math.inf
    D = g.distances_from(ta)[:, tb]
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def thin_triangle_delta(
    g: MarkedGraph,
    rng: np.random.Generator,
    samples: int,
    M: float,
    c: float,
    interior_margin: int = 0,
) -> float:
    """Measured relative-thinness constant over random geodesic triangles.

    For each sampled triangle, every transition point of one side is matched
    to the nearest point on the union of the other two sides; the max over
    samples is returned.
    """
    room = np.nonzero(g.word_length <= g.radius - interior_margin)[0]
    delta = 0.0
    for _ in range(samples):
        x, y, z = (int(v) for v in rng.choice(room, size=3, replace=False))
        side_xy = g.geodesic(x, y)
        other = g.geodesic(x, z) + g.geodesic(z, y)
        dec = deep_transition_decompose(g, side_xy, M, c)
        trans = [side_xy[i] for i in dec.transition_indices]
        if not trans:
            continue
        D = g.distances_from(trans)[:, other]
        delta = max(delta, float(D.min(axis=1).max()))
    return delta
