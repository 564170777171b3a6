"""Dynamic unweighted undirected graphs: clique and edge updates, adjacency
oracles, loaders, and exact triangle counts.

Edges carry multiplicity counters so that deleting a clique never removes an
edge some other live clique (or the base graph) still accounts for; the
adjacency stays 0/1 regardless of multiplicity.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .oracle import MatVecOracle, power_oracle
from .probes import GRAPH, generator

_ENUMERATION_GUARD = 50_000


class DynamicGraph:
    """Mutable simple graph on n nodes with reference-counted edges."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"node count must be positive, got {n}")
        self.n = int(n)
        self._mult: dict[tuple[int, int], int] = {}
        self._cliques: dict[int, tuple[int, ...]] = {}
        self._next_clique_id = 0
        self._csr: sp.csr_matrix | None = None

    # -- edge bookkeeping ---------------------------------------------------

    def _check_node(self, u: int) -> None:
        if not 0 <= u < self.n:
            raise ValueError(f"node {u} out of range [0, {self.n})")

    @staticmethod
    def _key(u: int, v: int) -> tuple[int, int]:
        return (u, v) if u < v else (v, u)

    def _bump(self, u: int, v: int, delta: int) -> None:
        key = self._key(u, v)
        count = self._mult.get(key, 0) + delta
        if count < 0:
            raise RuntimeError(f"edge {key} multiplicity went negative")
        if count == 0:
            self._mult.pop(key, None)
        else:
            self._mult[key] = count
        self._csr = None

    def has_edge(self, u: int, v: int) -> bool:
        return self._key(u, v) in self._mult

    def edge_multiplicity(self, u: int, v: int) -> int:
        return self._mult.get(self._key(u, v), 0)

    @property
    def num_edges(self) -> int:
        return len(self._mult)

    @property
    def live_cliques(self) -> tuple[int, ...]:
        return tuple(sorted(self._cliques))

    def edges(self):
        return iter(self._mult)

    def copy(self) -> "DynamicGraph":
        g = DynamicGraph(self.n)
        g._mult = dict(self._mult)
        g._cliques = dict(self._cliques)
        g._next_clique_id = self._next_clique_id
        return g

    # -- mutations ------------------------------------------------------------

    def add_edge(self, u: int, v: int) -> None:
        """Insert one multiplicity unit on (u, v); self-loops are rejected."""
        self._check_node(u)
        self._check_node(v)
        if u == v:
            raise ValueError("self-loops are not allowed")
        self._bump(u, v, +1)

    def add_clique(self, nodes) -> int:
        """Add all pairs among ``nodes`` and log the clique; returns its id."""
        members = tuple(sorted(int(u) for u in nodes))
        if len(members) < 2:
            raise ValueError(f"a clique needs at least 2 nodes, got {len(members)}")
        if len(set(members)) != len(members):
            raise ValueError("clique nodes must be distinct")
        for u in members:
            self._check_node(u)
        for i, u in enumerate(members):
            for v in members[i + 1 :]:
                self._bump(u, v, +1)
        cid = self._next_clique_id
        self._next_clique_id += 1
        self._cliques[cid] = members
        return cid

    def remove_clique(self, cid: int) -> None:
        """Decrement every pair of the logged clique; edges vanish at zero."""
        if cid not in self._cliques:
            raise KeyError(f"unknown clique id {cid}")
        members = self._cliques.pop(cid)
        for i, u in enumerate(members):
            for v in members[i + 1 :]:
                self._bump(u, v, -1)

    def add_random_edge(self, seed: int, step: int) -> tuple[int, int]:
        """Insert a uniformly random currently-absent edge; deterministic in
        (seed, step)."""
        u, v = sample_nonadjacent_pair(self, seed, step)
        self.add_edge(u, v)
        return u, v

    # -- adjacency views ------------------------------------------------------

    def csr(self) -> sp.csr_matrix:
        """0/1 adjacency in CSR form, rebuilt lazily after mutations."""
        if self._csr is None:
            if self._mult:
                pairs = np.array(list(self._mult), dtype=np.int64)
                rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
                cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
                data = np.ones(rows.size, dtype=np.float64)
                mat = sp.coo_matrix((data, (rows, cols)), shape=(self.n, self.n))
                self._csr = mat.tocsr()
                self._csr.sort_indices()
            else:
                self._csr = sp.csr_matrix((self.n, self.n), dtype=np.float64)
        return self._csr

    def dense(self) -> np.ndarray:
        return self.csr().toarray()

    def adjacency_matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {x.shape}")
        return self.csr() @ x


def sample_nonadjacent_pair(graph: DynamicGraph, seed: int, step: int) -> tuple[int, int]:
    """Uniform draw over currently non-adjacent distinct pairs, by rejection."""
    n = graph.n
    total_pairs = n * (n - 1) // 2
    if graph.num_edges >= total_pairs:
        raise ValueError("graph is complete; no non-adjacent pair exists")
    rng = generator(seed, step, GRAPH)
    while True:
        u = int(rng.integers(0, n))
        v = int(rng.integers(0, n))
        if u != v and not graph.has_edge(u, v):
            return graph._key(u, v)


def random_clique_nodes(
    n: int, seed: int, step: int, k_min: int = 10, k_max: int = 150
) -> tuple[int, ...]:
    """Pick a uniformly random clique size in [k_min, k_max] (capped at n) and
    a uniformly random node subset of that size."""
    rng = generator(seed, step, GRAPH)
    hi = min(k_max, n)
    lo = min(k_min, hi)
    k = int(rng.integers(lo, hi + 1))
    return tuple(sorted(int(u) for u in rng.choice(n, size=k, replace=False)))


def choose_live_clique(graph: DynamicGraph, seed: int, step: int) -> int | None:
    """Uniform choice among live logged cliques; None when none are live."""
    live = graph.live_cliques
    if not live:
        return None
    rng = generator(seed, step, GRAPH)
    return live[int(rng.integers(0, len(live)))]


def random_graph(n: int, p: float, seed: int) -> DynamicGraph:
    """Seeded Erdos-Renyi-style base graph with edge probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    g = DynamicGraph(n)
    rng = generator(seed, 0, GRAPH)
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < p
    for u, v in zip(iu[mask], ju[mask]):
        g.add_edge(int(u), int(v))
    return g


def adjacency_oracle(graph: DynamicGraph) -> MatVecOracle:
    """Oracle over a snapshot of the current adjacency; later mutations of the
    graph do not affect it."""
    mat = graph.csr().copy()
    return MatVecOracle(
        dim=graph.n,
        apply_vec=lambda x: mat @ x,
        matvec_cost=1,
        apply_mat=lambda X: mat @ X,
    )


def triangle_count_oracle(graph: DynamicGraph) -> MatVecOracle:
    """Cubed-adjacency oracle: tr of this operator is six times the triangle
    count.  One apply costs 3 base multiplications."""
    return power_oracle(adjacency_oracle(graph), 3)


def exact_triangles(graph: DynamicGraph) -> int:
    """Exact triangle count by sorted neighbor-list intersection.

    Counts each triangle once at its lexicographically smallest edge.
    Guarded against graphs too large to enumerate comfortably.
    """
    if graph.n > _ENUMERATION_GUARD:
        raise ValueError(f"refusing to enumerate triangles for n = {graph.n}")
    adj = graph.csr()
    indptr, indices = adj.indptr, adj.indices
    count = 0
    for u, v in graph.edges():
        nu = indices[indptr[u] : indptr[u + 1]]
        nv = indices[indptr[v] : indptr[v + 1]]
        nu = nu[nu > v]
        nv = nv[nv > v]
        count += np.intersect1d(nu, nv, assume_unique=True).size
    return int(count)


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def load_edge_list(source, fmt: str = "snap", n: int | None = None) -> DynamicGraph:
    """Load an undirected simple graph from an edge list.

    ``fmt`` is ``"snap"`` (whitespace pairs, '#' comments, 0-based ids) or
    ``"matrix-market"`` (coordinate format, '%' comments, 1-based ids).
    Directed inputs are symmetrized and duplicate edges collapse to
    multiplicity 1.  Self-loop lines are skipped: the graph type has no
    diagonal.  ``source`` may be a path or a text stream.
    """
    if fmt not in ("snap", "matrix-market"):
        raise ValueError(f"unknown edge-list format {fmt!r}")
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            return load_edge_list(handle, fmt=fmt, n=n)
    if fmt == "snap":
        return _load_snap(source, n)
    return _load_matrix_market(source, n)


def _parse_pair(parts, lineno: int) -> tuple[int, int]:
    try:
        return int(parts[0]), int(parts[1])
    except (ValueError, IndexError):
        raise ValueError(f"malformed edge on line {lineno}: {' '.join(parts)!r}") from None


def _load_snap(stream: io.TextIOBase, n: int | None) -> DynamicGraph:
    edges: list[tuple[int, int]] = []
    max_node = -1
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) < 2:
            raise ValueError(f"malformed edge on line {lineno}: {text!r}")
        u, v = _parse_pair(parts, lineno)
        if u < 0 or v < 0:
            raise ValueError(f"negative node id on line {lineno}: {text!r}")
        if n is not None and (u >= n or v >= n):
            raise ValueError(f"node id out of range on line {lineno}: {text!r}")
        max_node = max(max_node, u, v)
        if u != v:
            edges.append((u, v))
    size = n if n is not None else max_node + 1
    if size < 1:
        raise ValueError("edge list is empty and no node count was given")
    g = DynamicGraph(size)
    seen = set()
    for u, v in edges:
        key = g._key(u, v)
        if key not in seen:
            seen.add(key)
            g.add_edge(u, v)
    return g


def _load_matrix_market(stream: io.TextIOBase, n: int | None) -> DynamicGraph:
    size_line = None
    entries: list[tuple[int, int]] = []
    declared = None
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if size_line is None:
            if len(parts) < 3:
                raise ValueError(f"malformed size line on line {lineno}: {text!r}")
            try:
                rows, cols, _ = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise ValueError(f"malformed size line on line {lineno}: {text!r}") from None
            if rows != cols:
                raise ValueError(f"adjacency must be square, got {rows} x {cols}")
            declared = rows
            size_line = lineno
            continue
        if len(parts) < 2:
            raise ValueError(f"malformed coordinate on line {lineno}: {text!r}")
        i, j = _parse_pair(parts, lineno)
        if not (1 <= i <= declared and 1 <= j <= declared):
            raise ValueError(f"index out of range on line {lineno}: {text!r}")
        if i != j:
            entries.append((i - 1, j - 1))
    if declared is None:
        raise ValueError("matrix-market input has no size line")
    size = n if n is not None else declared
    if size < declared:
        raise ValueError(f"declared dimension {declared} exceeds requested n = {size}")
    g = DynamicGraph(size)
    seen = set()
    for u, v in entries:
        key = g._key(u, v)
        if key not in seen:
            seen.add(key)
            g.add_edge(u, v)
    return g
