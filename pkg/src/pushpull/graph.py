"""Directed communication graphs and the graph functionals used by the
contraction coefficients (diameter and maximum edge utility)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from math import ceil
from typing import Iterable, Sequence

import numpy as np


class GraphGenerationError(RuntimeError):
    pass


class DisconnectedGraphError(ValueError):
    pass


@dataclass(frozen=True)
class Digraph:
    """Directed graph on nodes ``0..n-1``; edge ``(i, j)`` means i sends to j."""

    node_count: int
    edges: frozenset

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop ({i}, {i}) not allowed")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ValueError(f"edge ({i}, {j}) out of range")
        object.__setattr__(self, "edges", edges)
        out = [[] for _ in range(self.node_count)]
        inn = [[] for _ in range(self.node_count)]
        for i, j in sorted(edges):
            out[i].append(j)
            inn[j].append(i)
        object.__setattr__(self, "_out", tuple(tuple(o) for o in out))
        object.__setattr__(self, "_in", tuple(tuple(o) for o in inn))

    @property
    def n(self) -> int:
        return self.node_count

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        """Sorted out-neighbors of ``i``."""
        return self._out[i]

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        return self._in[i]

    def out_degree(self, i: int) -> int:
        return len(self._out[i])

    def in_degree(self, i: int) -> int:
        return len(self._in[i])

    def adjacency(self) -> np.ndarray:
        """``A[i, j] = 1`` iff ``(i, j)`` is an edge."""
        a = np.zeros((self.n, self.n), dtype=int)
        for i, j in self.edges:
            a[i, j] = 1
        return a

    def reversed(self) -> "Digraph":
        return Digraph(self.n, frozenset((j, i) for i, j in self.edges))

    def to_adjacency_lists(self) -> list[list[int]]:
        return [list(o) for o in self._out]

    @classmethod
    def from_adjacency_lists(cls, lists: Sequence[Iterable[int]]) -> "Digraph":
        return cls(len(lists), frozenset((i, j) for i, nbrs in enumerate(lists) for j in nbrs))


@dataclass(frozen=True)
class DigraphSequence:
    """Periodic graph sequence: round ``k`` uses ``graphs[k mod T]``."""

    graphs: tuple[Digraph, ...]

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("need at least one graph")
        n = graphs[0].n
        for t, g in enumerate(graphs):
            if g.n != n:
                raise ValueError("all graphs must have the same node count")
            if not is_strongly_connected(g):
                raise DisconnectedGraphError(f"graph {t} of the sequence is not strongly connected")
        object.__setattr__(self, "graphs", graphs)

    @property
    def period(self) -> int:
        return len(self.graphs)

    @property
    def node_count(self) -> int:
        return self.graphs[0].n

    def __getitem__(self, k: int) -> Digraph:
        return self.graphs[k % self.period]

    def __len__(self) -> int:
        return self.period

    def __iter__(self):
        return iter(self.graphs)


# ---------------------------------------------------------------------------
# Reachability and distances


def bfs_distances(g: Digraph, source: int) -> list[int]:
    """Hop distances from ``source``; ``-1`` marks unreachable nodes."""
    dist = [-1] * g.n
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.out_neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def all_pairs_distances(g: Digraph) -> np.ndarray:
    """``dist[u, v]`` by BFS from every node (``-1`` if unreachable)."""
    return np.array([bfs_distances(g, u) for u in range(g.n)], dtype=int)


def is_strongly_connected(g: Digraph) -> bool:
    if g.n == 1:
        return True
    return min(bfs_distances(g, 0)) >= 0 and min(bfs_distances(g.reversed(), 0)) >= 0


def _require_strong(g: Digraph):
    if not is_strongly_connected(g):
        raise DisconnectedGraphError("graph is not strongly connected")


def diameter(g: Digraph) -> int:
    """Largest shortest-path length (in edges) over ordered node pairs."""
    _require_strong(g)
    return int(all_pairs_distances(g).max())


def shortest_path(g: Digraph, source: int, target: int, dist: np.ndarray | None = None) -> list[int]:
    """The selected shortest path from ``source`` to ``target``.

    Among all shortest paths, walks forward always taking the lowest-index
    out-neighbor that is one hop closer to ``target``. This picks the
    lexicographically smallest shortest path.
    """
    if dist is None:
        dist = all_pairs_distances(g)
    if dist[source, target] < 0:
        raise DisconnectedGraphError(f"{target} unreachable from {source}")
    path = [source]
    u = source
    while u != target:
        remaining = dist[u, target]
        u = next(v for v in g.out_neighbors(u) if dist[v, target] == remaining - 1)
        path.append(u)
    return path


def edge_utilities(g: Digraph) -> dict[tuple[int, int], int]:
    """Number of selected shortest paths (one per ordered pair) through each edge."""
    _require_strong(g)
    dist = all_pairs_distances(g)
    counts = {e: 0 for e in g.edges}
    for s in range(g.n):
        for t in range(g.n):
            if s == t:
                continue
            path = shortest_path(g, s, t, dist)
            for e in zip(path[:-1], path[1:]):
                counts[e] += 1
    return counts


def max_edge_utility(g: Digraph) -> int:
    return max(edge_utilities(g).values())


# ---------------------------------------------------------------------------
# Generators


def complete_digraph(n: int) -> Digraph:
    return Digraph(n, frozenset((i, j) for i in range(n) for j in range(n) if i != j))


def generate_cycle(n: int) -> Digraph:
    """Directed ring ``0 -> 1 -> ... -> n-1 -> 0``."""
    if n < 2:
        raise ValueError("a cycle needs n >= 2")
    return Digraph(n, frozenset((i, (i + 1) % n) for i in range(n)))


def generate_circulant(n: int, offsets: Sequence[int]) -> Digraph:
    """Edges ``i -> i + s (mod n)`` for each offset ``s``.

    Every node has the same in- and out-degree, so the uniform mixing
    matrices built on it are doubly stochastic.
    """
    offsets = sorted({s % n for s in offsets} - {0})
    if not offsets:
        raise ValueError("need at least one nonzero offset")
    return Digraph(n, frozenset((i, (i + s) % n) for i in range(n) for s in offsets))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def generate_random(n: int, p: float, seed=0, max_attempts: int = 10**4) -> Digraph:
    """Erdos-Renyi digraph, redrawn wholesale until strongly connected.

    Each ordered pair ``(i, j)``, ``i != j``, is an edge independently with
    probability ``p``.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    rng = _rng(seed)
    off_diag = ~np.eye(n, dtype=bool)
    for _ in range(max_attempts):
        mask = (rng.random((n, n)) < p) & off_diag
        g = Digraph(n, frozenset(zip(*map(lambda a: a.tolist(), np.nonzero(mask)))))
        if is_strongly_connected(g):
            return g
    raise GraphGenerationError(
        f"no strongly connected graph in {max_attempts} attempts (n={n}, p={p})"
    )


def random_sequence(n: int, p: float, period: int, seed: int = 0) -> DigraphSequence:
    """``period`` independent random graphs, each from its own child seed."""
    children = np.random.SeedSequence(seed).spawn(period)
    return DigraphSequence(tuple(generate_random(n, p, np.random.default_rng(c)) for c in children))


def generate_unbalanced(n: int, seed=0) -> Digraph:
    """Hub digraph with a few very high in-degree and out-degree nodes.

    A random Hamiltonian cycle guarantees strong connectivity. On top of it,
    ``ceil(n/5)`` sink hubs receive an edge from every node that is not a sink
    hub and send only their cycle edge; ``ceil(n/5)`` source hubs send to every
    node that is not a source hub and receive only their cycle edge. Sink hubs
    sit consecutively on the cycle so all but the first also hear from a sink
    hub, which pushes their in-degree to ``n - ceil(n/5) + 1``.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    rng = _rng(seed)
    n_hub = ceil(n / 5)
    if 2 * n_hub > n:
        raise ValueError("n too small for disjoint hub sets")
    perm = [int(v) for v in rng.permutation(n)]
    sinks = perm[:n_hub]
    sources = perm[n_hub : 2 * n_hub]
    rest = perm[2 * n_hub :]
    # cycle order: sink hubs in a run, then the remaining nodes shuffled
    # together with the source hubs
    tail = sources + rest
    tail = [tail[i] for i in rng.permutation(len(tail))]
    order = sinks + tail
    edges = {(order[i], order[(i + 1) % n]) for i in range(n)}
    sink_set, source_set = set(sinks), set(sources)
    for s in sinks:
        edges.update((v, s) for v in range(n) if v not in sink_set)
    for t in sources:
        edges.update((t, v) for v in range(n) if v not in source_set)
    return Digraph(n, frozenset(edges))
