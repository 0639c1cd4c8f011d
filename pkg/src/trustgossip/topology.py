"""Random and regular graph generators over node indices ``0..n-1``.

Each generator consumes a ``numpy.random.Generator`` in a fixed order so the
same seed always yields the same graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple  # sorted (u, v) pairs with u < v

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        canon = set()
        for u, v in edges:
            if u == v:
                raise InvalidInputError(f"self-loop at {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise InvalidInputError(f"edge ({u}, {v}) out of range for n={n}")
            canon.add((min(u, v), max(u, v)))
        return cls(n, tuple(sorted(canon)))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def components(self) -> list[list[int]]:
        parent = list(range(self.n))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in self.edges:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
        groups: dict[int, list[int]] = {}
        for x in range(self.n):
            groups.setdefault(find(x), []).append(x)
        return sorted(groups.values(), key=lambda g: (-len(g), g[0]))

    def is_connected(self) -> bool:
        return self.n <= 1 or len(self.components()) == 1

    def reachable_pair_fraction(self) -> float:
        """Share of ordered node pairs that lie in a common component."""
        if self.n < 2:
            return 1.0
        return sum(len(c) * (len(c) - 1) for c in self.components()) / (self.n * (self.n - 1))

    def largest_component_pair_fraction(self) -> float:
        """Share of ordered node pairs that lie inside the largest component."""
        if self.n < 2:
            return 1.0
        big = len(self.components()[0])
        return big * (big - 1) / (self.n * (self.n - 1))


def gen_erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    """G(n, p): one uniform draw per candidate pair, in (u, v) lexicographic order."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"edge probability {p} outside [0, 1]")
    us, vs = np.triu_indices(n, k=1)
    keep = rng.random(us.size) < p
    return Graph(n, tuple(zip(us[keep].tolist(), vs[keep].tolist())))


def gen_watts_strogatz(n: int, k: int, p: float, rng: np.random.Generator) -> Graph:
    """Ring lattice of degree ``k`` with each lattice edge rewired with probability ``p``.

    Lattice edges ``(u, u + j)`` are visited node by node, then by offset
    ``j = 1..k/2``. A rewired edge keeps ``u`` and moves its other end to a
    uniformly drawn node that is neither ``u`` nor already adjacent to it.
    """
    if k < 2 or k % 2:
        raise InvalidInputError(f"k must be an even integer >= 2, got {k}")
    if n <= k:
        raise InvalidInputError(f"n must exceed k (n={n}, k={k})")
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"rewiring probability {p} outside [0, 1]")
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            if rng.random() >= p or v not in adj[u]:
                continue
            if len(adj[u]) >= n - 1:
                continue
            while True:
                w = int(rng.integers(n))
                if w != u and w not in adj[u]:
                    break
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
    return Graph(n, tuple(sorted((u, v) for u in range(n) for v in adj[u] if u < v)))


def gen_barabasi_albert(n: int, m: int, rng: np.random.Generator) -> Graph:
    """Preferential attachment grown from ``m`` isolated seed nodes.

    Each arrival links to ``m`` distinct existing nodes, sampled with
    probability proportional to degree; while every degree is still zero the
    draw is uniform. The result has exactly ``m * (n - m)`` edges.
    """
    if m < 1 or n <= m:
        raise InvalidInputError(f"need n > m >= 1, got n={n}, m={m}")
    edges = []
    # each node appears once per incident edge end
    repeated: list[int] = []
    for t in range(m, n):
        pool = repeated if repeated else list(range(t))
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(pool[int(rng.integers(len(pool)))])
        for s in sorted(targets):
            edges.append((s, t))
            repeated.extend((s, t))
    return Graph(n, tuple(sorted(edges)))


def gen_complete(n: int) -> Graph:
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    return Graph(n, tuple((u, v) for u in range(n) for v in range(u + 1, n)))


def write_edge_list(graph: Graph, path) -> None:
    Path(path).write_text("".join(f"{u} {v}\n" for u, v in graph.edges))


def read_edge_list(path, n: int) -> Graph:
    edges = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            u, v = line.split()
            edges.append((int(u), int(v)))
    return Graph.from_edges(n, edges)
