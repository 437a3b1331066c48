"""Shared test utilities: random graphs and dense oracles kept independent of the library."""

from __future__ import annotations

import numpy as np

from graphcl.graph import Graph, build_graph


def gnp_edges(n: int, p: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    mask = rng.random((n, n)) < p
    ui, uj = np.triu_indices(n, k=1)
    keep = mask[ui, uj]
    return list(zip(ui[keep].tolist(), uj[keep].tolist()))


def random_connected_graph(n: int, p: float, seed: int) -> Graph:
    """G(n, p) made connected by chaining one node of each BFS component."""
    rng = np.random.default_rng(seed)
    edges = gnp_edges(n, p, rng)
    adj = {i: set() for i in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen = np.zeros(n, dtype=bool)
    roots = []
    for s in range(n):
        if seen[s]:
            continue
        roots.append(s)
        stack = [s]
        seen[s] = True
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
    for a, b in zip(roots, roots[1:]):
        edges.append((a, b))
    return build_graph(edges, n, directed=False)


def dense_adjacency(g: Graph) -> np.ndarray:
    a = np.zeros((g.num_nodes, g.num_nodes))
    for u, v in g.edge_pairs():
        a[u, v] = 1.0
    return a


def dense_laplacian(g: Graph) -> np.ndarray:
    a = dense_adjacency(g)
    return np.diag(a.sum(axis=1)) - a
