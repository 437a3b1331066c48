"""Immutable CSR graphs: construction, preprocessing queries, and discrete operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Sparse graph in CSR form. Neighbor lists are sorted, deduplicated, self-loop free.

    For undirected graphs the adjacency is symmetric (every edge stored in both rows).
    Optional per-node ``features`` (n x d) and integer ``labels`` (n,) ride along.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    directed: bool
    features: np.ndarray | None = None
    labels: np.ndarray | None = None

    @property
    def num_edge_entries(self) -> int:
        """Stored (directed) adjacency entries; an undirected edge counts twice."""
        return int(self.col_indices.shape[0])

    @property
    def num_edges(self) -> int:
        """Edge count: unordered pairs if undirected, arcs if directed."""
        n = self.num_edge_entries
        return n // 2 if not self.directed else n

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[u] : self.row_offsets[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.neighbors(u)
        k = np.searchsorted(nbrs, v)
        return bool(k < nbrs.shape[0] and nbrs[k] == v)

    def edge_pairs(self) -> np.ndarray:
        """All stored (u, v) entries as an (m, 2) array, row-major order."""
        counts = np.diff(self.row_offsets)
        src = np.repeat(np.arange(self.num_nodes, dtype=np.int64), counts)
        return np.stack([src, self.col_indices], axis=1)


@dataclass(frozen=True)
class ComponentLabeling:
    """Connected-component ids, contiguous in [0, component_count).

    Components are numbered in order of their smallest member node id.
    """

    component_id: np.ndarray
    component_count: int

    def sizes(self) -> np.ndarray:
        return np.bincount(self.component_id, minlength=self.component_count)


@dataclass(frozen=True)
class SignedAdjacency:
    """Signed edge list (src[k], dst[k], sign[k]) with sign in {+1, -1}."""

    src: np.ndarray
    dst: np.ndarray
    sign: np.ndarray
    num_nodes: int

    def pairs(self) -> set[tuple[int, int, int]]:
        return {(int(i), int(j), int(s)) for i, j, s in zip(self.src, self.dst, self.sign)}


def build_graph(
    edges,
    num_nodes: int,
    directed: bool = False,
    features: np.ndarray | None = None,
    labels: np.ndarray | None = None,
) -> Graph:
    """Build a CSR graph from (u, v) pairs.

    Self-loops are dropped, duplicates merged; undirected graphs are symmetrized.
    """
    if num_nodes < 0:
        raise ValueError(f"num_nodes must be nonnegative, got {num_nodes}")
    pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0]:
        bad = (pairs < 0) | (pairs >= num_nodes)
        if bad.any():
            u, v = pairs[bad.any(axis=1)][0]
            raise ValueError(f"node id out of range: edge ({u}, {v}) with num_nodes={num_nodes}")
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if not directed and pairs.shape[0]:
        pairs = np.concatenate([pairs, pairs[:, ::-1]], axis=0)
    if pairs.shape[0]:
        pairs = np.unique(pairs, axis=0)

    counts = np.bincount(pairs[:, 0], minlength=num_nodes) if pairs.shape[0] else np.zeros(num_nodes, dtype=np.int64)
    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=row_offsets[1:])
    col_indices = pairs[:, 1].copy() if pairs.shape[0] else np.zeros(0, dtype=np.int64)

    if features is not None:
        features = np.array(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != num_nodes:
            raise ValueError(f"features must be (num_nodes, d), got shape {features.shape}")
        _frozen(features)
    if labels is not None:
        labels = np.array(labels, dtype=np.int64)
        if labels.shape != (num_nodes,):
            raise ValueError(f"labels must have shape ({num_nodes},), got {labels.shape}")
        _frozen(labels)
    return Graph(num_nodes, _frozen(row_offsets), _frozen(col_indices), directed, features, labels)


def undirected_support(g: Graph) -> Graph:
    """The graph on the same nodes with every arc made reciprocal."""
    if not g.directed:
        return g
    return build_graph(g.edge_pairs(), g.num_nodes, directed=False, features=g.features, labels=g.labels)


def degree_vector(g: Graph) -> np.ndarray:
    """Per-node degree of the undirected support, as float64."""
    if g.directed:
        g = undirected_support(g)
    return np.diff(g.row_offsets).astype(np.float64)


def laplacian_matvec(g: Graph, x: np.ndarray) -> np.ndarray:
    """(D - A) x computed from the CSR structure; g must be undirected."""
    if g.directed:
        raise ValueError("laplacian_matvec requires an undirected graph")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.num_nodes,):
        raise ValueError(f"vector length {x.shape} does not match num_nodes={g.num_nodes}")
    # A x: row-aligned segment sums over neighbor lists.
    counts = np.diff(g.row_offsets)
    rows = np.repeat(np.arange(g.num_nodes, dtype=np.int64), counts)
    ax = np.bincount(rows, weights=x[g.col_indices], minlength=g.num_nodes)
    return counts * x - ax


def antisymmetric_adjacency(g: Graph) -> SignedAdjacency:
    """Signed adjacency: +1 on one-way arcs, -1 on their transposes, reciprocal pairs cancel.

    For an undirected graph every stored entry gets sign +1 (the plain adjacency).
    """
    pairs = g.edge_pairs()
    if not g.directed:
        sign = np.ones(pairs.shape[0], dtype=np.int64)
        return SignedAdjacency(_frozen(pairs[:, 0].copy()), _frozen(pairs[:, 1].copy()), _frozen(sign), g.num_nodes)
    if pairs.shape[0] == 0:
        z = np.zeros(0, dtype=np.int64)
        return SignedAdjacency(_frozen(z), _frozen(z.copy()), _frozen(z.copy()), g.num_nodes)
    # One-way arcs are those whose transpose is absent.
    keys = pairs[:, 0] * g.num_nodes + pairs[:, 1]
    rev_keys = pairs[:, 1] * g.num_nodes + pairs[:, 0]
    one_way = ~np.isin(keys, rev_keys)
    fw = pairs[one_way]
    src = np.concatenate([fw[:, 0], fw[:, 1]])
    dst = np.concatenate([fw[:, 1], fw[:, 0]])
    sign = np.concatenate([np.ones(fw.shape[0], dtype=np.int64), -np.ones(fw.shape[0], dtype=np.int64)])
    order = np.lexsort((dst, src))
    return SignedAdjacency(_frozen(src[order]), _frozen(dst[order]), _frozen(sign[order]), g.num_nodes)


def divergence(signed_adj: SignedAdjacency, n: int) -> np.ndarray:
    """Row sums of the signed adjacency: entry i is sum_j sign(i, j)."""
    if signed_adj.src.shape[0] and (signed_adj.src.max() >= n or signed_adj.dst.max() >= n):
        raise ValueError("signed adjacency references nodes >= n")
    return np.bincount(signed_adj.src, weights=signed_adj.sign.astype(np.float64), minlength=n)


def connected_components(g: Graph) -> ComponentLabeling:
    """BFS labeling on the undirected support."""
    support = undirected_support(g)
    comp = np.full(g.num_nodes, -1, dtype=np.int64)
    count = 0
    for start in range(g.num_nodes):
        if comp[start] >= 0:
            continue
        comp[start] = count
        frontier = [start]
        while frontier:
            nxt = []
            for u in frontier:
                for v in support.neighbors(u):
                    if comp[v] < 0:
                        comp[v] = count
                        nxt.append(int(v))
            frontier = nxt
        count += 1
    return ComponentLabeling(_frozen(comp), count)


def induced_subgraph(g: Graph, nodes) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on ``nodes``; returns (subgraph, old->new id map).

    New ids follow ascending old-id order. The map has -1 for dropped nodes.
    """
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    if nodes.shape[0] and (nodes[0] < 0 or nodes[-1] >= g.num_nodes):
        raise ValueError(f"node id out of range in subgraph selection (num_nodes={g.num_nodes})")
    old_to_new = np.full(g.num_nodes, -1, dtype=np.int64)
    old_to_new[nodes] = np.arange(nodes.shape[0], dtype=np.int64)

    pairs = g.edge_pairs()
    if pairs.shape[0]:
        keep = (old_to_new[pairs[:, 0]] >= 0) & (old_to_new[pairs[:, 1]] >= 0)
        pairs = old_to_new[pairs[keep]]
    sub = build_graph(
        pairs,
        nodes.shape[0],
        directed=g.directed,
        features=g.features[nodes] if g.features is not None else None,
        labels=g.labels[nodes] if g.labels is not None else None,
    )
    return sub, _frozen(old_to_new)


def largest_connected_component(g: Graph) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on the largest component; size ties go to the one seen first.

    Component numbering follows smallest member id, so the tie-break is the
    component containing the smallest node id.
    """
    if g.num_nodes == 0:
        raise ValueError("empty graph has no largest connected component")
    labeling = connected_components(g)
    best = int(np.argmax(labeling.sizes()))
    keep = np.flatnonzero(labeling.component_id == best)
    return induced_subgraph(g, keep)


def as_node_set(ids, num_nodes: int) -> np.ndarray:
    """Validate and canonicalize a node set: sorted unique int64 ids < num_nodes."""
    ids = np.unique(np.asarray(ids, dtype=np.int64))
    if ids.shape[0] and (ids[0] < 0 or ids[-1] >= num_nodes):
        raise ValueError(f"node id out of range for graph with {num_nodes} nodes")
    return ids


def read_edge_list(path, num_nodes: int | None = None) -> tuple[list[tuple[int, int]], int]:
    """Parse a tab-separated edge-list file; '#' lines are comments.

    Returns (edges, node_count) with node count inferred as max id + 1 unless given.
    """
    edges: list[tuple[int, int]] = []
    max_id = -1
    with open(Path(path), "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'u<TAB>v', got {raw!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer node id in {raw!r}") from None
            if u < 0 or v < 0:
                raise ValueError(f"{path}:{lineno}: negative node id in {raw!r}")
            edges.append((u, v))
            max_id = max(max_id, u, v)
    inferred = max_id + 1
    if num_nodes is None:
        return edges, inferred
    if inferred > num_nodes:
        raise ValueError(f"{path}: edge references node {max_id} but num_nodes={num_nodes}")
    return edges, num_nodes
