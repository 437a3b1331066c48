"""Node potentials from edge flows via the graph Laplacian pseudoinverse.

The potential solver realizes the minimum-norm solution of L s = rhs by
deflated conjugate gradients per connected component, never forming a dense
matrix. The edge-flow decomposition (gradient / curl / harmonic) is the
validation counterpart: it certifies the potential as the least-squares
node-potential part of a flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import (
    Graph,
    antisymmetric_adjacency,
    connected_components,
    divergence,
    induced_subgraph,
    laplacian_matvec,
    undirected_support,
)


class SolverConvergenceError(RuntimeError):
    """Conjugate gradients failed to reach the requested residual."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"conjugate gradients: relative residual {residual:.3e} after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    """CG controls: relative residual target and per-solve iteration cap.

    ``max_iterations`` of None means 10x the system size.
    """

    tolerance: float = 1e-10
    max_iterations: int | None = None

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    def cap(self, n: int) -> int:
        return self.max_iterations if self.max_iterations is not None else 10 * n


@dataclass(frozen=True)
class PotentialScores:
    """Per-node potential values, mean-zero on every connected component."""

    values: np.ndarray
    per_component_mean_zero: bool = True


@dataclass(frozen=True)
class EdgeFlow:
    """Values on canonically oriented edges (i < j); the reverse value is implied negative.

    Entry k corresponds to row k of ``canonical_edges(g)`` for the owning graph.
    """

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))


@dataclass(frozen=True)
class HodgeDecomposition:
    potential: PotentialScores
    gradient_part: EdgeFlow
    curl_part: EdgeFlow
    harmonic_part: EdgeFlow


def canonical_edges(g: Graph) -> np.ndarray:
    """Undirected edges as (i, j) rows with i < j, lexicographically sorted."""
    if g.directed:
        raise ValueError("canonical edge orientation requires an undirected graph")
    pairs = g.edge_pairs()
    if pairs.shape[0] == 0:
        return pairs
    return pairs[pairs[:, 0] < pairs[:, 1]]


def flow_inner(x: EdgeFlow, y: EdgeFlow) -> float:
    return float(x.values @ y.values)


def flow_norm(x: EdgeFlow) -> float:
    return float(np.linalg.norm(x.values))


def _cg_mean_zero(sub: Graph, b: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """CG for L x = b on one connected component, iterates deflated to mean zero."""
    n = sub.num_nodes
    raw_norm = np.linalg.norm(b)
    b = b - b.mean()
    b_norm = np.linalg.norm(b)
    # A rhs inside ker(L) leaves only projection round-off; the solution is 0.
    if b_norm <= 1e-14 * max(1.0, raw_norm):
        return np.zeros(n)
    target = cfg.tolerance * b_norm
    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    limit = cfg.cap(n)
    for _ in range(limit):
        if np.sqrt(rs) <= target:
            break
        ap = laplacian_matvec(sub, p)
        denom = float(p @ ap)
        if denom <= 0.0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        r -= r.mean()
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) > target:
        raise SolverConvergenceError(np.sqrt(rs) / b_norm, limit)
    return x - x.mean()


def min_norm_laplacian_solve(g: Graph, rhs: np.ndarray, cfg: SolverConfig | None = None) -> np.ndarray:
    """Pseudoinverse action x = L^+ rhs for the combinatorial Laplacian L = D - A.

    Per connected component the right-hand side is projected onto the mean-zero
    subspace and solved by deflated CG; single-node components return 0.
    """
    if g.directed:
        raise ValueError("Laplacian solve requires an undirected graph")
    cfg = cfg or SolverConfig()
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (g.num_nodes,):
        raise ValueError(f"rhs length {rhs.shape} does not match num_nodes={g.num_nodes}")
    labeling = connected_components(g)
    x = np.zeros(g.num_nodes)
    for c in range(labeling.component_count):
        idx = np.flatnonzero(labeling.component_id == c)
        if idx.shape[0] == 1:
            continue
        sub, _ = induced_subgraph(g, idx)
        x[idx] = _cg_mean_zero(sub, rhs[idx], cfg)
    return x


def hodge_potential_score(g: Graph, cfg: SolverConfig | None = None) -> PotentialScores:
    """Topological node potential: minus the pseudoinverse Laplacian applied to
    the divergence of the signed adjacency.

    Net-flow sinks of a directed graph score highest; on an undirected graph the
    divergence is the degree vector, so regular graphs score identically zero.
    """
    div = divergence(antisymmetric_adjacency(g), g.num_nodes)
    support = undirected_support(g)
    values = -min_norm_laplacian_solve(support, div, cfg)
    return PotentialScores(values=values)


def _potential_values(s) -> np.ndarray:
    return s.values if isinstance(s, PotentialScores) else np.asarray(s, dtype=np.float64)


def grad_of_potential(g: Graph, s) -> EdgeFlow:
    """Flow s_j - s_i on every canonical edge (i, j)."""
    values = _potential_values(s)
    if values.shape != (g.num_nodes,):
        raise ValueError(f"potential length {values.shape} does not match num_nodes={g.num_nodes}")
    edges = canonical_edges(g)
    return EdgeFlow(values[edges[:, 1]] - values[edges[:, 0]] if edges.shape[0] else np.zeros(0))


def flow_divergence(g: Graph, x: EdgeFlow) -> np.ndarray:
    """Node divergence sum_j X(i, j) of an antisymmetric edge flow."""
    edges = canonical_edges(g)
    vals = x.values
    if vals.shape[0] != edges.shape[0]:
        raise ValueError(f"flow has {vals.shape[0]} values for {edges.shape[0]} edges")
    out = np.bincount(edges[:, 0], weights=vals, minlength=g.num_nodes)
    out -= np.bincount(edges[:, 1], weights=vals, minlength=g.num_nodes)
    return out


def enumerate_triangles(g: Graph) -> np.ndarray:
    """All 3-cliques as (i, j, k) rows with i < j < k, lexicographic order."""
    if g.directed:
        raise ValueError("triangle enumeration requires an undirected graph")
    rows: list[tuple[int, int, int]] = []
    for i, j in canonical_edges(g):
        common = np.intersect1d(g.neighbors(i), g.neighbors(j), assume_unique=True)
        for k in common[common > j]:
            rows.append((int(i), int(j), int(k)))
    return np.asarray(rows, dtype=np.int64).reshape(-1, 3)


def _edge_index_lookup(g: Graph):
    edges = canonical_edges(g)
    keys = edges[:, 0] * g.num_nodes + edges[:, 1]

    def lookup(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        # Caller guarantees (a, b) are edges with a < b.
        want = a * g.num_nodes + b
        pos = np.searchsorted(keys, want)
        return pos

    return lookup


def _triangle_edges(g: Graph, triangles: np.ndarray):
    """Canonical edge indices (ij, jk, ik) for each triangle row."""
    lookup = _edge_index_lookup(g)
    i, j, k = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    return lookup(i, j), lookup(j, k), lookup(i, k)


def curl(g: Graph, x: EdgeFlow, triangles: np.ndarray | None = None) -> np.ndarray:
    """Circulation X(i,j) + X(j,k) + X(k,i) around every triangle."""
    if triangles is None:
        triangles = enumerate_triangles(g)
    if triangles.shape[0] == 0:
        return np.zeros(0)
    e_ij, e_jk, e_ik = _triangle_edges(g, triangles)
    return x.values[e_ij] + x.values[e_jk] - x.values[e_ik]


def decompose_edge_flow(g: Graph, x: EdgeFlow, cfg: SolverConfig | None = None) -> HodgeDecomposition:
    """Split a flow into gradient, curl, and harmonic parts.

    The gradient part is grad(s) for the least-squares potential s (normal
    equations L s = -div X). The curl part is the projection of the remainder
    onto the span of triangle circulations, solved by CG on the triangle-space
    normal equations. What is left is harmonic: divergence-free and curl-free.
    """
    if g.directed:
        raise ValueError("edge-flow decomposition requires an undirected graph")
    cfg = cfg or SolverConfig()
    edges = canonical_edges(g)
    vals = x.values
    if vals.shape[0] != edges.shape[0]:
        raise ValueError(f"flow has {vals.shape[0]} values for {edges.shape[0]} edges")

    potential = min_norm_laplacian_solve(g, -flow_divergence(g, x), cfg)
    gradient_part = grad_of_potential(g, potential)
    residual = vals - gradient_part.values

    triangles = enumerate_triangles(g)
    if triangles.shape[0] == 0:
        curl_vals = np.zeros_like(residual)
    else:
        e_ij, e_jk, e_ik = _triangle_edges(g, triangles)
        m = edges.shape[0]

        def circulation(alpha: np.ndarray) -> np.ndarray:
            flow = np.zeros(m)
            np.add.at(flow, e_ij, alpha)
            np.add.at(flow, e_jk, alpha)
            np.subtract.at(flow, e_ik, alpha)
            return flow

        def tri_curl(flow: np.ndarray) -> np.ndarray:
            return flow[e_ij] + flow[e_jk] - flow[e_ik]

        alpha = _cg_triangle_projection(circulation, tri_curl, tri_curl(residual), triangles.shape[0], cfg)
        curl_vals = circulation(alpha)

    harmonic_vals = residual - curl_vals
    return HodgeDecomposition(
        potential=PotentialScores(values=potential),
        gradient_part=gradient_part,
        curl_part=EdgeFlow(curl_vals),
        harmonic_part=EdgeFlow(harmonic_vals),
    )


def _cg_triangle_projection(circulation, tri_curl, rhs: np.ndarray, n_tri: int, cfg: SolverConfig) -> np.ndarray:
    """CG on the (possibly singular) Gram system of triangle circulations.

    The right-hand side lies in the range by construction, so CG converges;
    null-space drift in alpha leaves the projected flow unchanged.
    """
    b_norm = np.linalg.norm(rhs)
    if b_norm == 0.0:
        return np.zeros(n_tri)
    target = cfg.tolerance * b_norm
    alpha = np.zeros(n_tri)
    r = rhs.copy()
    p = r.copy()
    rs = float(r @ r)
    limit = cfg.cap(n_tri)
    for _ in range(limit):
        if np.sqrt(rs) <= target:
            break
        ap = tri_curl(circulation(p))
        denom = float(p @ ap)
        if denom <= 0.0:
            break
        step = rs / denom
        alpha += step * p
        r -= step * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) > target:
        raise SolverConvergenceError(np.sqrt(rs) / b_norm, limit)
    return alpha
