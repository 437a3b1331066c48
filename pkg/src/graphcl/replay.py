"""Experience buffer of sampled nodes with their induced subgraph, and the replay loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gnn import loss_and_grad, propagation_matrix
from .graph import Graph, build_graph, induced_subgraph


@dataclass(frozen=True)
class ExperienceBuffer:
    """Sampled nodes from completed tasks, stored by value.

    The buffer graph lives on local ids aligned with ``node_ids`` (globally
    sorted). Its edge set is the union of per-task induced subgraphs, so nodes
    from different tasks are never adjacent and no non-sampled node is stored.
    """

    node_ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    task_ids: np.ndarray
    graph: Graph

    @property
    def num_nodes(self) -> int:
        return int(self.node_ids.shape[0])

    @property
    def is_empty(self) -> bool:
        return self.num_nodes == 0


def empty_buffer(feature_dim: int) -> ExperienceBuffer:
    z = np.zeros(0, dtype=np.int64)
    return ExperienceBuffer(z, np.zeros((0, feature_dim)), z.copy(), z.copy(), build_graph([], 0))


def update_buffer(
    buf: ExperienceBuffer,
    task_graph: Graph,
    selected,
    global_ids,
    task_id: int,
    features=None,
    labels=None,
) -> ExperienceBuffer:
    """Append ``selected`` task-local nodes (with their induced subgraph) to the buffer.

    ``global_ids`` names each selected node in the dataset-wide id space; tasks
    are vertex-disjoint, so any overlap with the current buffer is an error.
    Features and labels default to the ones carried by the task graph.
    """
    selected = np.asarray(selected, dtype=np.int64)
    global_ids = np.asarray(global_ids, dtype=np.int64)
    if selected.shape != global_ids.shape:
        raise ValueError("selected and global_ids must align")
    if selected.shape[0] == 0:
        return buf
    if np.unique(selected).shape[0] != selected.shape[0]:
        raise ValueError("selected nodes must be unique")
    overlap = np.intersect1d(global_ids, buf.node_ids)
    if overlap.shape[0]:
        raise ValueError(f"buffer already holds node {int(overlap[0])}; tasks must be disjoint")

    sub, _ = induced_subgraph(task_graph, selected)
    order = np.argsort(selected)  # induced subgraph numbers nodes in ascending local id
    new_ids = global_ids[order]
    new_features = sub.features if features is None else np.asarray(features, dtype=np.float64)[order]
    new_labels = sub.labels if labels is None else np.asarray(labels, dtype=np.int64)[order]
    if new_features is None or new_labels is None:
        raise ValueError("task graph carries no features/labels; pass them explicitly")

    all_ids = np.concatenate([buf.node_ids, new_ids])
    resort = np.argsort(all_ids)
    position = np.empty_like(resort)
    position[resort] = np.arange(all_ids.shape[0])

    edges = []
    old_pairs = buf.graph.edge_pairs()
    if old_pairs.shape[0]:
        edges.append(position[old_pairs])
    sub_pairs = sub.edge_pairs()
    if sub_pairs.shape[0]:
        edges.append(position[buf.num_nodes + sub_pairs])
    merged = np.concatenate(edges, axis=0) if edges else np.zeros((0, 2), dtype=np.int64)

    graph = build_graph(merged, all_ids.shape[0])
    features_cat = np.concatenate([buf.features, new_features], axis=0)[resort]
    labels_cat = np.concatenate([buf.labels, new_labels])[resort]
    tasks_cat = np.concatenate([buf.task_ids, np.full(new_ids.shape[0], task_id, dtype=np.int64)])[resort]
    return ExperienceBuffer(all_ids[resort], features_cat, labels_cat, tasks_cat, graph)


def buffer_stats(buf: ExperienceBuffer) -> dict:
    """Node/edge/byte totals; bytes cover exactly what the buffer retains."""
    nbytes = (
        buf.node_ids.nbytes
        + buf.features.nbytes
        + buf.labels.nbytes
        + buf.task_ids.nbytes
        + buf.graph.row_offsets.nbytes
        + buf.graph.col_indices.nbytes
    )
    return {"nodes": buf.num_nodes, "edges": buf.graph.num_edges, "bytes": int(nbytes)}


def combined_loss(model, task_adj, task_features, task_nodes, task_labels, buf, lam, mask, buffer_adj=None):
    """Task cross-entropy plus lam times the buffer's own cross-entropy.

    Each term is a mean over its node set and runs a separate forward pass on
    its own graph. An empty buffer (or lam = 0) reduces exactly to the task loss.
    """
    if lam < 0:
        raise ValueError("replay weight lam must be >= 0")
    loss, grads = loss_and_grad(model, task_adj, task_features, task_nodes, task_labels, mask)
    if buf.is_empty or lam == 0.0:
        return loss, grads
    if buffer_adj is None:
        buffer_adj = propagation_matrix(buf.graph, model.backbone)
    buf_loss, buf_grads = loss_and_grad(
        model, buffer_adj, buf.features, np.arange(buf.num_nodes), buf.labels, mask
    )
    total = loss + lam * buf_loss
    return total, [g + lam * bg for g, bg in zip(grads, buf_grads)]
