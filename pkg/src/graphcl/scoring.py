"""Node importance scores, min-max fusion, and per-class budgeted selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gnn import per_node_grad_norm
from .hodge import PotentialScores

SCORE_KINDS = ("loss", "topo", "mixed", "random", "mean_of_feature", "degree")


@dataclass(frozen=True)
class ScoreVector:
    """Per-node scores over one task's training set."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.values.size and not np.isfinite(self.values).all():
            raise ValueError("scores must be finite")


@dataclass(frozen=True)
class FusionConfig:
    beta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")


def grand_scores(model, adj, features, train_nodes, labels, mask) -> ScoreVector:
    """Gradient-norm score per training node, taken at the current parameters.

    Expects the model as it stands after finishing the task's training.
    """
    train_nodes = np.asarray(train_nodes, dtype=np.int64)
    values = np.array([per_node_grad_norm(model, adj, features, int(v), labels, mask) for v in train_nodes])
    return ScoreVector(values, "loss")


def topo_scores(hps: PotentialScores, train_nodes) -> ScoreVector:
    """Restriction of precomputed potentials to the training nodes."""
    train_nodes = np.asarray(train_nodes, dtype=np.int64)
    if train_nodes.size and (train_nodes.min() < 0 or train_nodes.max() >= hps.values.shape[0]):
        raise ValueError("training node outside the potential's domain")
    return ScoreVector(hps.values[train_nodes], "topo")


def minmax_normalize(s: ScoreVector) -> ScoreVector:
    """(s - min) / (max - min); a constant vector maps to all zeros."""
    if s.values.size == 0:
        raise ValueError("cannot normalize an empty score vector")
    lo, hi = s.values.min(), s.values.max()
    if hi == lo:
        return ScoreVector(np.zeros_like(s.values), s.kind)
    return ScoreVector((s.values - lo) / (hi - lo), s.kind)


def fuse_scores(loss_scores: ScoreVector, topo_scores_: ScoreVector, cfg: FusionConfig) -> ScoreVector:
    """Convex blend of min-max normalized score sources."""
    if loss_scores.values.shape != topo_scores_.values.shape:
        raise ValueError("score vectors must have equal length")
    a = minmax_normalize(loss_scores).values
    b = minmax_normalize(topo_scores_).values
    return ScoreVector((1.0 - cfg.beta) * a + cfg.beta * b, "mixed")


def _class_positions(labels: np.ndarray):
    for c in np.unique(labels):
        yield int(c), np.flatnonzero(labels == c)


def select_deterministic(scores: ScoreVector, labels, b: int) -> np.ndarray:
    """Top-b positions per class, ties to the lower position; sorted union."""
    if b < 1:
        raise ValueError("selection budget must be >= 1")
    labels = np.asarray(labels, dtype=np.int64)
    picked = []
    for _, pos in _class_positions(labels):
        order = np.lexsort((pos, -scores.values[pos]))
        picked.append(pos[order[: min(b, pos.shape[0])]])
    return np.sort(np.concatenate(picked)) if picked else np.zeros(0, dtype=np.int64)


def select_probabilistic(scores: ScoreVector, labels, b: int, seed: int) -> np.ndarray:
    """b draws per class without replacement, probability proportional to score.

    Classes whose remaining scores sum to zero fall back to uniform draws.
    Each class consumes its own RNG stream derived from (seed, class id).
    """
    if b < 1:
        raise ValueError("selection budget must be >= 1")
    labels = np.asarray(labels, dtype=np.int64)
    if scores.values.size and scores.values.min() < 0:
        raise ValueError("probabilistic selection needs nonnegative scores")
    picked = []
    for c, pos in _class_positions(labels):
        rng = np.random.default_rng([seed, c])
        remaining = pos.tolist()
        weights = scores.values[pos].tolist()
        for _ in range(min(b, pos.shape[0])):
            total = sum(weights)
            if total > 0.0:
                p = np.asarray(weights) / total
            else:
                p = np.full(len(remaining), 1.0 / len(remaining))
            k = int(rng.choice(len(remaining), p=p))
            picked.append(remaining.pop(k))
            weights.pop(k)
    return np.sort(np.asarray(picked, dtype=np.int64))


def baseline_scores(kind: str, labels, features=None, degrees=None, seed: int = 0) -> ScoreVector:
    """Non-fused reference scores: seeded uniform, class-prototype distance, or degree."""
    labels = np.asarray(labels, dtype=np.int64)
    if kind == "random":
        rng = np.random.default_rng(seed)
        return ScoreVector(rng.random(labels.shape[0]), "random")
    if kind == "mean_of_feature":
        if features is None:
            raise ValueError("mean_of_feature scores require features")
        features = np.asarray(features, dtype=np.float64)
        values = np.zeros(labels.shape[0])
        for _, pos in _class_positions(labels):
            center = features[pos].mean(axis=0)
            values[pos] = -np.linalg.norm(features[pos] - center, axis=1)
        return ScoreVector(values, "mean_of_feature")
    if kind == "degree":
        if degrees is None:
            raise ValueError("degree scores require a degree vector")
        return ScoreVector(np.asarray(degrees, dtype=np.float64), "degree")
    raise ValueError(f"unknown baseline kind {kind!r}")
