"""Two-layer graph networks in plain numpy with exact reverse-mode gradients.

Training here is full-batch and single-threaded on purpose: runs must be
bitwise reproducible from a seed, and per-node gradient norms need the same
code path as the training loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_BACKBONES = ("gcn", "gin")


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 256
    num_layers: int = 2
    learning_rate: float = 0.005
    epochs: int = 200
    backbone: str = "gcn"
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.num_layers != 2:
            raise ValueError("only 2-layer models are supported")
        if self.backbone not in _BACKBONES:
            raise ValueError(f"backbone must be one of {_BACKBONES}, got {self.backbone!r}")


@dataclass(frozen=True)
class NormalizedAdjacency:
    """CSR propagation operator; symmetric with positive stored entries."""

    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    num_nodes: int

    def matmat(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.num_nodes == 0:
            return np.zeros((0, x.shape[1]))
        contrib = self.values[:, None] * x[self.col_indices]
        counts = np.diff(self.row_offsets)
        if contrib.shape[0] and counts.min() > 0:
            return np.add.reduceat(contrib, self.row_offsets[:-1], axis=0)
        out = np.zeros((self.num_nodes, x.shape[1]))
        rows = np.repeat(np.arange(self.num_nodes), counts)
        np.add.at(out, rows, contrib)
        return out


def normalize_adjacency(g: Graph) -> NormalizedAdjacency:
    """Symmetrically normalized adjacency with self-loops added for the normalization.

    The stored dataset has no self-loops; the loop here belongs to the
    propagation operator, not the data.
    """
    if g.directed:
        raise ValueError("adjacency normalization requires an undirected graph")
    n = g.num_nodes
    deg = np.diff(g.row_offsets) + 1.0  # +1 for the added self-loop
    inv_sqrt = 1.0 / np.sqrt(deg)
    pairs = g.edge_pairs()
    src = np.concatenate([pairs[:, 0], np.arange(n, dtype=np.int64)])
    dst = np.concatenate([pairs[:, 1], np.arange(n, dtype=np.int64)])
    vals = inv_sqrt[src] * inv_sqrt[dst]
    order = np.lexsort((dst, src))
    src, dst, vals = src[order], dst[order], vals[order]
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=row_offsets[1:])
    return NormalizedAdjacency(row_offsets, dst, vals, n)


def gin_aggregation(g: Graph) -> NormalizedAdjacency:
    """Sum aggregator A + I (epsilon = 0) in the same CSR container."""
    if g.directed:
        raise ValueError("aggregation requires an undirected graph")
    n = g.num_nodes
    pairs = g.edge_pairs()
    src = np.concatenate([pairs[:, 0], np.arange(n, dtype=np.int64)])
    dst = np.concatenate([pairs[:, 1], np.arange(n, dtype=np.int64)])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=row_offsets[1:])
    return NormalizedAdjacency(row_offsets, dst, np.ones(src.shape[0]), n)


def propagation_matrix(g: Graph, backbone: str) -> NormalizedAdjacency:
    return normalize_adjacency(g) if backbone == "gcn" else gin_aggregation(g)


@dataclass
class GnnModel:
    """Parameter container; ``params`` order is fixed per backbone.

    gcn: [W1, b1, W2, b2]
    gin: [Wa1, ba1, Wb1, bb1, Wa2, ba2, Wb2, bb2] (one hidden-layer MLP per hop)
    """

    backbone: str
    params: list[np.ndarray]
    input_dim: int
    hidden_dim: int
    num_classes: int

    def copy(self) -> "GnnModel":
        return GnnModel(self.backbone, [p.copy() for p in self.params], self.input_dim, self.hidden_dim, self.num_classes)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat_params(self, flat: np.ndarray) -> None:
        k = 0
        for p in self.params:
            p[...] = flat[k : k + p.size].reshape(p.shape)
            k += p.size


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(cfg: ModelConfig, input_dim: int, num_classes: int, seed: int | None = None) -> GnnModel:
    """Seeded Glorot-uniform weights, zero biases; output width fixed to the benchmark's class count."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    d, h, c = input_dim, cfg.hidden_dim, num_classes
    if cfg.backbone == "gcn":
        params = [_glorot(rng, d, h), np.zeros(h), _glorot(rng, h, c), np.zeros(c)]
    else:
        params = [
            _glorot(rng, d, h), np.zeros(h), _glorot(rng, h, h), np.zeros(h),
            _glorot(rng, h, h), np.zeros(h), _glorot(rng, h, c), np.zeros(c),
        ]
    return GnnModel(cfg.backbone, params, d, h, c)


def class_mask(visible_classes, num_classes: int) -> np.ndarray:
    mask = np.zeros(num_classes, dtype=bool)
    mask[np.asarray(list(visible_classes), dtype=np.int64)] = True
    return mask


def _forward_cached(m: GnnModel, adj: NormalizedAdjacency, features: np.ndarray):
    x = np.asarray(features, dtype=np.float64)
    if x.shape[1] != m.input_dim:
        raise ValueError(f"feature dim {x.shape[1]} does not match model input dim {m.input_dim}")
    if m.backbone == "gcn":
        w1, b1, w2, b2 = m.params
        v = adj.matmat(x)
        z1 = v @ w1 + b1
        h1 = np.maximum(z1, 0.0)
        u = adj.matmat(h1)
        logits = u @ w2 + b2
        return logits, (v, z1, h1, u)
    wa1, ba1, wb1, bb1, wa2, ba2, wb2, bb2 = m.params
    s1 = adj.matmat(x)
    z1 = s1 @ wa1 + ba1
    m1 = np.maximum(z1, 0.0)
    h1 = m1 @ wb1 + bb1
    s2 = adj.matmat(h1)
    z2 = s2 @ wa2 + ba2
    m2 = np.maximum(z2, 0.0)
    logits = m2 @ wb2 + bb2
    return logits, (s1, z1, m1, s2, z2, m2)


def forward(m: GnnModel, adj: NormalizedAdjacency, features: np.ndarray) -> np.ndarray:
    """Logits for every node and every class (masking happens at the loss)."""
    return _forward_cached(m, adj, features)[0]


def _check_mask_labels(labels: np.ndarray, mask: np.ndarray):
    if not mask.any():
        raise ValueError("class mask must have at least one visible class")
    hidden = ~mask[labels]
    if hidden.any():
        bad = labels[hidden][0]
        raise ValueError(f"node label {bad} is not visible under the class mask")


def _masked_softmax_rows(logits_rows: np.ndarray, mask: np.ndarray) -> np.ndarray:
    shifted = np.where(mask, logits_rows, -np.inf)
    peak = shifted.max(axis=1, keepdims=True)
    expv = np.exp(shifted - peak)
    return expv / expv.sum(axis=1, keepdims=True)


def loss_and_grad(m, adj, features, nodes, labels, mask):
    """Mean masked cross-entropy over ``nodes`` plus exact parameter gradients.

    ``labels`` is the full per-node label array of the graph the adjacency
    belongs to; only rows in ``nodes`` contribute.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.shape[0] == 0:
        raise ValueError("loss requires at least one labeled node")
    labels = np.asarray(labels, dtype=np.int64)
    y = labels[nodes]
    _check_mask_labels(y, mask)

    logits, cache = _forward_cached(m, adj, features)
    probs = _masked_softmax_rows(logits[nodes], mask)
    n_active = nodes.shape[0]
    loss = float(-np.log(probs[np.arange(n_active), y]).sum() / n_active)

    gout = np.zeros_like(logits)
    grows = probs.copy()
    grows[np.arange(n_active), y] -= 1.0
    gout[nodes] = grows / n_active

    if m.backbone == "gcn":
        w1, b1, w2, b2 = m.params
        v, z1, h1, u = cache
        dw2 = u.T @ gout
        db2 = gout.sum(axis=0)
        dh1 = adj.matmat(gout @ w2.T)
        dz1 = dh1 * (z1 > 0.0)
        dw1 = v.T @ dz1
        db1 = dz1.sum(axis=0)
        return loss, [dw1, db1, dw2, db2]

    wa1, ba1, wb1, bb1, wa2, ba2, wb2, bb2 = m.params
    s1, z1, m1, s2, z2, m2 = cache
    dwb2 = m2.T @ gout
    dbb2 = gout.sum(axis=0)
    dz2 = (gout @ wb2.T) * (z2 > 0.0)
    dwa2 = s2.T @ dz2
    dba2 = dz2.sum(axis=0)
    dh1 = adj.matmat(dz2 @ wa2.T)
    dwb1 = m1.T @ dh1
    dbb1 = dh1.sum(axis=0)
    dz1 = (dh1 @ wb1.T) * (z1 > 0.0)
    dwa1 = s1.T @ dz1
    dba1 = dz1.sum(axis=0)
    return loss, [dwa1, dba1, dwb1, dbb1, dwa2, dba2, dwb2, dbb2]


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_init(model: GnnModel) -> AdamState:
    return AdamState([np.zeros_like(p) for p in model.params], [np.zeros_like(p) for p in model.params])


def adam_step(model: GnnModel, grads, state: AdamState, lr: float, t: int):
    """One bias-corrected Adam update in place; ``t`` counts from 1."""
    for p, g, m1, v1 in zip(model.params, grads, state.m, state.v):
        m1 *= ADAM_BETA1
        m1 += (1.0 - ADAM_BETA1) * g
        v1 *= ADAM_BETA2
        v1 += (1.0 - ADAM_BETA2) * g * g
        m_hat = m1 / (1.0 - ADAM_BETA1**t)
        v_hat = v1 / (1.0 - ADAM_BETA2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return model, state


def grad_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def per_node_grad_norm(m, adj, features, node: int, label_array, mask) -> float:
    """L2 norm over all parameters of the single-node loss gradient."""
    _, grads = loss_and_grad(m, adj, features, np.array([node]), label_array, mask)
    return grad_norm(grads)


def evaluate_accuracy(m, adj, features, nodes, labels, mask) -> float:
    """Fraction of ``nodes`` whose masked argmax matches the label (ties: lowest class id)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.shape[0] == 0:
        raise ValueError("accuracy requires a nonempty node set")
    if not mask.any():
        raise ValueError("class mask must have at least one visible class")
    logits = forward(m, adj, features)[nodes]
    visible = np.where(mask, logits, -np.inf)
    pred = np.argmax(visible, axis=1)
    return float(np.mean(pred == np.asarray(labels, dtype=np.int64)[nodes]))
