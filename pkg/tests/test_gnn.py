import numpy as np
import pytest

from graphcl.gnn import (
    AdamState,
    GnnModel,
    ModelConfig,
    adam_init,
    adam_step,
    class_mask,
    evaluate_accuracy,
    forward,
    gin_aggregation,
    grad_norm,
    init_model,
    loss_and_grad,
    normalize_adjacency,
    per_node_grad_norm,
    propagation_matrix,
)
from graphcl.graph import build_graph

from helpers import dense_adjacency, random_connected_graph


def dense_gcn_matrix(g):
    a = dense_adjacency(g) + np.eye(g.num_nodes)
    dinv = 1.0 / np.sqrt(a.sum(axis=1))
    return dinv[:, None] * a * dinv[None, :]


def dense_gcn_forward(g, x, params):
    w1, b1, w2, b2 = params
    ahat = dense_gcn_matrix(g)
    h1 = np.maximum(ahat @ x @ w1 + b1, 0.0)
    return ahat @ h1 @ w2 + b2


def small_case(seed, n=8, d=5, h=6, c=4, backbone="gcn"):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, 0.35, seed + 40)
    x = rng.standard_normal((n, d))
    labels = rng.integers(0, c, size=n)
    cfg = ModelConfig(hidden_dim=h, backbone=backbone, seed=seed)
    model = init_model(cfg, d, c)
    adj = propagation_matrix(g, backbone)
    return g, adj, x, labels, model


def fd_grad_flat(model, loss_fn, step=1e-5):
    base = model.flat_params()
    out = np.zeros_like(base)
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] += step
        model.set_flat_params(bumped)
        up = loss_fn()
        bumped[i] -= 2 * step
        model.set_flat_params(bumped)
        down = loss_fn()
        out[i] = (up - down) / (2 * step)
    model.set_flat_params(base)
    return out


def assert_grads_match_fd(model, grads, loss_fn, rtol=1e-4):
    fd = fd_grad_flat(model, loss_fn)
    ad = np.concatenate([g.ravel() for g in grads])
    scale = max(np.max(np.abs(fd)), 1e-6)
    assert np.max(np.abs(ad - fd)) <= rtol * scale


class TestNormalizeAdjacency:
    def test_single_node(self):
        adj = normalize_adjacency(build_graph([], 1))
        np.testing.assert_allclose(adj.values, [1.0])

    def test_single_edge(self):
        adj = normalize_adjacency(build_graph([(0, 1)], 2))
        out = adj.matmat(np.eye(2))
        np.testing.assert_allclose(out, [[0.5, 0.5], [0.5, 0.5]])

    def test_eigen_relation(self):
        for seed in range(4):
            g = random_connected_graph(20, 0.2, seed)
            adj = normalize_adjacency(g)
            dsqrt = np.sqrt(np.diff(g.row_offsets) + 1.0)
            np.testing.assert_allclose(adj.matmat(dsqrt[:, None]).ravel(), dsqrt, atol=1e-12)

    def test_matches_dense(self):
        g = random_connected_graph(15, 0.3, 2)
        adj = normalize_adjacency(g)
        np.testing.assert_allclose(adj.matmat(np.eye(15)), dense_gcn_matrix(g), atol=1e-12)

    def test_gin_aggregation_is_a_plus_i(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        out = gin_aggregation(g).matmat(np.eye(3))
        np.testing.assert_allclose(out, dense_adjacency(g) + np.eye(3))


class TestForward:
    def test_zero_weights_zero_logits(self):
        g, adj, x, _, model = small_case(0)
        for p in model.params:
            p[...] = 0.0
        assert np.max(np.abs(forward(model, adj, x))) == 0.0

    def test_single_node_identity_chain(self):
        g = build_graph([], 1)
        adj = normalize_adjacency(g)
        model = GnnModel("gcn", [np.ones((1, 1)), np.zeros(1), np.ones((1, 1)), np.zeros(1)], 1, 1, 1)
        value = 0.73
        np.testing.assert_allclose(forward(model, adj, np.array([[value]])), [[value]])

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_dense_oracle(self, seed):
        g, adj, x, _, model = small_case(seed)
        np.testing.assert_allclose(forward(model, adj, x), dense_gcn_forward(g, x, model.params), atol=1e-12)

    def test_feature_dim_mismatch(self):
        g, adj, x, _, model = small_case(1)
        with pytest.raises(ValueError, match="feature dim"):
            forward(model, adj, x[:, :2])

    def test_permutation_equivariance(self):
        g, adj, x, _, model = small_case(3, n=10)
        rng = np.random.default_rng(9)
        perm = rng.permutation(g.num_nodes)
        pg = build_graph([(perm[u], perm[v]) for u, v in g.edge_pairs() if u < v], g.num_nodes)
        px = np.zeros_like(x)
        px[perm] = x
        base = forward(model, adj, x)
        permuted = forward(model, propagation_matrix(pg, "gcn"), px)
        np.testing.assert_allclose(permuted[perm], base, atol=1e-12)


class TestLossAndGrad:
    def test_uniform_logits_loss_is_log_c(self):
        g, adj, x, labels, model = small_case(2)
        for p in model.params:
            p[...] = 0.0
        for visible in (2, 3, 4):
            mask = class_mask(range(visible), 4)
            ok = np.flatnonzero(labels < visible)
            loss, _ = loss_and_grad(model, adj, x, ok, labels, mask)
            assert abs(loss - np.log(visible)) <= 1e-12

    @pytest.mark.parametrize("backbone", ["gcn", "gin"])
    @pytest.mark.parametrize("seed", range(3))
    def test_grads_match_finite_differences(self, seed, backbone):
        g, adj, x, labels, model = small_case(seed, backbone=backbone)
        mask = class_mask(range(4), 4)
        nodes = np.arange(g.num_nodes)
        _, grads = loss_and_grad(model, adj, x, nodes, labels, mask)
        assert_grads_match_fd(model, grads, lambda: loss_and_grad(model, adj, x, nodes, labels, mask)[0])

    def test_single_visible_class_zero_loss_and_grads(self):
        g, adj, x, labels, model = small_case(4)
        labels = np.zeros_like(labels)
        mask = class_mask([0], 4)
        loss, grads = loss_and_grad(model, adj, x, np.arange(g.num_nodes), labels, mask)
        assert loss == 0.0
        assert all(np.max(np.abs(gr), initial=0.0) == 0.0 for gr in grads)

    def test_invisible_label_raises(self):
        g, adj, x, labels, model = small_case(5)
        labels = np.full_like(labels, 3)
        with pytest.raises(ValueError, match="not visible"):
            loss_and_grad(model, adj, x, np.arange(g.num_nodes), labels, class_mask([0, 1], 4))

    def test_empty_nodes_raise(self):
        g, adj, x, labels, model = small_case(6)
        with pytest.raises(ValueError, match="at least one"):
            loss_and_grad(model, adj, x, np.array([], dtype=int), labels, class_mask(range(4), 4))

    def test_masked_softmax_consistency(self):
        # Growing the mask leaves raw logits untouched; restricted probabilities renormalize.
        g, adj, x, labels, model = small_case(7)
        logits = forward(model, adj, x)
        small = class_mask([0, 1], 4)
        big = class_mask([0, 1, 2], 4)
        from graphcl.gnn import _masked_softmax_rows

        p_small = _masked_softmax_rows(logits, small)
        p_big = _masked_softmax_rows(logits, big)
        renorm = p_big[:, :2] / p_big[:, :2].sum(axis=1, keepdims=True)
        np.testing.assert_allclose(p_small[:, :2], renorm, atol=1e-12)


class TestAdam:
    def scalar_model(self, value):
        return GnnModel("gcn", [np.array([value])], 1, 1, 1)

    def test_zero_gradient_no_change(self):
        model = self.scalar_model(1.5)
        adam_step(model, [np.zeros(1)], adam_init(model), lr=0.1, t=1)
        assert model.params[0][0] == 1.5

    def test_first_step_sign_scaled(self):
        model = self.scalar_model(0.0)
        g = np.array([2.0])
        adam_step(model, [g], adam_init(model), lr=0.01, t=1)
        expected = -0.01 * 2.0 / (2.0 + 1e-8)
        np.testing.assert_allclose(model.params[0], [expected], rtol=1e-12)

    def test_two_steps_reduce_quadratic(self):
        lr = 0.1
        model = self.scalar_model(1.0)
        state = adam_init(model)
        for t in (1, 2):
            x = model.params[0][0]
            adam_step(model, [np.array([2.0 * x])], state, lr=lr, t=t)

        # Independent scalar simulation of the same two updates.
        x, m, v = 1.0, 0.0, 0.0
        for t in (1, 2):
            grad = 2.0 * x
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad * grad
            x -= lr * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(model.params[0], [x], rtol=1e-12)
        assert x**2 < 1.0


class TestPerNodeGradNorm:
    def test_matches_single_node_loss_and_grad(self):
        g, adj, x, labels, model = small_case(8)
        mask = class_mask(range(4), 4)
        _, grads = loss_and_grad(model, adj, x, np.array([3]), labels, mask)
        assert per_node_grad_norm(model, adj, x, 3, labels, mask) == grad_norm(grads)

    def test_saturated_node_has_tiny_norm(self):
        g = build_graph([], 1)
        adj = normalize_adjacency(g)
        model = GnnModel("gcn", [np.ones((1, 2)), np.zeros(2), np.array([[60.0, -60.0], [0.0, 0.0]]), np.zeros(2)], 1, 2, 2)
        norm = per_node_grad_norm(model, adj, np.array([[1.0]]), 0, np.array([0]), class_mask([0, 1], 2))
        assert norm <= 1e-12

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_difference_norm(self, seed):
        g, adj, x, labels, model = small_case(seed + 20, n=6)
        mask = class_mask(range(4), 4)
        node = 2
        _, grads = loss_and_grad(model, adj, x, np.array([node]), labels, mask)
        fd = fd_grad_flat(model, lambda: loss_and_grad(model, adj, x, np.array([node]), labels, mask)[0])
        assert abs(grad_norm(grads) - np.linalg.norm(fd)) <= 1e-4 * max(np.linalg.norm(fd), 1e-6)


class TestEvaluateAccuracy:
    def test_only_true_class_visible(self):
        g, adj, x, labels, model = small_case(9)
        labels = np.full_like(labels, 2)
        acc = evaluate_accuracy(model, adj, x, np.arange(g.num_nodes), labels, class_mask([2], 4))
        assert acc == 1.0

    def test_zero_weights_tie_break(self):
        g, adj, x, labels, model = small_case(10)
        for p in model.params:
            p[...] = 0.0
        labels = np.array([0, 1] * 4)
        acc = evaluate_accuracy(model, adj, x, np.arange(8), labels, class_mask([0, 1], 4))
        assert acc == 0.5  # every tie resolves to class 0

    def test_matches_dense_oracle_predictions(self):
        g, adj, x, labels, model = small_case(11)
        mask = class_mask(range(4), 4)
        logits = dense_gcn_forward(g, x, model.params)
        pred = np.argmax(np.where(mask, logits, -np.inf), axis=1)
        expected = float(np.mean(pred == labels))
        assert evaluate_accuracy(model, adj, x, np.arange(g.num_nodes), labels, mask) == expected

    def test_empty_nodes_raise(self):
        g, adj, x, labels, model = small_case(12)
        with pytest.raises(ValueError, match="nonempty"):
            evaluate_accuracy(model, adj, x, np.array([], dtype=int), labels, class_mask([0], 4))


class TestDeterminism:
    def test_init_bitwise_reproducible(self):
        cfg = ModelConfig(hidden_dim=16, seed=123)
        a = init_model(cfg, 7, 5)
        b = init_model(cfg, 7, 5)
        for pa, pb in zip(a.params, b.params):
            assert np.array_equal(pa, pb)

    def test_training_trajectory_reproducible(self):
        def run():
            g, adj, x, labels, model = small_case(13)
            state = adam_init(model)
            mask = class_mask(range(4), 4)
            for t in range(1, 6):
                _, grads = loss_and_grad(model, adj, x, np.arange(g.num_nodes), labels, mask)
                adam_step(model, grads, state, lr=0.01, t=t)
            return model.flat_params()

        assert np.array_equal(run(), run())


class TestModelConfigValidation:
    def test_bad_hidden_dim(self):
        with pytest.raises(ValueError):
            ModelConfig(hidden_dim=0)

    def test_bad_lr(self):
        with pytest.raises(ValueError):
            ModelConfig(learning_rate=0.0)

    def test_bad_backbone(self):
        with pytest.raises(ValueError):
            ModelConfig(backbone="gat")
