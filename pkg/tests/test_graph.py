import numpy as np
import pytest

from graphcl.graph import (
    antisymmetric_adjacency,
    build_graph,
    connected_components,
    degree_vector,
    divergence,
    induced_subgraph,
    laplacian_matvec,
    largest_connected_component,
    read_edge_list,
    undirected_support,
)

from helpers import dense_adjacency, dense_laplacian, random_connected_graph


def path3():
    return build_graph([(0, 1), (1, 2)], 3)


def triangle():
    return build_graph([(0, 1), (1, 2), (0, 2)], 3)


class TestBuildGraph:
    def test_dedupe_and_self_loop_removal(self):
        g = build_graph([(0, 1), (1, 0), (1, 1)], 2)
        assert g.num_edges == 1
        assert g.neighbors(0).tolist() == [1]
        assert g.neighbors(1).tolist() == [0]

    def test_empty_edge_set(self):
        g = build_graph([], 3)
        assert g.num_nodes == 3
        assert g.num_edge_entries == 0

    def test_out_of_range_edge(self):
        with pytest.raises(ValueError, match="out of range"):
            build_graph([(0, 5)], 3)

    def test_csr_invariants_on_random_graphs(self):
        for seed in range(5):
            g = random_connected_graph(30, 0.15, seed)
            assert g.row_offsets[0] == 0
            assert g.row_offsets[-1] == g.num_edge_entries
            assert np.all(np.diff(g.row_offsets) >= 0)
            for u in range(g.num_nodes):
                nbrs = g.neighbors(u)
                assert np.all(np.diff(nbrs) > 0)  # sorted, no duplicates
                assert u not in nbrs
                for v in nbrs:
                    assert g.has_edge(int(v), u)  # symmetric


class TestDegreeVector:
    def test_path(self):
        assert degree_vector(path3()).tolist() == [1, 2, 1]

    def test_triangle(self):
        assert degree_vector(triangle()).tolist() == [2, 2, 2]

    def test_isolated(self):
        assert degree_vector(build_graph([], 3)).tolist() == [0, 0, 0]

    def test_directed_uses_symmetrized_support(self):
        g = build_graph([(0, 1)], 2, directed=True)
        assert degree_vector(g).tolist() == [1, 1]


class TestLaplacianMatvec:
    def test_constant_in_kernel(self):
        for g in (path3(), triangle(), random_connected_graph(20, 0.2, 3)):
            out = laplacian_matvec(g, np.full(g.num_nodes, 2.5))
            assert np.max(np.abs(out)) == 0.0

    def test_path_unit_vector(self):
        out = laplacian_matvec(path3(), np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(out, [1.0, -1.0, 0.0])

    def test_triangle(self):
        out = laplacian_matvec(triangle(), np.array([1.0, -1.0, 0.0]))
        np.testing.assert_allclose(out, [3.0, -3.0, 0.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        g = random_connected_graph(40, 0.1, seed + 100)
        x = rng.standard_normal(g.num_nodes)
        np.testing.assert_allclose(laplacian_matvec(g, x), dense_laplacian(g) @ x, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            laplacian_matvec(path3(), np.zeros(4))

    def test_symmetry_property(self):
        rng = np.random.default_rng(7)
        for seed in range(10):
            g = random_connected_graph(25, 0.15, seed)
            x = rng.standard_normal(g.num_nodes)
            y = rng.standard_normal(g.num_nodes)
            lhs = x @ laplacian_matvec(g, y)
            rhs = y @ laplacian_matvec(g, x)
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_positive_semidefinite(self):
        rng = np.random.default_rng(11)
        for seed in range(4):
            g = random_connected_graph(48, 0.1, seed + 30)
            for _ in range(25):
                x = rng.standard_normal(g.num_nodes)
                assert x @ laplacian_matvec(g, x) >= -1e-12

    def test_component_indicators_in_kernel(self):
        g = build_graph([(0, 1), (1, 2), (3, 4)], 6)
        labeling = connected_components(g)
        for c in range(labeling.component_count):
            ind = (labeling.component_id == c).astype(float)
            assert np.max(np.abs(laplacian_matvec(g, ind))) <= 1e-12


class TestAntisymmetricAdjacency:
    def test_reciprocal_pair_cancels(self):
        g = build_graph([(0, 1), (1, 0)], 2, directed=True)
        assert antisymmetric_adjacency(g).pairs() == set()

    def test_directed_triangle(self):
        g = build_graph([(0, 1), (1, 2), (0, 2)], 3, directed=True)
        expected = {(0, 1, 1), (1, 0, -1), (1, 2, 1), (2, 1, -1), (0, 2, 1), (2, 0, -1)}
        assert antisymmetric_adjacency(g).pairs() == expected

    def test_undirected_edge_is_plain_adjacency(self):
        g = build_graph([(0, 1)], 2)
        assert antisymmetric_adjacency(g).pairs() == {(0, 1, 1), (1, 0, 1)}

    def test_mixed_reciprocal_and_one_way(self):
        g = build_graph([(0, 1), (1, 0), (1, 2)], 3, directed=True)
        assert antisymmetric_adjacency(g).pairs() == {(1, 2, 1), (2, 1, -1)}


class TestDivergence:
    def test_directed_triangle(self):
        g = build_graph([(0, 1), (1, 2), (0, 2)], 3, directed=True)
        np.testing.assert_allclose(divergence(antisymmetric_adjacency(g), 3), [2.0, 0.0, -2.0])

    def test_undirected_path_equals_degrees(self):
        np.testing.assert_allclose(divergence(antisymmetric_adjacency(path3()), 3), [1.0, 2.0, 1.0])

    def test_empty(self):
        g = build_graph([], 4, directed=True)
        np.testing.assert_allclose(divergence(antisymmetric_adjacency(g), 4), np.zeros(4))

    @pytest.mark.parametrize("seed", range(6))
    def test_row_sum_oracle_and_zero_total(self, seed):
        rng = np.random.default_rng(seed)
        n = 12
        arcs = [(int(u), int(v)) for u in range(n) for v in range(n) if u != v and rng.random() < 0.2]
        g = build_graph(arcs, n, directed=True)
        sa = antisymmetric_adjacency(g)
        dense = np.zeros((n, n))
        for i, j, s in sa.pairs():
            dense[i, j] = s
        np.testing.assert_allclose(divergence(sa, n), dense.sum(axis=1), atol=1e-12)
        assert abs(divergence(sa, n).sum()) == 0.0


class TestComponents:
    def test_path_single_component(self):
        assert connected_components(path3()).component_count == 1

    def test_two_disjoint_edges(self):
        labeling = connected_components(build_graph([(0, 1), (2, 3)], 4))
        assert labeling.component_count == 2
        assert labeling.component_id[0] == labeling.component_id[1]
        assert labeling.component_id[2] == labeling.component_id[3]

    def test_single_node(self):
        assert connected_components(build_graph([], 1)).component_count == 1

    def test_ids_contiguous_in_min_id_order(self):
        labeling = connected_components(build_graph([(2, 3), (0, 1)], 5))
        assert labeling.component_id.tolist() == [0, 0, 1, 1, 2]


class TestLargestComponent:
    def test_picks_bigger(self):
        g = build_graph([(0, 1), (1, 2), (3, 4)], 5)
        lcc, old_to_new = largest_connected_component(g)
        assert lcc.num_nodes == 3
        assert old_to_new.tolist() == [0, 1, 2, -1, -1]

    def test_connected_graph_identity(self):
        g = triangle()
        lcc, old_to_new = largest_connected_component(g)
        assert lcc.num_nodes == 3
        assert old_to_new.tolist() == [0, 1, 2]
        assert lcc.edge_pairs().tolist() == g.edge_pairs().tolist()

    def test_tie_break_smallest_member(self):
        lcc, old_to_new = largest_connected_component(build_graph([(2, 3), (0, 1)], 4))
        assert lcc.num_nodes == 2
        assert old_to_new.tolist() == [0, 1, -1, -1]

    def test_empty_graph_errors(self):
        with pytest.raises(ValueError, match="empty"):
            largest_connected_component(build_graph([], 0))

    def test_carries_features_and_labels(self):
        g = build_graph(
            [(0, 1), (3, 4)],
            5,
            features=np.arange(10.0).reshape(5, 2),
            labels=np.array([0, 1, 2, 3, 4]),
        )
        lcc, _ = largest_connected_component(g)
        np.testing.assert_allclose(lcc.features, [[0, 1], [2, 3]])
        assert lcc.labels.tolist() == [0, 1]


class TestInducedSubgraph:
    def test_triangle_pair(self):
        sub, _ = induced_subgraph(triangle(), [0, 1])
        assert sub.num_nodes == 2
        assert sub.num_edges == 1

    def test_empty_selection(self):
        sub, old_to_new = induced_subgraph(triangle(), [])
        assert sub.num_nodes == 0
        assert old_to_new.tolist() == [-1, -1, -1]

    def test_non_adjacent_selection(self):
        sub, _ = induced_subgraph(path3(), [0, 2])
        assert sub.num_nodes == 2
        assert sub.num_edge_entries == 0

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            induced_subgraph(path3(), [0, 7])

    def test_full_set_is_identity(self):
        for seed in range(4):
            g = random_connected_graph(15, 0.2, seed)
            sub, old_to_new = induced_subgraph(g, np.arange(g.num_nodes))
            assert old_to_new.tolist() == list(range(g.num_nodes))
            assert sub.edge_pairs().tolist() == g.edge_pairs().tolist()
            sub2, _ = induced_subgraph(sub, np.arange(sub.num_nodes))
            assert sub2.edge_pairs().tolist() == sub.edge_pairs().tolist()

    def test_dense_oracle_edges(self):
        g = random_connected_graph(18, 0.25, 9)
        nodes = np.array([1, 4, 5, 9, 16])
        sub, _ = induced_subgraph(g, nodes)
        expect = dense_adjacency(g)[np.ix_(nodes, nodes)]
        np.testing.assert_allclose(dense_adjacency(sub), expect)


class TestUndirectedSupport:
    def test_symmetrizes(self):
        g = build_graph([(0, 1), (1, 2)], 3, directed=True)
        support = undirected_support(g)
        assert not support.directed
        assert support.num_edges == 2
        assert support.has_edge(1, 0) and support.has_edge(2, 1)


class TestEdgeListIO:
    def test_roundtrip_with_comments(self, tmp_path):
        p = tmp_path / "edges.tsv"
        p.write_text("# toy\n0\t1\n\n1\t2\n")
        edges, n = read_edge_list(p)
        assert edges == [(0, 1), (1, 2)]
        assert n == 3

    def test_node_count_override(self, tmp_path):
        p = tmp_path / "edges.tsv"
        p.write_text("0\t1\n")
        _, n = read_edge_list(p, num_nodes=5)
        assert n == 5

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "edges.tsv"
        p.write_text("0\t1\nnope\n")
        with pytest.raises(ValueError, match=":2:"):
            read_edge_list(p)

    def test_override_too_small(self, tmp_path):
        p = tmp_path / "edges.tsv"
        p.write_text("0\t9\n")
        with pytest.raises(ValueError, match="num_nodes"):
            read_edge_list(p, num_nodes=3)
