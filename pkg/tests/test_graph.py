import math

import numpy as np
import pytest

from gcnfool.graph import (
    UNKNOWN,
    Graph,
    GraphError,
    InvalidVertexError,
    average_degree,
    k_order_neighborhood,
    load_graph,
    normalize,
)

from conftest import random_graph


def test_normalize_empty_graph_is_identity():
    np.testing.assert_array_equal(normalize(np.zeros((2, 2))), np.eye(2))


def test_normalize_single_edge():
    np.testing.assert_allclose(normalize(np.array([[0.0, 1.0], [1.0, 0.0]])), np.full((2, 2), 0.5))


def test_normalize_path_by_hand(path3):
    # degrees with self-loops are (2, 3, 2)
    a_hat = normalize(path3.adjacency())
    assert a_hat[0, 1] == pytest.approx(1 / math.sqrt(6))
    assert a_hat[0, 1] == pytest.approx(0.40825, abs=1e-5)
    assert a_hat[1, 1] == pytest.approx(1 / 3)
    assert a_hat[0, 0] == pytest.approx(1 / 2)
    assert a_hat[0, 2] == 0.0


def test_normalize_properties_on_random_graphs():
    for seed in range(20):
        adj = random_graph(9, 0.4, seed).adjacency()
        a_hat = normalize(adj)
        np.testing.assert_array_equal(a_hat, normalize(adj))
        np.testing.assert_allclose(a_hat, a_hat.T, atol=0)
        assert a_hat.min() >= 0 and a_hat.max() <= 1
        deg = adj.sum(axis=1) + 1
        expected_rows = [sum((adj[i, j] + (i == j)) / math.sqrt(deg[i] * deg[j]) for j in range(9))
                         for i in range(9)]
        np.testing.assert_allclose(a_hat.sum(axis=1), expected_rows, rtol=1e-12)


def test_k_order_neighborhood_path(path4):
    assert k_order_neighborhood(path4, 0, 1) == {0, 1}
    assert k_order_neighborhood(path4, 0, 3) == {0, 1, 2, 3}


def test_k_order_neighborhood_star():
    star = Graph(6, tuple((0, i) for i in range(1, 6)), np.eye(6), [0] * 6, [False] * 6)
    assert k_order_neighborhood(star, 1, 2) == {0, 1, 2, 3, 4, 5}
    assert k_order_neighborhood(star, 1, 1) == {0, 1}


def test_k_order_neighborhood_monotone():
    g = random_graph(15, 0.15, seed=3)
    for v in range(15):
        previous = set()
        for k in range(1, 6):
            current = k_order_neighborhood(g, v, k)
            assert previous <= current
            previous = current


def test_k_order_neighborhood_rejects_bad_vertex(path4):
    with pytest.raises(InvalidVertexError):
        k_order_neighborhood(path4, 4, 1)


def test_average_degree():
    triangle = Graph(3, ((0, 1), (1, 2), (0, 2)), np.eye(3), [0, 0, 0], [False] * 3)
    assert average_degree(triangle) == 2.0
    assert average_degree(Graph(2, ((0, 1),), np.eye(2), [0, 1], [False] * 2)) == 1.0
    assert 2 * 5429 / 2708 == pytest.approx(4.01, abs=0.005)


def test_graph_invariants():
    with pytest.raises(GraphError):
        Graph(3, ((1, 1),), np.eye(3), [0, 0, 0], [False] * 3)
    with pytest.raises(InvalidVertexError):
        Graph(3, ((0, 3),), np.eye(3), [0, 0, 0], [False] * 3)
    with pytest.raises(GraphError, match="rows"):
        Graph(3, ((0, 1),), np.eye(2), [0, 0, 0], [False] * 3)
    with pytest.raises(GraphError, match="training vertex"):
        Graph(2, ((0, 1),), np.eye(2), [0, UNKNOWN], [True, True])
    g = Graph(3, ((1, 0), (0, 1)), np.eye(3), [0, 1, 0], [False] * 3)
    assert g.edges == ((0, 1),)


def test_with_adjacency_round_trip(path4):
    adj = path4.adjacency()
    adj[0, 3] = adj[3, 0] = 1
    g = path4.with_adjacency(adj)
    assert g.edges == ((0, 1), (0, 3), (1, 2), (2, 3))
    np.testing.assert_array_equal(g.adjacency(), adj)
    with pytest.raises(GraphError):
        path4.with_adjacency(np.triu(adj))


def test_load_graph_path(tmp_path):
    (tmp_path / "e.txt").write_text("# comment\n0 1\n1 2\n")
    (tmp_path / "x.csv").write_text("1,0\n0,1\n1,1\n")
    (tmp_path / "y.csv").write_text("0,0\n2,1\n")
    g = load_graph(tmp_path / "e.txt", tmp_path / "x.csv", tmp_path / "y.csv")
    assert g.n_vertices == 3 and g.edges == ((0, 1), (1, 2))
    assert g.labels.tolist() == [0, UNKNOWN, 1]
    assert g.train_mask.tolist() == [True, False, True]


def test_load_graph_dedups_and_defaults_to_identity_features(tmp_path):
    (tmp_path / "e.txt").write_text("0 1\n1 0\n")
    (tmp_path / "y.csv").write_text("0,0\n1,1\n")
    g = load_graph(tmp_path / "e.txt", label_path=tmp_path / "y.csv")
    assert g.n_edges == 1
    np.testing.assert_array_equal(g.features, np.eye(2))


@pytest.mark.parametrize("edges, message", [
    ("2 2\n", "self-loop"),
    ("0 1\n1 x\n", ":2:"),
    ("0 1 2\n", ":1:"),
    ("0 5\n", "outside"),
])
def test_load_graph_errors(tmp_path, edges, message):
    (tmp_path / "e.txt").write_text(edges)
    (tmp_path / "x.csv").write_text("1\n1\n1\n")
    with pytest.raises(GraphError, match=message):
        load_graph(tmp_path / "e.txt", tmp_path / "x.csv")


def test_load_graph_feature_row_mismatch(tmp_path):
    (tmp_path / "e.txt").write_text("0 1\n")
    (tmp_path / "x.csv").write_text("1\n1\n")
    with pytest.raises(GraphError, match="rows"):
        load_graph(tmp_path / "e.txt", tmp_path / "x.csv", n_vertices=3)
