import numpy as np
import pytest

from gcnfool.evaluation import two_clique_graph
from gcnfool.gcn import GcnModel
from gcnfool.graph import Graph


def random_graph(n, p, seed, n_features=None, n_classes=2):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    edges = tuple(zip(*map(np.ndarray.tolist, np.nonzero(upper))))
    features = np.eye(n) if n_features is None else rng.normal(size=(n, n_features))
    labels = rng.integers(0, n_classes, size=n)
    labels[:n_classes] = np.arange(n_classes)
    return Graph(n, edges, features, labels, np.ones(n, dtype=bool))


def random_model(n_features, n_classes, seed, hidden=8, scale=1.0):
    rng = np.random.default_rng(seed)
    return GcnModel(scale * rng.normal(size=(n_features, hidden)),
                    scale * rng.normal(size=(hidden, n_classes)))


@pytest.fixture
def path3():
    return Graph(3, ((0, 1), (1, 2)), np.eye(3), [0, 0, 1], [True, False, True])


@pytest.fixture
def path4():
    return Graph(4, ((0, 1), (1, 2), (2, 3)), np.eye(4), [0, 0, 1, 1], [True] * 4)


@pytest.fixture
def two_cliques():
    return two_clique_graph()


@pytest.fixture
def er12():
    graph = random_graph(12, 0.3, seed=11, n_features=6, n_classes=3)
    return graph, random_model(6, 3, seed=12)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
