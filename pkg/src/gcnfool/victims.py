"""Classifiers that adversarial graphs are scored against.

Victims see only the graph (structure, features, labels, training mask);
none of them reads attacker internals.
"""

from __future__ import annotations

import csv
from dataclasses import replace

import numpy as np

from gcnfool.gcn import GcnModel, TrainConfig, predict, train
from gcnfool.graph import Graph, normalize
from gcnfool.numerics import row_softmax

VICTIMS = ("attacker", "gcn", "linear")


def attacker_victim(model: GcnModel, graph: Graph) -> np.ndarray:
    """The attacked model itself, frozen, evaluated on ``graph``."""
    return predict(model, graph)


def retrained_gcn_victim(graph: Graph, config: TrainConfig = TrainConfig(),
                         n_classes: int | None = None) -> np.ndarray:
    """Train a fresh GCN on ``graph`` (clean or adversarial) and predict every vertex."""
    model = train(graph, config, n_classes=n_classes)
    return predict(model, graph)


def propagation_linear_victim(graph: Graph, train_mask=None, n_classes: int | None = None,
                              epochs: int = 300, learning_rate: float = 0.5,
                              weight_decay: float = 1e-4) -> np.ndarray:
    """Multinomial logistic regression on two-step propagated features ``Â² X``.

    Trained by full-batch gradient descent on the mean cross-entropy from a
    zero initialization, so the result is deterministic.
    """
    mask = graph.train_mask if train_mask is None else np.asarray(train_mask, dtype=bool)
    idx = np.flatnonzero(mask)
    n_classes = n_classes or graph.n_classes
    if idx.size == 0 or len(set(graph.labels[idx].tolist())) < 2:
        raise ValueError("linear victim needs training vertices from at least two classes")
    a_hat = normalize(graph.adjacency())
    feats = a_hat @ (a_hat @ graph.features)
    xs = np.hstack([feats[idx], np.ones((idx.size, 1))])
    y = np.eye(n_classes)[graph.labels[idx]]
    w = np.zeros((xs.shape[1], n_classes))
    for _ in range(epochs):
        grad = xs.T @ (row_softmax(xs @ w) - y) / idx.size
        grad[:-1] += weight_decay * w[:-1]
        w -= learning_rate * grad
    return np.argmax(np.hstack([feats, np.ones((graph.n_vertices, 1))]) @ w, axis=1)


def victim_seed_config(config: TrainConfig, seed_offset: int = 1000) -> TrainConfig:
    """Config for a retrained victim: same hyperparameters, a different seed."""
    return replace(config, seed=config.seed + seed_offset)


def write_predictions(path, predictions) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for v, y in enumerate(np.asarray(predictions).tolist()):
            writer.writerow([v, y])
