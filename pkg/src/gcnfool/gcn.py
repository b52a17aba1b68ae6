"""Two-layer graph convolutional classifier trained by full-batch gradient descent.

The model is ``Z = softmax(Â relu(Â X W0) W1)`` with ``Â`` the self-loop
normalized adjacency. Besides training, this module provides the gradient
of any linear combination of one vertex's logits with respect to the raw
adjacency matrix, differentiating through the degree normalization.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from gcnfool.graph import UNKNOWN, Graph, InvalidVertexError, normalize
from gcnfool.numerics import log_row_softmax, relu, row_softmax

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden_dim: int = 16
    learning_rate: float = 0.01
    epochs: int = 200
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")


@dataclass(frozen=True, eq=False)
class GcnModel:
    w0: np.ndarray
    w1: np.ndarray
    loss_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        w0 = np.array(self.w0, dtype=np.float64)
        w1 = np.array(self.w1, dtype=np.float64)
        if w0.ndim != 2 or w1.ndim != 2 or w0.shape[1] != w1.shape[0]:
            raise ValueError(f"incompatible weight shapes {w0.shape} and {w1.shape}")
        if not (np.all(np.isfinite(w0)) and np.all(np.isfinite(w1))):
            raise ValueError("weights must be finite")
        w0.setflags(write=False)
        w1.setflags(write=False)
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "w1", w1)

    @property
    def n_features(self) -> int:
        return self.w0.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w0.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class ForwardPass:
    z: np.ndarray
    logits: np.ndarray
    hidden_pre: np.ndarray
    a_hat: np.ndarray
    ax: np.ndarray
    hidden_out: np.ndarray


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(n_features: int, n_classes: int, config: TrainConfig) -> GcnModel:
    rng = np.random.default_rng(config.seed)
    w0 = glorot(rng, n_features, config.hidden_dim)
    w1 = glorot(rng, config.hidden_dim, n_classes)
    return GcnModel(w0, w1)


def forward(model: GcnModel, a_hat: np.ndarray, x: np.ndarray) -> ForwardPass:
    """Run the network on a precomputed normalized adjacency ``a_hat``."""
    n = a_hat.shape[0]
    if a_hat.shape != (n, n) or x.shape[0] != n or x.shape[1] != model.n_features:
        raise ValueError(
            f"shape mismatch: a_hat {a_hat.shape}, features {x.shape}, "
            f"model expects {model.n_features} features"
        )
    ax = a_hat @ x
    hidden_pre = ax @ model.w0
    hidden_out = relu(hidden_pre) @ model.w1
    logits = a_hat @ hidden_out
    return ForwardPass(row_softmax(logits), logits, hidden_pre, a_hat, ax, hidden_out)


def forward_adj(model: GcnModel, adj: np.ndarray, x: np.ndarray) -> ForwardPass:
    return forward(model, normalize(adj), x)


def logits_at(model: GcnModel, adj: np.ndarray, x: np.ndarray) -> np.ndarray:
    return forward_adj(model, adj, x).logits


def loss(z: np.ndarray, labels, train_mask) -> float:
    """Summed cross-entropy ``-sum ln Z[l, y_l]`` over the training vertices."""
    idx = np.flatnonzero(train_mask)
    if idx.size == 0:
        raise ValueError("empty training set")
    return float(-np.log(z[idx, np.asarray(labels)[idx]]).sum())


def _loss_from_logits(logits, labels, idx):
    return float(-log_row_softmax(logits[idx])[np.arange(idx.size), labels[idx]].sum())


def weight_gradients(model: GcnModel, a_hat, x, labels, train_mask):
    """Loss value and gradients ``(dL/dW0, dL/dW1)`` for one full batch."""
    labels = np.asarray(labels)
    idx = np.flatnonzero(train_mask)
    fp = forward(model, a_hat, x)
    d_logits = np.zeros_like(fp.logits)
    d_logits[idx] = fp.z[idx]
    d_logits[idx, labels[idx]] -= 1.0
    d_hidden_out = a_hat.T @ d_logits
    d_w1 = relu(fp.hidden_pre).T @ d_hidden_out
    d_hidden_pre = (d_hidden_out @ model.w1.T) * (fp.hidden_pre > 0)
    d_w0 = fp.ax.T @ d_hidden_pre
    return _loss_from_logits(fp.logits, labels, idx), d_w0, d_w1


def train(graph: Graph, config: TrainConfig = TrainConfig(), n_classes: int | None = None,
          adj: np.ndarray | None = None) -> GcnModel:
    """Fit the GCN on ``graph``'s training vertices with plain gradient descent.

    ``adj`` overrides the graph's own adjacency, e.g. for an adversarial copy.
    The returned model carries the loss recorded before each update, followed
    by the final loss.
    """
    labels = graph.labels
    n_classes = n_classes or graph.n_classes
    train_idx = np.flatnonzero(graph.train_mask)
    if train_idx.size == 0:
        raise ValueError("no training vertices")
    missing = sorted(set(range(n_classes)) - set(labels[train_idx].tolist()))
    if missing:
        raise ValueError(f"classes {missing} have no training vertex")

    a_hat = normalize(graph.adjacency() if adj is None else adj)
    x = graph.features
    model = init_model(x.shape[1], n_classes, config)
    w0, w1 = model.w0.copy(), model.w1.copy()
    history = []
    # divergence is detected explicitly below; silence the overflow warnings it causes
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            value, d_w0, d_w1 = weight_gradients(GcnModel(w0, w1), a_hat, x, labels, graph.train_mask)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            history.append(value)
            if config.weight_decay:
                d_w0 = d_w0 + config.weight_decay * w0
                d_w1 = d_w1 + config.weight_decay * w1
            w0 = w0 - config.learning_rate * d_w0
            w1 = w1 - config.learning_rate * d_w1
            if not (np.all(np.isfinite(w0)) and np.all(np.isfinite(w1))):
                raise TrainingError(f"weights diverged at epoch {epoch}")
        final = _loss_from_logits(forward(GcnModel(w0, w1), a_hat, x).logits, labels, train_idx)
        if not np.isfinite(final):
            raise TrainingError(f"non-finite training loss at epoch {config.epochs}")
    history.append(final)
    return GcnModel(w0, w1, tuple(history))


def predict(model: GcnModel, graph: Graph, adj: np.ndarray | None = None) -> np.ndarray:
    """Argmax class per vertex (``np.argmax`` resolves ties to the lowest id)."""
    adj = graph.adjacency() if adj is None else adj
    return np.argmax(logits_at(model, adj, graph.features), axis=1)


def adjacency_grad(model: GcnModel, x: np.ndarray, adj: np.ndarray, v: int,
                   class_weights: np.ndarray) -> np.ndarray:
    """Gradient of ``class_weights @ logits[v]`` with respect to the raw adjacency.

    Each ``A_ij`` is an independent input, including its effect on the degree
    of row ``i``; the result is therefore not symmetric in general.
    """
    n = adj.shape[0]
    if not 0 <= v < n:
        raise InvalidVertexError(f"vertex {v} out of range for N={n}")
    c = np.asarray(class_weights, dtype=np.float64)
    if c.shape != (model.n_classes,):
        raise ValueError(f"expected {model.n_classes} class weights, got shape {c.shape}")

    a_tilde = np.asarray(adj, dtype=np.float64) + np.eye(n)
    s = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    a_hat = a_tilde * s[:, None] * s[None, :]
    fp = forward(model, a_hat, x)

    # output layer: f = sum_j a_hat[v, j] * (hidden_out[j] @ c)
    out_c = fp.hidden_out @ c
    g = np.zeros((n, n))
    g[v] = out_c
    # hidden layer: dL/d hidden_pre[j, h] = a_hat[v, j] * (W1 c)[h] * relu'(hidden_pre[j, h])
    d_hidden_pre = np.outer(a_hat[v], model.w1 @ c) * (fp.hidden_pre > 0)
    g += d_hidden_pre @ (x @ model.w0).T

    # normalization: a_hat_ij = a_tilde_ij * s_i * s_j, s_i = (sum_j a_tilde_ij)^-1/2
    m = g * a_tilde
    d_s = m @ s + m.T @ s
    d_deg = -0.5 * d_s * s ** 3
    return g * np.outer(s, s) + d_deg[:, None]


def logit_grad_wrt_A(model: GcnModel, graph: Graph, adj: np.ndarray, v: int, k: int) -> np.ndarray:
    if not 0 <= k < model.n_classes:
        raise ValueError(f"class {k} out of range for F={model.n_classes}")
    return adjacency_grad(model, graph.features, adj, v, np.eye(model.n_classes)[k])


def save_model(model: GcnModel, path, config: TrainConfig | None = None) -> None:
    """Write an ``.npz`` checkpoint; float64 arrays round-trip bit-exactly."""
    meta = {"format": "gcnfool-checkpoint", "version": CHECKPOINT_VERSION,
            "shapes": {"w0": list(model.w0.shape), "w1": list(model.w1.shape)},
            "config": asdict(config) if config is not None else None}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), w0=model.w0,
                 w1=model.w1, loss_history=np.array(model.loss_history, dtype=np.float64))


def load_model(path) -> GcnModel:
    path = Path(path)
    with np.load(path, allow_pickle=False) as data:
        try:
            meta = json.loads(str(data["meta"]))
        except KeyError:
            raise ValueError(f"{path}: not a checkpoint (no metadata)") from None
        if meta.get("format") != "gcnfool-checkpoint" or meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        return GcnModel(data["w0"], data["w1"], tuple(data["loss_history"].tolist()))


def checkpoint_config(path) -> TrainConfig | None:
    with np.load(path, allow_pickle=False) as data:
        cfg = json.loads(str(data["meta"])).get("config")
    return TrainConfig(**cfg) if cfg else None


def accuracy(pred: np.ndarray, labels: np.ndarray, mask=None) -> float:
    labels = np.asarray(labels)
    keep = labels != UNKNOWN
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    if not keep.any():
        raise ValueError("no labeled vertices to score")
    return float(np.mean(pred[keep] == labels[keep]))
