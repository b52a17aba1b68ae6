"""Comparison attackers: DICE, a loss-gradient (FGA-style) attack and random flips."""

from __future__ import annotations

import numpy as np

from gcnfool.attack import (
    TARGETED,
    AttackPlan,
    AttackResult,
    NoFeasibleMoveError,
    apply_flip,
    greedy_edge_attack,
    scope_mask,
    symmetrize,
)
from gcnfool.gcn import GcnModel, adjacency_grad, logits_at
from gcnfool.graph import UNKNOWN, Graph, InvalidVertexError
from gcnfool.numerics import row_softmax


def _finish(graph, model, v, adj, flips, method, budget, scope="direct", order=None):
    """Build an AttackResult for a model-free attack, scoring it with ``model`` if given."""
    if model is not None:
        x = graph.features
        pre = int(np.argmax(logits_at(model, graph.adjacency(), x)[v]))
        labels, a = [], graph.adjacency()
        for i, j, s in flips:
            a = apply_flip(a, i, j, s)
            labels.append(int(np.argmax(logits_at(model, a, x)[v])))
        post = labels[-1] if labels else pre
    else:
        pre = post = int(graph.labels[v])
        labels = []
    success = model is not None and post != pre
    return AttackResult(
        target_vertex=v, method=method, mode="untargeted", scope=scope, budget=budget,
        original_label=pre, final_label=post, success=success,
        stop_reason="success" if success else "budget", flips=flips,
        predicted_labels=labels, boundary_classes=[], order=order, final_adjacency=adj,
    )


def dice_attack(graph: Graph, labels, v: int, budget: int, b_fraction: float = 0.5,
                seed: int = 0, model: GcnModel | None = None) -> AttackResult:
    """Delete ``round(b_fraction * budget)`` random incident edges of ``v``, then
    connect ``v`` to randomly chosen vertices of a different class until
    ``budget`` flips are spent.

    ``labels`` gives the class used for every vertex (``UNKNOWN`` entries are
    never chosen as partners). When ``model`` is supplied the result's labels
    and success flag are taken from its predictions.
    """
    if not 0 <= v < graph.n_vertices:
        raise InvalidVertexError(f"vertex {v} out of range")
    if not 0.0 <= b_fraction <= 1.0:
        raise ValueError("b_fraction must lie in [0, 1]")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    labels = np.asarray(labels)
    own = labels[v]
    if own == UNKNOWN:
        raise ValueError(f"vertex {v} has no label to contrast against")
    rng = np.random.default_rng(seed)
    adj = graph.adjacency()

    others = np.flatnonzero((labels != own) & (labels != UNKNOWN))
    if others.size == 0:
        raise ValueError(f"no vertex with a label different from {own}")

    flips = []
    nbrs = np.flatnonzero(adj[v])
    n_del = min(int(round(b_fraction * budget)), nbrs.size)
    for u in np.sort(rng.choice(nbrs, size=n_del, replace=False)).tolist():
        flips.append((min(u, v), max(u, v), -1))
        adj = apply_flip(adj, u, v, -1)

    # partners must be non-neighbors in the clean graph so no deleted edge is re-added
    candidates = others[graph.adjacency()[v, others] == 0]
    n_add = min(budget - n_del, candidates.size)
    for u in rng.choice(candidates, size=n_add, replace=False).tolist():
        flips.append((min(u, v), max(u, v), 1))
        adj = apply_flip(adj, u, v, 1)
    return _finish(graph, model, v, adj, flips, "dice", budget)


def fga_attack(model: GcnModel, graph: Graph, v: int, budget: int, scope: str = "unlimited",
               order: int | None = None, mode: str = "untargeted",
               target_label: int | None = None) -> AttackResult:
    """Greedy flips along the symmetrized gradient of the target's cross-entropy.

    Untargeted: ascend the loss of the clean prediction. Targeted: descend the
    loss of ``target_label``. Scope, skip rule and early stop are shared with
    the boundary attack.
    """
    plan = AttackPlan(v, budget, mode=mode, scope=scope, target_label=target_label, order=order)
    x = graph.features
    n_classes = model.n_classes
    clean = int(np.argmax(logits_at(model, graph.adjacency(), x)[v]))
    label = target_label if mode == TARGETED else clean
    direction = -1.0 if mode == TARGETED else 1.0

    def choose(adj, current):
        probs = row_softmax(logits_at(model, adj, x)[v:v + 1])[0]
        weights = probs - np.eye(n_classes)[label]
        grad = adjacency_grad(model, x, adj, v, weights)
        return label, symmetrize(direction * grad)

    return greedy_edge_attack(model, graph, plan, choose, method="fga")


def random_attack(graph: Graph, v: int, budget: int, scope: str = "direct", seed: int = 0,
                  order: int | None = None, model: GcnModel | None = None) -> AttackResult:
    """Toggle ``budget`` distinct vertex pairs drawn uniformly from the scope."""
    plan = AttackPlan(v, budget, scope=scope, order=order)
    if not 0 <= v < graph.n_vertices:
        raise InvalidVertexError(f"vertex {v} out of range")
    adj = graph.adjacency()
    iu, ju = np.nonzero(np.triu(scope_mask(adj, plan), k=1))
    if iu.size == 0:
        raise NoFeasibleMoveError(f"no vertex pair in scope for vertex {v}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(iu.size, size=min(budget, iu.size), replace=False)
    flips = []
    for p in picks.tolist():
        i, j = int(iu[p]), int(ju[p])
        s = -1 if adj[i, j] else 1
        adj = apply_flip(adj, i, j, s)
        flips.append((i, j, s))
    return _finish(graph, model, v, adj, flips, "random", budget, scope=scope,
                   order=plan.order if scope == "limited" else None)
