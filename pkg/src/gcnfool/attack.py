"""Iterative boundary-linearization attack on the adjacency matrix.

Each iteration linearizes the target vertex's logits around the current
adjacency, computes the smallest perturbation that reaches the nearest (or
requested) class boundary, symmetrizes it, and flips the single feasible
vertex pair with the largest perturbation magnitude.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from gcnfool.gcn import GcnModel, adjacency_grad, logits_at
from gcnfool.graph import Graph, InvalidVertexError, average_degree, k_order_neighborhood

UNTARGETED = "untargeted"
TARGETED = "targeted"
MODES = (UNTARGETED, TARGETED)
SCOPES = ("unlimited", "direct", "indirect", "limited")

DEGENERATE_NORM = 1e-12
ZERO_ENTRY = 1e-12


class AttackError(ValueError):
    pass


class DegenerateBoundaryError(AttackError):
    """The linearized boundary has a zero-norm normal vector."""


class NoFeasibleMoveError(AttackError):
    pass


class InfeasibleFlipError(AttackError):
    pass


@dataclass(frozen=True)
class AttackPlan:
    """What to attack and under which constraints.

    ``order`` is the neighborhood order for the ``limited`` scope and is
    ignored otherwise. ``target_label`` is required in targeted mode.
    """

    target_vertex: int
    budget: int
    mode: str = UNTARGETED
    scope: str = "unlimited"
    target_label: int | None = None
    order: int | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.mode == TARGETED and (self.target_label is None or self.target_label < 0):
            raise ValueError("targeted mode needs a non-negative target_label")
        if self.mode == UNTARGETED and self.target_label is not None:
            raise ValueError("target_label is only meaningful in targeted mode")
        if self.scope == "limited" and (self.order is None or self.order < 1):
            raise ValueError("limited scope needs order >= 1")


@dataclass(frozen=True, eq=False)
class PerturbationMatrix:
    raw: np.ndarray
    sym: np.ndarray

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> PerturbationMatrix:
        return cls(raw, symmetrize(raw))


@dataclass(eq=False)
class AttackResult:
    """Outcome of one attack on one target vertex.

    ``predicted_labels[h]`` is the attacker model's prediction for the target
    after flip ``h``; ``boundary_classes[h]`` the class whose boundary was
    aimed at when choosing it.
    """

    target_vertex: int
    method: str
    mode: str
    scope: str
    budget: int
    original_label: int
    final_label: int
    success: bool
    stop_reason: str
    flips: list = field(default_factory=list)
    predicted_labels: list = field(default_factory=list)
    boundary_classes: list = field(default_factory=list)
    target_label: int | None = None
    order: int | None = None
    final_adjacency: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_modified(self) -> int:
        return len(self.flips)

    def to_record(self) -> dict:
        record = {
            "target_vertex": self.target_vertex,
            "method": self.method,
            "mode": self.mode,
            "scope": self.scope,
            "order": self.order,
            "budget": self.budget,
            "target_label": self.target_label,
            "flips": [[int(u), int(v), int(s)] for u, v, s in self.flips],
            "success": bool(self.success),
            "stop_reason": self.stop_reason,
            "n_modified": self.n_modified,
            "pre_label": int(self.original_label),
            "post_label": int(self.final_label),
            "predicted_labels": [int(x) for x in self.predicted_labels],
            "boundary_classes": [int(x) for x in self.boundary_classes],
        }
        if self.final_adjacency is not None:
            record["final_adjacency_sha256"] = adjacency_digest(self.final_adjacency)
        return record

    @classmethod
    def from_record(cls, record: dict) -> AttackResult:
        flips = [tuple(f) for f in record["flips"]]
        if record.get("n_modified", len(flips)) != len(flips):
            raise ValueError("record n_modified disagrees with its flip list")
        return cls(
            target_vertex=record["target_vertex"], method=record["method"],
            mode=record["mode"], scope=record["scope"], budget=record["budget"],
            original_label=record["pre_label"], final_label=record["post_label"],
            success=record["success"], stop_reason=record["stop_reason"], flips=flips,
            predicted_labels=list(record.get("predicted_labels", [])),
            boundary_classes=list(record.get("boundary_classes", [])),
            target_label=record.get("target_label"), order=record.get("order"),
        )


def adjacency_digest(adj: np.ndarray) -> str:
    packed = np.packbits(np.asarray(adj, dtype=bool), axis=None)
    return hashlib.sha256(np.int64(adj.shape[0]).tobytes() + packed.tobytes()).hexdigest()


def default_budget(graph: Graph) -> int:
    """``min(20, ceil(2 * average degree))``, at least one flip."""
    return max(1, min(20, math.ceil(2.0 * average_degree(graph))))


def symmetrize(raw: np.ndarray) -> np.ndarray:
    sym = 0.5 * (raw + raw.T)
    np.fill_diagonal(sym, 0.0)
    return sym


def linearized_boundary_distance(model: GcnModel, graph: Graph, adj: np.ndarray, v: int,
                                 k: int, k_hat: int, logits: np.ndarray | None = None):
    """Distance to the linearized boundary between classes ``k`` and ``k_hat``.

    Returns ``(score, direction)`` where ``score = |Δf| / ||w||`` and
    ``direction = |Δf| w / ||w||²`` with ``w = ∇_A (f_k - f_k_hat)`` and
    ``Δf = f_k - f_k_hat`` taken on the target's pre-softmax logits.
    """
    if k == k_hat:
        raise ValueError("boundary class must differ from the current prediction")
    if logits is None:
        logits = logits_at(model, adj, graph.features)
    weights = np.zeros(model.n_classes)
    weights[k] += 1.0
    weights[k_hat] -= 1.0
    w = adjacency_grad(model, graph.features, adj, v, weights)
    norm = float(np.linalg.norm(w))
    if norm < DEGENERATE_NORM:
        raise DegenerateBoundaryError(f"boundary between classes {k} and {k_hat} is degenerate")
    gap = abs(float(logits[v, k] - logits[v, k_hat]))
    return gap / norm, (gap / norm**2) * w


def minimal_perturbation_untargeted(model: GcnModel, graph: Graph, adj: np.ndarray, v: int):
    """Closest boundary over all classes other than the current prediction.

    Returns ``(class, PerturbationMatrix)``; ties go to the lowest class id.
    """
    logits = logits_at(model, adj, graph.features)
    k_hat = int(np.argmax(logits[v]))
    best = None
    for k in range(model.n_classes):
        if k == k_hat:
            continue
        try:
            score, direction = linearized_boundary_distance(model, graph, adj, v, k, k_hat, logits)
        except DegenerateBoundaryError:
            continue
        if best is None or score < best[0]:
            best = (score, k, direction)
    if best is None:
        raise DegenerateBoundaryError(f"every class boundary is degenerate for vertex {v}")
    return best[1], PerturbationMatrix.from_raw(best[2])


def minimal_perturbation_targeted(model: GcnModel, graph: Graph, adj: np.ndarray, v: int,
                                  label: int) -> PerturbationMatrix:
    logits = logits_at(model, adj, graph.features)
    k_hat = int(np.argmax(logits[v]))
    if k_hat == label:
        raise ValueError(f"vertex {v} is already classified as {label}")
    _, direction = linearized_boundary_distance(model, graph, adj, v, label, k_hat, logits)
    return PerturbationMatrix.from_raw(direction)


def scope_mask(adj: np.ndarray, plan: AttackPlan) -> np.ndarray:
    """Boolean ``N x N`` mask of vertex pairs the plan may touch."""
    n = adj.shape[0]
    v = plan.target_vertex
    if plan.scope == "unlimited":
        mask = np.ones((n, n), dtype=bool)
    elif plan.scope in ("direct", "indirect"):
        incident = np.zeros((n, n), dtype=bool)
        incident[v, :] = True
        incident[:, v] = True
        mask = incident if plan.scope == "direct" else ~incident
    else:
        inside = np.zeros(n, dtype=bool)
        inside[list(k_order_neighborhood(adj, v, plan.order))] = True
        mask = np.outer(inside, inside)
    np.fill_diagonal(mask, False)
    return mask


def feasible_candidates(adj: np.ndarray, r_sym: np.ndarray, plan: AttackPlan,
                        allowed: np.ndarray | None = None) -> list:
    """Vertex pairs ``(i, j)``, ``i < j``, ordered by ``|R̂_ij|`` descending.

    Pairs that would re-add an existing edge, re-delete a missing one, carry a
    (near-)zero entry, or fall outside the plan's scope are dropped. Raises
    ``NoFeasibleMoveError`` when nothing is left.
    """
    if allowed is None:
        allowed = scope_mask(adj, plan)
    iu, ju = np.triu_indices(adj.shape[0], k=1)
    vals = r_sym[iu, ju]
    present = adj[iu, ju] == 1
    keep = allowed[iu, ju] & (np.abs(vals) >= ZERO_ENTRY)
    keep &= ~((vals > 0) & present) & ~((vals < 0) & ~present)
    iu, ju, vals = iu[keep], ju[keep], vals[keep]
    if iu.size == 0:
        raise NoFeasibleMoveError(f"no feasible flip for vertex {plan.target_vertex}")
    order = np.lexsort((ju, iu, -np.abs(vals)))
    return list(zip(iu[order].tolist(), ju[order].tolist()))


def apply_flip(adj: np.ndarray, i: int, j: int, sign: int) -> np.ndarray:
    """Return a copy of ``adj`` with pair ``(i, j)`` changed by ``sign`` (±1)."""
    if i == j:
        raise InfeasibleFlipError("cannot flip a diagonal entry")
    new = adj[i, j] + sign
    if sign not in (1, -1) or new not in (0, 1):
        raise InfeasibleFlipError(f"cannot apply {sign:+d} to pair ({i}, {j}) with value {adj[i, j]}")
    out = adj.copy()
    out[i, j] = out[j, i] = new
    return out


def replay(adj: np.ndarray, flips) -> np.ndarray:
    out = np.array(adj, copy=True)
    for i, j, s in flips:
        out = apply_flip(out, i, j, s)
    return out


def _check_plan(model, graph, plan):
    if not 0 <= plan.target_vertex < graph.n_vertices:
        raise InvalidVertexError(f"vertex {plan.target_vertex} out of range")
    if plan.mode == TARGETED and plan.target_label >= model.n_classes:
        raise ValueError(f"target label {plan.target_label} >= number of classes {model.n_classes}")


def greedy_edge_attack(model: GcnModel, graph: Graph, plan: AttackPlan, choose, method: str,
                       original_label: int | None = None) -> AttackResult:
    """Flip one edge per iteration until the plan's goal, budget or a dead end.

    ``choose(adj, current_label)`` returns ``(boundary_class, R̂)``; the top
    feasible pair of ``R̂`` is flipped in the direction of its sign.
    """
    _check_plan(model, graph, plan)
    v = plan.target_vertex
    x = graph.features
    adj = graph.adjacency()
    allowed = scope_mask(adj, plan)
    current = int(np.argmax(logits_at(model, adj, x)[v]))
    if original_label is None:
        original_label = current
    if plan.mode == TARGETED and plan.target_label == original_label:
        raise ValueError(f"target label {plan.target_label} equals the clean prediction")

    def reached(label):
        if plan.mode == TARGETED:
            return label == plan.target_label
        return label != original_label

    flips, labels, boundaries = [], [], []
    stop = "budget"
    while not reached(current):
        if len(flips) >= plan.budget:
            break
        try:
            boundary, r_sym = choose(adj, current)
            i, j = feasible_candidates(adj, r_sym, plan, allowed)[0]
        except DegenerateBoundaryError:
            stop = "degenerate"
            break
        except NoFeasibleMoveError:
            stop = "no_feasible_move"
            break
        s = 1 if r_sym[i, j] > 0 else -1
        adj = apply_flip(adj, i, j, s)
        # a pair is flipped at most once, so n_modified equals the edit distance
        allowed[i, j] = allowed[j, i] = False
        current = int(np.argmax(logits_at(model, adj, x)[v]))
        flips.append((i, j, s))
        labels.append(current)
        boundaries.append(int(boundary))
    success = reached(current)
    if success:
        stop = "success"
    return AttackResult(
        target_vertex=v, method=method, mode=plan.mode, scope=plan.scope,
        budget=plan.budget, original_label=original_label, final_label=current,
        success=success, stop_reason=stop, flips=flips, predicted_labels=labels,
        boundary_classes=boundaries, target_label=plan.target_label,
        order=plan.order if plan.scope == "limited" else None, final_adjacency=adj,
    )


def run_attack(model: GcnModel, graph: Graph, plan: AttackPlan) -> AttackResult:
    """Boundary-linearization attack on ``plan.target_vertex``."""
    v = plan.target_vertex

    def choose(adj, current):
        if plan.mode == TARGETED:
            return plan.target_label, minimal_perturbation_targeted(
                model, graph, adj, v, plan.target_label).sym
        k, pert = minimal_perturbation_untargeted(model, graph, adj, v)
        return k, pert.sym

    return greedy_edge_attack(model, graph, plan, choose, method="graphfool")
