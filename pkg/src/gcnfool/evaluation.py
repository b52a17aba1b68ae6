"""Attack success metrics, victim sampling, SBM fixtures and experiment orchestration."""

from __future__ import annotations

import logging
import statistics
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from gcnfool.attack import (
    TARGETED,
    UNTARGETED,
    AttackPlan,
    AttackResult,
    default_budget,
    run_attack,
)
from gcnfool.baselines import dice_attack, fga_attack, random_attack
from gcnfool.gcn import GcnModel, TrainConfig, predict, train
from gcnfool.graph import UNKNOWN, Graph, k_order_neighborhood
from gcnfool.io import REPORT_SCHEMA, dump_json, tagged
from gcnfool.victims import propagation_linear_victim, retrained_gcn_victim, victim_seed_config

logger = logging.getLogger(__name__)

METHODS = ("graphfool", "fga", "dice", "random")


@dataclass(frozen=True)
class Outcome:
    """One attack scored against one victim classifier."""

    target_vertex: int
    method: str
    victim: str
    n_modified: int
    success: bool
    excluded: bool = False
    target_label: int | None = None
    clean_label: int | None = None
    post_label: int | None = None


def _successes(outcomes):
    flags = []
    for o in outcomes:
        if isinstance(o, (bool, np.bool_)):
            flags.append(bool(o))
        elif not getattr(o, "excluded", False):
            flags.append(bool(o.success))
    return flags


def asr(outcomes) -> float:
    """Attack success rate in percent over the non-excluded outcomes."""
    flags = _successes(outcomes)
    if not flags:
        raise ValueError("ASR of an empty outcome list is undefined")
    return 100.0 * sum(flags) / len(flags)


def ame(results, successes_only: bool = False) -> float:
    """Mean number of modified edges per attacked vertex.

    Accepts AttackResults or Outcomes; excluded outcomes are skipped.
    """
    counts = [r.n_modified for r in results
              if not getattr(r, "excluded", False) and (not successes_only or r.success)]
    if not counts:
        raise ValueError("AME of an empty result list is undefined")
    return float(np.mean(counts))


def neighbor_order_ratio(graph: Graph, attacked, k: int) -> float:
    """Mean share (percent) of vertices inside each attacked vertex's k-order neighborhood."""
    attacked = list(attacked)
    if not attacked:
        raise ValueError("no attacked vertices")
    return float(np.mean([100.0 * len(k_order_neighborhood(graph, v, k)) / graph.n_vertices
                          for v in attacked]))


def sample_victims(graph: Graph, per_class: int, seed: int, exclude_train: bool = True) -> list:
    """Stratified sample of ``per_class`` labeled vertices per true class.

    Training vertices are skipped unless ``exclude_train`` is false. Classes
    with too few candidates contribute all of them, with a warning.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    pool = graph.labels != UNKNOWN
    if exclude_train:
        pool &= ~graph.train_mask
    if not pool.any():
        raise ValueError("no labeled vertices to sample from")
    rng = np.random.default_rng(seed)
    chosen = []
    for c in np.unique(graph.labels[pool]).tolist():
        members = np.flatnonzero(pool & (graph.labels == c))
        if members.size < per_class:
            logger.warning("class %d has only %d candidates (wanted %d); taking all",
                           c, members.size, per_class)
            chosen.extend(members.tolist())
        else:
            chosen.extend(rng.choice(members, size=per_class, replace=False).tolist())
    return sorted(chosen)


def generate_sbm(n_per_block: int, n_blocks: int, p_in: float, p_out: float, seed: int,
                 train_per_block: int | None = None) -> Graph:
    """Stochastic block model with identity features and block-id labels.

    Every vertex is labeled; ``train_per_block`` random vertices per block
    (default a quarter, at least one) form the training mask.
    """
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if n_per_block < 1 or n_blocks < 1:
        raise ValueError("block sizes must be positive")
    rng = np.random.default_rng(seed)
    n = n_per_block * n_blocks
    labels = np.repeat(np.arange(n_blocks), n_per_block)
    probs = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    draws = rng.random((n, n)) < probs
    iu, ju = np.triu_indices(n, k=1)
    keep = draws[iu, ju]
    edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))

    per_block = train_per_block if train_per_block is not None else max(1, n_per_block // 4)
    if not 1 <= per_block <= n_per_block:
        raise ValueError("train_per_block must lie in 1..n_per_block")
    mask = np.zeros(n, dtype=bool)
    for b in range(n_blocks):
        mask[rng.choice(np.flatnonzero(labels == b), size=per_block, replace=False)] = True
    return Graph(n, edges, np.eye(n), labels, mask)


def two_clique_graph(size: int = 5, labeled_per_class: int = 2) -> Graph:
    """Two disjoint cliques with identity features; the first vertices of each are labeled."""
    n = 2 * size
    edges = [(i + off, j + off) for off in (0, size) for i in range(size) for j in range(i + 1, size)]
    labels = np.repeat([0, 1], size)
    mask = np.zeros(n, dtype=bool)
    mask[:labeled_per_class] = True
    mask[size:size + labeled_per_class] = True
    return Graph(n, tuple(edges), np.eye(n), labels, mask)


@dataclass(frozen=True)
class SbmParams:
    n_per_block: int
    n_blocks: int
    p_in: float
    p_out: float
    train_per_block: int | None = None

    def build(self, seed: int) -> Graph:
        return generate_sbm(self.n_per_block, self.n_blocks, self.p_in, self.p_out, seed,
                            self.train_per_block)


@dataclass(frozen=True)
class ExperimentSpec:
    """One experimental protocol: every (method, scope, victim) cell over several seeds.

    ``dataset`` is either a fixed :class:`Graph` or :class:`SbmParams`, in which
    case a fresh SBM is drawn per seed. ``budget=None`` selects
    :func:`default_budget`. In targeted mode every wrong label of each sampled
    vertex is attacked.
    """

    dataset: Graph | SbmParams
    dataset_id: str = "custom"
    methods: tuple = ("graphfool",)
    mode: str = UNTARGETED
    scopes: tuple = (("direct", None),)
    budget: int | None = None
    victims: tuple = ("attacker", "gcn", "linear")
    per_class: int = 20
    seeds: tuple = (0,)
    train: TrainConfig = field(default_factory=TrainConfig)
    dice_b_fraction: float = 0.5
    ame_successes_only: bool = False
    exclude_train_targets: bool = True
    output: str | None = None

    def __post_init__(self):
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        unknown = set(self.victims) - {"attacker", "gcn", "linear"}
        if unknown:
            raise ValueError(f"unknown victims {sorted(unknown)}")

    def echo(self) -> dict:
        data = {k: v for k, v in asdict(self).items() if k != "dataset"}
        data["dataset"] = asdict(self.dataset) if isinstance(self.dataset, SbmParams) else {
            "n_vertices": self.dataset.n_vertices, "n_edges": self.dataset.n_edges}
        data["scopes"] = [list(s) for s in self.scopes]
        for key in ("methods", "victims", "seeds"):
            data[key] = list(data[key])
        return data


def attack_one(method: str, model: GcnModel, graph: Graph, plan: AttackPlan, seed: int,
               dice_b_fraction: float = 0.5, dice_labels=None) -> AttackResult:
    """Dispatch ``plan`` to one of the attack methods."""
    v = plan.target_vertex
    if method == "graphfool":
        return run_attack(model, graph, plan)
    if method == "fga":
        return fga_attack(model, graph, v, plan.budget, plan.scope, order=plan.order,
                          mode=plan.mode, target_label=plan.target_label)
    if plan.mode == TARGETED:
        raise ValueError(f"method {method!r} has no targeted mode")
    if method == "dice":
        if plan.scope != "direct":
            raise ValueError("DICE only modifies edges incident to the target")
        labels = predict(model, graph) if dice_labels is None else dice_labels
        return dice_attack(graph, labels, v, plan.budget, dice_b_fraction, seed, model=model)
    if method == "random":
        return random_attack(graph, v, plan.budget, plan.scope, seed, order=plan.order, model=model)
    raise ValueError(f"unknown method {method!r}")


def _dice_labels(model, graph):
    labels = np.array(graph.labels, copy=True)
    unknown = labels == UNKNOWN
    labels[unknown] = predict(model, graph)[unknown]
    return labels


class _Victims:
    """Clean and adversarial predictions per victim, cached per adversarial graph."""

    def __init__(self, names, model, graph, config):
        self.names = names
        self.model = model
        self.graph = graph
        self.config = victim_seed_config(config)
        self.n_classes = model.n_classes
        self.clean = {name: self.predict(name, graph) for name in names}

    def predict(self, name, graph):
        if name == "attacker":
            return predict(self.model, graph)
        if name == "gcn":
            return retrained_gcn_victim(graph, self.config, n_classes=self.n_classes)
        return propagation_linear_victim(graph, n_classes=self.n_classes)


def score(result: AttackResult, victims: _Victims, true_label: int) -> list:
    """Score one attack against every victim.

    Vertices a victim already misclassifies on the clean graph are excluded.
    """
    adv = victims.graph.with_adjacency(result.final_adjacency) if result.flips else victims.graph
    v = result.target_vertex
    outcomes = []
    for name in victims.names:
        clean = int(victims.clean[name][v])
        post = int(victims.predict(name, adv)[v]) if result.flips else clean
        if result.mode == TARGETED:
            success = post == result.target_label
        else:
            success = post != true_label
        outcomes.append(Outcome(v, result.method, name, result.n_modified, success,
                                excluded=clean != true_label, target_label=result.target_label,
                                clean_label=clean, post_label=post))
    return outcomes


def _mean_std(values):
    if not values:
        return None, None
    mean = float(statistics.fmean(values))
    std = float(statistics.stdev(values)) if len(values) > 1 else 0.0
    return mean, std


def run_experiment(spec: ExperimentSpec) -> dict:
    """Train, attack and score every cell of ``spec``; optionally write the report.

    A failure inside a cell is recorded in that cell and does not stop the run.
    """
    per_seed = {}
    per_vertex = []
    ratios = {}
    errors = {}
    for seed in spec.seeds:
        graph = spec.dataset.build(seed) if isinstance(spec.dataset, SbmParams) else spec.dataset
        model = train(graph, replace(spec.train, seed=seed))
        clean_pred = predict(model, graph)
        targets = sample_victims(graph, spec.per_class, seed, spec.exclude_train_targets)
        budget = spec.budget or default_budget(graph)
        victims = _Victims(spec.victims, model, graph, replace(spec.train, seed=seed))
        dice_labels = _dice_labels(model, graph)

        for scope, order in spec.scopes:
            if scope == "limited":
                ratios.setdefault(order, []).append(neighbor_order_ratio(graph, targets, order))
            for method in spec.methods:
                key = (method, scope, order)
                try:
                    outcomes = _run_cell(spec, method, scope, order, seed, model, graph,
                                         clean_pred, targets, budget, victims, dice_labels,
                                         per_vertex)
                except Exception as exc:  # recorded per cell; other cells still run
                    logger.exception("cell %s failed for seed %d", key, seed)
                    errors.setdefault(key, []).append(f"seed {seed}: {type(exc).__name__}: {exc}")
                    continue
                for victim in spec.victims:
                    rows = [o for o in outcomes if o.victim == victim]
                    kept = [o for o in rows if not o.excluded]
                    per_seed.setdefault(key + (victim,), []).append({
                        "seed": seed,
                        "budget": budget,
                        "n_attacked": len(kept),
                        "n_excluded": len(rows) - len(kept),
                        "asr": asr(kept) if kept else None,
                        "ame": _cell_ame(kept, spec.ame_successes_only),
                    })

    cells = []
    for scope, order in spec.scopes:
        for method in spec.methods:
            for victim in spec.victims:
                key = (method, scope, order, victim)
                runs = per_seed.get(key, [])
                asr_mean, asr_std = _mean_std([r["asr"] for r in runs if r["asr"] is not None])
                ame_mean, ame_std = _mean_std([r["ame"] for r in runs if r["ame"] is not None])
                cell = {"method": method, "mode": spec.mode, "scope": scope, "order": order,
                        "victim": victim, "asr_mean": asr_mean, "asr_std": asr_std,
                        "ame_mean": ame_mean, "ame_std": ame_std, "per_seed": runs}
                if (method, scope, order) in errors:
                    cell["errors"] = errors[(method, scope, order)]
                cells.append(cell)

    report = tagged(REPORT_SCHEMA, {
        "spec_echo": spec.echo(),
        "cells": cells,
        "per_vertex": per_vertex,
        "neighbor_order_ratios": {str(k): _mean_std(v)[0] for k, v in sorted(ratios.items())},
    })
    if spec.output:
        dump_json(spec.output, report)
    return report


def _cell_ame(kept, successes_only):
    pool = [o for o in kept if o.success] if successes_only else kept
    return ame(pool) if pool else None


def _run_cell(spec, method, scope, order, seed, model, graph, clean_pred, targets, budget,
              victims, dice_labels, per_vertex):
    outcomes = []
    for v in targets:
        true_label = int(graph.labels[v])
        if spec.mode == TARGETED:
            goals = [l for l in range(model.n_classes) if l != true_label]
        else:
            goals = [None]
        for label in goals:
            if label is not None and label == clean_pred[v]:
                # the attacker already predicts the goal label: nothing to attack
                outcomes.extend(Outcome(v, method, name, 0, False, excluded=True,
                                        target_label=label) for name in spec.victims)
                continue
            plan = AttackPlan(v, budget, mode=spec.mode, scope=scope, target_label=label,
                              order=order if scope == "limited" else None)
            attack_seed = seed * 1_000_003 + v * 101 + (label or 0)
            result = attack_one(method, model, graph, plan, attack_seed, spec.dice_b_fraction,
                                dice_labels)
            scored = score(result, victims, true_label)
            outcomes.extend(scored)
            record = result.to_record()
            record.update(seed=seed, true_label=true_label, victims={
                o.victim: {"clean_label": o.clean_label, "post_label": o.post_label,
                           "success": o.success, "excluded": o.excluded} for o in scored})
            per_vertex.append(record)
    return outcomes
