"""Minimal adjacency perturbations against a two-layer GCN node classifier."""

from gcnfool.attack import (
    AttackPlan,
    AttackResult,
    PerturbationMatrix,
    default_budget,
    run_attack,
)
from gcnfool.gcn import GcnModel, TrainConfig, forward, predict, train
from gcnfool.graph import Graph, average_degree, k_order_neighborhood, load_graph, normalize

__version__ = "0.1.0"

__all__ = [
    "AttackPlan",
    "AttackResult",
    "GcnModel",
    "Graph",
    "PerturbationMatrix",
    "TrainConfig",
    "average_degree",
    "default_budget",
    "forward",
    "k_order_neighborhood",
    "load_graph",
    "normalize",
    "predict",
    "run_attack",
    "train",
]
