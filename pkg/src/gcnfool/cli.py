"""Command-line front end: ``gcnfool {train,attack,evaluate,sweep,gen-sbm}``.

Every flag may also come from a JSON config file (``--config``) whose keys
are the flag names with dashes replaced by underscores; flags given on the
command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from gcnfool.attack import (
    TARGETED,
    AttackPlan,
    AttackResult,
    adjacency_digest,
    default_budget,
    replay,
)
from gcnfool.evaluation import (
    METHODS,
    ExperimentSpec,
    SbmParams,
    _dice_labels,
    _Victims,
    ame,
    asr,
    attack_one,
    generate_sbm,
    run_experiment,
    sample_victims,
    score,
)
from gcnfool.gcn import TrainConfig, checkpoint_config, load_model, predict, save_model, train
from gcnfool.graph import UNKNOWN, Graph, GraphError, load_graph
from gcnfool.io import (
    REPORT_SCHEMA,
    RESULTS_SCHEMA,
    SchemaError,
    dump_json,
    load_tagged,
    tagged,
    write_atomic,
)
from gcnfool.victims import write_predictions

logger = logging.getLogger("gcnfool")

THREADS_ENV = "GCNFOOL_THREADS"


class CliError(Exception):
    pass


def _add_dataset_args(p):
    p.add_argument("--edges", help="edge list file (two vertex ids per line)")
    p.add_argument("--features", help="CSV feature matrix, one row per vertex")
    p.add_argument("--labels", help="CSV 'vertex_id,label_id' file")
    p.add_argument("--train-vertices", help="file with one training vertex id per line "
                                            "(default: every labeled vertex)")
    p.add_argument("--n-vertices", type=int, help="vertex count when no feature file is given")


def _add_train_args(p):
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--weight-decay", type=float, default=0.0)


def _add_plan_args(p):
    p.add_argument("--method", choices=METHODS, default="graphfool")
    p.add_argument("--mode", choices=("untargeted", "targeted"), default="untargeted")
    p.add_argument("--label", type=int, help="target label for targeted mode")
    p.add_argument("--scope", choices=("unlimited", "direct", "indirect", "limited"),
                   default="unlimited")
    p.add_argument("--order", type=int, help="neighborhood order for --scope limited")
    p.add_argument("--budget", type=int, help="max edge flips (default min(20, ceil(2*avg degree)))")
    p.add_argument("--dice-b", type=float, default=0.5, help="DICE deletion fraction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcnfool", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the attacker GCN and write a checkpoint")
    p.add_argument("--config")
    _add_dataset_args(p)
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="model.npz", help="checkpoint path")
    p.add_argument("--loss-log", help="CSV of the training loss per epoch")

    p = sub.add_parser("attack", help="attack vertices with a trained checkpoint")
    p.add_argument("--config")
    _add_dataset_args(p)
    _add_plan_args(p)
    p.add_argument("--checkpoint", required=False)
    p.add_argument("--vertices", help="comma-separated target vertices")
    p.add_argument("--per-class", type=int, default=20, help="sampled targets per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--out", default="results.json")

    p = sub.add_parser("evaluate", help="score attack results against victim classifiers")
    p.add_argument("--config")
    p.add_argument("--results", nargs="+", required=False)
    p.add_argument("--victims", default="gcn,linear", help="comma list of attacker,gcn,linear")
    p.add_argument("--seed", type=int, default=0, help="seed for retrained victims")
    _add_train_args(p)
    p.add_argument("--successes-only-ame", action="store_true")
    p.add_argument("--out", default="report.json")
    p.add_argument("--predictions-dir", help="also write victim predictions as CSV files here")

    p = sub.add_parser("sweep", help="run a full experiment protocol on an SBM or dataset")
    p.add_argument("--config")
    _add_dataset_args(p)
    p.add_argument("--sbm", help="n_per_block,n_blocks,p_in,p_out for a fresh SBM per seed")
    p.add_argument("--train-per-block", type=int)
    p.add_argument("--methods", default="graphfool,fga,dice,random")
    p.add_argument("--mode", choices=("untargeted", "targeted"), default="untargeted")
    p.add_argument("--scopes", help="comma list of unlimited,direct,indirect,limited:K "
                                    "(default direct)")
    p.add_argument("--orders", help="shorthand for limited:K for every K in this comma list")
    p.add_argument("--budget", type=int)
    p.add_argument("--victims", default="attacker,gcn,linear")
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--seeds", default="0,1,2,3,4")
    _add_train_args(p)
    p.add_argument("--dice-b", type=float, default=0.5)
    p.add_argument("--successes-only-ame", action="store_true")
    p.add_argument("--out", default="report.json")

    p = sub.add_parser("gen-sbm", help="write a stochastic block model dataset")
    p.add_argument("--config")
    p.add_argument("--n-per-block", type=int, default=20)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--p-in", type=float, default=0.5)
    p.add_argument("--p-out", type=float, default=0.05)
    p.add_argument("--train-per-block", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="sbm")
    return parser


def parse_args(argv=None):
    """Parse ``argv``, letting ``--config`` supply defaults for any flag."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(config, dict):
            parser.error(f"config {args.config} must hold a JSON object")
        unknown = sorted(set(config) - set(vars(args)))
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        subparser.set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def _read_train_vertices(path):
    ids = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line and not line.startswith("#"):
                try:
                    ids.append(int(line))
                except ValueError:
                    raise GraphError(f"{path}:{lineno}: expected a vertex id") from None
    return ids


def _require_file(path, what):
    if path is None:
        raise CliError(f"missing --{what}")
    if not Path(path).is_file():
        raise CliError(f"{what} file not found: {path}")


def dataset_paths(args) -> dict:
    return {"edges": args.edges, "features": args.features, "labels": args.labels,
            "train_vertices": args.train_vertices, "n_vertices": args.n_vertices}


def load_dataset(paths: dict) -> Graph:
    _require_file(paths.get("edges"), "edges")
    _require_file(paths.get("labels"), "labels")
    if paths.get("features"):
        _require_file(paths["features"], "features")
    graph = load_graph(paths["edges"], paths.get("features"), paths["labels"],
                       n_vertices=paths.get("n_vertices"))
    if paths.get("train_vertices"):
        _require_file(paths["train_vertices"], "train-vertices")
        mask = np.zeros(graph.n_vertices, dtype=bool)
        ids = _read_train_vertices(paths["train_vertices"])
        if any(not 0 <= i < graph.n_vertices for i in ids):
            raise GraphError("training vertex id out of range")
        mask[ids] = True
        graph = graph.with_train_mask(mask)
    return graph


def _train_config(args, seed):
    return TrainConfig(hidden_dim=args.hidden, learning_rate=args.lr, epochs=args.epochs,
                       seed=seed, weight_decay=args.weight_decay)


def cmd_train(args) -> int:
    graph = load_dataset(dataset_paths(args))
    config = _train_config(args, args.seed)
    model = train(graph, config)
    save_model(model, args.out, config)
    if args.loss_log:
        lines = ["epoch,loss"] + [f"{i},{v!r}" for i, v in enumerate(model.loss_history)]
        write_atomic(args.loss_log, "\n".join(lines) + "\n")
    acc = float(np.mean(predict(model, graph)[graph.train_mask] == graph.labels[graph.train_mask]))
    print(f"final loss {model.loss_history[-1]:.6f}  train accuracy {acc:.4f}  -> {args.out}")
    return 0


def _thread_count(args):
    if args.threads:
        return max(1, args.threads)
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def cmd_attack(args) -> int:
    paths = dataset_paths(args)
    graph = load_dataset(paths)
    _require_file(args.checkpoint, "checkpoint")
    model = load_model(args.checkpoint)
    if model.n_features != graph.features.shape[1]:
        raise CliError("checkpoint feature dimension does not match the dataset")
    clean = predict(model, graph)
    budget = args.budget or default_budget(graph)

    if args.mode == TARGETED:
        if args.label is None:
            raise CliError("--mode targeted requires --label")
        if not 0 <= args.label < model.n_classes:
            raise CliError(f"--label {args.label} outside 0..{model.n_classes - 1}")
    elif args.label is not None:
        raise CliError("--label is only valid with --mode targeted")
    if args.scope == "limited" and args.order is None:
        raise CliError("--scope limited requires --order")

    if args.vertices:
        targets = [int(v) for v in args.vertices.split(",") if v.strip()]
    else:
        targets = sample_victims(graph, args.per_class, args.seed)
    for v in targets:
        if not 0 <= v < graph.n_vertices:
            raise CliError(f"target vertex {v} out of range")
    if args.mode == TARGETED:
        clashing = [v for v in targets if clean[v] == args.label]
        if args.vertices and clashing:
            raise CliError(f"vertices {clashing} are already predicted as label {args.label}")
        targets = [v for v in targets if clean[v] != args.label]

    dice_labels = _dice_labels(model, graph)

    def one(v):
        plan = AttackPlan(v, budget, mode=args.mode, scope=args.scope, target_label=args.label,
                          order=args.order if args.scope == "limited" else None)
        return attack_one(args.method, model, graph, plan, args.seed * 1_000_003 + v,
                          args.dice_b, dice_labels)

    with ThreadPoolExecutor(max_workers=_thread_count(args)) as pool:
        results = list(pool.map(one, targets))

    doc = tagged(RESULTS_SCHEMA, {
        "dataset": {k: (str(Path(v).resolve()) if isinstance(v, str) else v)
                    for k, v in paths.items()},
        "checkpoint": str(Path(args.checkpoint).resolve()),
        "records": [r.to_record() for r in results],
    })
    dump_json(args.out, doc)
    n_ok = sum(r.success for r in results)
    print(f"{args.method}: {n_ok}/{len(results)} successful against the attacker model, "
          f"AME {ame(results) if results else 0.0:.2f} -> {args.out}")
    return 0


def verify_replay(graph: Graph, record: dict) -> np.ndarray:
    """Replay a record's flips on the clean graph and check the stored digest."""
    adj = replay(graph.adjacency(), record["flips"])
    stored = record.get("final_adjacency_sha256")
    if stored is not None and adjacency_digest(adj) != stored:
        raise CliError(f"integrity error: flips of vertex {record['target_vertex']} do not "
                       "reproduce the stored final adjacency")
    return adj


def cmd_evaluate(args) -> int:
    if not args.results:
        raise CliError("missing --results")
    victims = [v for v in args.victims.split(",") if v]
    cells, per_vertex = [], []
    for path in args.results:
        _require_file(path, "results")
        doc = load_tagged(path, RESULTS_SCHEMA)
        graph = load_dataset(doc["dataset"])
        model = load_model(doc["checkpoint"])
        base = checkpoint_config(doc["checkpoint"]) or _train_config(args, args.seed)
        pool = _Victims(victims, model, graph, replace(base, seed=args.seed))
        if args.predictions_dir:
            out_dir = Path(args.predictions_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            for name, pred in pool.clean.items():
                write_predictions(out_dir / f"{Path(path).stem}_{name}_clean.csv", pred)

        by_method = {}
        for record in doc["records"]:
            result = AttackResult.from_record(record)
            result.final_adjacency = verify_replay(graph, record)
            true_label = int(graph.labels[result.target_vertex])
            if true_label == UNKNOWN:
                true_label = result.original_label
            scored = score(result, pool, true_label)
            by_method.setdefault((result.method, result.mode, result.scope, result.order), []).extend(scored)
            per_vertex.append({**record, "source": str(path), "victims": {
                o.victim: {"clean_label": o.clean_label, "post_label": o.post_label,
                           "success": o.success, "excluded": o.excluded} for o in scored}})
        for (method, mode, scope, order), outcomes in sorted(by_method.items(), key=str):
            for victim in victims:
                kept = [o for o in outcomes if o.victim == victim and not o.excluded]
                pool_ame = [o for o in kept if o.success] if args.successes_only_ame else kept
                cells.append({
                    "method": method, "mode": mode, "scope": scope, "order": order,
                    "victim": victim, "source": str(path), "n_attacked": len(kept),
                    "n_excluded": sum(1 for o in outcomes if o.victim == victim and o.excluded),
                    "asr": asr(kept) if kept else None,
                    "ame": ame(pool_ame) if pool_ame else None,
                })
    report = tagged(REPORT_SCHEMA, {
        "spec_echo": {"results": [str(p) for p in args.results], "victims": victims,
                      "seed": args.seed, "ame_successes_only": args.successes_only_ame},
        "cells": cells,
        "per_vertex": per_vertex,
    })
    dump_json(args.out, report)
    for c in cells:
        shown = "n/a" if c["asr"] is None else f"{c['asr']:.1f}%"
        print(f"{c['method']:<10} {c['scope']:<10} victim={c['victim']:<9} ASR {shown}")
    return 0


def _parse_scopes(args):
    if args.scopes is None:
        # --orders on its own means a pure disturbance-limited sweep
        items = [] if args.orders else ["direct"]
    else:
        items = [s.strip() for s in args.scopes.split(",") if s.strip()]
    scopes = []
    for item in items:
        if item.startswith("limited:"):
            scopes.append(("limited", int(item.split(":", 1)[1])))
        elif item == "limited":
            raise CliError("use limited:K (or --orders) for disturbance-limited scopes")
        else:
            scopes.append((item, None))
    if args.orders:
        scopes += [("limited", int(k)) for k in args.orders.split(",") if k.strip()]
    if not scopes:
        raise CliError("no attack scopes given")
    return tuple(scopes)


def cmd_sweep(args) -> int:
    if args.sbm:
        try:
            n_per_block, n_blocks, p_in, p_out = args.sbm.split(",")
            dataset = SbmParams(int(n_per_block), int(n_blocks), float(p_in), float(p_out),
                                args.train_per_block)
        except ValueError:
            raise CliError("--sbm expects n_per_block,n_blocks,p_in,p_out") from None
        dataset_id = f"sbm:{args.sbm}"
    else:
        dataset = load_dataset(dataset_paths(args))
        dataset_id = str(args.edges)
    spec = ExperimentSpec(
        dataset=dataset, dataset_id=dataset_id,
        methods=tuple(m for m in args.methods.split(",") if m),
        mode=args.mode, scopes=_parse_scopes(args), budget=args.budget,
        victims=tuple(v for v in args.victims.split(",") if v), per_class=args.per_class,
        seeds=tuple(int(s) for s in args.seeds.split(",") if s.strip()),
        train=_train_config(args, 0), dice_b_fraction=args.dice_b,
        ame_successes_only=args.successes_only_ame, output=args.out,
    )
    report = run_experiment(spec)
    for c in report["cells"]:
        if c["asr_mean"] is None:
            print(f"{c['method']:<10} {c['scope']:<9} {c['order'] or '':<2} victim={c['victim']:<9} "
                  f"failed: {'; '.join(c.get('errors', []))}")
            continue
        print(f"{c['method']:<10} {c['scope']:<9} {c['order'] or '':<2} victim={c['victim']:<9} "
              f"ASR {c['asr_mean']:6.2f} ± {c['asr_std']:.2f}  AME {c['ame_mean']:.2f}")
    print(f"report -> {args.out}")
    return 0


def cmd_gen_sbm(args) -> int:
    graph = generate_sbm(args.n_per_block, args.blocks, args.p_in, args.p_out, args.seed,
                         args.train_per_block)
    out = Path(args.out_dir)
    write_atomic(out / "edges.txt", "".join(f"{u} {v}\n" for u, v in graph.edges))
    write_atomic(out / "labels.csv", "".join(f"{v},{y}\n" for v, y in enumerate(graph.labels.tolist())))
    write_atomic(out / "train.txt", "".join(f"{v}\n" for v in np.flatnonzero(graph.train_mask).tolist()))
    print(f"{graph.n_vertices} vertices, {graph.n_edges} edges -> {out}/")
    return 0


COMMANDS = {"train": cmd_train, "attack": cmd_attack, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep, "gen-sbm": cmd_gen_sbm}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CliError, GraphError, SchemaError, ValueError, OSError) as exc:
        print(f"gcnfool {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
