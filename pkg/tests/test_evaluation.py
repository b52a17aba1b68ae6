import json
import logging

import numpy as np
import pytest

from gcnfool.evaluation import (
    ExperimentSpec,
    Outcome,
    SbmParams,
    ame,
    asr,
    generate_sbm,
    neighbor_order_ratio,
    run_experiment,
    sample_victims,
)
from gcnfool.gcn import TrainConfig
from gcnfool.graph import UNKNOWN, Graph

FAST = TrainConfig(learning_rate=0.1, epochs=100)


class _R:
    def __init__(self, n_modified, success=True):
        self.n_modified = n_modified
        self.success = success


def test_asr_examples():
    assert asr([True] * 50 + [False] * 50) == 50.0
    assert asr([False] * 7) == 0.0
    with pytest.raises(ValueError):
        asr([])


def test_asr_skips_excluded_outcomes():
    outcomes = [Outcome(0, "graphfool", "gcn", 1, True),
                Outcome(1, "graphfool", "gcn", 1, True, excluded=True),
                Outcome(2, "graphfool", "gcn", 1, False)]
    assert asr(outcomes) == 50.0


def test_ame_examples():
    assert ame([_R(1)] * 9) == 1.0
    assert ame([_R(2), _R(4)]) == 3.0
    assert ame([_R(2), _R(6, success=False)], successes_only=True) == 2.0
    with pytest.raises(ValueError):
        ame([])


def test_neighbor_order_ratio(path4):
    assert neighbor_order_ratio(path4, [0], 1) == 50.0
    complete = Graph(5, tuple((i, j) for i in range(5) for j in range(i + 1, 5)), np.eye(5),
                     [0] * 5, [True] * 5)
    assert neighbor_order_ratio(complete, range(5), 1) == 100.0
    values = [neighbor_order_ratio(path4, [0, 1], k) for k in range(1, 5)]
    assert values == sorted(values)
    with pytest.raises(ValueError):
        neighbor_order_ratio(path4, [], 1)


def _labeled(n_per_class, n_classes):
    n = n_per_class * n_classes
    return Graph(n, (), np.eye(n), np.repeat(np.arange(n_classes), n_per_class), [False] * n)


def test_sample_victims_one_per_class():
    graph = _labeled(6, 3)
    chosen = sample_victims(graph, 1, seed=0)
    assert sorted(graph.labels[chosen].tolist()) == [0, 1, 2]
    assert sample_victims(graph, 2, seed=4) == sample_victims(graph, 2, seed=4)


def test_sample_victims_short_class_warns(caplog):
    graph = _labeled(5, 2)
    with caplog.at_level(logging.WARNING):
        chosen = sample_victims(graph, 20, seed=0)
    assert chosen == list(range(10))
    assert "only 5 candidates" in caplog.text


def test_sample_victims_skips_unlabeled_and_training():
    labels = [0, 0, 1, 1, UNKNOWN]
    graph = Graph(5, (), np.eye(5), labels, [True, False, False, False, False])
    assert sample_victims(graph, 5, seed=0) == [1, 2, 3]
    assert sample_victims(graph, 5, seed=0, exclude_train=False) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        sample_victims(Graph(2, (), np.eye(2), [UNKNOWN] * 2, [False] * 2), 1, 0)


def test_sbm_complete_blocks():
    graph = generate_sbm(4, 3, 1.0, 0.0, seed=0)
    adj = graph.adjacency()
    same = graph.labels[:, None] == graph.labels[None, :]
    np.testing.assert_array_equal(adj, (same & ~np.eye(12, dtype=bool)).astype(float))
    assert graph.train_mask.sum() == 3


def test_sbm_edge_count_monte_carlo():
    n, b, p_in, p_out = 10, 3, 0.4, 0.05
    within = []
    for seed in range(100):
        g = generate_sbm(n, b, p_in, p_out, seed)
        within.append(sum(g.labels[i] == g.labels[j] for i, j in g.edges))
    expected = b * n * (n - 1) / 2 * p_in
    assert abs(np.mean(within) - expected) / expected < 0.10


def test_sbm_determinism_and_validation():
    a, b = generate_sbm(6, 2, 0.5, 0.1, 3), generate_sbm(6, 2, 0.5, 0.1, 3)
    assert a.edges == b.edges
    np.testing.assert_array_equal(a.train_mask, b.train_mask)
    for p_in, p_out in ((0.1, 0.1), (1.2, 0.0), (0.5, -0.1)):
        with pytest.raises(ValueError):
            generate_sbm(4, 2, p_in, p_out, 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(SbmParams(5, 2, 0.5, 0.1), per_class=0)
    with pytest.raises(ValueError):
        ExperimentSpec(SbmParams(5, 2, 0.5, 0.1), seeds=())
    with pytest.raises(ValueError):
        ExperimentSpec(SbmParams(5, 2, 0.5, 0.1), methods=("nettack",))


@pytest.fixture(scope="module")
def small_report():
    spec = ExperimentSpec(SbmParams(8, 2, 0.6, 0.05), methods=("graphfool", "random"),
                          per_class=3, seeds=(0, 1), train=FAST)
    return spec, run_experiment(spec)


def test_report_recomputes_from_records(small_report):
    spec, report = small_report
    assert report["schema"] == "gcnfool-metrics-report"
    for cell in report["cells"]:
        for run in cell["per_seed"]:
            rows = [r for r in report["per_vertex"]
                    if r["method"] == cell["method"] and r["seed"] == run["seed"]]
            kept = [r for r in rows if not r["victims"][cell["victim"]]["excluded"]]
            assert run["n_attacked"] == len(kept)
            assert run["n_excluded"] == len(rows) - len(kept)
            n_s = sum(r["victims"][cell["victim"]]["success"] for r in kept)
            assert run["asr"] == pytest.approx(100.0 * n_s / len(kept), abs=0)
            assert run["ame"] == np.mean([len(r["flips"]) for r in kept])
            assert 0 <= run["asr"] <= 100
            assert run["ame"] <= run["budget"]
        assert cell["asr_mean"] == pytest.approx(np.mean([r["asr"] for r in cell["per_seed"]]))


def test_report_is_deterministic(small_report):
    spec, report = small_report
    again = run_experiment(spec)
    assert json.dumps(again, sort_keys=True) == json.dumps(report, sort_keys=True)


def test_single_edge_protocol_ame_is_one():
    spec = ExperimentSpec(SbmParams(8, 2, 0.6, 0.05), methods=("graphfool", "dice", "random"),
                          budget=1, per_class=3, seeds=(0,), victims=("attacker",), train=FAST)
    report = run_experiment(spec)
    for cell in report["cells"]:
        assert cell["ame_mean"] == 1.0


def test_failed_cell_is_recorded():
    # DICE cannot run outside the direct scope; the other cell still completes
    spec = ExperimentSpec(SbmParams(8, 2, 0.6, 0.05), methods=("graphfool", "dice"),
                          scopes=(("unlimited", None),), per_class=2, seeds=(0,),
                          victims=("attacker",), train=FAST)
    cells = {c["method"]: c for c in run_experiment(spec)["cells"]}
    assert "errors" in cells["dice"] and cells["dice"]["asr_mean"] is None
    assert "errors" not in cells["graphfool"] and cells["graphfool"]["asr_mean"] is not None


def test_limited_sweep_trend_and_ratios():
    scopes = tuple(("limited", k) for k in range(1, 6))
    spec = ExperimentSpec(SbmParams(10, 2, 0.5, 0.05), scopes=scopes, per_class=4,
                          seeds=(0, 1), victims=("attacker",), train=TrainConfig(learning_rate=0.1))
    report = run_experiment(spec)
    series = [c["asr_mean"] for c in report["cells"]]
    assert all(b >= a for a, b in zip(series, series[1:]))
    ratios = [report["neighbor_order_ratios"][str(k)] for k in range(1, 6)]
    assert ratios == sorted(ratios)


def test_report_written_to_disk(tmp_path):
    out = tmp_path / "report.json"
    spec = ExperimentSpec(SbmParams(6, 2, 0.6, 0.05), per_class=1, seeds=(0,),
                          victims=("attacker",), train=FAST, output=str(out))
    report = run_experiment(spec)
    assert json.loads(out.read_text()) == json.loads(json.dumps(report))
