import dataclasses
import math

import pytest

from vinegraph.evaluation import Counts, EvalReport, evaluate, match_points, orientation_error
from vinegraph.masks import Point
from vinegraph.pipeline import PipelineResult, run_pipeline
from vinegraph.pruning import PairKind, PruningPoint
from vinegraph.synthetic import VineSpec, generate


def pt(x, y, alpha=0.0):
    return PruningPoint(Point(x, y), alpha, PairKind.NODE_TO_NODE, 1, False, (0, 0))


@pytest.fixture(scope="module")
def scene():
    items, truth = generate(VineSpec(seed=21))
    return items, truth, run_pipeline(items)


def test_perfect_output(scene):
    _, truth, result = scene
    report = evaluate(result, truth)
    for c in list(report.connections.values()) + [report.points, report.finals]:
        assert c.precision == c.recall == 1.0
    assert sum(c.tp for c in report.connections.values()) == len(truth.parents)


def test_empty_output(scene):
    _, truth, _ = scene
    report = evaluate(PipelineResult([], [], []), truth)
    assert report.connections["cordon_cane"].recall == 0.0
    assert report.connections["cordon_cane"].precision == 1.0
    assert report.points.recall == 0.0 and report.alpha_mae is None


def test_extra_edge_lowers_precision(scene):
    _, truth, result = scene
    node_id = next(i for i, c in truth.classes.items() if c.value == "node")
    # without this edge in the truth, the pipeline's correct link counts as invented
    fewer = dataclasses.replace(truth, parents={k: v for k, v in truth.parents.items() if k != node_id})
    c = evaluate(result, fewer).connections["cane_node"]
    assert c.fp == 1 and c.precision == c.tp / (c.tp + 1)


def test_counts_consistency():
    c = Counts(3, 1, 2)
    assert (c.precision, c.recall) == (0.75, 0.6)
    c += Counts(1, 0, 0)
    assert c.as_dict() == {"tp": 4, "fp": 1, "fn": 2, "precision": 0.8, "recall": 0.666667}
    total = EvalReport()
    total += EvalReport()
    assert total.scenes == 2


def test_greedy_matching_nearest_first_one_to_one():
    pred = [pt(0, 0), pt(10, 0)]
    truth = [pt(1, 0), pt(2, 0), pt(30, 0)]
    assert match_points(pred, truth, 3.0) == [(0, 0, 1.0)]
    assert match_points([pt(0, 0)], [pt(3, 0)], 3.0) == [(0, 0, 3.0)]
    assert match_points([pt(0, 0)], [pt(3, 1)], 3.0) == []


def test_orientation_error_wraps():
    assert orientation_error(math.pi / 2, -math.pi / 2) == pytest.approx(0.0)
    assert orientation_error(0.1, -0.1) == pytest.approx(0.2)
    assert orientation_error(0.0, math.pi / 2) == pytest.approx(math.pi / 2)
