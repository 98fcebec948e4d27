"""Precision/recall of pipeline output against generator ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .pipeline import PipelineResult
from .plant import OrganClass
from .pruning import PruningPoint
from .synthetic import GroundTruth

CONNECTION_SETS = {
    "cordon_cane": (OrganClass.MAIN_CORDON, OrganClass.CANE),
    "cane_cane": (OrganClass.CANE, OrganClass.CANE),
    "cane_node": (OrganClass.CANE, OrganClass.NODE),
}


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        # no predictions counts as perfectly precise
        return 1.0 if self.tp + self.fp == 0 else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 1.0 if self.tp + self.fn == 0 else self.tp / (self.tp + self.fn)

    def __iadd__(self, other: Counts) -> Counts:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
        }


@dataclass
class EvalReport:
    connections: dict[str, Counts] = field(default_factory=lambda: {k: Counts() for k in CONNECTION_SETS})
    points: Counts = field(default_factory=Counts)
    finals: Counts = field(default_factory=Counts)
    alpha_error_sum: float = 0.0
    alpha_matched: int = 0
    orphans: dict[str, int] = field(default_factory=lambda: {c.value: 0 for c in OrganClass})
    scenes: int = 1

    @property
    def alpha_mae(self) -> float | None:
        return None if self.alpha_matched == 0 else self.alpha_error_sum / self.alpha_matched

    def __iadd__(self, other: EvalReport) -> EvalReport:
        for k, c in other.connections.items():
            self.connections[k] += c
        self.points += other.points
        self.finals += other.finals
        self.alpha_error_sum += other.alpha_error_sum
        self.alpha_matched += other.alpha_matched
        for k, v in other.orphans.items():
            self.orphans[k] += v
        self.scenes += other.scenes
        return self

    def as_dict(self) -> dict:
        mae = self.alpha_mae
        return {
            "scenes": self.scenes,
            "connections": {k: c.as_dict() for k, c in self.connections.items()},
            "points": self.points.as_dict(),
            "finals": self.finals.as_dict(),
            "alpha_mae": None if mae is None else round(mae, 6),
            "orphans": dict(self.orphans),
        }


def _count(predicted: set, truth: set) -> Counts:
    tp = len(predicted & truth)
    return Counts(tp, len(predicted - truth), len(truth - predicted))


def orientation_error(a: float, b: float) -> float:
    """Difference between two line orientations, in [0, pi/2]."""
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def match_points(
    predicted: list[PruningPoint], truth: list[PruningPoint], threshold: float
) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching, closest pairs first, within ``threshold`` px."""
    candidates = []
    for i, p in enumerate(predicted):
        for j, t in enumerate(truth):
            d = math.hypot(p.position.x - t.position.x, p.position.y - t.position.y)
            if d <= threshold:
                candidates.append((d, i, j))
    candidates.sort()
    used_p, used_t, matches = set(), set(), []
    for d, i, j in candidates:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        matches.append((i, j, d))
    return matches


def evaluate(result: PipelineResult, truth: GroundTruth, match_threshold: float = 3.0) -> EvalReport:
    report = EvalReport()
    for name, (parent_class, child_class) in CONNECTION_SETS.items():
        predicted = set()
        for g in result.graphs:
            for p, c in g.edges():
                if g.items[p].organ_class is parent_class and g.items[c].organ_class is child_class:
                    predicted.add((p, c))
        report.connections[name] = _count(predicted, truth.edges(child_class, parent_class))

    matches = match_points(result.points, truth.points, match_threshold)
    report.points = Counts(len(matches), len(result.points) - len(matches), len(truth.points) - len(matches))
    for i, j, _ in matches:
        report.alpha_error_sum += orientation_error(result.points[i].alpha, truth.points[j].alpha)
    report.alpha_matched = len(matches)

    out_finals = result.final_points()
    truth_finals = [p for _, p in sorted(truth.finals.items())]
    fm = match_points(out_finals, truth_finals, match_threshold)
    report.finals = Counts(len(fm), len(out_finals) - len(fm), len(truth_finals) - len(fm))

    for item in result.orphans:
        report.orphans[item.organ_class.value] += 1
    return report
