"""Segmentation items in, plant graphs and pruning points out."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .graph_builder import ConnectionParams, build_graph
from .plant import GrapevineItem, PlantGraph
from .pruning import FinalSelection, PruningPoint, compute_points, select_final


@dataclass
class PipelineResult:
    graphs: list[PlantGraph]
    orphans: list[GrapevineItem]
    points: list[PruningPoint]
    finals: dict[int, PruningPoint | None] = field(default_factory=dict)
    flags: dict[int, str] = field(default_factory=dict)

    def final_points(self) -> list[PruningPoint]:
        return [p for _, p in sorted(self.finals.items()) if p is not None]


def run_pipeline(
    items: Sequence[GrapevineItem],
    params: ConnectionParams | None = None,
    *,
    final_selection: bool = True,
) -> PipelineResult:
    params = params or ConnectionParams()
    built = build_graph(items, params)
    points: list[PruningPoint] = []
    finals: dict[int, PruningPoint | None] = {}
    flags: dict[int, str] = {}
    for graph in built.graphs:
        graph_points = compute_points(graph)
        points.extend(graph_points)
        if final_selection:
            sel: FinalSelection = select_final(graph, graph_points)
            finals.update(sel.points)
            flags.update(sel.flags)
    return PipelineResult(built.graphs, built.orphans, points, finals, flags)
