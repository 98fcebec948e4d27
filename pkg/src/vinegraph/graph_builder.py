"""Mask-overlap connection search and plant-graph assembly.

Organs are linked by testing where a candidate mask overlaps a stack of
labelled masks, growing the candidate by repeated square dilations when it does
not touch anything yet.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .masks import BoundingBox, MaskError, bbox_of, slot_rows, square_dilate
from .plant import GrapevineItem, GraphError, OrganClass, PlantGraph, check_unique_ids

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConnectionParams:
    dilation_radius: int = 3
    max_iter: int = 5
    n_slots: int = 3

    def __post_init__(self):
        for name in ("dilation_radius", "max_iter", "n_slots"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")

    @property
    def reach(self) -> int:
        return self.dilation_radius * self.max_iter


@dataclass(frozen=True)
class SlotBottom:
    """Accept the lowest overlapping label if the overlap touches the bottom band."""

    n_slots: int

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")


@dataclass(frozen=True)
class MaxOverlap:
    """Accept the label with the largest overlap area."""


@dataclass(frozen=True)
class Layer:
    label: int
    mask: np.ndarray
    bbox: BoundingBox

    @property
    def item_id(self) -> int:
        return self.label - 1


@dataclass
class LabelStack:
    """Instance masks labelled ``item id + 1``; 0 is background."""

    layers: list[Layer]
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.layers)

    def labels(self) -> list[int]:
        return [layer.label for layer in self.layers]

    def as_array(self) -> np.ndarray:
        """Dense ``(n, H, W)`` matrix of label values."""
        out = np.zeros((len(self.layers), self.height, self.width), dtype=np.int64)
        for i, layer in enumerate(self.layers):
            out[i][layer.mask] = layer.label
        return out


def build_label_stack(items: Sequence[GrapevineItem]) -> LabelStack:
    if not items:
        raise GraphError("cannot build a label stack from an empty item list")
    height, width = items[0].mask.shape
    layers = []
    seen = set()
    for item in items:
        if item.mask.shape != (height, width):
            raise MaskError(
                f"item {item.id} mask is {item.mask.shape[::-1]}, expected {(width, height)}"
            )
        label = item.id + 1
        if label in seen:
            raise GraphError(f"duplicate label {label}")
        seen.add(label)
        layers.append(Layer(label, item.mask, bbox_of(item.mask)))
    return LabelStack(layers, width, height)


@dataclass
class ConnectionMap:
    """Parent id -> child ids, in the order connections were found."""

    entries: dict[int, list[int]] = field(default_factory=dict)
    iterations: dict[int, int] = field(default_factory=dict)  # child id -> iteration it connected at

    def add(self, parent_id: int, child_id: int, iteration: int = 0) -> None:
        if parent_id == child_id:
            raise GraphError(f"self connection on {child_id}")
        if child_id in self.iterations:
            raise GraphError(f"item {child_id} already connected")
        self.entries.setdefault(parent_id, []).append(child_id)
        self.iterations[child_id] = iteration

    def parent_of(self) -> dict[int, int]:
        return {c: p for p, cs in self.entries.items() for c in cs}

    def children(self) -> set[int]:
        return set(self.iterations)

    def pairs(self) -> list[tuple[int, int]]:
        return [(p, c) for p, cs in self.entries.items() for c in cs]

    def __len__(self) -> int:
        return len(self.iterations)

    def __bool__(self) -> bool:
        return bool(self.iterations)


def _find_parent(
    stack: LabelStack,
    candidate: GrapevineItem,
    params: ConnectionParams,
    criterion: SlotBottom | MaxOverlap,
) -> tuple[int, int] | None:
    """Return (label, iteration) of the accepted layer, or None."""
    # Everything the candidate can reach after max_iter dilations lies inside
    # this window, so cropping gives the same result as working full-frame.
    window = candidate.bbox.expand(params.reach, stack.width, stack.height)
    layers = [layer for layer in stack.layers if layer.bbox.intersects(window)]
    if not layers:
        return None
    rows, cols = window.slices
    mask = candidate.mask[rows, cols]
    crops = [layer.mask[rows, cols] for layer in layers]

    for iteration in range(params.max_iter + 1):
        if iteration > 0:
            mask = square_dilate(mask, params.dilation_radius)
        overlaps = [np.count_nonzero(crop & mask) for crop in crops]
        hits = [(layer.label, n, crop) for layer, n, crop in zip(layers, overlaps, crops) if n]
        if not hits:
            continue
        if isinstance(criterion, MaxOverlap):
            label, _, _ = max(hits, key=lambda h: (h[1], -h[0]))
            return label, iteration
        label, _, crop = min(hits, key=lambda h: h[0])
        inter = crop & mask
        ys = np.flatnonzero(mask.any(axis=1))
        band = BoundingBox(0, int(ys[0]), 0, int(ys[-1]))
        top, bottom = slot_rows(band, criterion.n_slots, criterion.n_slots)
        if inter[top : bottom + 1].any():
            return label, iteration
    return None


def connect_masks(
    stack: LabelStack | None,
    candidates: Sequence[GrapevineItem],
    params: ConnectionParams,
    criterion: SlotBottom | MaxOverlap,
) -> ConnectionMap:
    """Connect each candidate to at most one stack layer.

    Each candidate is tested as-is, then after up to ``max_iter`` cumulative
    dilations. Among overlapping layers, SlotBottom takes the smallest label and
    accepts it only if the overlap reaches the bottom slot of the (dilated)
    candidate; MaxOverlap takes the layer with the largest overlap, ties to the
    smaller label. Unconnected candidates are left out of the map.
    """
    connections = ConnectionMap()
    if stack is None or not stack.layers:
        return connections
    for candidate in candidates:
        if candidate.mask.shape != (stack.height, stack.width):
            raise MaskError(f"candidate {candidate.id} does not match stack dimensions")
        found = _find_parent(stack, candidate, params, criterion)
        if found is not None:
            label, iteration = found
            connections.add(label - 1, candidate.id, iteration)
    return connections


def connect_cordon_to_canes(cordons, canes, params: ConnectionParams) -> ConnectionMap:
    if not cordons:
        return ConnectionMap()
    return connect_masks(build_label_stack(cordons), canes, params, SlotBottom(params.n_slots))


def connect_canes_iterative(
    connected_canes, unconnected_canes, params: ConnectionParams
) -> tuple[ConnectionMap, int]:
    """Grow cane-to-cane links outward from the already connected canes.

    Returns the accumulated connections and the number of rounds run.
    """
    result = ConnectionMap()
    field_canes = list(connected_canes)
    pending = list(unconnected_canes)
    rounds = 0
    while pending and field_canes:
        rounds += 1
        found = connect_masks(
            build_label_stack(field_canes), pending, params, SlotBottom(params.n_slots)
        )
        if not found:
            break
        for parent, child in found.pairs():
            result.add(parent, child, found.iterations[child])
        field_canes.extend(c for c in pending if c.id in found.iterations)
        pending = [c for c in pending if c.id not in found.iterations]
    return result, rounds


def connect_canes_to_nodes(canes, nodes, params: ConnectionParams) -> ConnectionMap:
    if not canes:
        return ConnectionMap()
    return connect_masks(build_label_stack(canes), nodes, params, MaxOverlap())


@dataclass
class BuildResult:
    graphs: list[PlantGraph]
    orphans: list[GrapevineItem]
    cordon_canes: ConnectionMap
    cane_canes: ConnectionMap
    cane_nodes: ConnectionMap


def build_graph(items: Sequence[GrapevineItem], params: ConnectionParams) -> BuildResult:
    """Run the three connection passes and assemble one graph per cordon."""
    check_unique_ids(items)
    if items:
        shape = items[0].mask.shape
        for item in items:
            if item.mask.shape != shape:
                raise MaskError(f"item {item.id} mask size differs from item {items[0].id}")
    cordons = [i for i in items if i.organ_class is OrganClass.MAIN_CORDON]
    canes = [i for i in items if i.organ_class is OrganClass.CANE]
    nodes = [i for i in items if i.organ_class is OrganClass.NODE]

    cordon_canes = connect_cordon_to_canes(cordons, canes, params)
    attached = cordon_canes.children()
    cane_canes, rounds = connect_canes_iterative(
        [c for c in canes if c.id in attached], [c for c in canes if c.id not in attached], params
    )
    log.debug("cane-to-cane search ran %d rounds, %d links", rounds, len(cane_canes))
    cane_nodes = connect_canes_to_nodes(canes, nodes, params)

    by_id = {item.id: item for item in items}
    parent_of: dict[int, int] = {}
    for conn in (cordon_canes, cane_canes, cane_nodes):
        for parent, child in conn.pairs():
            if child in parent_of:
                log.warning("dropping second parent %d proposed for item %d", parent, child)
                continue
            parent_of[child] = parent

    graphs = []
    placed: set[int] = set()
    for cordon in cordons:
        graph = PlantGraph.from_root(cordon)
        frontier = [cordon.id]
        while frontier:
            nxt = []
            for parent_id in frontier:
                kids = sorted(c for c, p in parent_of.items() if p == parent_id)
                for child_id in kids:
                    graph.add(by_id[child_id])
                    graph.attach(child_id, parent_id)
                    nxt.append(child_id)
            frontier = nxt
        placed |= graph.tree_ids()
        graphs.append(graph)

    orphans = [item.unlinked() for item in items if item.id not in placed]
    return BuildResult(graphs, orphans, cordon_canes, cane_canes, cane_nodes)
