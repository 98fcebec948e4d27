"""Potential pruning points: candidate pairs, midpoints and cut angles."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .masks import BoundingBox, MaskError, Point, as_mask, nearest_set_pixel
from .plant import GrapevineItem, OrganClass, PlantGraph

# Search margin around a cane when locating its contact with the parent.
_CONTACT_MARGIN = 32


class PairKind(str, enum.Enum):
    BASE_TO_FIRST_NODE = "base_to_first_node"
    NODE_TO_NODE = "node_to_node"
    BASE_TO_BASE = "base_to_base"


_KIND_ORDER = {PairKind.BASE_TO_FIRST_NODE: 0, PairKind.NODE_TO_NODE: 1, PairKind.BASE_TO_BASE: 2}


class DegeneratePairError(ValueError):
    pass


@dataclass(frozen=True)
class CandidatePair:
    kind: PairKind
    cane_id: int
    p1: Point
    p2: Point
    endpoint_ids: tuple[int, int]
    distance: float = 0.0  # base distance of the nearer endpoint, used for ordering


@dataclass(frozen=True)
class PruningPoint:
    position: Point
    alpha: float
    kind: PairKind
    cane_id: int
    corrected: bool
    endpoint_ids: tuple[int, int]


def cut_angle(dx: int | float, dy: int | float) -> float:
    """Tool roll angle for the segment direction (dx, dy), in [-pi/2, pi/2].

    Zero for a vertical segment, pi/2 for a horizontal one; otherwise the
    segment slope rotated by a quarter turn towards zero.
    """
    if dx == 0 and dy == 0:
        raise DegeneratePairError("angle undefined for coincident points")
    if dx == 0:
        return 0.0
    if dy == 0:
        return math.pi / 2
    slope = dy / dx
    return math.atan(slope) - math.copysign(1.0, slope) * math.pi / 2


def midpoint(p1: Point, p2: Point) -> Point:
    """Midpoint rounded half-up per axis."""
    return Point((p1.x + p2.x + 1) // 2, (p1.y + p2.y + 1) // 2)


def compute_point(pair: CandidatePair, cane_mask: np.ndarray) -> PruningPoint:
    if pair.p1 == pair.p2:
        raise DegeneratePairError(f"pair {pair.endpoint_ids} on cane {pair.cane_id} is degenerate")
    cane_mask = as_mask(cane_mask)
    pp = midpoint(pair.p1, pair.p2)
    alpha = cut_angle(pair.p1.x - pair.p2.x, pair.p1.y - pair.p2.y)
    h, w = cane_mask.shape
    inside = 0 <= pp.x < w and 0 <= pp.y < h and bool(cane_mask[pp.y, pp.x])
    position = pp if inside else nearest_set_pixel(cane_mask, pp)
    return PruningPoint(position, alpha, pair.kind, pair.cane_id, not inside, pair.endpoint_ids)


def _distance(a: Point, b: Point) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def base_point(cane: GrapevineItem, parent: GrapevineItem) -> Point:
    """Where ``cane`` meets ``parent``.

    Canes grow upward, so when the masks overlap the contact region is the
    bottom ``thickness`` rows of the overlap. Without overlap it is the set of
    cane pixels closest to the parent. The base is the contact pixel nearest to
    the region's mean.
    """
    height, width = cane.mask.shape
    window = cane.bbox.expand(_CONTACT_MARGIN, width, height)
    rows, cols = window.slices
    parent_crop = parent.mask[rows, cols]
    if not parent_crop.any():
        window = BoundingBox(0, 0, width - 1, height - 1)
        rows, cols = window.slices
        parent_crop = parent.mask
    cane_crop = cane.mask[rows, cols]
    overlap = cane_crop & parent_crop
    if overlap.any():
        lowest = int(np.flatnonzero(overlap.any(axis=1))[-1])
        band = max(1, int(round(cane.thickness)))
        contact = overlap.copy()
        contact[: max(0, lowest - band + 1)] = False
    else:
        dist = ndimage.distance_transform_edt(~parent_crop)
        d = np.where(cane_crop, dist, np.inf)
        contact = d == d.min()
    ys, xs = np.nonzero(contact)
    mean = Point(int(np.floor(xs.mean() + 0.5)), int(np.floor(ys.mean() + 0.5)))
    local = nearest_set_pixel(contact, mean)
    return Point(local.x + window.x_min, local.y + window.y_min)


def cane_structure(graph: PlantGraph, cane_id: int) -> tuple[Point, list[tuple[float, GrapevineItem]], list[tuple[float, Point, GrapevineItem]]]:
    """Base point, nodes and child-cane bases of a cane, ordered by distance from its base."""
    cane = graph.items[cane_id]
    base = base_point(cane, graph.items[cane.parent_id])
    nodes = sorted(
        ((_distance(n.center, base), n) for n in graph.children_of(cane_id, OrganClass.NODE)),
        key=lambda t: (t[0], t[1].id),
    )
    child_bases = []
    for child in graph.children_of(cane_id, OrganClass.CANE):
        b = base_point(child, cane)
        child_bases.append((_distance(b, base), b, child))
    child_bases.sort(key=lambda t: (t[0], t[2].id))
    return base, nodes, child_bases


def enumerate_pairs(graph: PlantGraph) -> list[CandidatePair]:
    pairs: list[CandidatePair] = []
    for cane in graph.canes():
        if cane.parent_id is None:
            continue
        base, nodes, child_bases = cane_structure(graph, cane.id)
        if nodes:
            d0, first = nodes[0]
            pairs.append(
                CandidatePair(PairKind.BASE_TO_FIRST_NODE, cane.id, base, first.center, (cane.id, first.id), 0.0)
            )
        for (da, a), (_, b) in zip(nodes, nodes[1:]):
            pairs.append(CandidatePair(PairKind.NODE_TO_NODE, cane.id, a.center, b.center, (a.id, b.id), da))
        for (da, pa, a), (_, pb, b) in zip(child_bases, child_bases[1:]):
            pairs.append(CandidatePair(PairKind.BASE_TO_BASE, cane.id, pa, pb, (a.id, b.id), da))
    pairs.sort(key=lambda p: (p.cane_id, _KIND_ORDER[p.kind], p.distance))
    return pairs


def compute_points(graph: PlantGraph, pairs: list[CandidatePair] | None = None) -> list[PruningPoint]:
    """Points for every non-degenerate pair of ``graph``."""
    if pairs is None:
        pairs = enumerate_pairs(graph)
    points = []
    for pair in pairs:
        try:
            points.append(compute_point(pair, graph.items[pair.cane_id].mask))
        except (DegeneratePairError, MaskError):
            continue
    return points


INSUFFICIENT_NODES = "insufficient-nodes"


@dataclass
class FinalSelection:
    points: dict[int, PruningPoint | None]
    flags: dict[int, str]


def select_final(graph: PlantGraph, points: list[PruningPoint]) -> FinalSelection:
    """Pick, per cane, the point between its second and third node from the base."""
    finals: dict[int, PruningPoint | None] = {}
    flags: dict[int, str] = {}
    for cane in graph.canes():
        finals[cane.id] = None
        if cane.parent_id is None:
            continue
        _, nodes, _ = cane_structure(graph, cane.id)
        if len(nodes) == 2:
            flags[cane.id] = INSUFFICIENT_NODES
        if len(nodes) < 3:
            continue
        want = (nodes[1][1].id, nodes[2][1].id)
        for p in points:
            if p.cane_id == cane.id and p.kind is PairKind.NODE_TO_NODE and p.endpoint_ids == want:
                finals[cane.id] = p
                break
    return FinalSelection(finals, flags)
