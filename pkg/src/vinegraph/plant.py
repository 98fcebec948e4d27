"""Grapevine items and the tree-shaped plant graph."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .masks import BoundingBox, MaskError, Point, area, as_mask, bbox_of, box_mask, centroid


class GraphError(ValueError):
    """Invalid item or graph operation."""


class OrganClass(str, enum.Enum):
    MAIN_CORDON = "main_cordon"
    CANE = "cane"
    NODE = "node"


# (child class, parent class) pairs allowed in a plant graph.
ALLOWED_LINKS = {
    (OrganClass.CANE, OrganClass.MAIN_CORDON),
    (OrganClass.CANE, OrganClass.CANE),
    (OrganClass.NODE, OrganClass.CANE),
}


@dataclass(eq=False)
class GrapevineItem:
    id: int
    organ_class: OrganClass
    bbox: BoundingBox
    score: float
    mask: np.ndarray
    center: Point
    thickness: float
    distance_from_parent: float | None = None
    depth: int | None = None
    parent_id: int | None = None
    children_ids: list[int] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    def unlinked(self) -> GrapevineItem:
        """Copy with graph linkage cleared; the mask is shared."""
        return GrapevineItem(
            self.id, self.organ_class, self.bbox, self.score, self.mask, self.center, self.thickness
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrapevineItem):
            return NotImplemented
        return (
            self.id == other.id
            and self.organ_class == other.organ_class
            and self.bbox == other.bbox
            and self.score == other.score
            and self.center == other.center
            and self.thickness == other.thickness
            and self.distance_from_parent == other.distance_from_parent
            and self.depth == other.depth
            and self.parent_id == other.parent_id
            and self.children_ids == other.children_ids
            and np.array_equal(self.mask, other.mask)
        )

    def __repr__(self) -> str:
        return (
            f"GrapevineItem(id={self.id}, class={self.organ_class.value}, bbox={tuple(self.bbox)}, "
            f"center={tuple(self.center)}, parent={self.parent_id}, children={self.children_ids})"
        )


def compute_thickness(mask: np.ndarray) -> float:
    """Area divided by the longer bounding-box side, to one decimal."""
    box = bbox_of(mask)
    return round(area(mask) / max(box.width, box.height), 1)


def new_item(
    id: int,
    organ_class: OrganClass | str,
    bbox: BoundingBox | None,
    score: float,
    mask: np.ndarray | None,
    *,
    size: tuple[int, int] | None = None,
) -> GrapevineItem:
    """Create an unlinked item.

    Nodes without a mask get the filled ``bbox`` as mask, which needs the image
    ``size`` as ``(width, height)``. When a mask is given the stored bbox is the
    tight box of the mask.
    """
    organ_class = OrganClass(organ_class)
    if id < 0:
        raise GraphError(f"item id must be non-negative, got {id}")
    if not 0.0 <= score <= 1.0:
        raise GraphError(f"item {id}: score {score} outside [0, 1]")
    if mask is None:
        if organ_class is not OrganClass.NODE:
            raise GraphError(f"item {id}: {organ_class.value} requires a mask")
        if bbox is None or size is None:
            raise GraphError(f"item {id}: node without mask needs a bbox and image size")
        mask = box_mask(bbox, *size)
    mask = as_mask(mask, copy=True)
    if not mask.any():
        raise GraphError(f"item {id}: empty {organ_class.value} mask")
    mask.flags.writeable = False
    try:
        tight = bbox_of(mask)
        center = centroid(mask)
    except MaskError as exc:
        raise GraphError(f"item {id}: {exc}") from exc
    return GrapevineItem(id, organ_class, tight, float(score), mask, center, compute_thickness(mask))


def check_unique_ids(items) -> None:
    seen: set[int] = set()
    for item in items:
        if item.id in seen:
            raise GraphError(f"duplicate item id {item.id}")
        seen.add(item.id)


@dataclass(eq=False)
class PlantGraph:
    """Tree rooted at a main cordon. Items are owned by the graph."""

    items: dict[int, GrapevineItem]
    root_id: int

    @classmethod
    def from_root(cls, cordon: GrapevineItem) -> PlantGraph:
        if cordon.organ_class is not OrganClass.MAIN_CORDON:
            raise GraphError(f"graph root {cordon.id} must be a main cordon")
        root = cordon.unlinked()
        root.depth = 0
        return cls({root.id: root}, root.id)

    @property
    def root(self) -> GrapevineItem:
        return self.items[self.root_id]

    def __contains__(self, item_id: int) -> bool:
        return item_id in self.items

    def add(self, item: GrapevineItem) -> GrapevineItem:
        """Register an unlinked copy of ``item``; link it with :meth:`attach`."""
        if item.id in self.items:
            raise GraphError(f"duplicate item id {item.id}")
        if item.organ_class is OrganClass.MAIN_CORDON:
            raise GraphError(f"a graph has a single main cordon, cannot add {item.id}")
        copy = item.unlinked()
        self.items[copy.id] = copy
        return copy

    def attach(self, child_id: int, parent_id: int) -> None:
        try:
            child, parent = self.items[child_id], self.items[parent_id]
        except KeyError as exc:
            raise GraphError(f"unknown item id {exc.args[0]}") from None
        if (child.organ_class, parent.organ_class) not in ALLOWED_LINKS:
            raise GraphError(
                f"cannot attach {child.organ_class.value} {child_id} to "
                f"{parent.organ_class.value} {parent_id}"
            )
        if child_id == parent_id or child_id in self.ancestors(parent_id):
            raise GraphError(f"attaching {child_id} to {parent_id} would create a cycle")

        if child.parent_id is not None:
            self.items[child.parent_id].children_ids.remove(child_id)
        child.parent_id = parent_id
        child.distance_from_parent = math.hypot(
            child.center.x - parent.center.x, child.center.y - parent.center.y
        )
        parent.children_ids.append(child_id)
        parent.children_ids.sort(key=lambda i: (self.items[i].distance_from_parent, i))
        self._set_depths(child_id, None if parent.depth is None else parent.depth + 1)

    def _set_depths(self, item_id: int, depth: int | None) -> None:
        stack = [(item_id, depth)]
        while stack:
            i, d = stack.pop()
            self.items[i].depth = d
            stack.extend((c, None if d is None else d + 1) for c in self.items[i].children_ids)

    def ancestors(self, item_id: int) -> list[int]:
        out = []
        current = self.items[item_id].parent_id
        while current is not None:
            out.append(current)
            current = self.items[current].parent_id
        return out

    def walk(self) -> Iterator[GrapevineItem]:
        """Pre-order DFS from the root, children in stored order."""
        stack = [self.root_id]
        while stack:
            item = self.items[stack.pop()]
            yield item
            stack.extend(reversed(item.children_ids))

    def edges(self) -> list[tuple[int, int]]:
        return [(item.parent_id, item.id) for item in self.walk() if item.parent_id is not None]

    def tree_ids(self) -> set[int]:
        return {item.id for item in self.walk()}

    def canes(self) -> list[GrapevineItem]:
        return sorted(
            (i for i in self.items.values() if i.organ_class is OrganClass.CANE), key=lambda i: i.id
        )

    def children_of(self, item_id: int, organ_class: OrganClass) -> list[GrapevineItem]:
        return [
            self.items[c]
            for c in self.items[item_id].children_ids
            if self.items[c].organ_class is organ_class
        ]

    def validate(self) -> None:
        """Check the tree invariants; raise GraphError on the first violation."""
        root = self.root
        if root.parent_id is not None or root.depth != 0:
            raise GraphError("root must have no parent and depth 0")
        visited = [item.id for item in self.walk()]
        if len(visited) != len(set(visited)):
            raise GraphError("graph contains a cycle or shared child")
        if set(visited) != set(self.items):
            raise GraphError(f"items not reachable from root: {sorted(set(self.items) - set(visited))}")
        for item in self.items.values():
            if item.organ_class is OrganClass.NODE and item.children_ids:
                raise GraphError(f"node {item.id} has children")
            for c in item.children_ids:
                child = self.items[c]
                if child.parent_id != item.id:
                    raise GraphError(f"inconsistent linkage {item.id} -> {c}")
                if child.depth != item.depth + 1:
                    raise GraphError(f"bad depth for {c}")
            keys = [(self.items[c].distance_from_parent, c) for c in item.children_ids]
            if keys != sorted(keys):
                raise GraphError(f"children of {item.id} not sorted by distance")
