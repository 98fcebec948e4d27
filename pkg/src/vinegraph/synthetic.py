"""Procedural grapevine scenes with known topology, plus mask degradation.

A scene is a wavy main cordon with canes growing upward from it, optional
child canes branching from canes, and square node boxes along each cane.
Organs are thick polylines rasterised with Pillow. Any two organs that are not
parent and child are kept more than ``clearance`` pixels apart (Chebyshev), so
a clean scene links every organ to its true parent at the first overlap test.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .masks import BoundingBox, Point, bbox_of, dilate, erode, vertical_slot
from .plant import GrapevineItem, OrganClass, new_item
from .pruning import PairKind, PruningPoint


class GenerationError(ValueError):
    """The spec cannot be realised in the image."""


@dataclass(frozen=True)
class VineSpec:
    seed: int = 0
    width: int = 1024
    height: int = 768
    cordon_y: tuple[float, float] = (0.62, 0.75)  # fraction of image height
    cordon_margin: int = 60
    cordon_waviness: float = 8.0
    cordon_period: tuple[float, float] = (250.0, 500.0)
    cordon_thickness: int = 14
    cane_count: tuple[int, int] = (3, 6)
    cane_length: tuple[float, float] = (140.0, 280.0)
    cane_angle: tuple[float, float] = (-30.0, 30.0)  # degrees from vertical
    cane_curvature: tuple[float, float] = (-20.0, 20.0)  # total bend, degrees
    cane_thickness: tuple[int, int] = (5, 8)
    nodes_per_cane: tuple[int, int] = (0, 5)
    first_node_offset: tuple[float, float] = (22.0, 34.0)
    node_spacing: tuple[float, float] = (24.0, 40.0)
    node_margin: int = 3
    child_cane_probability: float = 0.35
    child_length: tuple[float, float] = (60.0, 140.0)
    child_angle: tuple[float, float] = (25.0, 45.0)  # divergence from parent, degrees
    child_attach: tuple[float, float] = (0.35, 0.7)  # fraction of parent length
    max_cane_depth: int = 2
    clearance: int = 20
    node_clearance: int = 6
    n_slots: int = 3
    max_attempts: int = 40

    def __post_init__(self):
        if self.width < 64 or self.height < 64:
            raise GenerationError(f"image {self.width}x{self.height} is too small")
        for name in (
            "cordon_y", "cordon_period", "cane_count", "cane_length", "cane_angle", "cane_curvature",
            "cane_thickness", "nodes_per_cane", "first_node_offset", "node_spacing", "child_length",
            "child_angle", "child_attach",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise GenerationError(f"{name} range is empty: {lo} > {hi}")
        if self.cane_thickness[0] < 1 or self.cordon_thickness < 1:
            raise GenerationError("thicknesses must be >= 1 px")
        if self.cane_count[0] < 0 or self.nodes_per_cane[0] < 0:
            raise GenerationError("counts must be non-negative")
        if max(abs(a) for a in self.cane_angle) + max(abs(c) for c in self.cane_curvature) >= 90:
            raise GenerationError("canes must stay in the upward hemisphere")
        if not 0.0 <= self.child_cane_probability <= 1.0:
            raise GenerationError("child_cane_probability must be in [0, 1]")


@dataclass(frozen=True)
class DegradationSpec:
    erosion_radius: int = 0
    gap_count: int = 0
    gap_range: tuple[int, int] = (1, 1)  # Chebyshev gap between cane and parent, px
    split_probability: float = 0.0
    drop_probability: float = 0.0
    drop_classes: tuple[str, ...] = ("cane", "node")

    def __post_init__(self):
        if self.erosion_radius < 0 or self.gap_count < 0:
            raise ValueError("erosion_radius and gap_count must be >= 0")
        if not 0 <= self.gap_range[0] <= self.gap_range[1]:
            raise ValueError(f"invalid gap range {self.gap_range}")
        for name in ("split_probability", "drop_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for c in self.drop_classes:
            OrganClass(c)

    @property
    def is_identity(self) -> bool:
        return (
            self.erosion_radius == 0
            and self.gap_count == 0
            and self.split_probability == 0
            and self.drop_probability == 0
        )


@dataclass
class GroundTruth:
    seed: int
    width: int
    height: int
    parents: dict[int, int]  # child id -> parent id
    classes: dict[int, OrganClass]
    cane_nodes: dict[int, list[int]]  # cane id -> node ids from base to tip
    points: list[PruningPoint]
    finals: dict[int, PruningPoint]
    items: list[GrapevineItem] = field(default_factory=list, repr=False)
    degradations: dict = field(default_factory=dict)

    def edges(self, child_class: OrganClass | None = None, parent_class: OrganClass | None = None) -> set[tuple[int, int]]:
        return {
            (p, c)
            for c, p in self.parents.items()
            if (child_class is None or self.classes[c] is child_class)
            and (parent_class is None or self.classes[p] is parent_class)
        }


# -- geometry helpers --------------------------------------------------------

def _polyline(start, angle_deg: float, bend_deg: float, length: float, step: float = 6.0) -> np.ndarray:
    """Centre line growing upward: angle measured from vertical, positive to the right."""
    n = max(2, int(math.ceil(length / step)))
    pts = [np.asarray(start, dtype=float)]
    for i in range(n):
        theta = math.radians(angle_deg + bend_deg * (i + 0.5) / n)
        d = length / n
        pts.append(pts[-1] + d * np.array([math.sin(theta), -math.cos(theta)]))
    return np.array(pts)


def _arc_point(line: np.ndarray, s: float) -> tuple[np.ndarray, float]:
    """Point at arc length ``s`` along ``line`` and the local angle from vertical (deg)."""
    seg = np.diff(line, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate(([0.0], np.cumsum(lengths)))
    i = int(np.clip(np.searchsorted(cum, s) - 1, 0, len(seg) - 1))
    t = (s - cum[i]) / lengths[i]
    p = line[i] + t * seg[i]
    angle = math.degrees(math.atan2(seg[i, 0], -seg[i, 1]))
    return p, angle


def _draw(line: np.ndarray, thickness: int, width: int, height: int) -> np.ndarray:
    img = Image.new("1", (width, height), 0)
    draw = ImageDraw.Draw(img)
    pts = [(float(x), float(y)) for x, y in line]
    draw.line(pts, fill=1, width=thickness, joint="curve")
    r = (thickness - 1) / 2
    for x, y in (pts[0], pts[-1]):
        draw.ellipse([x - r, y - r, x + r, y + r], fill=1)
    mask = np.asarray(img, dtype=bool).copy()
    if mask.any():
        rows, cols = bbox_of(mask).expand(1, width, height).slices
        mask[rows, cols] = ndimage.binary_fill_holes(mask[rows, cols])
    return mask


def _inside(line: np.ndarray, margin: float, width: int, height: int) -> bool:
    return bool(
        (line[:, 0] >= margin).all()
        and (line[:, 0] <= width - 1 - margin).all()
        and (line[:, 1] >= margin).all()
        and (line[:, 1] <= height - 1 - margin).all()
    )


def _too_close(mask: np.ndarray, others: list[np.ndarray], clearance: int) -> bool:
    """True if any of ``others`` lies within Chebyshev distance ``clearance`` of ``mask``."""
    h, w = mask.shape
    window = bbox_of(mask).expand(clearance, w, h)
    rows, cols = window.slices
    grown = dilate(mask[rows, cols], clearance) if clearance > 0 else mask[rows, cols]
    return any((o[rows, cols] & grown).any() for o in others)


def _round_point(p) -> Point:
    return Point(int(math.floor(p[0] + 0.5)), int(math.floor(p[1] + 0.5)))


def _perpendicular_angle(p1: Point, p2: Point) -> float:
    """Orientation of the line perpendicular to p1->p2, folded into (-pi/2, pi/2]."""
    phi = math.atan2(p1.y - p2.y, p1.x - p2.x) + math.pi / 2
    while phi > math.pi / 2 + 1e-12:
        phi -= math.pi
    while phi <= -math.pi / 2 + 1e-12:
        phi += math.pi
    return phi


def _expected_point(kind: PairKind, cane_id: int, a: Point, b: Point, ids) -> PruningPoint:
    mid = Point(int(math.floor((a.x + b.x) / 2 + 0.5)), int(math.floor((a.y + b.y) / 2 + 0.5)))
    return PruningPoint(mid, _perpendicular_angle(a, b), kind, cane_id, False, tuple(ids))


# -- generator --------------------------------------------------------------

@dataclass
class _Cane:
    id: int
    parent: int
    depth: int
    line: np.ndarray
    length: float
    thickness: int
    mask: np.ndarray
    base: Point
    nodes: list[tuple[int, Point]] = field(default_factory=list)
    children: list[tuple[float, int, Point]] = field(default_factory=list)  # (arc pos, id, base)


def generate(spec: VineSpec) -> tuple[list[GrapevineItem], GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    W, H = spec.width, spec.height

    x0, x1 = spec.cordon_margin, W - 1 - spec.cordon_margin
    if x1 - x0 < 4 * spec.cordon_thickness:
        raise GenerationError("image too narrow for a cordon")
    cy = rng.uniform(*spec.cordon_y) * H
    period = rng.uniform(*spec.cordon_period)
    phase = rng.uniform(0, 2 * math.pi)
    xs = np.arange(x0, x1 + 1, 4.0)
    cordon_y = lambda x: cy + spec.cordon_waviness * np.sin(2 * math.pi * x / period + phase)  # noqa: E731
    cordon_line = np.column_stack([xs, cordon_y(xs)])
    if not _inside(cordon_line, spec.cordon_thickness, W, H):
        raise GenerationError("cordon does not fit in the image")
    cordon_mask = _draw(cordon_line, spec.cordon_thickness, W, H)

    masks: dict[int, np.ndarray] = {0: cordon_mask}
    canes: dict[int, _Cane] = {}
    next_id = 1

    def place(parent: int, start: np.ndarray, angle_range, base_angle: float, length_range, depth: int, sign: float = 0.0):
        nonlocal next_id
        parent_mask = masks[parent]
        for _ in range(spec.max_attempts):
            if sign:
                angle = base_angle + sign * rng.uniform(*angle_range)
            else:
                angle = base_angle + rng.uniform(*angle_range)
            bend = rng.uniform(*spec.cane_curvature)
            limit = 90 - 1e-6 - max(abs(a) for a in spec.cane_curvature)
            angle = float(np.clip(angle, -limit, limit))
            if abs(angle) + abs(bend) >= 90:
                continue
            length = rng.uniform(*length_range)
            thickness = int(rng.integers(spec.cane_thickness[0], spec.cane_thickness[1] + 1))
            line = _polyline(start, angle, bend, length)
            if not _inside(line, thickness + 2, W, H):
                continue
            mask = _draw(line, thickness, W, H)
            touching = mask & parent_mask
            if not touching.any():
                continue
            if not (vertical_slot(mask, spec.n_slots, spec.n_slots) & parent_mask).any():
                continue
            others = [m for i, m in masks.items() if i != parent]
            if _too_close(mask, others, spec.clearance):
                continue
            cane = _Cane(next_id, parent, depth, line, length, thickness, mask, _round_point(start))
            masks[next_id] = mask
            canes[next_id] = cane
            next_id += 1
            return cane
        return None

    n_canes = int(rng.integers(spec.cane_count[0], spec.cane_count[1] + 1))
    if n_canes:
        slot = (x1 - x0) / n_canes
        if slot < 2 * spec.clearance + spec.cane_thickness[1]:
            raise GenerationError(f"{n_canes} canes do not fit along the cordon")
    top_level = []
    for k in range(n_canes):
        jitter = rng.uniform(-0.2, 0.2) * slot
        ax = float(np.clip(x0 + (k + 0.5) * slot + jitter, x0 + 2, x1 - 2))
        start = np.array([ax, float(cordon_y(ax))])
        cane = place(0, start, spec.cane_angle, 0.0, spec.cane_length, 1)
        if cane is None:
            raise GenerationError(f"could not place cane {k + 1} of {n_canes} (seed {spec.seed})")
        top_level.append(cane)

    frontier = top_level
    depth = 1
    while frontier and depth < spec.max_cane_depth:
        new = []
        for parent in frontier:
            if rng.uniform() >= spec.child_cane_probability:
                continue
            s = rng.uniform(*spec.child_attach) * parent.length
            start, local = _arc_point(parent.line, s)
            sign = 1.0 if rng.uniform() < 0.5 else -1.0
            child = place(parent.id, start, spec.child_angle, local, spec.child_length, depth + 1, sign)
            if child is not None:
                parent.children.append((s, child.id, child.base))
                new.append(child)
        frontier = new
        depth += 1

    # nodes
    node_masks: dict[int, np.ndarray] = {}
    node_centers: dict[int, Point] = {}
    all_canes = [canes[i] for i in sorted(canes)]
    for cane in all_canes:
        count = int(rng.integers(spec.nodes_per_cane[0], spec.nodes_per_cane[1] + 1))
        s = rng.uniform(*spec.first_node_offset)
        half = (cane.thickness + 2 * spec.node_margin) // 2
        others = [c.mask for c in all_canes if c.id != cane.id]
        placed = 0
        while placed < count and s <= cane.length - 10:
            p, _ = _arc_point(cane.line, s)
            center = _round_point(p)
            s += rng.uniform(*spec.node_spacing)
            if not cane.mask[center.y, center.x]:
                continue
            box = BoundingBox(center.x - half, center.y - half, center.x + half, center.y + half)
            if box.x_min < 0 or box.y_min < 0 or box.x_max >= W or box.y_max >= H:
                continue
            mask = np.zeros((H, W), dtype=bool)
            mask[box.slices] = True
            if _too_close(mask, others, spec.node_clearance):
                continue
            node_id = next_id
            next_id += 1
            node_masks[node_id] = mask
            node_centers[node_id] = center
            cane.nodes.append((node_id, center))
            placed += 1

    items = [new_item(0, OrganClass.MAIN_CORDON, None, 1.0, cordon_mask)]
    items += [new_item(c.id, OrganClass.CANE, None, 1.0, c.mask) for c in all_canes]
    items += [
        new_item(i, OrganClass.NODE, bbox_of(m), 1.0, m) for i, m in sorted(node_masks.items())
    ]

    parents = {c.id: c.parent for c in all_canes}
    classes = {0: OrganClass.MAIN_CORDON, **{c.id: OrganClass.CANE for c in all_canes}}
    for cane in all_canes:
        for node_id, _ in cane.nodes:
            parents[node_id] = cane.id
            classes[node_id] = OrganClass.NODE

    points: list[PruningPoint] = []
    finals: dict[int, PruningPoint] = {}
    for cane in all_canes:
        nodes = cane.nodes
        if nodes:
            points.append(_expected_point(PairKind.BASE_TO_FIRST_NODE, cane.id, cane.base, nodes[0][1], (cane.id, nodes[0][0])))
        for k, ((ia, pa), (ib, pb)) in enumerate(zip(nodes, nodes[1:])):
            pt = _expected_point(PairKind.NODE_TO_NODE, cane.id, pa, pb, (ia, ib))
            points.append(pt)
            if k == 1:
                finals[cane.id] = pt
        kids = sorted(cane.children)
        for (_, ia, pa), (_, ib, pb) in zip(kids, kids[1:]):
            points.append(_expected_point(PairKind.BASE_TO_BASE, cane.id, pa, pb, (ia, ib)))

    truth = GroundTruth(
        seed=spec.seed,
        width=W,
        height=H,
        parents=parents,
        classes=classes,
        cane_nodes={c.id: [n for n, _ in c.nodes] for c in all_canes},
        points=points,
        finals=finals,
        items=items,
    )
    return items, truth


def check_truth(items: list[GrapevineItem], truth: GroundTruth) -> list[str]:
    """Consistency problems between generated items and their ground truth."""
    problems = []
    by_id = {i.id: i for i in items}
    if set(by_id) != set(truth.classes):
        problems.append("item ids differ from ground-truth ids")
        return problems
    roots = [i for i, c in truth.classes.items() if c is OrganClass.MAIN_CORDON]
    for child, parent in truth.parents.items():
        if (by_id[child].mask & by_id[parent].mask).sum() < 1:
            problems.append(f"item {child} does not overlap its parent {parent}")
        seen = {child}
        p = parent
        while p in truth.parents:
            if p in seen:
                problems.append(f"cycle through {child}")
                break
            seen.add(p)
            p = truth.parents[p]
        if p not in roots:
            problems.append(f"item {child} does not reach a cordon")
    for cane, nodes in truth.cane_nodes.items():
        for n in nodes:
            c = by_id[n].center
            if not by_id[cane].mask[c.y, c.x]:
                problems.append(f"node {n} centre is off cane {cane}")
        if len(nodes) >= 3 and cane not in truth.finals:
            problems.append(f"cane {cane} lacks a final point")
    return problems


# -- degradation --------------------------------------------------------------

def inject_gap(mask: np.ndarray, parent_mask: np.ndarray, gap: int) -> np.ndarray:
    """Remove the part of ``mask`` lying within Chebyshev distance ``gap - 1`` of the parent.

    The remaining pixels are at least ``gap`` away from the parent, so it takes
    a dilation reach of exactly ``gap`` to touch it again.
    """
    if gap <= 0:
        return mask.copy()
    near = parent_mask if gap == 1 else dilate(parent_mask, gap - 1)
    return mask & ~near


def degrade(
    items: list[GrapevineItem],
    spec: DegradationSpec,
    seed: int,
    truth: GroundTruth | None = None,
) -> tuple[list[GrapevineItem], dict]:
    """Apply ``spec`` to copies of ``items``; returns the new items and a report."""
    rng = np.random.default_rng(seed)
    report: dict = {"eroded": [], "vanished": [], "gaps": [], "splits": [], "dropped": []}
    masks = {i.id: np.array(i.mask) for i in items}
    info = {i.id: i for i in items}
    if spec.is_identity:
        return [i.unlinked() for i in items], report

    drop_classes = {OrganClass(c) for c in spec.drop_classes}
    for item in items:
        if item.organ_class in drop_classes and spec.drop_probability > 0 and rng.uniform() < spec.drop_probability:
            report["dropped"].append(item.id)
            del masks[item.id]

    if spec.gap_count:
        parents = truth.parents if truth is not None else {}
        eligible = [
            i.id for i in items
            if i.organ_class is OrganClass.CANE and i.id in masks and parents.get(i.id) in masks
        ]
        chosen = sorted(rng.choice(eligible, size=min(spec.gap_count, len(eligible)), replace=False).tolist()) if eligible else []
        for cid in chosen:
            g = int(rng.integers(spec.gap_range[0], spec.gap_range[1] + 1))
            masks[cid] = inject_gap(masks[cid], masks[parents[cid]], g)
            report["gaps"].append({"cane_id": cid, "parent_id": parents[cid], "gap": g})

    if spec.erosion_radius:
        for i in list(masks):
            masks[i] = erode(masks[i], spec.erosion_radius)
            report["eroded"].append(i)

    next_id = max((i.id for i in items), default=-1) + 1
    new_masks: dict[int, tuple[OrganClass, np.ndarray]] = {}
    if spec.split_probability > 0:
        for i in sorted(masks):
            if info[i].organ_class is not OrganClass.CANE or not masks[i].any():
                continue
            if rng.uniform() >= spec.split_probability:
                continue
            box = bbox_of(masks[i])
            if box.height < 8:
                continue
            cut = int(rng.integers(box.y_min + box.height // 4, box.y_max - box.height // 4 + 1))
            upper = masks[i].copy()
            upper[cut:] = False
            lower = masks[i].copy()
            lower[:cut] = False
            if upper.any() and lower.any():
                masks[i] = lower
                new_masks[next_id] = (OrganClass.CANE, upper)
                report["splits"].append({"cane_id": i, "new_id": next_id, "row": cut})
                next_id += 1

    out = []
    for i in sorted(masks):
        src = info[i]
        if not masks[i].any():
            report["vanished"].append(i)
            continue
        out.append(new_item(i, src.organ_class, None, src.score, masks[i]))
    for i, (organ, m) in sorted(new_masks.items()):
        out.append(new_item(i, organ, None, 1.0, m))
    return out, report


# -- sidecar files ------------------------------------------------------------

def _point_json(p: PruningPoint) -> dict:
    return {
        "x": p.position.x,
        "y": p.position.y,
        "alpha": round(p.alpha, 6),
        "kind": p.kind.value,
        "cane_id": p.cane_id,
        "endpoint_ids": list(p.endpoint_ids),
    }


def _point_from_json(d: dict) -> PruningPoint:
    return PruningPoint(
        Point(int(d["x"]), int(d["y"])), float(d["alpha"]), PairKind(d["kind"]), int(d["cane_id"]),
        False, tuple(int(v) for v in d["endpoint_ids"]),
    )


def truth_document(truth: GroundTruth) -> dict:
    return {
        "schema": "vinegraph.truth",
        "version": 1,
        "seed": truth.seed,
        "width": truth.width,
        "height": truth.height,
        "items": {str(i): c.value for i, c in sorted(truth.classes.items())},
        "parents": {str(c): p for c, p in sorted(truth.parents.items())},
        "cane_nodes": {str(c): ns for c, ns in sorted(truth.cane_nodes.items())},
        "points": [_point_json(p) for p in truth.points],
        "finals": {str(c): _point_json(p) for c, p in sorted(truth.finals.items())},
        "degradations": truth.degradations,
    }


def parse_truth_document(doc: dict) -> GroundTruth:
    if doc.get("schema") != "vinegraph.truth":
        raise ValueError("not a ground-truth document")
    return GroundTruth(
        seed=int(doc["seed"]),
        width=int(doc["width"]),
        height=int(doc["height"]),
        parents={int(c): int(p) for c, p in doc["parents"].items()},
        classes={int(i): OrganClass(c) for i, c in doc["items"].items()},
        cane_nodes={int(c): [int(n) for n in ns] for c, ns in doc["cane_nodes"].items()},
        points=[_point_from_json(p) for p in doc["points"]],
        finals={int(c): _point_from_json(p) for c, p in doc["finals"].items()},
        degradations=doc.get("degradations", {}),
    )


def spec_dict(spec) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(spec).items()}
