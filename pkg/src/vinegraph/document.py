"""Versioned JSON document holding plant graphs and pruning points.

Layout (all keys sorted on output)::

    {
      "schema": "vinegraph.graph", "version": 1,
      "image": {"id", "width", "height", "file_name"},
      "parameters": {"dilation_radius", "max_iter", "n_slots", "final_selection"},
      "graphs": [{"root_id", "edges": [[parent, child], ...], "items": [item, ...]}],
      "orphans": [item, ...],
      "pruning_points": [{"x", "y", "alpha", "kind", "cane_id", "corrected",
                          "endpoint_ids", "final"}],
      "flags": {"<cane id>": "insufficient-nodes"}
    }

Items carry every GrapevineItem field; masks are stored as compact
column-major RLE strings. Angles are radians rounded to 6 decimals.
"""
from __future__ import annotations

from dataclasses import dataclass

from .coco import DocumentError, SegmentationImage, _load, dump_json, rle_decode, rle_encode
from .graph_builder import ConnectionParams
from .masks import BoundingBox, Point
from .pipeline import PipelineResult
from .plant import GrapevineItem, GraphError, OrganClass, PlantGraph
from .pruning import PairKind, PruningPoint

SCHEMA = "vinegraph.graph"
VERSION = 1


def _item_dict(item: GrapevineItem) -> dict:
    dist = item.distance_from_parent
    return {
        "id": item.id,
        "class": item.organ_class.value,
        "bbox": list(item.bbox),
        "score": item.score,
        "center": list(item.center),
        "thickness": item.thickness,
        "distance_from_parent": None if dist is None else round(dist, 6),
        "depth": item.depth,
        "parent_id": item.parent_id,
        "children_ids": list(item.children_ids),
        "mask": rle_encode(item.mask),
    }


def _point_dict(p: PruningPoint, final: bool) -> dict:
    return {
        "x": p.position.x,
        "y": p.position.y,
        "alpha": round(p.alpha, 6),
        "kind": p.kind.value,
        "cane_id": p.cane_id,
        "corrected": p.corrected,
        "endpoint_ids": list(p.endpoint_ids),
        "final": final,
    }


def graph_document(
    result: PipelineResult,
    image: SegmentationImage,
    params: ConnectionParams,
    *,
    final_selection: bool = True,
) -> dict:
    final_keys = {(p.cane_id, p.endpoint_ids, p.kind) for p in result.final_points()}
    return {
        "schema": SCHEMA,
        "version": VERSION,
        "image": {"id": image.id, "width": image.width, "height": image.height, "file_name": image.file_name},
        "parameters": {
            "dilation_radius": params.dilation_radius,
            "max_iter": params.max_iter,
            "n_slots": params.n_slots,
            "final_selection": final_selection,
        },
        "graphs": [
            {
                "root_id": g.root_id,
                "edges": [list(e) for e in sorted(g.edges())],
                "items": [_item_dict(g.items[i]) for i in sorted(g.items)],
            }
            for g in result.graphs
        ],
        "orphans": [_item_dict(i) for i in sorted(result.orphans, key=lambda i: i.id)],
        "pruning_points": [
            _point_dict(p, (p.cane_id, p.endpoint_ids, p.kind) in final_keys) for p in result.points
        ],
        "flags": {str(k): v for k, v in sorted(result.flags.items())},
    }


def serialize_graph(
    result: PipelineResult,
    image: SegmentationImage,
    params: ConnectionParams,
    *,
    final_selection: bool = True,
) -> bytes:
    return dump_json(graph_document(result, image, params, final_selection=final_selection))


@dataclass
class GraphDocument:
    image: SegmentationImage
    params: ConnectionParams
    final_selection: bool
    result: PipelineResult


def _parse_item(d: dict, width: int, height: int) -> GrapevineItem:
    mask = rle_decode(d["mask"], height, width)
    mask.flags.writeable = False
    dist = d["distance_from_parent"]
    return GrapevineItem(
        id=int(d["id"]),
        organ_class=OrganClass(d["class"]),
        bbox=BoundingBox(*(int(v) for v in d["bbox"])),
        score=float(d["score"]),
        mask=mask,
        center=Point(*(int(v) for v in d["center"])),
        thickness=float(d["thickness"]),
        distance_from_parent=None if dist is None else float(dist),
        depth=None if d["depth"] is None else int(d["depth"]),
        parent_id=None if d["parent_id"] is None else int(d["parent_id"]),
        children_ids=[int(c) for c in d["children_ids"]],
    )


def parse_graph_document(data) -> GraphDocument:
    doc = _load(data)
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise DocumentError("not a plant graph document")
    if doc.get("version") != VERSION:
        raise DocumentError(f"unsupported document version {doc.get('version')!r}")
    try:
        img = doc["image"]
        image = SegmentationImage(int(img["id"]), int(img["width"]), int(img["height"]), str(img["file_name"]))
        p = doc["parameters"]
        params = ConnectionParams(int(p["dilation_radius"]), int(p["max_iter"]), int(p["n_slots"]))
        final_selection = bool(p["final_selection"])
        graphs = []
        for g in doc["graphs"]:
            items = {}
            for d in g["items"]:
                item = _parse_item(d, image.width, image.height)
                items[item.id] = item
            graph = PlantGraph(items, int(g["root_id"]))
            graph.validate()
            if sorted(graph.edges()) != sorted(tuple(int(v) for v in e) for e in g["edges"]):
                raise DocumentError(f"edge list of graph {graph.root_id} disagrees with its items")
            graphs.append(graph)
        orphans = [_parse_item(d, image.width, image.height) for d in doc["orphans"]]
        points, finals = [], {}
        if final_selection:
            finals = {c.id: None for g in graphs for c in g.canes()}
        for d in doc["pruning_points"]:
            point = PruningPoint(
                Point(int(d["x"]), int(d["y"])),
                float(d["alpha"]),
                PairKind(d["kind"]),
                int(d["cane_id"]),
                bool(d["corrected"]),
                tuple(int(v) for v in d["endpoint_ids"]),
            )
            points.append(point)
            if d["final"]:
                finals[point.cane_id] = point
        flags = {int(k): str(v) for k, v in doc["flags"].items()}
    except DocumentError:
        raise
    except GraphError as exc:
        raise DocumentError(f"invalid graph: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"malformed graph document: {exc!r}") from None
    return GraphDocument(image, params, final_selection, PipelineResult(graphs, orphans, points, finals, flags))
