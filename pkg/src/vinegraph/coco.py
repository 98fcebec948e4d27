"""COCO-style segmentation documents: polygons, RLE, categories."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .masks import BoundingBox, bbox_of
from .plant import GraphError, GrapevineItem, OrganClass, new_item


class DocumentError(ValueError):
    """Malformed segmentation or graph document."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"instance {index}: {message}")


CATEGORY_ALIASES = {
    "main cordon": OrganClass.MAIN_CORDON,
    "main_cordon": OrganClass.MAIN_CORDON,
    "maincordon": OrganClass.MAIN_CORDON,
    "cordon": OrganClass.MAIN_CORDON,
    "cane": OrganClass.CANE,
    "node": OrganClass.NODE,
}
DEFAULT_CATEGORIES = [
    {"id": 1, "name": "main cordon"},
    {"id": 2, "name": "cane"},
    {"id": 3, "name": "node"},
]
CATEGORY_IDS = {OrganClass.MAIN_CORDON: 1, OrganClass.CANE: 2, OrganClass.NODE: 3}


def category_class(name: str) -> OrganClass:
    try:
        return CATEGORY_ALIASES[str(name).strip().lower()]
    except KeyError:
        raise DocumentError(f"unknown category {name!r}") from None


# -- RLE -------------------------------------------------------------------

def rle_encode(mask: np.ndarray, compact: bool = True) -> dict:
    """Column-major RLE starting with a run of zeros.

    ``compact`` stores the counts as the pycocotools string form.
    """
    h, w = mask.shape
    flat = np.asarray(mask, dtype=bool).flatten(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        counts = [0] + counts
    return {"size": [h, w], "counts": rle_string_encode(counts) if compact else counts}


def rle_string_decode(s: str) -> list[int]:
    """Decode the compact LEB128-style string used by pycocotools."""
    counts: list[int] = []
    p = 0
    while p < len(s):
        x = 0
        k = 0
        more = True
        while more:
            if p >= len(s):
                raise DocumentError("truncated RLE string")
            c = ord(s[p]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and c & 0x10:
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def rle_string_encode(counts: list[int]) -> str:
    out = []
    for i, cnt in enumerate(counts):
        x = cnt - counts[i - 2] if i > 2 else cnt
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if c & 0x10 else (x != 0)
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


def rle_decode(rle: dict, height: int, width: int) -> np.ndarray:
    size = rle.get("size")
    if size is not None and [int(v) for v in size] != [height, width]:
        raise DocumentError(f"RLE size {size} does not match image {height}x{width}")
    counts = rle.get("counts")
    if isinstance(counts, str):
        counts = rle_string_decode(counts)
    if not isinstance(counts, list) or not all(isinstance(c, int) and c >= 0 for c in counts):
        raise DocumentError("RLE counts must be a list of non-negative integers")
    if sum(counts) != height * width:
        raise DocumentError(f"RLE counts sum to {sum(counts)}, expected {height * width}")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((height, width), order="F")


# -- polygons --------------------------------------------------------------

def rasterize_polygons(polygons: list, height: int, width: int) -> np.ndarray:
    """Even-odd fill at pixel centres, boundary pixels included."""
    img = Image.new("1", (width, height), 0)
    draw = ImageDraw.Draw(img)
    out = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        if not isinstance(poly, (list, tuple)) or len(poly) < 6 or len(poly) % 2:
            raise DocumentError("polygon needs at least 3 (x, y) vertices")
        try:
            pts = [(float(poly[i]), float(poly[i + 1])) for i in range(0, len(poly), 2)]
        except (TypeError, ValueError):
            raise DocumentError("polygon coordinates must be numbers") from None
        if not all(np.isfinite(v) for pt in pts for v in pt):
            raise DocumentError("polygon coordinates must be finite")
        draw.rectangle((0, 0, width, height), fill=0)
        draw.polygon(pts, fill=1, outline=1)
        out |= np.asarray(img, dtype=bool)
    return out


def coco_bbox_to_box(bbox, width: int, height: int) -> BoundingBox:
    try:
        x, y, w, h = (float(v) for v in bbox)
    except (TypeError, ValueError):
        raise DocumentError(f"bbox must be [x, y, w, h], got {bbox!r}") from None
    if w <= 0 or h <= 0 or not all(np.isfinite((x, y, w, h))):
        raise DocumentError(f"degenerate bbox {bbox!r}")
    x0, y0 = int(round(x)), int(round(y))
    x1, y1 = max(x0, int(round(x + w)) - 1), max(y0, int(round(y + h)) - 1)
    box = BoundingBox(max(0, x0), max(0, y0), min(width - 1, x1), min(height - 1, y1))
    if box.x_min > box.x_max or box.y_min > box.y_max:
        raise DocumentError(f"bbox {bbox!r} lies outside the image")
    return box


def box_to_coco_bbox(box: BoundingBox) -> list[int]:
    return [box.x_min, box.y_min, box.width, box.height]


# -- documents -------------------------------------------------------------

@dataclass
class SegmentationImage:
    id: int
    width: int
    height: int
    file_name: str = ""


def _load(data) -> object:
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DocumentError(f"document is not UTF-8: {exc}") from None
    if isinstance(data, str):
        try:
            return json.loads(data)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"invalid JSON: {exc}") from None
    return data


def _int(value, what: str, index: int | None = None) -> int:
    if (
        isinstance(value, bool)
        or not isinstance(value, (int, float))
        or not math.isfinite(value)
        or value != int(value)
    ):
        raise DocumentError(f"{what} must be an integer, got {value!r}", index)
    return int(value)


def parse_segmentation_document(data, image_id: int | None = None) -> tuple[SegmentationImage, list[GrapevineItem]]:
    """Parse a COCO annotation/result document for one image."""
    doc = _load(data)
    if not isinstance(doc, dict):
        raise DocumentError("document must be a JSON object")
    images = doc.get("images")
    if not isinstance(images, list) or not images:
        raise DocumentError("document needs a non-empty 'images' list")
    if image_id is None:
        if len(images) != 1:
            raise DocumentError("document holds several images; pass an image id")
        img = images[0]
    else:
        matches = [i for i in images if isinstance(i, dict) and i.get("id") == image_id]
        if not matches:
            raise DocumentError(f"image id {image_id} not in document")
        img = matches[0]
    if not isinstance(img, dict):
        raise DocumentError("image entry must be an object")
    width = _int(img.get("width"), "image width")
    height = _int(img.get("height"), "image height")
    if width <= 0 or height <= 0:
        raise DocumentError(f"invalid image size {width}x{height}")
    image = SegmentationImage(_int(img.get("id", 0), "image id"), width, height, str(img.get("file_name", "")))

    categories = doc.get("categories", DEFAULT_CATEGORIES)
    if not isinstance(categories, list):
        raise DocumentError("'categories' must be a list")
    cat_map: dict[int, OrganClass] = {}
    for cat in categories:
        if not isinstance(cat, dict) or "id" not in cat or "name" not in cat:
            raise DocumentError(f"malformed category entry {cat!r}")
        cat_map[_int(cat["id"], "category id")] = category_class(cat["name"])

    annotations = doc.get("annotations", [])
    if not isinstance(annotations, list):
        raise DocumentError("'annotations' must be a list")
    items: list[GrapevineItem] = []
    seen: set[int] = set()
    for index, ann in enumerate(annotations):
        if not isinstance(ann, dict):
            raise DocumentError("annotation must be an object", index)
        if ann.get("image_id", image.id) != image.id:
            continue
        items.append(_parse_annotation(ann, index, image, cat_map, seen))
    return image, items


def _parse_annotation(ann: dict, index: int, image: SegmentationImage, cat_map, seen: set[int]) -> GrapevineItem:
    if "category_id" in ann:
        cid = _int(ann["category_id"], "category_id", index)
        if cid not in cat_map:
            raise DocumentError(f"unknown category id {cid}", index)
        organ = cat_map[cid]
    elif "category" in ann:
        try:
            organ = category_class(ann["category"])
        except DocumentError as exc:
            raise DocumentError(str(exc), index) from None
    else:
        raise DocumentError("annotation has no category", index)

    item_id = _int(ann.get("id", index), "annotation id", index)
    if item_id < 0:
        raise DocumentError(f"negative id {item_id}", index)
    if item_id in seen:
        raise DocumentError(f"duplicate id {item_id}", index)
    seen.add(item_id)

    score = ann.get("score", 1.0)
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
        raise DocumentError(f"score must be a number in [0, 1], got {score!r}", index)

    seg = ann.get("segmentation")
    mask = None
    try:
        if isinstance(seg, dict):
            mask = rle_decode(seg, image.height, image.width)
        elif isinstance(seg, list) and seg:
            mask = rasterize_polygons(seg, image.height, image.width)
        elif seg not in (None, []):
            raise DocumentError(f"unsupported segmentation {type(seg).__name__}")
    except DocumentError as exc:
        raise DocumentError(str(exc), index) from None

    box = coco_bbox_to_box(ann["bbox"], image.width, image.height) if ann.get("bbox") is not None else None
    if mask is None and box is None:
        raise DocumentError("annotation has neither segmentation nor bbox", index)
    if mask is not None and not mask.any():
        if organ is OrganClass.NODE and box is not None:
            mask = None
        else:
            raise DocumentError("segmentation is empty", index)
    try:
        return new_item(item_id, organ, box, float(score), mask, size=(image.width, image.height))
    except (GraphError, DocumentError) as exc:
        raise DocumentError(str(exc), index) from None


def parse_segmentation(data, image_id: int | None = None) -> list[GrapevineItem]:
    return parse_segmentation_document(data, image_id)[1]


def segmentation_document(
    items, width: int, height: int, *, image_id: int = 1, file_name: str = "", with_scores: bool | None = None
) -> dict:
    """COCO document for ``items`` with RLE masks."""
    annotations = []
    for item in sorted(items, key=lambda i: i.id):
        ann = {
            "id": item.id,
            "image_id": image_id,
            "category_id": CATEGORY_IDS[item.organ_class],
            "bbox": box_to_coco_bbox(bbox_of(item.mask)),
            "area": int(np.count_nonzero(item.mask)),
            "iscrowd": 0,
            "segmentation": rle_encode(item.mask),
        }
        if with_scores or (with_scores is None and item.score != 1.0):
            ann["score"] = item.score
        annotations.append(ann)
    return {
        "images": [{"id": image_id, "width": width, "height": height, "file_name": file_name}],
        "categories": DEFAULT_CATEGORIES,
        "annotations": annotations,
    }


def dump_json(doc) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=1, separators=(",", ": ")) + "\n").encode("utf-8")


def serialize_segmentation(items, width: int, height: int, **kwargs) -> bytes:
    return dump_json(segmentation_document(items, width, height, **kwargs))
