import copy
import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vinegraph.coco import (
    DocumentError,
    SegmentationImage,
    coco_bbox_to_box,
    parse_segmentation,
    parse_segmentation_document,
    rasterize_polygons,
    rle_decode,
    rle_encode,
    rle_string_decode,
    rle_string_encode,
    segmentation_document,
    serialize_segmentation,
)
from vinegraph.document import parse_graph_document, serialize_graph
from vinegraph.graph_builder import ConnectionParams
from vinegraph.masks import BoundingBox, bbox_of
from vinegraph.pipeline import PipelineResult, run_pipeline
from vinegraph.synthetic import VineSpec, generate

from conftest import rect


def doc(annotations, width=32, height=32, **extra):
    d = {
        "images": [{"id": 1, "width": width, "height": height, "file_name": "x.png"}],
        "categories": [{"id": 1, "name": "Main Cordon"}, {"id": 2, "name": "cane"}, {"id": 3, "name": "node"}],
        "annotations": annotations,
    }
    d.update(extra)
    return d


SQUARE = [10, 10, 20, 10, 20, 20, 10, 20]


def test_square_polygon_is_11x11_block():
    items = parse_segmentation(doc([{"id": 0, "category_id": 2, "segmentation": [SQUARE]}]))
    assert len(items) == 1
    assert np.array_equal(items[0].mask, rect(32, 32, 10, 10, 20, 20))
    assert items[0].score == 1.0


def test_empty_instance_list():
    assert parse_segmentation(doc([])) == []


def test_category_aliases_and_scores():
    anns = [
        {"id": 5, "category": "cordon", "segmentation": [SQUARE], "score": 0.25},
        {"id": 6, "category": "NODE", "bbox": [1, 1, 3, 3]},
    ]
    items = parse_segmentation(doc(anns))
    assert [i.organ_class.value for i in items] == ["main_cordon", "node"]
    assert items[0].score == 0.25
    assert items[1].bbox == BoundingBox(1, 1, 3, 3) and items[1].mask.sum() == 9


def test_self_intersecting_polygon_uses_even_odd():
    star = []
    for k in range(5):
        a = -math.pi / 2 + k * 4 * math.pi / 5
        star += [32 + 25 * math.cos(a), 32 + 25 * math.sin(a)]
    m = rasterize_polygons([star], 64, 64)
    assert m[14, 32] and not m[32, 32]  # arm filled, doubly wound centre empty


def test_separate_polygons_are_unioned():
    left, right = [0, 0, 4, 0, 4, 4, 0, 4], [3, 0, 8, 0, 8, 4, 3, 4]
    assert np.array_equal(rasterize_polygons([left, right], 8, 10), rect(10, 8, 0, 0, 8, 4))


def test_coco_bbox_conversion():
    assert coco_bbox_to_box([2, 3, 4, 5], 32, 32) == BoundingBox(2, 3, 5, 7)
    assert coco_bbox_to_box([30, 30, 10, 10], 32, 32) == BoundingBox(30, 30, 31, 31)


# -- RLE ------------------------------------------------------------------------

@pytest.mark.parametrize(
    "counts, text",
    [([3, 2], "32"), ([1, 40], "1X1"), ([5, 3, 2, 1], "532N")],  # worked by hand from the 5-bit scheme
)
def test_rle_string_known_vectors(counts, text):
    assert rle_string_encode(counts) == text
    assert rle_string_decode(text) == counts


def test_rle_is_column_major():
    m = np.zeros((3, 2), bool)
    m[0, 1] = True  # the fourth pixel in column-major order
    assert rle_encode(m, compact=False)["counts"] == [3, 1, 2]
    assert np.array_equal(rle_decode({"size": [3, 2], "counts": [3, 1, 2]}, 3, 2), m)


def test_rle_errors():
    with pytest.raises(DocumentError):
        rle_decode({"counts": [1, 2]}, 2, 2)
    with pytest.raises(DocumentError):
        rle_decode({"size": [3, 3], "counts": [4]}, 2, 2)
    with pytest.raises(DocumentError):
        rle_decode({"counts": [-1, 5]}, 2, 2)
    with pytest.raises(DocumentError):
        rle_string_decode("1X")  # continuation bit with nothing after it


@given(st.lists(st.integers(0, 10**6), max_size=30))
def test_rle_string_round_trip(counts):
    assert rle_string_decode(rle_string_encode(counts)) == counts


@given(st.tuples(st.integers(1, 24), st.integers(1, 24)).flatmap(lambda s: arrays(bool, s)))
def test_rle_mask_round_trip(m):
    h, w = m.shape
    for compact in (True, False):
        assert np.array_equal(rle_decode(rle_encode(m, compact), h, w), m)


@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60)), min_size=3, max_size=8))
def test_rasterized_bbox_matches_declared_bbox(vertices):
    xs, ys = zip(*vertices)
    poly = [v for xy in vertices for v in xy]
    m = rasterize_polygons([poly], 64, 64)
    box = bbox_of(m)
    declared = coco_bbox_to_box([min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1], 64, 64)
    for a, b in zip(box, declared):
        assert abs(a - b) <= 1


# -- malformed inputs ------------------------------------------------------------

GOOD = {"id": 0, "category_id": 2, "segmentation": [SQUARE]}

MALFORMED = {
    "not json": b"{",
    "not utf-8": b"\xff\xfe",
    "top-level list": b"[]",
    "no images": json.dumps({"annotations": []}),
    "unknown category": doc([{"id": 0, "category": "leaf", "segmentation": [SQUARE]}]),
    "unknown category id": doc([{"id": 0, "category_id": 9, "segmentation": [SQUARE]}]),
    "two-vertex polygon": doc([{"id": 0, "category_id": 2, "segmentation": [[1, 1, 5, 5]]}]),
    "non-numeric polygon": doc([{"id": 0, "category_id": 2, "segmentation": [[1, "a", 5, 5, 3, 3]]}]),
    "rle wrong sum": doc([{"id": 0, "category_id": 2, "segmentation": {"size": [32, 32], "counts": [5, 5]}}]),
    "duplicate id": doc([GOOD, GOOD]),
    "cane without mask": doc([{"id": 0, "category_id": 2, "bbox": [1, 1, 4, 4]}]),
    "score out of range": doc([dict(GOOD, score=1.5)]),
    "negative size": doc([], width=-3),
    "bad bbox": doc([{"id": 0, "category_id": 3, "bbox": [1, 1, 0, 4]}]),
    "empty polygon mask": doc([{"id": 0, "category_id": 2, "segmentation": [[100, 100, 110, 100, 110, 110]]}]),
}


@pytest.mark.parametrize("name", sorted(MALFORMED))
def test_malformed_input_raises_structured_error(name):
    data = MALFORMED[name]
    with pytest.raises(DocumentError) as info:
        parse_segmentation_document(data if isinstance(data, (bytes, str)) else json.dumps(data))
    assert str(info.value)


def test_error_names_instance_index():
    with pytest.raises(DocumentError, match="instance 1: unknown category 'leaf'"):
        parse_segmentation(doc([GOOD, {"id": 3, "category": "leaf", "segmentation": [SQUARE]}]))


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-5, 50) | st.floats(allow_nan=True) | st.text(max_size=4),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=8), inner, max_size=4),
    max_leaves=12,
)
FIELDS = ["id", "category_id", "category", "segmentation", "bbox", "score", "image_id"]


@given(st.sampled_from(FIELDS), json_values)
def test_parser_never_crashes_on_mutated_annotation(field, value):
    ann = dict(GOOD, bbox=[10, 10, 11, 11])
    ann[field] = value
    try:
        parse_segmentation(doc([ann]))
    except DocumentError:
        pass


@given(json_values)
def test_parser_never_crashes_on_arbitrary_json(value):
    try:
        parse_segmentation(json.dumps(value))
    except DocumentError:
        pass


# -- round trips -------------------------------------------------------------------

SMALL = VineSpec(width=256, height=192, cordon_margin=20, cane_length=(50.0, 90.0), cane_count=(1, 3),
                 child_length=(30.0, 50.0), first_node_offset=(12.0, 16.0), node_spacing=(12.0, 18.0))


@pytest.mark.parametrize("seed", range(20))
def test_segmentation_round_trip(seed):
    spec = VineSpec(seed=seed) if seed % 4 == 0 else dataclasses.replace(SMALL, seed=seed)
    items, _ = generate(spec)
    data = serialize_segmentation(items, spec.width, spec.height, image_id=seed)
    image, parsed = parse_segmentation_document(data)
    assert (image.width, image.height, image.id) == (spec.width, spec.height, seed)
    assert parsed == [i.unlinked() for i in items]
    assert serialize_segmentation(parsed, spec.width, spec.height, image_id=seed) == data


def test_scores_survive_round_trip():
    items = parse_segmentation(doc([dict(GOOD, score=0.5)]))
    again = parse_segmentation(serialize_segmentation(items, 32, 32))
    assert again[0].score == 0.5


def test_empty_result_document():
    image = SegmentationImage(7, 10, 10, "")
    data = serialize_graph(PipelineResult([], [], []), image, ConnectionParams())
    d = json.loads(data)
    assert (d["schema"], d["version"]) == ("vinegraph.graph", 1)
    assert d["graphs"] == d["orphans"] == d["pruning_points"] == [] and d["flags"] == {}
    parsed = parse_graph_document(data)
    assert parsed.result.graphs == [] and parsed.image == image


def _scene_document(seed=3):
    items, _ = generate(VineSpec(seed=seed))
    image = SegmentationImage(seed, 1024, 768, "s.png")
    return items, image, run_pipeline(items)


def test_graph_document_round_trip():
    items, image, result = _scene_document()
    data = serialize_graph(result, image, ConnectionParams())
    parsed = parse_graph_document(data)
    assert serialize_graph(parsed.result, parsed.image, parsed.params, final_selection=parsed.final_selection) == data
    assert [g.edges() for g in parsed.result.graphs] == [g.edges() for g in result.graphs]
    for g_in, g_out in zip(result.graphs, parsed.result.graphs):
        for i, it in g_in.items.items():
            out = g_out.items[i]
            assert np.array_equal(out.mask, it.mask)
            assert (out.center, out.bbox, out.children_ids, out.depth) == (it.center, it.bbox, it.children_ids, it.depth)
            assert out.distance_from_parent == pytest.approx(it.distance_from_parent, abs=1e-6) if it.parent_id is not None else True
    assert [p.position for p in parsed.result.points] == [p.position for p in result.points]
    assert [p.alpha for p in parsed.result.points] == pytest.approx([p.alpha for p in result.points], abs=1e-6)
    assert parsed.result.final_points() and len(parsed.result.final_points()) == len(result.final_points())
    assert parsed.result.flags == result.flags


def test_graph_document_is_deterministic():
    items, image, _ = _scene_document(11)
    runs = {serialize_graph(run_pipeline(items), image, ConnectionParams()) for _ in range(2)}
    assert len(runs) == 1


def test_graph_document_errors():
    items, image, result = _scene_document()
    good = json.loads(serialize_graph(result, image, ConnectionParams()))
    cases = []
    for mutate in (
        lambda d: d.update(schema="other"),
        lambda d: d.update(version=2),
        lambda d: d.pop("graphs"),
        lambda d: d["graphs"][0]["edges"].pop(),
        lambda d: d["graphs"][0]["items"].pop(),
        lambda d: d["pruning_points"][0].update(kind="sideways"),
        lambda d: d["graphs"][0]["items"][0].update(mask={"counts": [1]}),
    ):
        bad = copy.deepcopy(good)
        mutate(bad)
        cases.append(bad)
    for bad in cases:
        with pytest.raises(DocumentError):
            parse_graph_document(json.dumps(bad))
