import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vinegraph.masks import Point
from vinegraph.plant import PlantGraph
from vinegraph.pruning import (
    INSUFFICIENT_NODES,
    CandidatePair,
    DegeneratePairError,
    PairKind,
    base_point,
    compute_point,
    compute_points,
    cut_angle,
    enumerate_pairs,
    midpoint,
    select_final,
)

from conftest import item, node, rect
from oracles import eq2, nearest_ref

SIZE = (100, 100)
FULL = np.ones((64, 64), bool)


def pair(p1, p2, kind=PairKind.NODE_TO_NODE):
    return CandidatePair(kind, 1, Point(*p1), Point(*p2), (2, 3))


@pytest.mark.parametrize(
    "p1, p2, pp, alpha",
    [
        ((0, 0), (0, 10), (0, 5), 0.0),
        ((0, 0), (10, 0), (5, 0), math.pi / 2),
        ((0, 0), (10, 10), (5, 5), -math.pi / 4),
    ],
)
def test_analytic_cases(p1, p2, pp, alpha):
    pt = compute_point(pair(p1, p2), FULL)
    assert pt.position == pp
    assert pt.alpha == alpha
    assert not pt.corrected


def test_degenerate_pair_raises():
    with pytest.raises(DegeneratePairError):
        compute_point(pair((3, 3), (3, 3)), FULL)


def test_midpoint_rounds_half_up():
    assert midpoint(Point(0, 0), Point(3, 5)) == (2, 3)
    assert midpoint(Point(3, 5), Point(0, 0)) == (2, 3)


def test_alpha_continuous_at_vertical():
    for dy in (10**6, -(10**6)):
        for dx in (1, -1):
            assert abs(cut_angle(dx, dy)) < 1e-5
    assert cut_angle(1, 10**9) < 0 < cut_angle(-1, 10**9)


def _c_shape():
    """Thick C opening to the right; the chord midpoint falls in the hollow."""
    m = np.zeros((40, 40), bool)
    yy, xx = np.mgrid[:40, :40]
    r = np.hypot(xx - 20, yy - 20)
    m[(r >= 10) & (r <= 13) & (xx <= 24)] = True
    return m


def test_midpoint_off_curved_mask_is_corrected():
    m = _c_shape()
    p1, p2 = (24, 8), (24, 32)
    assert m[p1[1], p1[0]] and m[p2[1], p2[0]] and not m[20, 24]
    pt = compute_point(pair(p1, p2), m)
    assert pt.corrected
    assert m[pt.position.y, pt.position.x]
    assert pt.position == nearest_ref(m, (24, 20))
    assert pt.alpha == 0.0


points = st.tuples(st.integers(-500, 500), st.integers(-500, 500))


@given(points, points)
def test_alpha_matches_formula_range_and_swap(p1, p2):
    if p1 == p2:
        return
    a = compute_point(pair(p1, p2), np.ones((1, 1), bool)).alpha
    assert a == pytest.approx(eq2(p1, p2), abs=1e-12)
    assert -math.pi / 2 <= a <= math.pi / 2
    b = compute_point(pair(p2, p1), np.ones((1, 1), bool)).alpha
    assert a == b


@given(st.tuples(st.integers(0, 39), st.integers(0, 39)), st.tuples(st.integers(0, 39), st.integers(0, 39)))
def test_positions_always_inside_cane(p1, p2):
    if p1 == p2:
        return
    m = _c_shape()
    pt = compute_point(pair(p1, p2), m)
    assert m[pt.position.y, pt.position.x]
    assert pt.position == compute_point(pair(p2, p1), m).position


# -- graph fixtures -------------------------------------------------------------

def _vertical_vine(node_ys, n_children=0):
    """Cordon at rows 90-94, vertical cane 1 at x 48-52 overlapping it in rows 90-92."""
    g = PlantGraph.from_root(item(0, "main_cordon", rect(*SIZE, 5, 90, 95, 94)))
    g.add(item(1, "cane", rect(*SIZE, 48, 20, 52, 92)))
    g.attach(1, 0)
    for k, y in enumerate(node_ys):
        g.add(node(10 + k, (49, y - 1, 51, y + 1), SIZE))
        g.attach(10 + k, 1)
    for k in range(n_children):
        y = 30 + 15 * k
        g.add(item(20 + k, "cane", rect(*SIZE, 50, y, 75, y + 2)))
        g.attach(20 + k, 1)
    return g


def test_base_point_is_bottom_of_overlap():
    g = _vertical_vine([])
    assert base_point(g.items[1], g.items[0]) == (50, 91)


def test_base_point_without_overlap_is_closest_pixel():
    cordon = item(0, "main_cordon", rect(*SIZE, 5, 90, 95, 94))
    cane = item(1, "cane", rect(*SIZE, 48, 20, 52, 85))
    assert base_point(cane, cordon) == (50, 85)


def test_three_nodes_give_one_base_and_two_node_pairs():
    g = _vertical_vine([86, 79, 71])
    kinds = [p.kind for p in enumerate_pairs(g)]
    assert kinds == [PairKind.BASE_TO_FIRST_NODE, PairKind.NODE_TO_NODE, PairKind.NODE_TO_NODE]
    pairs = enumerate_pairs(g)
    assert pairs[0].p1 == (50, 91) and pairs[0].p2 == (50, 86)
    assert [p.endpoint_ids for p in pairs[1:]] == [(10, 11), (11, 12)]


def test_child_canes_give_base_pairs():
    g = _vertical_vine([], n_children=3)
    pairs = enumerate_pairs(g)
    assert [p.kind for p in pairs if p.cane_id == 1] == [PairKind.BASE_TO_BASE] * 2
    # children ordered by how far their base is from the cane base: lowest first
    assert [p.endpoint_ids for p in pairs if p.cane_id == 1] == [(22, 21), (21, 20)]


def test_bare_cane_has_no_pairs():
    assert enumerate_pairs(_vertical_vine([])) == []


def test_final_point_between_second_and_third_node():
    g = _vertical_vine([86, 79, 71])  # base distances 5, 12, 20
    pts = compute_points(g)
    sel = select_final(g, pts)
    final = sel.points[1]
    assert final.endpoint_ids == (11, 12)
    assert final.position == (50, 75) and final.alpha == 0.0
    assert sel.flags == {}


def test_node_order_follows_base_distance_not_id():
    g = _vertical_vine([71, 86, 79])
    sel = select_final(g, compute_points(g))
    assert sel.points[1].endpoint_ids == (12, 10)


def test_one_node_gives_no_final():
    g = _vertical_vine([80])
    sel = select_final(g, compute_points(g))
    assert sel.points == {1: None} and sel.flags == {}


def test_two_nodes_flagged():
    g = _vertical_vine([80, 60])
    sel = select_final(g, compute_points(g))
    assert sel.points == {1: None}
    assert sel.flags == {1: INSUFFICIENT_NODES}


@given(st.lists(st.integers(22, 88), max_size=6, unique=True), st.integers(0, 3))
def test_count_identities(node_ys, n_children):
    node_ys = [y for y in node_ys if all(abs(y - o) > 2 for o in node_ys if o != y)]
    g = _vertical_vine(node_ys, n_children)
    pts = [p for p in compute_points(g) if p.cane_id == 1]
    count = lambda k: sum(p.kind is k for p in pts)
    assert count(PairKind.NODE_TO_NODE) == max(0, len(node_ys) - 1)
    assert count(PairKind.BASE_TO_FIRST_NODE) == (1 if node_ys else 0)
    assert count(PairKind.BASE_TO_BASE) == max(0, n_children - 1)
    for p in compute_points(g):
        assert g.items[p.cane_id].mask[p.position.y, p.position.x]
    sel = select_final(g, compute_points(g))
    assert (sel.points[1] is not None) == (len(node_ys) >= 3)
