import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import inspected_target
from xflie import geometry as geo
from xflie import lsg
from xflie.errors import AlreadyInspected, InvalidPolygon, NodeNotFound, NoNestedGraph, NotInspected

SQUARE = lsg.ConvexPolygon2D(((-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)))


def one_level(g, tid, n_poses=2):
    lg = lsg.new_level_graph(tid)
    lv = lsg.add_level(g, lg, (0, 0, 1))
    for i in range(n_poses):
        lsg.add_pose(g, lv, (i, 0, 1), geo.yaw_to_quat(0.0), f"p{i}")
    return lg, lv


def test_register_root_edge_weight():
    g = lsg.new_graph()
    tid = lsg.register_target(g, (5, 0, 0), "car", 0.8, 100, "img", (0, 0, 0))
    assert g.target_graph.edges[(0, tid)] == 5.0
    t2 = lsg.register_target(g, (3, 4, 0), "car", 0.8, 100, "img", (0, 0, 0))
    assert g.target_graph.edges[(0, t2)] == 5.0
    assert g.target(tid).label == "car-0" and g.target(t2).label == "car-1"


def test_identical_registrations_get_distinct_ids():
    g = lsg.new_graph()
    a = lsg.register_target(g, (5, 0, 0), "car", 0.8, 100, "img", (0, 0, 0))
    b = lsg.register_target(g, (5, 0, 0), "car", 0.8, 100, "img", (0, 0, 0))
    assert a != b and b > a


@pytest.mark.parametrize("conf,area", [(1.2, 100), (-0.1, 100), (0.5, 0)])
def test_register_rejects_bad_attributes(conf, area):
    with pytest.raises(ValueError):
        lsg.register_target(lsg.new_graph(), (1, 0, 0), "car", conf, area, "img", (0, 0, 0))


def test_mark_inspected_square_and_triangle():
    g = lsg.new_graph()
    a = lsg.register_target(g, (0.3, 0.2, 0), "car", 0.8, 100, "img", (0, 0, 0))
    lg, _ = one_level(g, a)
    lsg.mark_inspected(g, a, SQUARE, lg)
    assert g.target(a).position_est[:2] == pytest.approx((0.0, 0.0))
    assert g.target(a).inspected
    with pytest.raises(AlreadyInspected):
        lsg.mark_inspected(g, a, SQUARE, lg)

    b = lsg.register_target(g, (1, 1, 0), "car", 0.8, 100, "img", (0, 0, 0))
    lg, _ = one_level(g, b)
    lsg.mark_inspected(g, b, lsg.ConvexPolygon2D(((0, 0), (4, 0), (0, 3))), lg)
    assert g.target(b).position_est[:2] == pytest.approx((4 / 3, 1.0))
    # the root edge follows the moved estimate
    assert g.target_graph.edges[(0, b)] == pytest.approx(math.hypot(4 / 3, 1.0))


def test_mark_inspected_rejects_non_convex():
    g = lsg.new_graph()
    a = lsg.register_target(g, (0, 0, 0), "car", 0.8, 100, "img", (0, 0, 0))
    lg, _ = one_level(g, a)
    with pytest.raises(InvalidPolygon):
        lsg.mark_inspected(g, a, ((0, 0), (2, 0), (1, 0.2), (2, 2), (0, 2)), lg)


def test_inspected_edge():
    g = lsg.new_graph()
    a = inspected_target(g, (0, 0))
    b = inspected_target(g, (6, 8))
    g.target(a).position_est = (0.0, 0.0, 0.0)
    g.target(b).position_est = (6.0, 8.0, 0.0)
    assert lsg.add_inspected_edge(g, a, b) == pytest.approx(10.0)
    n = len(g.target_graph.edges)
    lsg.add_inspected_edge(g, b, a)
    assert len(g.target_graph.edges) == n
    c = lsg.register_target(g, (20, 0, 0), "car", 0.8, 100, "img", (0, 0, 0))
    with pytest.raises(NotInspected):
        lsg.add_inspected_edge(g, a, c)


def test_expand_frontier():
    g = lsg.new_graph()
    a = inspected_target(g, (0, 0), levels=2, features=(("hood", 0),))
    lg = lsg.expand_frontier(g, a)
    assert isinstance(lg, lsg.LevelGraph) and len(lg.nodes) == 2
    pg = lsg.expand_frontier(g, lg.nodes[0].id)
    assert isinstance(pg, lsg.PoseGraph)
    fg = lsg.expand_frontier(g, pg.nodes[0].id)
    assert isinstance(fg, lsg.FeatureGraph) and len(fg.nodes) == 1
    with pytest.raises(NoNestedGraph):
        lsg.expand_frontier(g, fg.nodes[0].id)
    with pytest.raises(NodeNotFound):
        lsg.expand_frontier(g, 10_000)
    d = lsg.register_target(g, (30, 0, 0), "car", 0.8, 100, "img", (0, 0, 0))
    with pytest.raises(NoNestedGraph):
        lsg.expand_frontier(g, d)


def test_level_with_two_poses_has_pose_graph_of_two():
    g = lsg.new_graph()
    a = lsg.register_target(g, (0, 0, 0), "car", 0.8, 100, "img", (0, 0, 0))
    lg, lv = one_level(g, a, 2)
    lsg.mark_inspected(g, a, SQUARE, lg)
    assert len(lsg.expand_frontier(g, lv.id).nodes) == 2
    lsg.validate(g)


def test_pose_chain_closed_by_parent():
    g = lsg.new_graph()
    a = lsg.register_target(g, (0, 0, 0), "car", 0.8, 100, "img", (0, 0, 0))
    lg, lv = one_level(g, a, 5)
    ids = [p.id for p in lv.pose_graph.nodes]
    expected = {lsg.edge_key(x, y) for x, y in zip(ids, ids[1:])}
    expected |= {lsg.edge_key(lv.id, ids[0]), lsg.edge_key(lv.id, ids[-1])}
    assert set(lv.pose_graph.edges) == expected
    deg = lv.pose_graph.pose_layer_degree()
    assert sorted(deg.values()) == [1, 1, 2, 2, 2]


def test_feature_labels_count_per_level_and_class():
    g = lsg.new_graph()
    a = inspected_target(g, (0, 0), levels=2, features=(("door", 0), ("door", 3), ("hood", 1)))
    lg = g.target(a).level_graph
    for lv in lg.nodes:
        labels = sorted(f.label for p in lv.pose_graph.nodes for f in p.feature_graph.nodes)
        assert labels == ["door-1", "door-2", "hood-1"]


def test_remove_target_and_refresh_root():
    g = lsg.new_graph()
    a = lsg.register_target(g, (5, 0, 0), "car", 0.8, 100, "img", (0, 0, 0))
    lsg.refresh_root(g, (2, 0, 0))
    assert g.target_graph.edges[(0, a)] == pytest.approx(3.0)
    lsg.remove_target(g, a)
    assert not g.target_graph.edges and not g.targets


def test_validate_detects_tampering():
    g = lsg.new_graph()
    a = inspected_target(g, (0, 0))
    lsg.validate(g)
    g.target_graph.edges[(0, a)] += 1.0
    assert lsg.invariant_violations(g)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(st.floats(-100, 100), st.floats(-100, 100), st.booleans(), st.integers(1, 3)),
        min_size=0,
        max_size=6,
    )
)
def test_random_graphs_satisfy_invariants(specs):
    g = lsg.new_graph((1.0, 2.0, 1.0))
    inspected = []
    for x, y, insp, levels in specs:
        if insp:
            inspected.append(inspected_target(g, (x, y), levels=levels, poses=5, robot=(1, 2, 1)))
        else:
            lsg.register_target(g, (x, y, 0), "truck", 0.5, 10, "img", (1, 2, 1))
    for a, b in zip(inspected, inspected[1:]):
        lsg.add_inspected_edge(g, a, b)
    assert lsg.invariant_violations(g) == []
    ids = [n.id for _, n in lsg.iter_nodes(g)]
    assert len(ids) == len(set(ids))
    nodes, _ = lsg.graph_size(g)
    assert nodes == len(ids)
