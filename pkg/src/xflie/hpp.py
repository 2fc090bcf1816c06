"""Hierarchical path planning over the layered graph and semantic queries.

The planner routes over inspected targets first, then walks each landmark's
nested graphs one at a time: pose ring -> level chain -> pose ring. Every
local graph is obtained through :func:`xflie.lsg.expand_frontier` and is
handed to Dijkstra as a small :class:`GraphView`.
"""

from __future__ import annotations

import heapq
import math
import re
import time
from dataclasses import dataclass, field
from typing import Sequence, Union

from . import geometry as geo
from . import lsg
from .errors import (
    NoInspectedNodes,
    NotResolvable,
    ParseError,
    Unreachable,
    UnknownLabel,
)

Vec3 = tuple[float, float, float]

TARGET, LEVEL, POSE, BRIDGE = "Target", "Level", "Pose", "Bridge"


@dataclass
class GraphView:
    """A single local graph as seen by the planner."""

    layer: str
    owner_id: int
    positions: dict[int, Vec3]
    edges: dict[tuple[int, int], float]
    _adj: dict[int, list[tuple[int, float]]] | None = field(default=None, repr=False, compare=False)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def adjacency(self) -> dict[int, list[tuple[int, float]]]:
        if self._adj is not None:
            return self._adj
        adj: dict[int, list[tuple[int, float]]] = {n: [] for n in self.positions}
        for (a, b), w in self.edges.items():
            adj.setdefault(a, []).append((b, w))
            adj.setdefault(b, []).append((a, w))
        for n in adj:
            adj[n].sort()
        self._adj = adj
        return adj


def dijkstra(view: GraphView, src: int, dst: int) -> tuple[list[int], float]:
    """Shortest path by total weight; ties settle on the smaller node id."""
    if src not in view.positions or dst not in view.positions:
        raise Unreachable(f"{src} or {dst} is not in the {view.layer} graph of {view.owner_id}")
    if src == dst:
        return [src], 0.0
    adj = view.adjacency()
    dist = {src: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, src)]
    done: set[int] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if dst not in done:
        raise Unreachable(f"no path from {src} to {dst} in the {view.layer} graph of {view.owner_id}")
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    path.reverse()
    return path, dist[dst]


# ---------------------------------------------------------------- views


def target_view(g: lsg.LayeredSemanticGraph, x_odom: Sequence[float], naive_edges: bool = False) -> GraphView:
    tg = g.target_graph
    if not naive_edges:
        ids = {t.id for t in g.inspected()}
        return GraphView(TARGET, lsg.ROOT_ID, {i: tg.nodes[i].position_est for i in sorted(ids)}, tg.inspected_edges())
    root = (float(x_odom[0]), float(x_odom[1]), float(x_odom[2]))
    pos = {lsg.ROOT_ID: root}
    pos.update({i: t.position_est for i, t in sorted(tg.nodes.items())})
    edges = dict(tg.inspected_edges())
    # root weights follow the query pose; the stored graph is left untouched
    for tid, t in tg.nodes.items():
        edges[lsg.edge_key(lsg.ROOT_ID, tid)] = geo.dist3(root, t.position_est)
    return GraphView(TARGET, lsg.ROOT_ID, pos, edges)


def level_view(lg: lsg.LevelGraph) -> GraphView:
    return GraphView(LEVEL, lg.parent_target_id, {lv.id: lv.position for lv in lg.nodes}, dict(lg.edges))


def pose_view(level: lsg.LevelNode, pg: lsg.PoseGraph) -> GraphView:
    pos = {level.id: level.position}
    pos.update({p.id: p.position for p in pg.nodes})
    return GraphView(POSE, level.id, pos, dict(pg.edges))


# ---------------------------------------------------------------- queries


@dataclass(frozen=True)
class InspectTarget:
    target_id: int


@dataclass(frozen=True)
class SemanticVisit:
    target_label: str
    level_label: str
    feature_label: str

    def __post_init__(self) -> None:
        if not (self.target_label and self.level_label and self.feature_label):
            raise ParseError("semantic visit labels must be non-empty")

    def __str__(self) -> str:
        return f"Visit {self.feature_label} in {self.level_label} of {self.target_label}"


Query = Union[InspectTarget, SemanticVisit]

_QUERY_RE = re.compile(r"^\s*visit\s+(?P<f>.+?)\s+in\s+(?P<l>.+?)\s+of\s+(?P<t>.+?)\s*$", re.IGNORECASE)


def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _norm(label: str) -> str:
    return " ".join(label.split()).lower()


def _match(label: str, candidates: Sequence[str]) -> str:
    key = _norm(label)
    for c in candidates:
        if _norm(c) == key:
            return c
    suggestion = min(candidates, key=lambda c: (levenshtein(key, _norm(c)), c)) if candidates else None
    raise UnknownLabel(label, suggestion)


def parse_query(text: str, g: lsg.LayeredSemanticGraph | None = None) -> SemanticVisit:
    """Parse ``Visit <feature> in <level> of <target>``.

    With a graph the labels are resolved case-insensitively and returned in
    their registered spelling.
    """
    m = _QUERY_RE.match(text)
    if m is None:
        raise ParseError(f"expected 'Visit <feature> in <level> of <target>', got {text!r}")
    f, lv, t = (" ".join(m.group(k).split()) for k in ("f", "l", "t"))
    if g is None:
        return SemanticVisit(t, lv, f)
    target, level, feature = resolve_labels(g, t, lv, f)
    return SemanticVisit(target.label, level.label, feature.label)


def resolve_labels(
    g: lsg.LayeredSemanticGraph, target_label: str, level_label: str, feature_label: str
) -> tuple[lsg.TargetNode, lsg.LevelNode, lsg.FeatureNode]:
    by_label = {t.label: t for t in g.targets.values()}
    target = by_label[_match(target_label, sorted(by_label))]
    if target.level_graph is None:
        raise NotResolvable(f"target {target.label} has not been inspected")
    levels = {lv.label: lv for lv in target.level_graph.nodes}
    level = levels[_match(level_label, sorted(levels))]
    feats = {f.label: f for p in level.pose_graph.nodes for f in p.feature_graph.nodes}
    if not feats:
        raise UnknownLabel(feature_label, None)
    feature = feats[_match(feature_label, sorted(feats))]
    return target, level, feature


def feature_parent_pose(level: lsg.LevelNode, feature_id: int) -> lsg.PoseNode:
    for p in level.pose_graph.nodes:
        if any(f.id == feature_id for f in p.feature_graph.nodes):
            return p
    raise NotResolvable(f"feature {feature_id} has no parent pose in {level.label}")


# ---------------------------------------------------------------- Alg. 1 pieces


@dataclass(frozen=True)
class GraphState:
    curr_target: int
    dst_target: int
    curr_level: int
    curr_pose: int


def _nearest(items, pos_of, p: Sequence[float]):
    return min(items, key=lambda it: (geo.dist3(pos_of(it), p), it.id))


def process_graph(g: lsg.LayeredSemanticGraph, x_odom: Sequence[float], v_trm: int) -> GraphState:
    insp = sorted(g.inspected(), key=lambda t: t.id)
    if not insp:
        raise NoInspectedNodes("no inspected target to plan from")
    inside = [t for t in insp if t.polygon is not None and t.polygon.contains(x_odom)]
    curr = inside[0] if inside else _nearest(insp, lambda t: t.position_est, x_odom)
    poses = [(lv, p) for lv in curr.level_graph.nodes for p in lv.pose_graph.nodes]
    lv, pose = min(poses, key=lambda lp: (geo.dist3(lp[1].position, x_odom), lp[1].id))
    trm = g.target(v_trm)
    dst = trm if trm.inspected else _nearest(insp, lambda t: t.position_est, trm.position_est)
    return GraphState(curr.id, dst.id, lv.id, pose.id)


def evaluate_frontier_node(v_curr: int, v_tgt, local: Union[lsg.LevelGraph, lsg.PoseGraph]) -> int:
    """Exit node of a local graph: Level-0 in a level graph, the pose nearest
    ``v_tgt`` (a position) in a pose graph."""
    if isinstance(local, lsg.LevelGraph):
        if not local.nodes:
            raise NotResolvable(f"level graph of {local.parent_target_id} is empty")
        return local.nodes[0].id
    if isinstance(local, lsg.PoseGraph):
        if not local.nodes:
            raise NotResolvable(f"pose graph of level {local.parent_level_id} is empty")
        return _nearest(local.nodes, lambda p: p.position, v_tgt).id
    raise NotResolvable(f"no frontier evaluation for {type(local).__name__}")


@dataclass
class LocalSegment:
    layer: str
    target_id: int
    path: list[int]
    positions: list[Vec3]
    length: float
    exposed_edges: int
    plan_time: float = field(default=0.0, compare=False)

    @property
    def start(self) -> Vec3:
        return self.positions[0]

    @property
    def end(self) -> Vec3:
        return self.positions[-1]


@dataclass
class PlanResult:
    query: Query
    global_route: list[int]
    route_cost: float
    route_exposed: int
    segments: list[LocalSegment]
    terminal_pose: int
    terminal_position: Vec3
    terminal_orientation: tuple[float, float, float, float]
    route_time: float = field(default=0.0, compare=False)
    route_searched: bool = True

    @property
    def total_length(self) -> float:
        return sum(s.length for s in self.segments)

    def dijkstra_calls(self) -> list[tuple[str, int, int, float, float]]:
        """``(layer, owner, edges_exposed, plan_time_s, length_m)`` for every search run."""
        rows = [(TARGET, lsg.ROOT_ID, self.route_exposed, self.route_time, self.route_cost)] if self.route_searched else []
        rows += [(s.layer, s.target_id, s.exposed_edges, s.plan_time, s.length) for s in self.segments if s.layer != BRIDGE]
        return rows

    def waypoints(self) -> list[Vec3]:
        pts: list[Vec3] = []
        for s in self.segments:
            for p in s.positions:
                if not pts or geo.dist3(pts[-1], p) > 0:
                    pts.append(p)
        return pts


def _timed(view: GraphView, src: int, dst: int) -> tuple[list[int], float, float]:
    view.adjacency()  # part of expansion, not search
    t0 = time.perf_counter()
    path, cost = dijkstra(view, src, dst)
    return path, cost, time.perf_counter() - t0


class _Builder:
    def __init__(self, g: lsg.LayeredSemanticGraph):
        self.g = g
        self.segments: list[LocalSegment] = []

    def search(self, view: GraphView, src: int, dst: int, target_id: int) -> None:
        if src == dst:
            return
        path, cost, dt = _timed(view, src, dst)
        self.segments.append(
            LocalSegment(view.layer, target_id, path, [view.positions[n] for n in path], cost, view.edge_count, dt)
        )

    def within(self, target: lsg.TargetNode, la: lsg.LevelNode, pa: int, lb: lsg.LevelNode, pb: int) -> None:
        """PlanLocalPathSegments for one landmark."""
        if la.id == lb.id:
            self.search(pose_view(la, lsg.expand_frontier(self.g, la.id)), pa, pb, target.id)
            return
        self.search(pose_view(la, lsg.expand_frontier(self.g, la.id)), pa, la.id, target.id)
        self.search(level_view(lsg.expand_frontier(self.g, target.id)), la.id, lb.id, target.id)
        self.search(pose_view(lb, lsg.expand_frontier(self.g, lb.id)), lb.id, pb, target.id)

    def bridge(self, a: lsg.PoseNode, b: lsg.PoseNode, target_id: int) -> None:
        self.segments.append(LocalSegment(BRIDGE, target_id, [a.id, b.id], [a.position, b.position], geo.dist3(a.position, b.position), 0))


def _pose(level: lsg.LevelNode, pid: int) -> lsg.PoseNode:
    for p in level.pose_graph.nodes:
        if p.id == pid:
            return p
    raise NotResolvable(f"pose {pid} not in {level.label}")


def _level(t: lsg.TargetNode, lid: int) -> lsg.LevelNode:
    for lv in t.level_graph.nodes:
        if lv.id == lid:
            return lv
    raise NotResolvable(f"level {lid} not in {t.label}")


def plan(g: lsg.LayeredSemanticGraph, x_odom: Sequence[float], query: Query, naive_edges: bool = False) -> PlanResult:
    """Read-only hierarchical plan from ``x_odom`` for ``query``."""
    if isinstance(query, SemanticVisit):
        trm_target, trm_level, feature = resolve_labels(g, query.target_label, query.level_label, query.feature_label)
        trm_pose = feature_parent_pose(trm_level, feature.id)
        v_trm = trm_target.id
    else:
        if query.target_id not in g.targets:
            raise UnknownLabel(str(query.target_id), None)
        v_trm = query.target_id
        trm_target = trm_level = trm_pose = None
    st = process_graph(g, x_odom, v_trm)

    tview = target_view(g, x_odom, naive_edges)
    searched = st.curr_target != st.dst_target
    if searched:
        route, route_cost, route_time = _timed(tview, st.curr_target, st.dst_target)
        route = [n for n in route if n != lsg.ROOT_ID]
    else:
        route, route_cost, route_time = [st.curr_target], 0.0, 0.0

    b = _Builder(g)
    landmarks = [g.target(n) for n in route]
    level = _level(landmarks[0], st.curr_level)
    pose = _pose(level, st.curr_pose)
    for i, lm in enumerate(landmarks):
        lg = lsg.expand_frontier(g, lm.id)
        exit_level = _level(lm, evaluate_frontier_node(level.id, None, lg))
        if i + 1 < len(landmarks):
            nxt = landmarks[i + 1]
            exit_pose = _pose(exit_level, evaluate_frontier_node(exit_level.id, nxt.position_est, exit_level.pose_graph))
            b.within(lm, level, pose.id, exit_level, exit_pose.id)
            nxt_l0 = lsg.expand_frontier(g, nxt.id).nodes[0]
            arrival = _pose(nxt_l0, evaluate_frontier_node(nxt_l0.id, lm.position_est, nxt_l0.pose_graph))
            b.bridge(exit_pose, arrival, nxt.id)
            level, pose = nxt_l0, arrival
            continue
        if trm_target is not None and lm.id == trm_target.id:
            end_level, end_pose = trm_level, trm_pose
        else:
            goal = g.target(v_trm).position_est
            end_level = exit_level
            end_pose = _pose(exit_level, evaluate_frontier_node(exit_level.id, goal, exit_level.pose_graph))
        b.within(lm, level, pose.id, end_level, end_pose.id)
        pose = end_pose
    return PlanResult(
        query=query,
        global_route=route,
        route_cost=route_cost,
        route_exposed=tview.edge_count,
        segments=b.segments,
        terminal_pose=pose.id,
        terminal_position=pose.position,
        terminal_orientation=pose.orientation,
        route_time=route_time,
        route_searched=searched,
    )


def plan_to_dict(res: PlanResult) -> dict:
    q = res.query
    return {
        "query": str(q) if isinstance(q, SemanticVisit) else {"inspect_target": q.target_id},
        "global_route": res.global_route,
        "route_cost": res.route_cost,
        "route_edges_exposed": res.route_exposed,
        "segments": [
            {
                "layer": s.layer,
                "target": s.target_id,
                "path": s.path,
                "length_m": s.length,
                "edges_exposed": s.exposed_edges,
                "plan_time_s": s.plan_time,
            }
            for s in res.segments
        ],
        "total_length_m": res.total_length,
        "terminal_pose": res.terminal_pose,
        "terminal_position": list(res.terminal_position),
    }
