"""Layered semantic graph: Target -> Level -> Pose -> Feature.

Only the target layer is a single global graph. Every deeper graph lives
inside the node that owns it (an inspected target owns its level graph, a
level owns its pose graph, a pose owns its feature graph) and is reached
through :func:`expand_frontier`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Union

from . import geometry as geo
from .errors import (
    AlreadyInspected,
    InvalidPolygon,
    InvariantViolation,
    NoNestedGraph,
    NodeNotFound,
    NotInspected,
)

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]

ROOT_ID = 0
WEIGHT_TOL = 1e-9


class Status(str, Enum):
    DETECTED = "Detected"
    INSPECTED = "Inspected"


class Layer(str, Enum):
    TARGET = "Target"
    LEVEL = "Level"
    POSE = "Pose"
    FEATURE = "Feature"


LAYERS = (Layer.TARGET, Layer.LEVEL, Layer.POSE, Layer.FEATURE)


def edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _vec3(p) -> Vec3:
    return (float(p[0]), float(p[1]), float(p[2]))


@dataclass
class ConvexPolygon2D:
    vertices: tuple[Vec2, ...]

    def __post_init__(self) -> None:
        self.vertices = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(self.vertices) < 3:
            raise InvalidPolygon(f"polygon needs >= 3 vertices, got {len(self.vertices)}")
        if not geo.is_convex_ccw(self.vertices):
            raise InvalidPolygon("polygon is not convex and counter-clockwise")

    @classmethod
    def from_points(cls, points) -> "ConvexPolygon2D":
        return cls(tuple(geo.convex_hull(points)))

    @property
    def area(self) -> float:
        return geo.signed_area(self.vertices)

    @property
    def centroid(self) -> Vec2:
        return geo.polygon_centroid(self.vertices)

    def contains(self, p) -> bool:
        return geo.point_in_convex_polygon(p, self.vertices)


@dataclass
class FeatureNode:
    id: int
    label: str
    sem_class: str
    position_est: Vec3
    confidence: float
    seg_area: float


@dataclass
class FeatureGraph:
    parent_pose_id: int
    nodes: list[FeatureNode] = field(default_factory=list)

    @property
    def edges(self) -> list[tuple[int, int]]:
        # symbolic pose -> feature edges; they carry no weight
        return [(self.parent_pose_id, f.id) for f in self.nodes]


@dataclass
class PoseNode:
    id: int
    position: Vec3
    orientation: Quat
    image_ref: str
    feature_graph: FeatureGraph


@dataclass
class PoseGraph:
    parent_level_id: int
    nodes: list[PoseNode] = field(default_factory=list)
    edges: dict[tuple[int, int], float] = field(default_factory=dict)

    def pose_layer_degree(self) -> dict[int, int]:
        deg = {p.id: 0 for p in self.nodes}
        for a, b in self.edges:
            if a in deg and b in deg:
                deg[a] += 1
                deg[b] += 1
        return deg


@dataclass
class LevelNode:
    id: int
    label: str
    index: int
    position: Vec3
    pose_graph: PoseGraph


@dataclass
class LevelGraph:
    parent_target_id: int
    nodes: list[LevelNode] = field(default_factory=list)
    edges: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def parent_edges(self) -> list[tuple[int, int]]:
        return [(self.parent_target_id, lv.id) for lv in self.nodes]

    def level(self, index: int) -> LevelNode:
        return self.nodes[index]


@dataclass
class TargetNode:
    id: int
    label: str
    status: Status
    position_est: Vec3
    image_ref: str
    sem_class: str
    confidence: float
    seg_area: float
    utility: float = 0.0
    polygon: ConvexPolygon2D | None = None
    level_graph: LevelGraph | None = None

    @property
    def inspected(self) -> bool:
        return self.status is Status.INSPECTED


@dataclass
class RootNode:
    position: Vec3
    orientation: Quat = (1.0, 0.0, 0.0, 0.0)
    id: int = ROOT_ID


@dataclass
class TargetGraph:
    root: RootNode
    nodes: dict[int, TargetNode] = field(default_factory=dict)
    edges: dict[tuple[int, int], float] = field(default_factory=dict)

    def inspected_edges(self) -> dict[tuple[int, int], float]:
        return {k: w for k, w in self.edges.items() if ROOT_ID not in k}

    def root_edges(self) -> dict[tuple[int, int], float]:
        return {k: w for k, w in self.edges.items() if ROOT_ID in k}


@dataclass
class LayeredSemanticGraph:
    target_graph: TargetGraph
    next_node_id: int = ROOT_ID + 1
    class_counters: dict[str, int] = field(default_factory=dict)

    def allocate_id(self) -> int:
        nid = self.next_node_id
        self.next_node_id += 1
        return nid

    @property
    def targets(self) -> dict[int, TargetNode]:
        return self.target_graph.nodes

    def detected(self) -> list[TargetNode]:
        return [t for t in self.target_graph.nodes.values() if t.status is Status.DETECTED]

    def inspected(self) -> list[TargetNode]:
        return [t for t in self.target_graph.nodes.values() if t.status is Status.INSPECTED]

    def target(self, node_id: int) -> TargetNode:
        try:
            return self.target_graph.nodes[node_id]
        except KeyError:
            raise NodeNotFound(f"no target node {node_id}") from None


AnyNode = Union[RootNode, TargetNode, LevelNode, PoseNode, FeatureNode]
NestedGraph = Union[LevelGraph, PoseGraph, FeatureGraph]


def new_graph(robot_position=(0.0, 0.0, 0.0), yaw: float = 0.0) -> LayeredSemanticGraph:
    return LayeredSemanticGraph(TargetGraph(RootNode(_vec3(robot_position), geo.yaw_to_quat(yaw))))


# ---------------------------------------------------------------- target layer


def refresh_root(g: LayeredSemanticGraph, robot_position, yaw: float | None = None) -> None:
    """Move the robot parent node and re-weight every root edge."""
    tg = g.target_graph
    tg.root.position = _vec3(robot_position)
    if yaw is not None:
        tg.root.orientation = geo.yaw_to_quat(yaw)
    for tid, t in tg.nodes.items():
        tg.edges[edge_key(ROOT_ID, tid)] = geo.dist3(tg.root.position, t.position_est)


def register_target(
    g: LayeredSemanticGraph,
    est,
    sem_class: str,
    confidence: float,
    seg_area: float,
    image_ref: str,
    robot_pos,
) -> int:
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    if not seg_area > 0:
        raise ValueError(f"seg_area must be positive, got {seg_area}")
    nid = g.allocate_id()
    ordinal = g.class_counters.get(sem_class, 0)
    g.class_counters[sem_class] = ordinal + 1
    g.target_graph.nodes[nid] = TargetNode(
        id=nid,
        label=f"{sem_class}-{ordinal}",
        status=Status.DETECTED,
        position_est=_vec3(est),
        image_ref=image_ref,
        sem_class=sem_class,
        confidence=float(confidence),
        seg_area=float(seg_area),
    )
    # root position must match the weights it implies
    refresh_root(g, robot_pos)
    return nid


def remove_target(g: LayeredSemanticGraph, target_id: int) -> None:
    tg = g.target_graph
    g.target(target_id)
    del tg.nodes[target_id]
    for k in [k for k in tg.edges if target_id in k]:
        del tg.edges[k]


def mark_inspected(g: LayeredSemanticGraph, target_id: int, polygon: ConvexPolygon2D, level_graph: LevelGraph) -> None:
    t = g.target(target_id)
    if t.status is Status.INSPECTED:
        raise AlreadyInspected(f"target {target_id} ({t.label}) is already inspected")
    if not isinstance(polygon, ConvexPolygon2D):
        polygon = ConvexPolygon2D(tuple(polygon))
    if len(polygon.vertices) < 3 or not geo.is_convex_ccw(polygon.vertices):
        raise InvalidPolygon("polygon must be convex with >= 3 vertices")
    if not level_graph.nodes:
        raise ValueError("level graph must contain at least one level")
    if level_graph.parent_target_id != target_id:
        raise ValueError("level graph belongs to another target")
    t.status = Status.INSPECTED
    t.polygon = polygon
    t.level_graph = level_graph
    cx, cy = polygon.centroid
    t.position_est = (cx, cy, t.position_est[2])
    tg = g.target_graph
    tg.edges[edge_key(ROOT_ID, target_id)] = geo.dist3(tg.root.position, t.position_est)
    for k in list(tg.edges):
        if target_id in k and ROOT_ID not in k:
            other = k[0] if k[1] == target_id else k[1]
            tg.edges[k] = geo.dist3(t.position_est, tg.nodes[other].position_est)


def add_inspected_edge(g: LayeredSemanticGraph, a: int, b: int) -> float:
    ta, tb = g.target(a), g.target(b)
    if a == b:
        raise ValueError("self edges are not allowed")
    for t in (ta, tb):
        if t.status is not Status.INSPECTED:
            raise NotInspected(f"target {t.id} ({t.label}) is not inspected")
    w = geo.dist3(ta.position_est, tb.position_est)
    g.target_graph.edges[edge_key(a, b)] = w
    return w


# ---------------------------------------------------------------- nested layers


def new_level_graph(target_id: int) -> LevelGraph:
    return LevelGraph(parent_target_id=target_id)


def add_level(g: LayeredSemanticGraph, lg: LevelGraph, position) -> LevelNode:
    idx = len(lg.nodes)
    nid = g.allocate_id()
    lv = LevelNode(id=nid, label=f"Level-{idx}", index=idx, position=_vec3(position), pose_graph=PoseGraph(nid))
    if lg.nodes:
        prev = lg.nodes[-1]
        lg.edges[edge_key(prev.id, nid)] = geo.dist3(prev.position, lv.position)
    lg.nodes.append(lv)
    return lv


def add_pose(g: LayeredSemanticGraph, level: LevelNode, position, orientation: Quat, image_ref: str) -> PoseNode:
    pg = level.pose_graph
    nid = g.allocate_id()
    pose = PoseNode(nid, _vec3(position), tuple(float(c) for c in orientation), image_ref, FeatureGraph(nid))
    if not pg.nodes:
        pg.edges[edge_key(level.id, nid)] = geo.dist3(level.position, pose.position)
    else:
        first, last = pg.nodes[0], pg.nodes[-1]
        pg.edges[edge_key(last.id, nid)] = geo.dist3(last.position, pose.position)
        if last.id != first.id:
            del pg.edges[edge_key(level.id, last.id)]
        pg.edges[edge_key(level.id, nid)] = geo.dist3(level.position, pose.position)
    pg.nodes.append(pose)
    return pose


def next_feature_label(level: LevelNode, sem_class: str) -> str:
    n = sum(1 for p in level.pose_graph.nodes for f in p.feature_graph.nodes if f.sem_class == sem_class)
    return f"{sem_class}-{n + 1}"


def add_feature(
    g: LayeredSemanticGraph, level: LevelNode, pose: PoseNode, sem_class: str, position, confidence: float, seg_area: float
) -> FeatureNode:
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    f = FeatureNode(
        id=g.allocate_id(),
        label=next_feature_label(level, sem_class),
        sem_class=sem_class,
        position_est=_vec3(position),
        confidence=float(confidence),
        seg_area=float(seg_area),
    )
    pose.feature_graph.nodes.append(f)
    return f


# ---------------------------------------------------------------- traversal


def iter_nodes(g: LayeredSemanticGraph) -> Iterator[tuple[Layer | None, AnyNode]]:
    """Every node with its layer; the root robot node is reported with layer None."""
    yield None, g.target_graph.root
    for t in g.target_graph.nodes.values():
        yield Layer.TARGET, t
        if t.level_graph is None:
            continue
        for lv in t.level_graph.nodes:
            yield Layer.LEVEL, lv
            for p in lv.pose_graph.nodes:
                yield Layer.POSE, p
                for f in p.feature_graph.nodes:
                    yield Layer.FEATURE, f


def find_node(g: LayeredSemanticGraph, node_id: int) -> tuple[Layer | None, AnyNode]:
    for layer, node in iter_nodes(g):
        if node.id == node_id:
            return layer, node
    raise NodeNotFound(f"no node with id {node_id}")


def expand_frontier(g: LayeredSemanticGraph, node_id: int) -> NestedGraph:
    """Return the nested graph held by a layer frontier node (no copy)."""
    layer, node = find_node(g, node_id)
    if layer is Layer.TARGET:
        if node.level_graph is None:
            raise NoNestedGraph(f"target {node_id} ({node.label}) has not been inspected")
        return node.level_graph
    if layer is Layer.LEVEL:
        return node.pose_graph
    if layer is Layer.POSE:
        return node.feature_graph
    raise NoNestedGraph(f"node {node_id} has no nested graph")


def graph_size(g: LayeredSemanticGraph) -> tuple[int, int]:
    """Total ``(nodes, edges)`` across all layers, symbolic edges included."""
    n_nodes = 0
    for _ in iter_nodes(g):
        n_nodes += 1
    n_edges = len(g.target_graph.edges)
    for t in g.target_graph.nodes.values():
        if t.level_graph is None:
            continue
        n_edges += len(t.level_graph.edges) + len(t.level_graph.nodes)
        for lv in t.level_graph.nodes:
            n_edges += len(lv.pose_graph.edges)
            for p in lv.pose_graph.nodes:
                n_edges += len(p.feature_graph.nodes)
    return n_nodes, n_edges


# ---------------------------------------------------------------- invariants


def invariant_violations(g: LayeredSemanticGraph) -> list[str]:
    errs: list[str] = []
    tg = g.target_graph
    seen: set[int] = set()
    owner: dict[int, int] = {}
    for layer, node in iter_nodes(g):
        if node.id in seen:
            errs.append(f"duplicate node id {node.id}")
        seen.add(node.id)
        if node.id >= g.next_node_id:
            errs.append(f"node id {node.id} not below id counter {g.next_node_id}")

    def pos(nid: int) -> Vec3:
        return tg.root.position if nid == ROOT_ID else tg.nodes[nid].position_est

    for (a, b), w in tg.edges.items():
        if a not in tg.nodes and a != ROOT_ID or b not in tg.nodes:
            errs.append(f"target edge {(a, b)} references a missing node")
            continue
        if ROOT_ID not in (a, b) and not (tg.nodes[a].inspected and tg.nodes[b].inspected):
            errs.append(f"target edge {(a, b)} joins a non-inspected node")
        if abs(w - geo.dist3(pos(a), pos(b))) >= WEIGHT_TOL:
            errs.append(f"target edge {(a, b)} weight {w} disagrees with node distance")
    for tid, t in tg.nodes.items():
        if edge_key(ROOT_ID, tid) not in tg.edges:
            errs.append(f"target {tid} lacks its root edge")
        if not 0.0 <= t.confidence <= 1.0 or not t.seg_area > 0:
            errs.append(f"target {tid} has invalid confidence/seg_area")
        if t.status is Status.DETECTED:
            if t.polygon is not None or t.level_graph is not None:
                errs.append(f"detected target {tid} carries inspection attributes")
            continue
        if t.polygon is None or t.level_graph is None:
            errs.append(f"inspected target {tid} lacks polygon or level graph")
            continue
        if len(t.polygon.vertices) < 3 or not geo.is_convex_ccw(t.polygon.vertices):
            errs.append(f"inspected target {tid} polygon invalid")
        lg = t.level_graph
        if owner.setdefault(id(lg), tid) != tid:
            errs.append(f"level graph of {tid} is shared")
        if lg.parent_target_id != tid:
            errs.append(f"level graph of {tid} names parent {lg.parent_target_id}")
        if not lg.nodes:
            errs.append(f"level graph of {tid} is empty")
        expected = {}
        for i, lv in enumerate(lg.nodes):
            if lv.index != i:
                errs.append(f"level {lv.id} has index {lv.index}, expected {i}")
            if i:
                prev = lg.nodes[i - 1]
                expected[edge_key(prev.id, lv.id)] = geo.dist3(prev.position, lv.position)
        if set(lg.edges) != set(expected):
            errs.append(f"level graph of {tid} edges are not the adjacent-level chain")
        for k, w in lg.edges.items():
            if k in expected and abs(w - expected[k]) >= WEIGHT_TOL:
                errs.append(f"level edge {k} weight mismatch")
        for lv in lg.nodes:
            errs.extend(_pose_graph_violations(lv))
            if owner.setdefault(id(lv.pose_graph), lv.id) != lv.id:
                errs.append(f"pose graph of level {lv.id} is shared")
    return errs


def _pose_graph_violations(lv: LevelNode) -> list[str]:
    errs: list[str] = []
    pg = lv.pose_graph
    if pg.parent_level_id != lv.id:
        errs.append(f"pose graph of level {lv.id} names parent {pg.parent_level_id}")
    if not pg.nodes:
        errs.append(f"level {lv.id} has no pose nodes")
        return errs
    positions = {lv.id: lv.position}
    positions.update({p.id: p.position for p in pg.nodes})
    expected = {}
    for i in range(1, len(pg.nodes)):
        a, b = pg.nodes[i - 1], pg.nodes[i]
        expected[edge_key(a.id, b.id)] = None
    expected[edge_key(lv.id, pg.nodes[0].id)] = None
    expected[edge_key(lv.id, pg.nodes[-1].id)] = None
    if set(pg.edges) != set(expected):
        errs.append(f"pose graph of level {lv.id} is not a chain closed by its parent")
    for (a, b), w in pg.edges.items():
        if a in positions and b in positions and abs(w - geo.dist3(positions[a], positions[b])) >= WEIGHT_TOL:
            errs.append(f"pose edge {(a, b)} weight mismatch")
    deg = pg.pose_layer_degree()
    ones = sum(1 for d in deg.values() if d == 1)
    if len(pg.nodes) == 1:
        if ones != 0:
            errs.append(f"single-pose graph of level {lv.id} has pose-pose edges")
    elif ones != 2 or any(d > 2 for d in deg.values()):
        errs.append(f"pose graph of level {lv.id} violates the chain property")
    for p in pg.nodes:
        if not geo.is_unit_quaternion(p.orientation):
            errs.append(f"pose {p.id} orientation is not a unit quaternion")
        if p.feature_graph.parent_pose_id != p.id:
            errs.append(f"feature graph of pose {p.id} names parent {p.feature_graph.parent_pose_id}")
        for f in p.feature_graph.nodes:
            if not 0.0 <= f.confidence <= 1.0:
                errs.append(f"feature {f.id} confidence out of range")
    return errs


def validate(g: LayeredSemanticGraph) -> None:
    errs = invariant_violations(g)
    if errs:
        raise InvariantViolation("; ".join(errs[:10]) + (f" (+{len(errs) - 10} more)" if len(errs) > 10 else ""))


def position_of(g: LayeredSemanticGraph, node_id: int) -> Vec3:
    layer, node = find_node(g, node_id)
    if layer is None:
        return node.position
    if layer in (Layer.TARGET, Layer.FEATURE):
        return node.position_est
    return node.position

