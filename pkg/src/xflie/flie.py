"""Inspect-explore decision rules: target utility, graph optimisation,
consistency filtering, scene similarity and feature pruning.

Everything here is a pure function over graph nodes or small records; the
mission loop in :mod:`xflie.mission` drives them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from . import geometry as geo
from . import lsg
from .errors import ConfigError, DegenerateDistance, EmptyCandidateSet

Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class UtilityWeights:
    S_p: float = 50.0
    S_a: float = 5.0
    S_n: float = 5.0

    def __post_init__(self) -> None:
        if not (self.S_p > 0 and self.S_a > 0 and self.S_n > 0):
            raise ConfigError("utility weights must be positive")

    def scaled(self, k: float) -> "UtilityWeights":
        return UtilityWeights(self.S_p * k, self.S_a * k, self.S_n * k)


@dataclass(frozen=True)
class InspectionParams:
    standoff: float = 2.5
    lateral_step: float = 1.5
    level_increment: float = 1.2
    vertical_overlap: float = 0.2
    gamma_star: float = 0.5
    horizon: int = 2
    insp_fraction: float = 0.75
    d_thresh: float | None = None
    d_target_check: float = 5.0
    d_feature_check: float = 1.5
    consistency_window: int = 3
    sweep_step_deg: float = 10.0
    survey_attempts: int = 3
    feature_range: float = 6.0
    max_loops: float = 1.5
    lost_radius: float = 6.0
    le_sweeps: int = 4

    def __post_init__(self) -> None:
        positive = (
            self.standoff,
            self.lateral_step,
            self.level_increment,
            self.vertical_overlap,
            self.insp_fraction,
            self.d_target_check,
            self.d_feature_check,
            self.sweep_step_deg,
            self.feature_range,
            self.max_loops,
            self.lost_radius,
        )
        if any(not v > 0 for v in positive):
            raise ConfigError("inspection parameters must be positive")
        if not 0.0 < self.gamma_star < 1.0:
            raise ConfigError("gamma_star must lie in (0, 1)")
        if self.horizon < 1 or self.consistency_window < 1 or self.le_sweeps < 1 or self.survey_attempts < 1:
            raise ConfigError("horizon, consistency window, sweep and survey counts must be >= 1")
        if self.d_thresh is not None and not self.d_thresh > 0:
            raise ConfigError("d_thresh must be positive")

    @property
    def similarity_radius(self) -> float:
        return 0.75 * self.lateral_step if self.d_thresh is None else self.d_thresh


# ---------------------------------------------------------------- utility


def utility(
    v: lsg.TargetNode,
    g: lsg.LayeredSemanticGraph,
    robot_pos: Sequence[float],
    weights: UtilityWeights,
    image_size: tuple[int, int] = (640, 480),
) -> float:
    d = geo.dist3(robot_pos, v.position_est)
    if d < 1e-6:
        raise DegenerateDistance(f"robot coincides with target {v.id} ({v.label})")
    proximity = 1.0 / d
    area = v.seg_area / (image_size[0] * image_size[1])
    others = [t for t in g.detected() if t.id != v.id]
    if others:
        mean_d = sum(geo.dist3(v.position_est, t.position_est) for t in others) / len(others)
        centrality = 1.0 / mean_d if mean_d > 0 else 0.0
    else:
        # a lone candidate gets no centrality bonus
        centrality = 0.0
    return weights.S_p * proximity + weights.S_a * area + weights.S_n * centrality


def select_next_target(
    g: lsg.LayeredSemanticGraph,
    robot_pos: Sequence[float],
    weights: UtilityWeights,
    image_size: tuple[int, int] = (640, 480),
) -> int | None:
    best_id, best_u = None, -math.inf
    for v in sorted(g.detected(), key=lambda t: t.id):
        u = utility(v, g, robot_pos, weights, image_size)
        v.utility = u
        if u > best_u:
            best_id, best_u = v.id, u
    return best_id


# ---------------------------------------------------------------- G_T optimisation


def quality_key(confidence: float, seg_area: float, node_id: int) -> tuple[float, float, int]:
    """Sort key: best first. Confidence decides, then area, then the older id."""
    return (-confidence, -seg_area, node_id)


def suppress(items: Sequence, position, key, radius: float, dist=geo.dist3) -> tuple[list, list]:
    """Greedy non-maximum suppression. Returns ``(kept, removed)``."""
    kept, removed = [], []
    for it in sorted(items, key=key):
        p = position(it)
        if any(dist(p, position(k)) <= radius for k in kept):
            removed.append(it)
        else:
            kept.append(it)
    return kept, removed


def inside_inspected(g: lsg.LayeredSemanticGraph, p: Sequence[float]) -> lsg.TargetNode | None:
    for t in g.inspected():
        if t.polygon is not None and t.polygon.contains(p):
            return t
    return None


def optimize_target_graph(g: lsg.LayeredSemanticGraph, params: InspectionParams) -> list[int]:
    removed: list[int] = []
    for t in sorted(g.detected(), key=lambda t: t.id):
        if inside_inspected(g, t.position_est) is not None:
            lsg.remove_target(g, t.id)
            removed.append(t.id)
    _, dup = suppress(
        g.detected(),
        lambda t: t.position_est,
        lambda t: quality_key(t.confidence, t.seg_area, t.id),
        params.d_target_check,
    )
    for t in dup:
        lsg.remove_target(g, t.id)
        removed.append(t.id)
    return removed


def target_separation_ok(g: lsg.LayeredSemanticGraph, params: InspectionParams) -> bool:
    det = g.detected()
    for i, a in enumerate(det):
        if inside_inspected(g, a.position_est) is not None:
            return False
        for b in det[i + 1 :]:
            if geo.dist3(a.position_est, b.position_est) <= params.d_target_check:
                return False
    return True


# ---------------------------------------------------------------- consistency filter


@dataclass
class Observation:
    position: Vec3
    sem_class: str
    confidence: float
    seg_area: float
    image_ref: str


@dataclass
class Track:
    sem_class: str
    frames: list[Observation] = field(default_factory=list)
    state: str = "pending"  # pending | accepted | rejected

    @property
    def position(self) -> Vec3:
        n = len(self.frames)
        return tuple(sum(o.position[i] for o in self.frames) / n for i in range(3))  # type: ignore[return-value]


@dataclass
class ConsistencyTracker:
    """Per-sweep tracks; a candidate is accepted after ``window`` consecutive
    in-view frames with a detection, and rejected by any in-view miss."""

    window: int = 3
    assoc_radius: float = 5.0
    tracks: list[Track] = field(default_factory=list)

    def step(self, observations: Iterable[Observation], in_view: Callable[[Vec3], bool]) -> list[Track]:
        """Feed one frame; return tracks accepted on this frame."""
        hit: set[int] = set()
        for obs in observations:
            best, best_d = None, math.inf
            for i, tr in enumerate(self.tracks):
                if tr.sem_class != obs.sem_class or tr.state == "rejected" or i in hit:
                    continue
                d = geo.dist3(tr.position, obs.position) if tr.frames else math.inf
                if d <= self.assoc_radius and d < best_d:
                    best, best_d = i, d
            if best is None:
                self.tracks.append(Track(obs.sem_class, [obs]))
                hit.add(len(self.tracks) - 1)
            else:
                if self.tracks[best].state == "pending":
                    self.tracks[best].frames.append(obs)
                hit.add(best)
        accepted = []
        for i, tr in enumerate(self.tracks):
            if tr.state != "pending":
                continue
            if i in hit:
                if len(tr.frames) >= self.window:
                    tr.state = "accepted"
                    accepted.append(tr)
            elif in_view(tr.position):
                tr.state = "rejected"
            else:
                # left the view: the window restarts from the next sighting
                tr.frames = []
        self.tracks = [t for t in self.tracks if t.state == "accepted" or (t.state == "pending" and t.frames)]
        return accepted


def consistency_filter(stream: Sequence[tuple[bool, bool]], window: int) -> str:
    """Verdict for one candidate over frames of ``(in_view, detected)``.

    Returns ``"accept"``, ``"reject"`` or ``"pending"``.
    """
    run = 0
    for in_view, detected in stream:
        if not in_view:
            run = 0
            continue
        if not detected:
            return "reject"
        run += 1
        if run >= window:
            return "accept"
    return "pending"


# ---------------------------------------------------------------- scene similarity


@dataclass(frozen=True)
class ObservationRecord:
    pose_node_id: int
    cells: frozenset[int]

    @property
    def keypoint_count(self) -> int:
        return len(self.cells)


Matcher = Callable[[ObservationRecord, ObservationRecord], int]


def cell_matcher(candidate: ObservationRecord, query: ObservationRecord) -> int:
    return min(len(candidate.cells & query.cells), query.keypoint_count)


def scene_similarity(
    query: ObservationRecord,
    candidates: Sequence[ObservationRecord],
    d_curr: float,
    d_thresh: float,
    matcher: Matcher = cell_matcher,
    norm: str = "set",
) -> float:
    if not candidates:
        raise EmptyCandidateSet("no candidate observations to compare against")
    if query.keypoint_count <= 0:
        raise ValueError("query observation has no keypoints")
    if norm not in ("set", "none"):
        raise ConfigError(f"unknown similarity normalisation {norm!r}")
    if d_curr > d_thresh:
        return 0.0
    total = sum(matcher(c, query) for c in candidates)
    denom = query.keypoint_count * (len(candidates) if norm == "set" else 1)
    return total / denom


# ---------------------------------------------------------------- pose/feature graph


@dataclass
class PFFeature:
    key: int
    sem_class: str
    position: Vec3
    confidence: float
    seg_area: float
    pose_ids: set[int]


@dataclass
class PFGraph:
    """Unoptimised pose/feature observations for one level."""

    pose_ids: list[int] = field(default_factory=list)
    features: list[PFFeature] = field(default_factory=list)

    def add_pose(self, pose_id: int) -> None:
        self.pose_ids.append(pose_id)

    def add_feature(self, pose_id: int, sem_class: str, position, confidence: float, seg_area: float) -> PFFeature:
        f = PFFeature(len(self.features), sem_class, tuple(float(c) for c in position), float(confidence), float(seg_area), {pose_id})
        self.features.append(f)
        return f

    def edges(self) -> list[tuple[int, int]]:
        return sorted((p, f.key) for f in self.features for p in f.pose_ids)

    def best_pose(self, f: PFFeature) -> int:
        order = {p: i for i, p in enumerate(self.pose_ids)}
        return min(f.pose_ids, key=lambda p: order.get(p, len(order)))


def prune_pf_graph(pf: PFGraph, d_check: float = 1.5) -> PFGraph:
    """Keep the best of every same-class cluster within ``d_check``.

    Each survivor keeps a single pose edge; poses that end up without
    features drop out of the pose/feature graph.
    """
    kept: list[PFFeature] = []
    classes = sorted({f.sem_class for f in pf.features})
    for cls in classes:
        same = [f for f in pf.features if f.sem_class == cls]
        survivors, _ = suppress(same, lambda f: f.position, lambda f: quality_key(f.confidence, f.seg_area, f.key), d_check)
        kept.extend(survivors)
    kept.sort(key=lambda f: f.key)
    out = PFGraph()
    used = set()
    for f in kept:
        p = pf.best_pose(f)
        out.features.append(PFFeature(f.key, f.sem_class, f.position, f.confidence, f.seg_area, {p}))
        used.add(p)
    out.pose_ids = [p for p in pf.pose_ids if p in used]
    return out


def feature_separation_ok(pf: PFGraph, d_check: float = 1.5) -> bool:
    for i, a in enumerate(pf.features):
        if len(a.pose_ids) != 1:
            return False
        for b in pf.features[i + 1 :]:
            if a.sem_class == b.sem_class and geo.dist3(a.position, b.position) <= d_check:
                return False
    return True


# ---------------------------------------------------------------- inspection geometry


def level_count(height: float, params: InspectionParams, aerial: bool = True) -> int:
    """Number of levels the vertical-surface rule produces for a box of ``height``."""
    if not aerial:
        return 1
    k = 0
    while height > (k + 1) * params.level_increment + params.vertical_overlap:
        k += 1
    return k + 1


def needs_next_level(height: float, k: int, params: InspectionParams, aerial: bool) -> bool:
    return aerial and height > (k + 1) * params.level_increment + params.vertical_overlap


@dataclass(frozen=True)
class Orbit:
    samples: tuple[tuple[float, float], ...]
    perimeter: float
    yaws: tuple[float, ...]

    @property
    def count(self) -> int:
        return len(self.samples)


def orbit(footprint: Sequence[Sequence[float]], robot_xy: Sequence[float], params: InspectionParams) -> Orbit:
    """View-pose ring at standoff around a convex footprint, starting nearest the robot."""
    contour = geo.offset_contour(footprint, params.standoff)
    start = min(range(len(contour)), key=lambda i: (geo.dist2(contour[i], robot_xy), i))
    perimeter = sum(geo.dist2(contour[i], contour[(i + 1) % len(contour)]) for i in range(len(contour)))
    m = max(3, int(round(perimeter / params.lateral_step)))
    samples, perimeter = geo.resample_closed(contour, start, m)
    yaws = []
    for s in samples:
        q = geo.nearest_point_on_polygon(s, footprint)
        yaws.append(math.atan2(q[1] - s[1], q[0] - s[0]))
    return Orbit(tuple(samples), perimeter, tuple(yaws))


def polygon_from_poses(positions: Iterable[Sequence[float]]) -> lsg.ConvexPolygon2D:
    return lsg.ConvexPolygon2D.from_points([(p[0], p[1]) for p in positions])
