"""Inspect-explore mission loop: 360 survey, target selection, planned
transit, level-by-level inspection and local exploration.

The mission owns the robot state and the graph. It keeps a structured event
log whose timestamps are simulated seconds, so two runs with the same seed
produce the same log.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from . import flie, grid as gridmod, hpp, lsg
from . import geometry as geo
from .errors import NoSupportingPoints, TargetLost, Unreachable, XflieError
from .flie import InspectionParams, UtilityWeights
from .scene import (
    CameraModel,
    Modality,
    NoiseSpec,
    RobotState,
    SenseMode,
    SensorMode,
    WorldSpec,
    camera_origin,
    frame_rng,
    localize_semantic,
    observe_cells,
    occluded,
    sense,
    step_to,
)

VIEW_MARGIN = math.radians(3.0)


@dataclass(frozen=True)
class MissionConfig:
    modality: Modality = Modality.AERIAL
    sensor_mode: SensorMode = SensorMode.LIDAR_PROJECTION
    weights: UtilityWeights = UtilityWeights()
    params: InspectionParams = InspectionParams()
    altitude: float = 1.0
    ground_mount_height: float = 0.7
    step_len: float = 0.5
    speed: float = 1.0
    frame_dt: float = 0.1
    naive_edges: bool = False
    similarity_norm: str = "set"
    record_grid: bool = False
    grid_resolution: float = 0.7
    check_invariants: bool = True
    max_selections: int | None = None


@dataclass
class MetricsRecord:
    planner: str
    query_id: str
    layer: str
    edges_exposed: int
    plan_time_s: float
    path_length_m: float
    status: str = "ok"


@dataclass
class Mission:
    world: WorldSpec
    cam: CameraModel
    noise: NoiseSpec
    config: MissionConfig = MissionConfig()
    seed: int | None = None
    matcher: flie.Matcher = flie.cell_matcher
    robot: RobotState = field(init=False)
    g: lsg.LayeredSemanticGraph = field(init=False)
    events: list[dict[str, Any]] = field(init=False, default_factory=list)
    metrics: list[MetricsRecord] = field(init=False, default_factory=list)
    gammas: list[float] = field(init=False, default_factory=list)
    level_poses: list[dict[str, Any]] = field(init=False, default_factory=list)
    policy: str = field(init=False, default="idle")
    sim_time: float = field(init=False, default=0.0)
    frame: int = field(init=False, default=0)
    grid: gridmod.OccupancyGrid | None = field(init=False, default=None)
    current_target: int | None = field(init=False, default=None)

    def __post_init__(self) -> None:
        if self.seed is None:
            self.seed = self.world.seed
        aerial = self.config.modality is Modality.AERIAL
        if not aerial and self.cam.mount_height == 0.0:
            self.cam = replace(self.cam, mount_height=self.config.ground_mount_height)
        p = self.world.start_position
        z = p[2] if aerial else self.world.ground_z
        self.robot = RobotState((p[0], p[1], z), self.world.start_yaw, self.config.modality)
        self.g = lsg.new_graph(self.robot.position, self.robot.yaw)
        self._history: deque[RobotState] = deque(maxlen=self.noise.desync_frames + 1)
        if self.config.record_grid:
            self.grid = gridmod.OccupancyGrid.for_world(self.world, self.config.grid_resolution)
        self.log("mission_start", position=list(self.robot.position), targets=len(self.world.targets))

    # ------------------------------------------------------------ plumbing
    @property
    def params(self) -> InspectionParams:
        return self.config.params

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.cam.width, self.cam.height)

    def log(self, event: str, **fields: Any) -> None:
        rec = {"event": event, "t": round(self.sim_time, 6), "policy": self.policy}
        rec.update(fields)
        self.events.append(rec)

    def move_to(self, position, yaw: float | None = None) -> None:
        pos = (float(position[0]), float(position[1]), float(position[2]))
        if self.config.modality is Modality.GROUND:
            pos = (pos[0], pos[1], self.world.ground_z)
        before = self.robot.position
        self.robot, _ = step_to(self.robot, pos, yaw, self.config.step_len, self.world)
        self.sim_time += geo.dist3(before, pos) / self.config.speed

    def _frame(self) -> RobotState:
        """Advance one sensing frame; returns the pose used for localisation."""
        self.frame += 1
        self.sim_time += self.config.frame_dt
        self._history.append(self.robot)
        if self.grid is not None:
            gridmod.update_occupancy(self.grid, self.robot, self.world, self.cam)
        # with desync the localiser sees a stale pose
        return self._history[0]

    def _localize(self, det, pose: RobotState) -> tuple[float, float, float] | None:
        tag = 100 + det.target_index * 1000 + (0 if det.feature_index is None else det.feature_index + 1)
        rng = frame_rng(self.seed, pose, tag)
        try:
            return localize_semantic(det, self.config.sensor_mode, self.world, pose, self.cam, self.noise, rng)
        except NoSupportingPoints:
            self.log("no_supporting_points", sem_class=det.sem_class)
            return None

    def in_view(self, p) -> bool:
        origin = camera_origin(self.cam, self.robot)
        if geo.dist3(origin, p) > self.cam.d_max:
            return False
        bearing = math.atan2(p[1] - origin[1], p[0] - origin[0])
        return abs(geo.wrap_angle(bearing - self.robot.yaw)) <= self.cam.fov / 2.0 - VIEW_MARGIN

    def refresh_root(self) -> None:
        lsg.refresh_root(self.g, self.robot.position, self.robot.yaw)

    # ------------------------------------------------------------ exploration
    def sweep(self, register: bool = True, link_target: int | None = None) -> list[int]:
        """Turn a full circle in place, feeding detections through the consistency filter."""
        p = self.params
        n = int(round(360.0 / p.sweep_step_deg))
        step = 2.0 * math.pi / n
        yaw0 = self.robot.yaw
        tracker = flie.ConsistencyTracker(window=p.consistency_window, assoc_radius=p.d_target_check)
        new_ids: list[int] = []
        # overlap the start so a target straddling yaw0 still gets a full window
        for i in range(n + p.consistency_window):
            self.move_to(self.robot.position, geo.wrap_angle(yaw0 + i * step))
            loc_pose = self._frame()
            obs = []
            for det in sense(self.world, self.robot, self.cam, SenseMode.EXPLORATION, self.noise, self.seed):
                est = self._localize(det, loc_pose)
                if est is None:
                    continue
                obs.append(flie.Observation(est, det.sem_class, det.confidence, det.seg_area, f"img/{self.frame:06d}"))
            for tr in tracker.step(obs, self.in_view):
                if not register:
                    continue
                est = tr.position
                owner = flie.inside_inspected(self.g, est)
                if owner is not None:
                    self.log("rejected_in_polygon", sem_class=tr.sem_class, position=list(est), polygon_of=owner.id)
                    continue
                conf = sum(o.confidence for o in tr.frames) / len(tr.frames)
                area = sum(o.seg_area for o in tr.frames) / len(tr.frames)
                nid = lsg.register_target(self.g, est, tr.sem_class, conf, area, tr.frames[-1].image_ref, self.robot.position)
                new_ids.append(nid)
                self.log("registered", node=nid, label=self.g.target(nid).label, position=list(est))
            if link_target is not None:
                self._link_visible(link_target)
        return new_ids

    def _link_visible(self, tid: int) -> None:
        """Add v^I-v^I edges from ``tid`` to inspected targets in direct view."""
        origin = camera_origin(self.cam, self.robot)
        for other in sorted(self.g.inspected(), key=lambda t: t.id):
            if other.id == tid or lsg.edge_key(tid, other.id) in self.g.target_graph.edges:
                continue
            ok, info = self.edge_eligible(origin, self.robot.yaw, other.position_est)
            if ok:
                w = lsg.add_inspected_edge(self.g, tid, other.id)
                self.log("edge_created", nodes=[tid, other.id], weight=w, observer=list(origin), yaw=self.robot.yaw, **info)

    def edge_eligible(self, origin, yaw: float, p) -> tuple[bool, dict[str, float]]:
        d = geo.dist3(origin, p)
        bearing = geo.wrap_angle(math.atan2(p[1] - origin[1], p[0] - origin[0]) - yaw)
        info = {"distance": d, "bearing": bearing}
        if d > self.cam.d_max or abs(bearing) > self.cam.fov / 2.0:
            return False, info
        own = [i for i, t in enumerate(self.world.targets) if geo.point_in_convex_polygon(p, t.footprint)]
        skip = own[0] if own else -1
        return not occluded(self.world, np.asarray(origin), np.asarray(p, dtype=float), skip), info

    def survey_360(self) -> list[int]:
        self.policy = "explore_360"
        ids: list[int] = []
        step = math.radians(self.params.sweep_step_deg)
        for attempt in range(self.params.survey_attempts):
            if attempt:
                # a fresh set of headings, so a dropped frame is not replayed
                self.move_to(self.robot.position, geo.wrap_angle(self.robot.yaw + step / self.params.survey_attempts))
            ids = self.sweep()
            if ids:
                break
        self.log("survey_done", registered=ids)
        return ids

    def optimize(self) -> list[int]:
        removed = flie.optimize_target_graph(self.g, self.params)
        if removed:
            self.log("pruned_targets", nodes=removed)
        if self.config.check_invariants:
            assert flie.target_separation_ok(self.g, self.params), "target separation violated after optimisation"
        return removed

    # ------------------------------------------------------------ inspection
    def ground_truth_for(self, t: lsg.TargetNode) -> int:
        best, best_d = -1, math.inf
        for i, gt in enumerate(self.world.targets):
            if geo.point_in_convex_polygon(t.position_est, gt.footprint):
                d = 0.0
            else:
                d = geo.dist2(geo.nearest_point_on_polygon(t.position_est, gt.footprint), t.position_est)
            if d < best_d:
                best, best_d = i, d
        if best_d > self.params.lost_radius:
            raise TargetLost(f"nothing to inspect near {t.label}")
        return best

    def inspect(self, tid: int) -> None:
        self.policy = "inspect"
        p = self.params
        t = self.g.target(tid)
        gt_index = self.ground_truth_for(t)
        gt = self.world.targets[gt_index]
        ring = flie.orbit(gt.footprint, self.robot.position, p)
        ring_hull = lsg.ConvexPolygon2D.from_points(ring.samples)
        aerial = self.config.modality is Modality.AERIAL
        base_z = self.config.altitude if aerial else self.world.ground_z
        lg = lsg.new_level_graph(tid)
        per_level: list[tuple[lsg.LevelNode, flie.PFGraph]] = []
        self.log("inspect_start", node=tid, label=t.label, poses_per_loop=ring.count, perimeter=ring.perimeter)
        k = 0
        while True:
            z = base_z + k * p.level_increment
            sx, sy = ring.samples[0]
            self.move_to((sx, sy, z), ring.yaws[0])
            level = lsg.add_level(self.g, lg, self.robot.position)
            pf = self._orbit_level(level, ring, ring_hull, z)
            per_level.append((level, pf))
            if not flie.needs_next_level(gt.height, k, p, aerial):
                break
            k += 1
        for level, pf in per_level:
            pruned = flie.prune_pf_graph(pf, p.d_feature_check)
            if self.config.check_invariants:
                assert flie.feature_separation_ok(pruned, p.d_feature_check), "feature separation violated after pruning"
            poses = {ps.id: ps for ps in level.pose_graph.nodes}
            order = {pid: i for i, pid in enumerate(pf.pose_ids)}
            for f in sorted(pruned.features, key=lambda f: (order[next(iter(f.pose_ids))], f.key)):
                pose = poses[next(iter(f.pose_ids))]
                lsg.add_feature(self.g, level, pose, f.sem_class, f.position, f.confidence, f.seg_area)
            self.log("features_registered", level=level.id, raw=len(pf.features), kept=len(pruned.features))
        polygon = flie.polygon_from_poses(ps.position for ps in lg.nodes[0].pose_graph.nodes)
        lsg.mark_inspected(self.g, tid, polygon, lg)
        self.log("inspected", node=tid, label=t.label, levels=len(lg.nodes), centroid=list(t.position_est))

    def _orbit_level(self, level: lsg.LevelNode, ring: flie.Orbit, ring_hull: lsg.ConvexPolygon2D, z: float) -> flie.PFGraph:
        p = self.params
        m = ring.count
        max_poses = int(math.ceil(p.max_loops * m)) + 1
        d_insp = p.insp_fraction * ring.perimeter
        records: list[flie.ObservationRecord] = []
        pf = flie.PFGraph()
        traveled = 0.0
        i = 0
        while True:
            j = i % m
            target = (ring.samples[j][0], ring.samples[j][1], z)
            before = self.robot.position
            self.move_to(target, ring.yaws[j])
            traveled += geo.dist3(before, self.robot.position)
            pose = lsg.add_pose(self.g, level, self.robot.position, self.robot.orientation, f"img/{self.frame + 1:06d}")
            pf.add_pose(pose.id)
            loc_pose = self._frame()
            for det in sense(self.world, self.robot, self.cam, SenseMode.INSPECTION, self.noise, self.seed, p.feature_range):
                est = self._localize(det, loc_pose)
                if est is None or not ring_hull.contains(est):
                    continue
                pf.add_feature(pose.id, det.sem_class, est, det.confidence, det.seg_area)
            rec = flie.ObservationRecord(pose.id, observe_cells(self.world, self.robot, self.cam, p.feature_range))
            records.append(rec)
            if traveled >= d_insp - 1e-9 and rec.keypoint_count > 0:
                d_curr = geo.dist3(self.robot.position, level.position)
                gamma = flie.scene_similarity(
                    rec, records[: p.horizon], d_curr, p.similarity_radius, self.matcher, self.config.similarity_norm
                )
                self.gammas.append(gamma)
                if gamma >= p.gamma_star:
                    self.log("level_complete", level=level.id, label=level.label, poses=i + 1, per_loop=m, gamma=gamma)
                    self.level_poses.append({"level": level.id, "poses": i + 1, "per_loop": m, "forced": False})
                    return pf
            if i + 1 >= max_poses:
                self.log("level_forced", level=level.id, label=level.label, poses=i + 1, per_loop=m)
                self.level_poses.append({"level": level.id, "poses": i + 1, "per_loop": m, "forced": True})
                return pf
            i += 1

    def local_explore(self, tid: int) -> list[int]:
        self.policy = "explore_local"
        t = self.g.target(tid)
        l0 = t.level_graph.nodes[0]
        poses = l0.pose_graph.nodes
        sweep_at = {round(i * len(poses) / self.params.le_sweeps) for i in range(self.params.le_sweeps)}
        new_ids: list[int] = []
        for i, ps in enumerate(poses):
            self.move_to(ps.position, geo.quat_to_yaw(ps.orientation))
            if i in sweep_at:
                new_ids += self.sweep(link_target=tid)
        self.log("local_explore_done", node=tid, registered=new_ids)
        self.optimize()
        return new_ids

    # ------------------------------------------------------------ transit
    def plan_and_fly(self, query: hpp.Query, query_id: str) -> hpp.PlanResult | None:
        self.refresh_root()
        start = self.robot.position
        try:
            res = hpp.plan(self.g, start, query, self.config.naive_edges)
        except (Unreachable, XflieError) as exc:
            self.log("plan_failed", query=query_id, reason=str(exc))
            return None
        self.record_plan(res, query_id)
        if self.grid is not None:
            self.record_grid_plan(start, res.terminal_position, query_id)
        for wp in res.waypoints():
            self.move_to(wp)
        yaw = geo.quat_to_yaw(res.terminal_orientation)
        self.move_to(res.terminal_position, yaw)
        self.log("plan_executed", query=query_id, route=res.global_route, segments=len(res.segments), length=res.total_length)
        return res

    def record_plan(self, res: hpp.PlanResult, query_id: str) -> None:
        for layer, _owner, exposed, dt, length in res.dijkstra_calls():
            self.metrics.append(MetricsRecord("lsg", query_id, layer, exposed, dt, length))

    def record_grid_plan(self, start, goal, query_id: str) -> None:
        assert self.grid is not None
        try:
            gp = gridmod.grid_plan(self.grid, start, goal)
            self.metrics.append(MetricsRecord("grid", query_id, "Grid", int(gp.expanded), gp.plan_time, gp.length))
        except XflieError as exc:
            self.metrics.append(MetricsRecord("grid", query_id, "Grid", 0, 0.0, 0.0, status=type(exc).__name__))

    # ------------------------------------------------------------ main loop
    def run(self) -> "Mission":
        self.survey_360()
        self.optimize()
        limit = self.config.max_selections or 5 * (len(self.world.targets) + 5)
        for n in range(limit):
            self.policy = "select"
            self.refresh_root()
            tid = flie.select_next_target(self.g, self.robot.position, self.config.weights, self.image_size)
            if tid is None:
                break
            t = self.g.target(tid)
            self.log("selected", node=tid, label=t.label, utility=t.utility)
            if self.g.inspected():
                self.policy = "transit"
                self.plan_and_fly(hpp.InspectTarget(tid), f"transit-{n}")
            try:
                self.inspect(tid)
            except TargetLost as exc:
                self.log("target_lost", node=tid, reason=str(exc))
                lsg.remove_target(self.g, tid)
                continue
            self.current_target = tid
            self.local_explore(tid)
        self.policy = "done"
        self.refresh_root()
        self.log("mission_done", inspected=len(self.g.inspected()), detected=len(self.g.detected()))
        return self

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)


def run_mission(world: WorldSpec, cam: CameraModel | None = None, noise: NoiseSpec | None = None, **config: Any) -> Mission:
    seed = config.pop("seed", None)
    return Mission(world, cam or CameraModel(), noise or NoiseSpec.zero(), MissionConfig(**config), seed).run()
