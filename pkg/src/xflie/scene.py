"""Synthetic world, pinhole sensing, simulated detection and 3D localization.

Targets are convex footprints extruded to a height. The detector stand-in
emits one detection per visible target (exploration) or per visible surface
feature (inspection); localization follows the LiDAR-projection and the
aligned-depth routes, both ending in a centroid rotated into the world frame.

Frames: world is z-up. The robot body frame is x-forward, y-left, z-up and
its origin sits ``mount_height`` above the robot position. ``CameraModel.R``
and ``CameraModel.t`` map body (sensor) coordinates into the optical frame
(x-right, y-down, z-forward).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geometry as geo
from .errors import ConfigError, NoSupportingPoints, OutOfBounds

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]

OPTICAL_FROM_BODY = ((0.0, -1.0, 0.0), (0.0, 0.0, -1.0), (1.0, 0.0, 0.0))
NEAR_PLANE = 0.05
LIDAR_SPACING = 0.1
MASK_SPACING = 0.25
CELL_SIZE = 0.3
MAX_INCIDENCE = math.radians(75.0)


class Modality(str, Enum):
    AERIAL = "Aerial"
    GROUND = "Ground"


class SenseMode(str, Enum):
    EXPLORATION = "Exploration"
    INSPECTION = "Inspection"


class SensorMode(str, Enum):
    LIDAR_PROJECTION = "LidarProjection"
    ALIGNED_DEPTH = "AlignedDepth"


@dataclass(frozen=True)
class CameraModel:
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    distortion: tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)
    R: tuple[tuple[float, float, float], ...] = OPTICAL_FROM_BODY
    t: tuple[float, float, float] = (0.0, 0.0, 0.0)
    width: int = 640
    height: int = 480
    fov: float | None = None
    d_max: float = 20.0
    mount_height: float = 0.0

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ConfigError("principal point must lie inside the image")
        if len(self.distortion) != 5:
            raise ConfigError("distortion needs 5 coefficients (k1, k2, p1, p2, k3)")
        if self.fov is None:
            object.__setattr__(self, "fov", 2.0 * math.atan(self.width / (2.0 * self.fx)))
        r = np.asarray(self.R, dtype=float)
        if r.shape != (3, 3) or not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ConfigError("R must be a 3x3 rotation")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def R_np(self) -> np.ndarray:
        return np.asarray(self.R, dtype=float)

    @property
    def t_np(self) -> np.ndarray:
        return np.asarray(self.t, dtype=float)

    @property
    def zero_distortion(self) -> bool:
        return not any(self.distortion)


@dataclass(frozen=True)
class NoiseSpec:
    confidence_floor: float = 0.6
    sigma: float = 0.15
    p_drop: float = 0.05
    desync_frames: int = 0

    @classmethod
    def zero(cls) -> "NoiseSpec":
        return cls(confidence_floor=1.0, sigma=0.0, p_drop=0.0)

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ConfigError("confidence_floor must lie in [0, 1]")
        if self.sigma < 0 or not 0.0 <= self.p_drop < 1.0 or self.desync_frames < 0:
            raise ConfigError("invalid noise specification")


@dataclass(frozen=True)
class RobotState:
    position: Vec3
    yaw: float = 0.0
    modality: Modality = Modality.AERIAL

    @property
    def orientation(self) -> tuple[float, float, float, float]:
        return geo.yaw_to_quat(self.yaw)


@dataclass(frozen=True)
class GroundTruthFeature:
    sem_class: str
    anchor: Vec3
    area: float


@dataclass(frozen=True)
class GroundTruthTarget:
    sem_class: str
    footprint: tuple[Vec2, ...]
    height: float
    features: tuple[GroundTruthFeature, ...] = ()

    @property
    def centroid(self) -> Vec3:
        cx, cy = geo.polygon_centroid(self.footprint)
        return (cx, cy, self.height / 2.0)


class TargetGeometry:
    """Precomputed surface samples for one target."""

    def __init__(self, index: int, target: GroundTruthTarget):
        self.index = index
        self.target = target
        fp = np.asarray(target.footprint, dtype=float)
        self.footprint = fp
        n = len(fp)
        h = target.height
        normals, offsets = [], []
        for i in range(n):
            a, b = fp[i], fp[(i + 1) % n]
            e = b - a
            nrm = np.array([e[1], -e[0], 0.0]) / np.hypot(e[0], e[1])
            normals.append(nrm)
            offsets.append(float(nrm[:2] @ a))
        # bottom and top caps close the prism for ray casting
        self.plane_normals = np.vstack(normals + [np.array([0.0, 0.0, -1.0]), np.array([0.0, 0.0, 1.0])])
        self.plane_offsets = np.array(offsets + [0.0, h])
        self.side_normals = np.vstack(normals)
        self.lidar_points, self.lidar_normals = self._sample(LIDAR_SPACING)
        self.mask_points, self.mask_normals = self._sample(MASK_SPACING)
        self.cell_centers, self.cell_normals = self._sample(CELL_SIZE, cells=True)
        self.cell_ids = index * 1_000_000 + np.arange(len(self.cell_centers))
        self.feature_normals = []
        for f in target.features:
            k = self._face_of(f.anchor)
            self.feature_normals.append(self.side_normals[k])

    def _face_of(self, p: Sequence[float]) -> int:
        fp = self.footprint
        n = len(fp)
        best, best_d = 0, math.inf
        for i in range(n):
            a, b = fp[i], fp[(i + 1) % n]
            e = b - a
            t = np.clip(((p[0] - a[0]) * e[0] + (p[1] - a[1]) * e[1]) / (e @ e), 0.0, 1.0)
            d = math.hypot(p[0] - (a[0] + t * e[0]), p[1] - (a[1] + t * e[1]))
            if d < best_d:
                best, best_d = i, d
        return best

    def _sample(self, spacing: float, cells: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Grid samples over side faces and the top cap.

        With ``cells`` the samples are cell centres; otherwise grid nodes that
        include every face corner.
        """
        fp = self.footprint
        h = self.target.height
        pts, nrm = [], []
        n = len(fp)
        for i in range(n):
            a, b = fp[i], fp[(i + 1) % n]
            length = float(np.hypot(*(b - a)))
            nu = max(1, int(math.ceil(length / spacing)))
            nz = max(1, int(math.ceil(h / spacing)))
            if cells:
                us = (np.arange(nu) + 0.5) / nu
                zs = (np.arange(nz) + 0.5) / nz * h
            else:
                us = np.linspace(0.0, 1.0, nu + 1)
                zs = np.linspace(0.0, h, nz + 1)
            uu, zz = np.meshgrid(us, zs, indexing="ij")
            xy = a[None, :] + uu.reshape(-1, 1) * (b - a)[None, :]
            pts.append(np.column_stack([xy, zz.reshape(-1)]))
            nrm.append(np.repeat(self.side_normals[i][None, :], len(xy), axis=0))
        if not cells:
            lo, hi = fp.min(axis=0), fp.max(axis=0)
            xs = np.arange(lo[0], hi[0] + 1e-9, spacing)
            ys = np.arange(lo[1], hi[1] + 1e-9, spacing)
            gx, gy = np.meshgrid(xs, ys, indexing="ij")
            cand = np.column_stack([gx.reshape(-1), gy.reshape(-1)])
            inside = np.array([geo.point_in_convex_polygon(p, self.target.footprint) for p in cand], dtype=bool)
            top = np.column_stack([cand[inside], np.full(int(inside.sum()), h)])
            top = np.vstack([top, np.column_stack([fp, np.full(n, h)])])
            pts.append(top)
            nrm.append(np.repeat(np.array([[0.0, 0.0, 1.0]]), len(top), axis=0))
        return np.vstack(pts), np.vstack(nrm)

    def facing(self, points: np.ndarray, normals: np.ndarray, origin: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->i", normals, origin[None, :] - points) > 1e-12


@dataclass
class WorldSpec:
    bounds: tuple[Vec3, Vec3]
    targets: list[GroundTruthTarget]
    seed: int = 0
    start_position: Vec3 = (0.0, 0.0, 0.0)
    start_yaw: float = 0.0
    ground_z: float = 0.0

    @cached_property
    def geometry(self) -> list[TargetGeometry]:
        return [TargetGeometry(i, t) for i, t in enumerate(self.targets)]

    def in_bounds(self, p: Sequence[float], tol: float = 1e-9) -> bool:
        lo, hi = self.bounds
        return all(lo[i] - tol <= p[i] <= hi[i] + tol for i in range(3))

    def validate(self) -> None:
        lo, hi = self.bounds
        if any(lo[i] >= hi[i] for i in range(3)):
            raise ConfigError("world bounds are empty")
        for i, t in enumerate(self.targets):
            if len(t.footprint) < 3 or not geo.is_convex_ccw(t.footprint):
                raise ConfigError(f"target {i} footprint must be convex and counter-clockwise")
            if t.height <= 0:
                raise ConfigError(f"target {i} height must be positive")
            for x, y in t.footprint:
                if not self.in_bounds((x, y, lo[2])):
                    raise ConfigError(f"target {i} footprint leaves the world bounds")
            for f in t.features:
                q = geo.nearest_point_on_polygon(f.anchor, t.footprint)
                if geo.dist2(q, f.anchor) > 1e-6 or not -1e-9 <= f.anchor[2] - self.ground_z <= t.height + 1e-9:
                    raise ConfigError(f"feature {f.sem_class!r} of target {i} is not on the target surface")
        for i in range(len(self.targets)):
            for j in range(i + 1, len(self.targets)):
                if polygons_overlap(self.targets[i].footprint, self.targets[j].footprint):
                    raise ConfigError(f"targets {i} and {j} overlap")
        if not self.in_bounds(self.start_position):
            raise ConfigError("start position outside world bounds")


def polygons_overlap(a: Sequence[Vec2], b: Sequence[Vec2]) -> bool:
    """Separating-axis test for two convex polygons (touching counts as overlap)."""
    for poly in (a, b):
        n = len(poly)
        for i in range(n):
            ex, ey = poly[(i + 1) % n][0] - poly[i][0], poly[(i + 1) % n][1] - poly[i][1]
            ax, ay = -ey, ex
            pa = [ax * p[0] + ay * p[1] for p in a]
            pb = [ax * p[0] + ay * p[1] for p in b]
            if max(pa) < min(pb) or max(pb) < min(pa):
                return False
    return True


# ---------------------------------------------------------------- masks


@dataclass
class Mask:
    """Binary segmentation mask stored as one inclusive pixel run per row."""

    rows: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_polygon(cls, poly: np.ndarray, width: int, height: int) -> "Mask":
        poly = np.asarray(poly, dtype=float)
        ymin, ymax = poly[:, 1].min(), poly[:, 1].max()
        r0, r1 = max(0, int(math.ceil(ymin))), min(height - 1, int(math.floor(ymax)))
        if r1 < r0:
            return cls.empty()
        rows = np.arange(r0, r1 + 1, dtype=float)
        a = poly
        b = np.roll(poly, -1, axis=0)
        ya, yb = a[:, 1][None, :], b[:, 1][None, :]
        v = rows[:, None]
        lo_y, hi_y = np.minimum(ya, yb), np.maximum(ya, yb)
        within = (v >= lo_y) & (v <= hi_y)
        dy = yb - ya
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(dy != 0, (v - ya) / np.where(dy != 0, dy, 1.0), 0.0)
        xs = a[:, 0][None, :] + f * (b[:, 0] - a[:, 0])[None, :]
        # horizontal edges contribute both endpoints
        flat = (dy == 0) & within
        xs_lo = np.where(within, np.where(flat, np.minimum(a[:, 0], b[:, 0])[None, :], xs), np.inf)
        xs_hi = np.where(within, np.where(flat, np.maximum(a[:, 0], b[:, 0])[None, :], xs), -np.inf)
        xl = xs_lo.min(axis=1)
        xr = xs_hi.max(axis=1)
        lo = np.maximum(np.ceil(xl - 1e-9), 0).astype(np.int64)
        hi = np.minimum(np.floor(xr + 1e-9), width - 1).astype(np.int64)
        keep = np.isfinite(xl) & (lo <= hi)
        return cls(rows[keep].astype(np.int64), lo[keep], hi[keep])

    @classmethod
    def empty(cls) -> "Mask":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy())

    @property
    def area(self) -> int:
        return int((self.hi - self.lo + 1).sum())

    def bbox(self) -> tuple[int, int, int, int]:
        return int(self.lo.min()), int(self.rows.min()), int(self.hi.max()), int(self.rows.max())

    def contains(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=float).reshape(-1, 2)
        out = np.zeros(len(uv), dtype=bool)
        if not len(self.rows):
            return out
        ui = np.rint(uv[:, 0]).astype(np.int64)
        vi = np.rint(uv[:, 1]).astype(np.int64)
        r0 = int(self.rows[0])
        lut_lo = np.full(int(self.rows[-1]) - r0 + 1, 1, dtype=np.int64)
        lut_hi = np.full_like(lut_lo, 0)
        lut_lo[self.rows - r0] = self.lo
        lut_hi[self.rows - r0] = self.hi
        ok = (vi >= r0) & (vi <= int(self.rows[-1]))
        idx = vi[ok] - r0
        out[ok] = (ui[ok] >= lut_lo[idx]) & (ui[ok] <= lut_hi[idx])
        return out

    def pixels(self, stride: int = 1) -> np.ndarray:
        chunks = []
        for v, a, b in zip(self.rows, self.lo, self.hi):
            if v % stride:
                continue
            us = np.arange(a + (-a) % stride, b + 1, stride)
            chunks.append(np.column_stack([us, np.full(len(us), v)]))
        if not chunks:
            return np.zeros((0, 2), dtype=np.int64)
        return np.vstack(chunks)


@dataclass
class Detection:
    bbox_center: Vec2
    width: int
    height: int
    sem_class: str
    confidence: float
    seg_area: int
    mask: Mask = field(repr=False)
    target_index: int
    feature_index: int | None = None


# ---------------------------------------------------------------- projection


def camera_origin(cam: CameraModel, robot: RobotState) -> np.ndarray:
    return camera_to_world(np.zeros((1, 3)), cam, robot)[0]


def world_to_camera(points_world: np.ndarray, cam: CameraModel, robot: RobotState) -> np.ndarray:
    p = np.asarray(points_world, dtype=float).reshape(-1, 3)
    base = np.array([robot.position[0], robot.position[1], robot.position[2] + cam.mount_height])
    body = (p - base) @ geo.rot_z(robot.yaw)  # row-vector form of Rz^T (p - base)
    return body @ cam.R_np.T + cam.t_np


def camera_to_world(points_cam: np.ndarray, cam: CameraModel, robot: RobotState) -> np.ndarray:
    pc = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    body = (pc - cam.t_np) @ cam.R_np
    base = np.array([robot.position[0], robot.position[1], robot.position[2] + cam.mount_height])
    return body @ geo.rot_z(robot.yaw).T + base


def distort(xn: np.ndarray, yn: np.ndarray, D: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    k1, k2, p1, p2, k3 = D
    r2 = xn * xn + yn * yn
    radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2
    xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn)
    yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn
    return xd, yd


def undistort(xd: np.ndarray, yd: np.ndarray, D: Sequence[float], iterations: int = 20) -> tuple[np.ndarray, np.ndarray]:
    if not any(D):
        return xd, yd
    x, y = xd.copy(), yd.copy()
    for _ in range(iterations):
        ex, ey = distort(x, y, D)
        x = x - (ex - xd)
        y = y - (ey - yd)
    return x, y


def project_camera_points(points_cam: np.ndarray, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection of camera-frame points. Returns ``(uv, valid)``."""
    p = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    z = p[:, 2]
    front = z > 0
    safe = np.where(front, z, 1.0)
    xn, yn = p[:, 0] / safe, p[:, 1] / safe
    if not cam.zero_distortion:
        xn, yn = distort(xn, yn, cam.distortion)
    u = cam.fx * xn + cam.cx
    v = cam.fy * yn + cam.cy
    uv = np.column_stack([u, v])
    valid = front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return uv, valid


def project_points(points_world: np.ndarray, cam: CameraModel, robot: RobotState) -> tuple[np.ndarray, np.ndarray]:
    return project_camera_points(world_to_camera(points_world, cam, robot), cam)


def pixel_rays(uv: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Camera-frame ray directions with unit z for pixel coordinates."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    xd = (uv[:, 0] - cam.cx) / cam.fx
    yd = (uv[:, 1] - cam.cy) / cam.fy
    xn, yn = undistort(xd, yd, cam.distortion)
    return np.column_stack([xn, yn, np.ones(len(uv))])


def back_project(uv: np.ndarray, depth: np.ndarray, cam: CameraModel) -> np.ndarray:
    return pixel_rays(uv, cam) * np.asarray(depth, dtype=float).reshape(-1, 1)


# ---------------------------------------------------------------- sensing


def frame_rng(seed: int, robot: RobotState, tag: int) -> np.random.Generator:
    """RNG keyed by (seed, quantised pose, tag) so sensing is a pure function."""
    off = 1 << 40
    key = [
        int(seed) & 0xFFFFFFFFFFFFFFFF,
        int(tag),
        int(round(robot.position[0] * 1000)) + off,
        int(round(robot.position[1] * 1000)) + off,
        int(round(robot.position[2] * 1000)) + off,
        int(round(geo.wrap_angle(robot.yaw) * 1e6)) + off,
    ]
    return np.random.default_rng(np.random.SeedSequence(key))


def _confidence(rng: np.random.Generator, noise: NoiseSpec) -> float:
    jitter = rng.beta(1.5, 4.0)
    return float(1.0 - (1.0 - noise.confidence_floor) * jitter)


def occluded(world: WorldSpec, p0: np.ndarray, p1: np.ndarray, skip: int) -> bool:
    for j, t in enumerate(world.targets):
        if j == skip:
            continue
        if geo.segment_hits_prism(p0, p1, t.footprint, t.height, world.ground_z):
            return True
    return False


def _bearing_ok(origin: np.ndarray, yaw: float, p: Sequence[float], half_fov: float) -> bool:
    ang = math.atan2(p[1] - origin[1], p[0] - origin[0])
    return abs(geo.wrap_angle(ang - yaw)) <= half_fov + 1e-9


def _detection_from_polygon(poly_px: np.ndarray, cam: CameraModel) -> Mask | None:
    hull = np.asarray(geo.convex_hull(poly_px), dtype=float)
    if len(hull) < 3:
        return None
    mask = Mask.from_polygon(hull, cam.width, cam.height)
    return mask if mask.area > 0 else None


def _make_detection(mask: Mask, sem_class: str, conf: float, ti: int, fi: int | None) -> Detection:
    u0, v0, u1, v1 = mask.bbox()
    return Detection(
        bbox_center=((u0 + u1) / 2.0, (v0 + v1) / 2.0),
        width=u1 - u0 + 1,
        height=v1 - v0 + 1,
        sem_class=sem_class,
        confidence=conf,
        seg_area=mask.area,
        mask=mask,
        target_index=ti,
        feature_index=fi,
    )


def target_mask(world: WorldSpec, ti: int, robot: RobotState, cam: CameraModel) -> Mask | None:
    geom = world.geometry[ti]
    origin = camera_origin(cam, robot)
    pts = geom.mask_points[geom.facing(geom.mask_points, geom.mask_normals, origin)]
    if not len(pts):
        return None
    pc = world_to_camera(pts, cam, robot)
    pc = pc[pc[:, 2] > NEAR_PLANE]
    if len(pc) < 3:
        return None
    uv, _ = project_camera_points(pc, cam)
    return _detection_from_polygon(uv, cam)


def sense(
    world: WorldSpec,
    robot: RobotState,
    cam: CameraModel,
    mode: SenseMode,
    noise: NoiseSpec,
    seed: int | None = None,
    feature_range: float = 6.0,
) -> list[Detection]:
    """Simulated detector output for one frame; pure in (world, pose, mode, seed)."""
    seed = world.seed if seed is None else seed
    rng = frame_rng(seed, robot, 1 if mode is SenseMode.EXPLORATION else 2)
    origin = camera_origin(cam, robot)
    half = cam.fov / 2.0
    dets: list[Detection] = []
    if mode is SenseMode.EXPLORATION:
        for ti, t in enumerate(world.targets):
            dropped = rng.random() < noise.p_drop
            conf = _confidence(rng, noise)
            c = np.array(t.centroid)
            c[2] += world.ground_z
            if np.linalg.norm(c - origin) > cam.d_max:
                continue
            if not _bearing_ok(origin, robot.yaw, c, half):
                continue
            if occluded(world, origin, c, ti) or dropped:
                continue
            mask = target_mask(world, ti, robot, cam)
            if mask is None:
                continue
            dets.append(_make_detection(mask, t.sem_class, conf, ti, None))
        return dets
    for ti, t in enumerate(world.targets):
        geom = world.geometry[ti]
        for fi, f in enumerate(t.features):
            dropped = rng.random() < noise.p_drop
            conf = _confidence(rng, noise)
            a = np.array(f.anchor, dtype=float)
            to_cam = origin - a
            d = float(np.linalg.norm(to_cam))
            if d > feature_range or d == 0:
                continue
            n = geom.feature_normals[fi]
            if float(n @ to_cam) / d < math.cos(MAX_INCIDENCE):
                continue
            if occluded(world, origin, a, ti) or dropped:
                continue
            side = math.sqrt(f.area) / 2.0
            tang = np.array([-n[1], n[0], 0.0])
            up = np.array([0.0, 0.0, 1.0])
            corners = np.array([a + sx * side * tang + sz * side * up for sx in (-1, 1) for sz in (-1, 1)])
            pc = world_to_camera(np.vstack([a, corners]), cam, robot)
            if np.any(pc[:, 2] <= NEAR_PLANE):
                continue
            uv, valid = project_camera_points(pc, cam)
            if not valid[0]:
                continue
            mask = _detection_from_polygon(uv[1:], cam)
            if mask is None:
                continue
            dets.append(_make_detection(mask, f.sem_class, conf, ti, fi))
    return dets


def _ray_prism_depth(geom: TargetGeometry, origin: np.ndarray, dirs: np.ndarray, ground_z: float) -> np.ndarray:
    """Ray parameter of the first hit with a convex prism, NaN on a miss."""
    nrm = geom.plane_normals
    off = geom.plane_offsets.copy()
    off[-2] -= ground_z  # bottom cap: -z <= -ground
    off[-1] += ground_z
    num = off[None, :] - (origin @ nrm.T)[None, :]
    den = dirs @ nrm.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / den
    enter = np.where(den < 0, t, -np.inf).max(axis=1)
    leave = np.where(den > 0, t, np.inf).min(axis=1)
    parallel_out = ((den == 0) & (num < 0)).any(axis=1)
    hit = (enter <= leave + 1e-9) & (enter > 0) & ~parallel_out
    return np.where(hit, enter, np.nan)


def localize_semantic(
    det: Detection,
    sensor_mode: SensorMode,
    world: WorldSpec,
    robot: RobotState,
    cam: CameraModel,
    noise: NoiseSpec,
    rng: np.random.Generator | None = None,
    max_pixels: int = 20000,
) -> Vec3:
    """3D world estimate for a detection: masked points -> centroid -> world frame."""
    if det.mask.area == 0:
        raise NoSupportingPoints("empty mask")
    geom = world.geometry[det.target_index]
    origin = camera_origin(cam, robot)
    if sensor_mode is SensorMode.LIDAR_PROJECTION:
        pts = geom.lidar_points[geom.facing(geom.lidar_points, geom.lidar_normals, origin)]
        pc = world_to_camera(pts, cam, robot)
        uv, valid = project_camera_points(pc, cam)
        keep = valid & det.mask.contains(uv)
        if not keep.any():
            raise NoSupportingPoints("no projected surface point falls inside the mask")
        centroid_cam = pc[keep].mean(axis=0)
    else:
        stride = max(1, int(math.ceil(math.sqrt(det.mask.area / max_pixels))))
        uv = det.mask.pixels(stride).astype(float)
        rays_c = pixel_rays(uv, cam)
        dirs_w = camera_to_world(rays_c, cam, robot) - origin[None, :]
        depth = _ray_prism_depth(geom, origin, dirs_w, world.ground_z)
        ok = np.isfinite(depth)
        if not ok.any():
            raise NoSupportingPoints("no depth pixel inside the mask hits the target")
        centroid_cam = back_project(uv[ok], depth[ok], cam).mean(axis=0)
    est = camera_to_world(centroid_cam[None, :], cam, robot)[0]
    if noise.sigma > 0:
        if rng is None:
            rng = frame_rng(world.seed, robot, 3)
        est = est + rng.normal(0.0, noise.sigma, 3)
    return (float(est[0]), float(est[1]), float(est[2]))


def observe_cells(world: WorldSpec, robot: RobotState, cam: CameraModel, feature_range: float = 6.0) -> frozenset[int]:
    """Ids of surface cells in view; the simulator's stand-in for image keypoints."""
    origin = camera_origin(cam, robot)
    out: list[np.ndarray] = []
    cos_max = math.cos(MAX_INCIDENCE)
    for geom in world.geometry:
        fp = geom.footprint
        if np.min(np.hypot(fp[:, 0] - origin[0], fp[:, 1] - origin[1])) > feature_range + 10.0:
            continue
        c = geom.cell_centers
        to_cam = origin[None, :] - c
        d = np.linalg.norm(to_cam, axis=1)
        cosang = np.einsum("ij,ij->i", geom.cell_normals, to_cam) / np.maximum(d, 1e-12)
        sel = (d <= feature_range) & (cosang >= cos_max)
        if not sel.any():
            continue
        _, valid = project_points(c[sel], cam, robot)
        out.append(geom.cell_ids[sel][valid])
    if not out:
        return frozenset()
    return frozenset(int(i) for i in np.concatenate(out))


# ---------------------------------------------------------------- motion


def step_to(
    robot: RobotState,
    waypoint: Sequence[float],
    yaw: float | None = None,
    step_len: float = 0.5,
    world: WorldSpec | None = None,
) -> tuple[RobotState, list[RobotState]]:
    """Straight-line move sampled every ``step_len``; ends exactly on the waypoint."""
    wp = (float(waypoint[0]), float(waypoint[1]), float(waypoint[2]))
    new_yaw = robot.yaw if yaw is None else float(yaw)
    if world is not None and not world.in_bounds(wp):
        raise OutOfBounds(f"waypoint {wp} outside world bounds")
    if robot.modality is Modality.GROUND:
        ground = 0.0 if world is None else world.ground_z
        if abs(wp[2] - ground) > 1e-9:
            raise OutOfBounds(f"ground robot cannot reach z={wp[2]} (ground plane z={ground})")
    d = geo.dist3(robot.position, wp)
    if d == 0.0:
        if new_yaw == robot.yaw:
            return robot, []
        final = RobotState(wp, new_yaw, robot.modality)
        return final, [final]
    n = int(math.ceil(d / step_len - 1e-9))
    p0 = robot.position
    trace = []
    for i in range(1, n):
        f = i / n
        trace.append(RobotState((p0[0] + f * (wp[0] - p0[0]), p0[1] + f * (wp[1] - p0[1]), p0[2] + f * (wp[2] - p0[2])), new_yaw, robot.modality))
    final = RobotState(wp, new_yaw, robot.modality)
    trace.append(final)
    return final, trace


# ---------------------------------------------------------------- files


def camera_from_dict(d: dict) -> CameraModel:
    kw = dict(d)
    if "distortion" in kw:
        kw["distortion"] = tuple(float(x) for x in kw["distortion"])
    if "R" in kw:
        kw["R"] = tuple(tuple(float(x) for x in row) for row in kw["R"])
    if "t" in kw:
        kw["t"] = tuple(float(x) for x in kw["t"])
    try:
        return CameraModel(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad camera section: {exc}") from exc


def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "distortion": list(cam.distortion),
        "R": [list(r) for r in cam.R],
        "t": list(cam.t),
        "width": cam.width,
        "height": cam.height,
        "fov": cam.fov,
        "d_max": cam.d_max,
        "mount_height": cam.mount_height,
    }


def world_to_dict(world: WorldSpec, cam: CameraModel | None = None, noise: NoiseSpec | None = None) -> dict:
    doc = {
        "seed": world.seed,
        "bounds": {"min": list(world.bounds[0]), "max": list(world.bounds[1])},
        "ground_z": world.ground_z,
        "start": {"position": list(world.start_position), "yaw": world.start_yaw},
        "targets": [
            {
                "class": t.sem_class,
                "footprint": [list(p) for p in t.footprint],
                "height": t.height,
                "features": [{"class": f.sem_class, "anchor": list(f.anchor), "area": f.area} for f in t.features],
            }
            for t in world.targets
        ],
    }
    if cam is not None:
        doc["camera"] = camera_to_dict(cam)
    if noise is not None:
        doc["noise"] = {
            "confidence_floor": noise.confidence_floor,
            "sigma": noise.sigma,
            "p_drop": noise.p_drop,
            "desync_frames": noise.desync_frames,
        }
    return doc


def world_from_dict(doc: dict) -> tuple[WorldSpec, CameraModel, NoiseSpec]:
    try:
        targets = [
            GroundTruthTarget(
                sem_class=str(t["class"]),
                footprint=tuple((float(x), float(y)) for x, y in t["footprint"]),
                height=float(t["height"]),
                features=tuple(
                    GroundTruthFeature(str(f["class"]), tuple(float(c) for c in f["anchor"]), float(f["area"]))
                    for f in t.get("features", [])
                ),
            )
            for t in doc["targets"]
        ]
        start = doc.get("start", {})
        world = WorldSpec(
            bounds=(tuple(float(c) for c in doc["bounds"]["min"]), tuple(float(c) for c in doc["bounds"]["max"])),
            targets=targets,
            seed=int(doc.get("seed", 0)),
            start_position=tuple(float(c) for c in start.get("position", (0.0, 0.0, 0.0))),
            start_yaw=float(start.get("yaw", 0.0)),
            ground_z=float(doc.get("ground_z", 0.0)),
        )
        cam = camera_from_dict(doc.get("camera", {}))
        noise = NoiseSpec(**doc["noise"]) if "noise" in doc else NoiseSpec()
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed world file: {exc!r}") from exc
    world.validate()
    return world, cam, noise


def load_world(path: str | Path) -> tuple[WorldSpec, CameraModel, NoiseSpec]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read world file {path}: {exc}") from exc
    return world_from_dict(doc)


def save_world(path: str | Path, world: WorldSpec, cam: CameraModel | None = None, noise: NoiseSpec | None = None) -> None:
    Path(path).write_text(json.dumps(world_to_dict(world, cam, noise), indent=1) + "\n")
