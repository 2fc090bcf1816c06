"""2D occupancy grid built from simulated camera rays, and grid Dijkstra.

This is the volumetric baseline the layered planner is compared against.
Cells are Unknown until a ray passes through (Free) or stops in them
(Occupied). Occupied cells never revert.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, StartOccupied, Unreachable
from .scene import CameraModel, RobotState, WorldSpec, camera_origin

UNKNOWN, FREE, OCCUPIED = 0, 1, 2
SQRT2 = math.sqrt(2.0)
NEIGHBOURS = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0), (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))


@dataclass
class OccupancyGrid:
    origin: tuple[float, float]
    resolution: float
    shape: tuple[int, int]  # (nx, ny)
    inflation: float | None = None
    cells: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    _truth: np.ndarray | None = field(default=None, repr=False, compare=False)
    _traversable: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.resolution > 0:
            raise ConfigError("grid resolution must be positive")
        if self.inflation is None:
            self.inflation = 2.0 * self.resolution
        if self.cells is None:
            self.cells = np.zeros(self.shape, dtype=np.int8)

    @classmethod
    def for_world(cls, world: WorldSpec, resolution: float = 0.7, inflation: float | None = None) -> "OccupancyGrid":
        (x0, y0, _), (x1, y1, _) = world.bounds
        nx = int(math.ceil((x1 - x0) / resolution))
        ny = int(math.ceil((y1 - y0) / resolution))
        return cls((x0, y0), resolution, (nx, ny), inflation)

    def cell_of(self, p: Sequence[float]) -> tuple[int, int]:
        return (int(math.floor((p[0] - self.origin[0]) / self.resolution)), int(math.floor((p[1] - self.origin[1]) / self.resolution)))

    def center(self, c: Sequence[int]) -> tuple[float, float]:
        return (self.origin[0] + (c[0] + 0.5) * self.resolution, self.origin[1] + (c[1] + 0.5) * self.resolution)

    def inside(self, c: Sequence[int]) -> bool:
        return 0 <= c[0] < self.shape[0] and 0 <= c[1] < self.shape[1]

    def counts(self) -> dict[str, int]:
        return {
            "unknown": int((self.cells == UNKNOWN).sum()),
            "free": int((self.cells == FREE).sum()),
            "occupied": int((self.cells == OCCUPIED).sum()),
        }

    # -- ground truth raster of footprints (cells overlapping a footprint with positive area)
    def truth(self, world: WorldSpec) -> np.ndarray:
        if self._truth is None:
            occ = np.zeros(self.shape, dtype=bool)
            h = self.resolution / 2.0
            for t in world.targets:
                fp = np.asarray(t.footprint, dtype=float)
                lo = np.maximum(np.floor((fp.min(axis=0) - self.origin) / self.resolution).astype(int) - 1, 0)
                hi = np.minimum(np.ceil((fp.max(axis=0) - self.origin) / self.resolution).astype(int) + 1, np.array(self.shape) - 1)
                ix, iy = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
                cx = self.origin[0] + (ix + 0.5) * self.resolution
                cy = self.origin[1] + (iy + 0.5) * self.resolution
                hit = np.ones(ix.shape, dtype=bool)
                axes = [(1.0, 0.0), (0.0, 1.0)]
                n = len(fp)
                for i in range(n):
                    e = fp[(i + 1) % n] - fp[i]
                    axes.append((-e[1], e[0]))
                for ax, ay in axes:
                    pp = fp[:, 0] * ax + fp[:, 1] * ay
                    cc = cx * ax + cy * ay
                    r = h * (abs(ax) + abs(ay))
                    hit &= (cc + r > pp.min() + 1e-9) & (cc - r < pp.max() - 1e-9)
                occ[ix, iy] |= hit
            self._truth = occ
        return self._truth

    def traversable(self) -> np.ndarray:
        if self._traversable is None:
            occ = self.cells == OCCUPIED
            k = int(math.floor(self.inflation / self.resolution + 1e-9))
            blocked = occ.copy()
            nx, ny = self.shape
            for dx in range(-k, k + 1):
                for dy in range(-k, k + 1):
                    if (dx == 0 and dy == 0) or dx * dx + dy * dy > k * k:
                        continue
                    src = occ[max(0, -dx) : nx - max(0, dx), max(0, -dy) : ny - max(0, dy)]
                    blocked[max(0, dx) : nx - max(0, -dx), max(0, dy) : ny - max(0, -dy)] |= src
            self._traversable = (self.cells == FREE) & ~blocked
        return self._traversable


def cast_rays(grid: OccupancyGrid, world: WorldSpec, origin: Sequence[float], angles: np.ndarray, max_range: float) -> None:
    """March 2D rays from ``origin``; mark crossed cells Free and the first footprint cell Occupied."""
    truth = grid.truth(world)
    step = grid.resolution / 4.0
    n = int(math.ceil(max_range / step)) + 1
    s = np.arange(n) * step
    ox, oy = origin[0], origin[1]
    xs = ox + np.cos(angles)[:, None] * s[None, :]
    ys = oy + np.sin(angles)[:, None] * s[None, :]
    ix = np.floor((xs - grid.origin[0]) / grid.resolution).astype(np.int64)
    iy = np.floor((ys - grid.origin[1]) / grid.resolution).astype(np.int64)
    inside = (ix >= 0) & (ix < grid.shape[0]) & (iy >= 0) & (iy < grid.shape[1])
    cx = np.clip(ix, 0, grid.shape[0] - 1)
    cy = np.clip(iy, 0, grid.shape[1] - 1)
    solid = truth[cx, cy] & inside
    any_hit = solid.any(axis=1)
    first = np.where(any_hit, solid.argmax(axis=1), n)
    stop_out = np.where(inside.all(axis=1), n, (~inside).argmax(axis=1))
    idx = np.arange(n)[None, :]
    free = (idx < first[:, None]) & inside & (idx < stop_out[:, None])
    fx, fy = cx[free], cy[free]
    keep = grid.cells[fx, fy] != OCCUPIED
    before = grid.cells.copy() if grid._traversable is not None else None
    grid.cells[fx[keep], fy[keep]] = FREE
    rows = np.nonzero(any_hit & (first < stop_out))[0]
    grid.cells[cx[rows, first[rows]], cy[rows, first[rows]]] = OCCUPIED
    if before is None or not np.array_equal(before, grid.cells):
        grid._traversable = None


def update_occupancy(grid: OccupancyGrid, robot: RobotState, world: WorldSpec, cam: CameraModel, supersample: int = 2) -> None:
    """Ray-cast the camera frustum (horizontal slice) into the grid."""
    origin = camera_origin(cam, robot)
    c = grid.cell_of(origin)
    if grid.inside(c) and grid.cells[c] == UNKNOWN:
        grid.cells[c] = FREE
        grid._traversable = None
    n = max(2, int(math.ceil(cam.fov * cam.d_max / grid.resolution)) * supersample)
    angles = robot.yaw + np.linspace(-cam.fov / 2.0, cam.fov / 2.0, n)
    cast_rays(grid, world, origin, angles, cam.d_max)


@dataclass
class GridPlan:
    cells: list[tuple[int, int]]
    length: float
    plan_time: float
    expanded: int


def grid_plan(grid: OccupancyGrid, start: Sequence[float], goal: Sequence[float]) -> GridPlan:
    """8-connected Dijkstra over traversable cells; diagonal moves may not cut corners."""
    trav = grid.traversable()
    s, t = grid.cell_of(start), grid.cell_of(goal)
    if not grid.inside(s) or not trav[s]:
        raise StartOccupied(f"start cell {s} is not free")
    if not grid.inside(t) or not trav[t]:
        raise Unreachable(f"goal cell {t} is not free")
    nx, ny = grid.shape
    t0 = time.perf_counter()
    flat = trav.ravel().tolist()
    src, dst = s[0] * ny + s[1], t[0] * ny + t[1]
    dist = {src: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, src)]
    done = set()
    moves = [(dx * ny + dy, dx, dy, w) for dx, dy, w in NEIGHBOURS]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        ux, uy = divmod(u, ny)
        for off, dx, dy, w in moves:
            vx, vy = ux + dx, uy + dy
            if vx < 0 or vy < 0 or vx >= nx or vy >= ny:
                continue
            v = u + off
            if not flat[v]:
                continue
            if dx and dy and not (flat[u + dx * ny] and flat[u + dy]):
                continue
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    elapsed = time.perf_counter() - t0
    if dst not in done:
        raise Unreachable(f"no free path from {s} to {t}")
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    path.reverse()
    return GridPlan([divmod(c, ny) for c in path], dist[dst] * grid.resolution, elapsed, len(done))


def export(grid: OccupancyGrid, path: str | Path) -> tuple[Path, Path]:
    """Write a binary PGM snapshot (y up) and a JSON metadata sidecar."""
    path = Path(path)
    pgm = path.with_suffix(".pgm")
    shades = np.array([128, 255, 0], dtype=np.uint8)
    img = shades[grid.cells.T[::-1]]
    ny, nx = img.shape
    pgm.write_bytes(f"P5\n{nx} {ny}\n255\n".encode() + img.tobytes())
    meta = path.with_suffix(".json")
    meta.write_text(
        json.dumps(
            {
                "image": pgm.name,
                "origin": list(grid.origin),
                "resolution": grid.resolution,
                "inflation": grid.inflation,
                "shape": list(grid.shape),
                "values": {"unknown": 128, "free": 255, "occupied": 0},
                "counts": grid.counts(),
            },
            indent=1,
        )
        + "\n"
    )
    return pgm, meta
