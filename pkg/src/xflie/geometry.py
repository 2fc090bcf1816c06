"""Planar and rigid-body geometry helpers.

Polygons are sequences of ``(x, y)`` tuples. Convex polygons are kept
counter-clockwise throughout the package.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]


def dist3(a: Sequence[float], b: Sequence[float]) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def dist2(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def cross(o: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable[Sequence[float]]) -> list[Vec2]:
    """Andrew's monotone chain. Returns CCW vertices without collinear points."""
    if isinstance(points, np.ndarray) and len(points) > 32:
        points = _octagon_filter(points)
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return pts
    lower: list[Vec2] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Vec2] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _octagon_filter(points: np.ndarray) -> np.ndarray:
    """Drop points strictly inside the octagon of extreme points (Akl-Toussaint)."""
    p = np.asarray(points, dtype=float)[:, :2]
    keys = (p[:, 0], p[:, 0] + p[:, 1], p[:, 1], p[:, 1] - p[:, 0], -p[:, 0], -p[:, 0] - p[:, 1], -p[:, 1], p[:, 0] - p[:, 1])
    idx = []
    for k in keys:
        i = int(np.argmax(k))
        if not idx or idx[-1] != i:
            idx.append(i)
    if len(idx) > 1 and idx[0] == idx[-1]:
        idx.pop()
    poly = p[idx]
    if len(poly) < 3:
        return p
    keep = np.zeros(len(p), dtype=bool)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        cr = (b[0] - a[0]) * (p[:, 1] - a[1]) - (b[1] - a[1]) * (p[:, 0] - a[0])
        keep |= cr <= 1e-9
    keep[idx] = True
    return p[keep]


def signed_area(poly: Sequence[Sequence[float]]) -> float:
    n = len(poly)
    s = 0.0
    for i in range(n):
        x0, y0 = poly[i][0], poly[i][1]
        x1, y1 = poly[(i + 1) % n][0], poly[(i + 1) % n][1]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def polygon_centroid(poly: Sequence[Sequence[float]]) -> Vec2:
    """Area centroid of a simple polygon."""
    a = signed_area(poly)
    if abs(a) < 1e-12:
        raise ValueError("degenerate polygon has no area centroid")
    cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i][0], poly[i][1]
        x1, y1 = poly[(i + 1) % n][0], poly[(i + 1) % n][1]
        c = x0 * y1 - x1 * y0
        cx += (x0 + x1) * c
        cy += (y0 + y1) * c
    return (cx / (6.0 * a), cy / (6.0 * a))


def is_convex_ccw(poly: Sequence[Sequence[float]], tol: float = 1e-12) -> bool:
    """True for a strictly positive-area, counter-clockwise convex polygon."""
    n = len(poly)
    if n < 3 or signed_area(poly) <= tol:
        return False
    for i in range(n):
        if cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) < -tol:
            return False
    # a CCW turn sequence can still wind twice around; total turning must be 2*pi
    turn = 0.0
    for i in range(n):
        a, b, c = poly[i], poly[(i + 1) % n], poly[(i + 2) % n]
        h0 = math.atan2(b[1] - a[1], b[0] - a[0])
        h1 = math.atan2(c[1] - b[1], c[0] - b[0])
        d = (h1 - h0 + math.pi) % (2 * math.pi) - math.pi
        turn += d
    return abs(turn - 2 * math.pi) < 1e-6


def point_in_convex_polygon(p: Sequence[float], poly: Sequence[Sequence[float]], tol: float = 1e-9) -> bool:
    """Boundary-inclusive containment test for a CCW convex polygon."""
    n = len(poly)
    for i in range(n):
        if cross(poly[i], poly[(i + 1) % n], p) < -tol:
            return False
    return True


def point_in_polygon(p: Sequence[float], poly: Sequence[Sequence[float]]) -> bool:
    """Even-odd crossing test for arbitrary simple polygons."""
    x, y = p[0], p[1]
    inside = False
    n = len(poly)
    j = n - 1
    for i in range(n):
        xi, yi = poly[i][0], poly[i][1]
        xj, yj = poly[j][0], poly[j][1]
        if (yi > y) != (yj > y):
            xc = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < xc:
                inside = not inside
        j = i
    return inside


def segment_polygon_interval(
    p0: Sequence[float], p1: Sequence[float], poly: Sequence[Sequence[float]]
) -> tuple[float, float] | None:
    """Cyrus-Beck clip of segment ``p0 -> p1`` against a CCW convex polygon.

    Returns the parameter interval ``(t_in, t_out)`` inside the polygon, or
    ``None`` when the segment misses it.
    """
    t0, t1 = 0.0, 1.0
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i][0], poly[i][1]
        bx, by = poly[(i + 1) % n][0], poly[(i + 1) % n][1]
        # inward normal of a CCW edge
        nx, ny = -(by - ay), bx - ax
        num = nx * (p0[0] - ax) + ny * (p0[1] - ay)
        den = nx * dx + ny * dy
        if abs(den) < 1e-15:
            if num < 0:
                return None
            continue
        t = -num / den
        if den > 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return None
    return (t0, t1)


def segment_hits_prism(
    p0: Sequence[float], p1: Sequence[float], poly: Sequence[Sequence[float]], height: float, ground: float = 0.0
) -> bool:
    """Does the 3D segment pass through the polygon extruded over ``[ground, ground+height]``?"""
    iv = segment_polygon_interval(p0, p1, poly)
    if iv is None:
        return False
    ta, tb = iv
    if tb - ta < 1e-12:
        return False
    za = p0[2] + (p1[2] - p0[2]) * ta
    zb = p0[2] + (p1[2] - p0[2]) * tb
    top = ground + height
    # z is linear along the segment, so the extremes sit at the interval ends
    return min(za, zb) < top and max(za, zb) > ground


def ray_polygon_entry(origin: Sequence[float], direction: Sequence[float], poly: Sequence[Sequence[float]]) -> float | None:
    """Distance along a 2D unit-direction ray to where it enters a convex polygon."""
    far = 1e6
    iv = segment_polygon_interval(
        origin, (origin[0] + direction[0] * far, origin[1] + direction[1] * far), poly
    )
    if iv is None:
        return None
    return iv[0] * far


def offset_contour(poly: Sequence[Sequence[float]], offset: float, arc_step: float = 0.1) -> list[Vec2]:
    """Densely sampled outward offset of a CCW convex polygon (rounded corners)."""
    n = len(poly)
    out: list[Vec2] = []
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        c = poly[(i + 2) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]
        el = math.hypot(ex, ey)
        # outward normal of a CCW edge points to the right of travel
        nx, ny = ey / el, -ex / el
        out.append((a[0] + nx * offset, a[1] + ny * offset))
        out.append((b[0] + nx * offset, b[1] + ny * offset))
        fx, fy = c[0] - b[0], c[1] - b[1]
        fl = math.hypot(fx, fy)
        mx, my = fy / fl, -fx / fl
        h0 = math.atan2(ny, nx)
        h1 = math.atan2(my, mx)
        sweep = (h1 - h0) % (2 * math.pi)
        k = max(1, int(math.ceil(sweep * offset / arc_step)))
        for j in range(1, k):
            h = h0 + sweep * j / k
            out.append((b[0] + offset * math.cos(h), b[1] + offset * math.sin(h)))
    return out


def resample_closed(path: Sequence[Vec2], start_index: int, count: int) -> tuple[list[Vec2], float]:
    """Resample a closed polyline into ``count`` points of equal arc length.

    Sampling starts at ``path[start_index]`` and proceeds in path order.
    Returns the samples and the total perimeter.
    """
    pts = list(path[start_index:]) + list(path[:start_index])
    pts.append(pts[0])
    seg = [dist2(pts[i], pts[i + 1]) for i in range(len(pts) - 1)]
    total = sum(seg)
    spacing = total / count
    samples: list[Vec2] = [pts[0]]
    acc = 0.0
    i = 0
    target = spacing
    while len(samples) < count:
        while acc + seg[i] < target - 1e-12:
            acc += seg[i]
            i += 1
        f = (target - acc) / seg[i]
        samples.append((pts[i][0] + f * (pts[i + 1][0] - pts[i][0]), pts[i][1] + f * (pts[i + 1][1] - pts[i][1])))
        target += spacing
    return samples, total


def nearest_point_on_polygon(p: Sequence[float], poly: Sequence[Sequence[float]]) -> Vec2:
    best = None
    best_d = math.inf
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]
        L2 = ex * ex + ey * ey
        t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / L2))
        q = (a[0] + t * ex, a[1] + t * ey)
        d = dist2(p, q)
        if d < best_d:
            best_d, best = d, q
    assert best is not None
    return best


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def yaw_to_quat(yaw: float) -> tuple[float, float, float, float]:
    """Unit quaternion ``(w, x, y, z)`` for a rotation about +z."""
    return (math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0))


def quat_to_yaw(q: Sequence[float]) -> float:
    w, x, y, z = q
    return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def is_unit_quaternion(q: Sequence[float], tol: float = 1e-9) -> bool:
    return len(q) == 4 and abs(math.sqrt(sum(c * c for c in q)) - 1.0) <= tol


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
