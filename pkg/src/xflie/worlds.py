"""Procedural parking-lot worlds: cars and trucks laid out along a chain.

Consecutive targets sit 12-15 m apart and non-adjacent ones at least 28 m
apart, so each target is only discovered from the neighbourhood of the one
before it. That keeps the mission sequential and the target graph sparse.
"""

from __future__ import annotations

import math

import numpy as np

from . import geometry as geo
from .scene import GroundTruthFeature, GroundTruthTarget, WorldSpec

# (class, face, along-face offset from face centre, z, area m^2)
# faces: +x front, -x rear, +y left, -y right
CAR_DIMS = (4.6, 2.0, 1.5)
CAR_FEATURES = (
    ("front bumper", "+x", 0.0, 0.4, 0.6),
    ("hood", "+x", 0.0, 0.9, 0.5),
    ("front glass", "+x", 0.0, 1.3, 0.8),
    ("rear bumper", "-x", 0.0, 0.4, 0.6),
    ("rear glass", "-x", 0.0, 1.2, 0.7),
    ("door", "+y", 0.3, 0.8, 1.0),
    ("door", "-y", -0.3, 0.8, 1.0),
    ("mirror", "+y", 1.3, 1.1, 0.05),
    ("mirror", "-y", -1.3, 1.1, 0.05),
    ("wheel", "+y", 1.5, 0.35, 0.35),
    ("wheel", "+y", -1.5, 0.35, 0.35),
    ("wheel", "-y", 1.5, 0.35, 0.35),
    ("wheel", "-y", -1.5, 0.35, 0.35),
)
TRUCK_DIMS = (8.0, 2.5, 3.5)
TRUCK_FEATURES = (
    ("front bumper", "+x", 0.0, 0.5, 0.8),
    ("grille", "+x", 0.0, 1.2, 0.8),
    ("front glass", "+x", 0.0, 2.4, 1.5),
    ("rear door", "-x", 0.0, 1.8, 3.0),
    ("cab door", "+y", 2.8, 1.4, 1.2),
    ("cab door", "-y", -2.8, 1.4, 1.2),
    ("cargo panel", "+y", -1.0, 2.4, 4.0),
    ("cargo panel", "-y", 1.0, 2.4, 4.0),
    ("wheel", "+y", 2.8, 0.5, 0.6),
    ("wheel", "+y", -1.2, 0.5, 0.6),
    ("wheel", "+y", -3.2, 0.5, 0.6),
    ("wheel", "-y", 2.8, 0.5, 0.6),
    ("wheel", "-y", -1.2, 0.5, 0.6),
    ("wheel", "-y", -3.2, 0.5, 0.6),
)

STEP_RANGE = (12.0, 15.0)
MIN_NONADJACENT = 28.0
START_BACKOFF = 9.0
BOUNDS_MARGIN = 25.0
CEILING = 10.0


def vehicle(sem_class: str, center: tuple[float, float], heading: float) -> GroundTruthTarget:
    """A box vehicle with its semantic parts placed on the side faces."""
    (length, width, height), table = (TRUCK_DIMS, TRUCK_FEATURES) if sem_class == "truck" else (CAR_DIMS, CAR_FEATURES)
    hl, hw = length / 2.0, width / 2.0
    c, s = math.cos(heading), math.sin(heading)

    def world(x: float, y: float) -> tuple[float, float]:
        return (center[0] + c * x - s * y, center[1] + s * x + c * y)

    footprint = tuple(world(x, y) for x, y in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)))
    feats = []
    for cls, face, off, z, area in table:
        if face == "+x":
            x, y = hl, off
        elif face == "-x":
            x, y = -hl, off
        elif face == "+y":
            x, y = off, hw
        else:
            x, y = off, -hw
        wx, wy = world(x, y)
        feats.append(GroundTruthFeature(cls, (wx, wy, z), area))
    return GroundTruthTarget(sem_class, footprint, height, tuple(feats))


def generate_world(n_targets: int, seed: int, truck_every: int = 5, altitude: float = 1.0) -> WorldSpec:
    """Chain-layout world; every ``truck_every``-th target is a truck."""
    if n_targets < 1:
        raise ValueError("need at least one target")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), n_targets, 0x5EED]))
    centers = [np.zeros(2)]
    direction = rng.uniform(-math.pi, math.pi)
    while len(centers) < n_targets:
        for _ in range(200):
            turn = rng.uniform(-math.pi / 2, math.pi / 2)
            step = rng.uniform(*STEP_RANGE)
            heading = direction + turn
            cand = centers[-1] + step * np.array([math.cos(heading), math.sin(heading)])
            if all(np.linalg.norm(cand - p) >= MIN_NONADJACENT for p in centers[:-1]):
                centers.append(cand)
                direction = heading
                break
        else:
            # boxed in: restart the walk from a fresh heading
            centers = [np.zeros(2)]
            direction = rng.uniform(-math.pi, math.pi)
    targets = []
    for i, ctr in enumerate(centers):
        cls = "truck" if truck_every and (i + 1) % truck_every == 0 else "car"
        targets.append(vehicle(cls, (float(ctr[0]), float(ctr[1])), float(rng.uniform(-math.pi, math.pi))))
    away = centers[0] - centers[1] if n_targets > 1 else np.array([-1.0, 0.0])
    away /= np.linalg.norm(away)
    start_xy = centers[0] + START_BACKOFF * away
    yaw = math.atan2(-away[1], -away[0])
    pts = np.array([p for t in targets for p in t.footprint] + [tuple(start_xy)])
    lo = pts.min(axis=0) - BOUNDS_MARGIN
    hi = pts.max(axis=0) + BOUNDS_MARGIN
    world = WorldSpec(
        bounds=((float(lo[0]), float(lo[1]), 0.0), (float(hi[0]), float(hi[1]), CEILING)),
        targets=targets,
        seed=int(seed),
        start_position=(float(start_xy[0]), float(start_xy[1]), altitude),
        start_yaw=geo.wrap_angle(yaw),
    )
    world.validate()
    return world
