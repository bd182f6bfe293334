"""Per-frame animal placement: rectangle sampling, parameter sampling, and
iterative collision-rejected placement with ground contact.

Draw order from the placement RNG is fixed and documented so runs are
reproducible: rectangle (side_x, side_y, center_x, center_y), then per
instance (model, frame, scale, yaw) followed by one (x, y) pair per
placement attempt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Rotation, Vec3, obb_overlap_mask
from .scene import PlacedInstance, Scene
from .terrain import Terrain


@dataclass(frozen=True)
class PlacementRect:
    """Axis-aligned sampling rectangle in the world x-y plane."""

    center: tuple[float, float]
    side_x: float
    side_y: float
    clamped: bool = False

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        return (cx - self.side_x / 2, cy - self.side_y / 2, cx + self.side_x / 2, cy + self.side_y / 2)

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1

    def to_record(self) -> dict:
        return {
            "center": [self.center[0], self.center[1]],
            "side_x": self.side_x,
            "side_y": self.side_y,
            "clamped": self.clamped,
        }


@dataclass(eq=False)
class PlacementOutcome:
    retained: list[PlacedInstance]
    removed: int
    rect: PlacementRect

    @property
    def requested(self) -> int:
        return len(self.retained) + self.removed


def sample_rectangle(
    terrain: Terrain, rng: np.random.Generator, side_range=(40.0, 120.0)
) -> PlacementRect:
    """Random rectangle with sides in side_range, kept inside the terrain.

    Sides larger than the terrain extent are clamped (and flagged) so
    every ground-height query inside the rectangle stays valid.
    """
    x0, y0, x1, y1 = terrain.extent
    avail_x = x1 - x0
    avail_y = y1 - y0
    side_x = float(rng.uniform(side_range[0], side_range[1]))
    side_y = float(rng.uniform(side_range[0], side_range[1]))
    clamped = side_x > avail_x or side_y > avail_y
    side_x = min(side_x, avail_x)
    side_y = min(side_y, avail_y)
    cx = float(rng.uniform(x0 + side_x / 2, x1 - side_x / 2)) if side_x < avail_x else (x0 + x1) / 2
    cy = float(rng.uniform(y0 + side_y / 2, y1 - side_y / 2)) if side_y < avail_y else (y0 + y1) / 2
    return PlacementRect(center=(cx, cy), side_x=side_x, side_y=side_y, clamped=clamped)


def sample_instance_params(
    catalog, rng: np.random.Generator, scale_range=(0.4, 1.0)
) -> tuple[int, int, float, float]:
    """(model index, animation frame, scale, yaw in [0, 360))."""
    if not catalog:
        raise ValueError("catalog is empty")
    model_idx = int(rng.integers(0, len(catalog))) if len(catalog) > 1 else 0
    frame_idx = int(rng.integers(0, catalog[model_idx].total_frames))
    scale = float(rng.uniform(scale_range[0], scale_range[1]))
    yaw = float(rng.uniform(0.0, 360.0))
    return model_idx, frame_idx, scale, yaw


class _CollisionSet:
    """Grow-only buffer of placed boxes with a sphere prefilter."""

    def __init__(self, capacity: int):
        self.n = 0
        self.centers = np.empty((capacity, 3))
        self.halves = np.empty((capacity, 3))
        self.rots = np.empty((capacity, 3, 3))
        self.radii = np.empty(capacity)

    def collides(self, center, half, rot) -> bool:
        if self.n == 0:
            return False
        r = float(np.linalg.norm(half))
        d2 = np.einsum(
            "ij,ij->i",
            self.centers[: self.n] - center,
            self.centers[: self.n] - center,
        )
        near = d2 <= (self.radii[: self.n] + r) ** 2
        if not near.any():
            return False
        idx = np.nonzero(near)[0]
        mask = obb_overlap_mask(
            center, half, rot, self.centers[idx], self.halves[idx], self.rots[idx]
        )
        return bool(mask.any())

    def add(self, center, half, rot):
        self.centers[self.n] = center
        self.halves[self.n] = half
        self.rots[self.n] = rot
        self.radii[self.n] = np.linalg.norm(half)
        self.n += 1


def place_zebras(scene: Scene, n_requested: int, rng: np.random.Generator) -> PlacementOutcome:
    """Iteratively place n_requested animals inside a sampled rectangle.

    Each candidate gets sampled parameters and a uniform (x, y); its z
    comes from the terrain so feet touch the ground. A candidate whose
    box intersects any already retained box is retried up to the
    configured budget (position redrawn, parameters kept) and removed if
    it still collides. Instances keep upright poses: yaw only.
    """
    if n_requested < 0:
        raise ValueError(f"n_requested must be nonnegative, got {n_requested}")
    cfg = scene.config
    rect = sample_rectangle(scene.terrain, rng, cfg.rect_side_range)
    x0, y0, x1, y1 = rect.bounds

    retained: list[PlacedInstance] = []
    placed = _CollisionSet(n_requested) if n_requested else None
    removed = 0
    for _ in range(n_requested):
        model_idx, frame_idx, scale, yaw = sample_instance_params(
            scene.catalog, rng, cfg.scale_range
        )
        model = scene.catalog[model_idx]
        canonical = model.frames[frame_idx].obb
        rot = Rotation.from_yaw_deg(yaw)
        ok = False
        for _attempt in range(cfg.placement_retries + 1):
            x = float(rng.uniform(x0, x1))
            y = float(rng.uniform(y0, y1))
            z = scene.terrain.height_at(x, y)
            pos = Vec3(x, y, z)
            obb = canonical.transformed(scale, rot, pos)
            if not placed.collides(
                obb.center.as_array(), obb.half_extents, obb.orientation.as_matrix()
            ):
                ok = True
                break
        if ok:
            inst = PlacedInstance(len(retained) + 1, model, frame_idx, scale, pos, yaw, obb)
            retained.append(inst)
            placed.add(obb.center.as_array(), obb.half_extents, obb.orientation.as_matrix())
        else:
            removed += 1
    return PlacementOutcome(retained=retained, removed=removed, rect=rect)
