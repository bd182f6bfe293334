"""Aerial capture: time-of-day model, camera pose sampling (far and near
strategies), and the generation loop that produces snapshot batches.

RNG streams are keyed off the master seed per (strategy, environment,
purpose) so placements, counts, times and each camera index draw from
independent reproducible sequences. Camera draws happen in a fixed
order: position components first, then roll, then yaw jitter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SceneConfig
from .geometry import Rotation, Vec3, bearing_deg, pitch_toward
from .placement import PlacementOutcome, place_zebras
from .scene import PlacedInstance, Scene

STRATEGIES = ("far", "near")

# spawn-key namespaces for derived RNG streams
_NS_TERRAIN = 0
_NS_CATALOG = 1
_NS_COUNT = 2
_NS_PLACEMENT = 3
_NS_TIME = 4
_NS_CAMERA = 5


class CaptureError(ValueError):
    """Invalid capture input (empty instance set, unknown strategy, ...)."""


@dataclass(frozen=True)
class TimeOfDay:
    hour: float

    def __post_init__(self):
        if not 0.0 <= self.hour < 24.0:
            raise CaptureError(f"hour must be in [0, 24), got {self.hour}")


def sample_time_of_day(
    rng: np.random.Generator, day_range=(5.0, 20.0), day_fraction=0.9
) -> TimeOfDay:
    """Mixture: day_fraction of draws uniform in day_range, rest outside."""
    lo, hi = day_range
    if rng.random() < day_fraction:
        return TimeOfDay(float(rng.uniform(lo, hi)))
    rest = 24.0 - (hi - lo)
    u = float(rng.uniform(0.0, rest))
    hour = u if u < lo else u + (hi - lo)
    return TimeOfDay(hour % 24.0)


def sun_direction(t: TimeOfDay) -> np.ndarray:
    """Unit vector toward the sun for a simple east-to-west solar arc.

    Elevation is 90 * sin(pi * (hour - 6) / 12) degrees (zenith at noon,
    below the horizon before 6 and after 18); azimuth sweeps from east
    (+x) at 6 to west (-x) at 18.
    """
    elev = math.radians(max(-90.0, min(90.0, 90.0 * math.sin(math.pi * (t.hour - 6.0) / 12.0))))
    azim = math.pi * (t.hour - 6.0) / 12.0
    ce = math.cos(elev)
    return np.array([ce * math.cos(azim), ce * math.sin(azim), math.sin(elev)])


def compute_pivot(instances: list[PlacedInstance]) -> Vec3:
    """Arithmetic mean of instance positions."""
    if not instances:
        raise CaptureError("cannot compute a pivot for zero instances")
    acc = np.zeros(3)
    for inst in instances:
        acc += inst.position.as_array()
    return Vec3.from_array(acc / len(instances))


@dataclass(frozen=True)
class CameraPose:
    position: Vec3
    roll_deg: float
    pitch_deg: float
    yaw_deg: float
    strategy: str

    def rotation(self) -> Rotation:
        return Rotation.from_rpy_deg(self.roll_deg, self.pitch_deg, self.yaw_deg)

    def to_record(self) -> dict:
        return {
            "position": [self.position.x, self.position.y, self.position.z],
            "roll_deg": self.roll_deg,
            "pitch_deg": self.pitch_deg,
            "yaw_deg": self.yaw_deg,
            "strategy": self.strategy,
        }


def _aim(pivot: Vec3, pos: Vec3, roll: float, jitter: float, strategy: str) -> CameraPose:
    yaw = bearing_deg(pos, pivot) + jitter
    pitch = pitch_toward(pivot, pos)
    return CameraPose(pos, roll, pitch, yaw, strategy)


def sample_camera_far(pivot: Vec3, cfg: SceneConfig, rng: np.random.Generator) -> CameraPose:
    """General strategy: planar offset from the pivot, aimed back at it."""
    dx = float(rng.uniform(*cfg.planar_offset_range))
    dy = float(rng.uniform(*cfg.planar_offset_range))
    dz = float(rng.uniform(*cfg.height_offset_range))
    roll = float(rng.uniform(*cfg.roll_range))
    jitter = float(rng.uniform(*cfg.yaw_jitter_far_range))
    pos = Vec3(pivot.x + dx, pivot.y + dy, pivot.z + dz)
    return _aim(pivot, pos, roll, jitter, "far")


def sample_camera_near(
    instances: list[PlacedInstance], cfg: SceneConfig, rng: np.random.Generator
) -> CameraPose:
    """Close-up strategy: position inside the herd's expanded x-y box."""
    if not instances:
        raise CaptureError("near strategy needs at least one instance")
    pivot = compute_pivot(instances)
    xs = [inst.position.x for inst in instances]
    ys = [inst.position.y for inst in instances]
    m = cfg.near_box_margin
    x = float(rng.uniform(min(xs) - m, max(xs) + m))
    y = float(rng.uniform(min(ys) - m, max(ys) + m))
    dz = float(rng.uniform(*cfg.height_offset_range))
    roll = float(rng.uniform(*cfg.roll_range))
    jitter = float(rng.uniform(*cfg.yaw_jitter_near_range))
    pos = Vec3(x, y, pivot.z + dz)
    return _aim(pivot, pos, roll, jitter, "near")


def sample_count(rng: np.random.Generator, count_range=(2, 250)) -> int:
    """Requested herd size, uniform over the closed integer range."""
    return int(rng.integers(count_range[0], count_range[1] + 1))


@dataclass(eq=False)
class SnapshotRecord:
    """One (placement, time randomization): shared instances, C cameras."""

    placement_index: int
    randomization_index: int
    time_of_day: TimeOfDay
    cameras: list[CameraPose]
    instances: list[PlacedInstance]
    removed: int
    rect_record: dict

    def to_record(self) -> dict:
        return {
            "placement": self.placement_index,
            "randomization": self.randomization_index,
            "time_of_day": self.time_of_day.hour,
            "cameras": [c.to_record() for c in self.cameras],
            "instances": [i.to_record() for i in self.instances],
            "removed": self.removed,
            "rect": self.rect_record,
        }


@dataclass(eq=False)
class GenerationRun:
    """All snapshots of one environment under one strategy."""

    environment_id: int
    strategy: str
    placements: int
    time_randomizations: int
    cameras_per_snapshot: int
    snapshots: list[SnapshotRecord]
    scene: Scene

    @property
    def frame_count(self) -> int:
        return len(self.snapshots) * self.cameras_per_snapshot

    def iter_frames(self):
        """Yield (frame_id, snapshot, camera_index) in a fixed order."""
        for snap in self.snapshots:
            for c in range(self.cameras_per_snapshot):
                fid = (
                    f"e{self.environment_id:02d}_p{snap.placement_index:03d}"
                    f"_t{snap.randomization_index}_c{c}"
                )
                yield fid, snap, c

    def to_record(self) -> dict:
        return {
            "environment": self.environment_id,
            "strategy": self.strategy,
            "placements": self.placements,
            "time_randomizations": self.time_randomizations,
            "cameras_per_snapshot": self.cameras_per_snapshot,
            "snapshots": [s.to_record() for s in self.snapshots],
        }


def _stream(seed, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class _Anchor:
    """Stand-in camera target for a snapshot with zero retained animals."""

    position: Vec3


def _rect_anchor(scene: Scene, outcome: PlacementOutcome) -> _Anchor:
    cx, cy = outcome.rect.center
    return _Anchor(Vec3(cx, cy, scene.terrain.height_at(cx, cy)))


def run_generation(
    cfg: SceneConfig, seed: int, strategy: str = "far", environments=None
) -> list[GenerationRun]:
    """Produce one GenerationRun per environment for one camera strategy.

    Per environment: P placements, each with a freshly sampled herd size;
    per placement: T time randomizations, each re-sampling the time of day
    and all C camera poses. Every snapshot therefore yields C frames and
    each environment P*T*C in total.
    """
    if strategy not in STRATEGIES:
        raise CaptureError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
    s_idx = STRATEGIES.index(strategy)
    env_ids = list(range(cfg.environments)) if environments is None else list(environments)

    catalog = None
    runs = []
    for env in env_ids:
        scene = Scene.from_config(
            cfg,
            terrain_seed=np.random.SeedSequence(seed, spawn_key=(_NS_TERRAIN, env)),
            catalog_seed=np.random.SeedSequence(seed, spawn_key=(_NS_CATALOG,)),
            catalog=catalog,
        )
        catalog = scene.catalog  # identical for every environment; built once
        rng_count = _stream(seed, _NS_COUNT, s_idx, env)
        rng_place = _stream(seed, _NS_PLACEMENT, s_idx, env)
        rng_time = _stream(seed, _NS_TIME, s_idx, env)
        rng_cams = [
            _stream(seed, _NS_CAMERA, s_idx, env, c) for c in range(cfg.cameras_per_snapshot)
        ]

        snapshots = []
        for p in range(cfg.placements_per_environment):
            n = sample_count(rng_count, cfg.count_range)
            outcome: PlacementOutcome = place_zebras(scene, n, rng_place)
            scene.instances = outcome.retained
            anchor = outcome.retained or [_rect_anchor(scene, outcome)]
            for t in range(cfg.time_randomizations):
                tod = sample_time_of_day(rng_time, cfg.day_hour_range, cfg.day_fraction)
                if strategy == "far":
                    pivot = compute_pivot(anchor)
                    poses = [
                        sample_camera_far(pivot, cfg, rng_cams[c])
                        for c in range(cfg.cameras_per_snapshot)
                    ]
                else:
                    poses = [
                        sample_camera_near(anchor, cfg, rng_cams[c])
                        for c in range(cfg.cameras_per_snapshot)
                    ]
                snapshots.append(
                    SnapshotRecord(
                        placement_index=p,
                        randomization_index=t,
                        time_of_day=tod,
                        cameras=poses,
                        instances=outcome.retained,
                        removed=outcome.removed,
                        rect_record=outcome.rect.to_record(),
                    )
                )
        runs.append(
            GenerationRun(
                environment_id=env,
                strategy=strategy,
                placements=cfg.placements_per_environment,
                time_randomizations=cfg.time_randomizations,
                cameras_per_snapshot=cfg.cameras_per_snapshot,
                snapshots=snapshots,
                scene=scene,
            )
        )
    return runs
