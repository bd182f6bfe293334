"""Run configuration: randomization ranges, camera intrinsics, assets.

Configs are plain JSON; absent fields fall back to the defaults below.
Validation errors name the offending field path.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class CameraConfig:
    width: int = 1920
    height: int = 1080
    fov_horizontal_deg: float = 90.0


@dataclass(frozen=True)
class TerrainConfig:
    extent: float = 500.0
    cell_size: float = 2.0
    amplitude: float = 3.0
    hill_scale: float = 120.0
    base_height: float = 0.0
    heightfield_raster: str | None = None
    heightfield_meta: str | None = None


@dataclass(frozen=True)
class AssetConfig:
    sequences: int = 34
    total_frames: int = 888
    frames_per_sequence: int | None = None
    variants: int = 1


@dataclass(frozen=True)
class SceneConfig:
    name: str = "default"
    environments: int = 10
    placements_per_environment: int = 200
    time_randomizations: int = 3
    cameras_per_snapshot: int = 3
    count_range: tuple[int, int] = (2, 250)
    rect_side_range: tuple[float, float] = (40.0, 120.0)
    scale_range: tuple[float, float] = (0.4, 1.0)
    height_offset_range: tuple[float, float] = (5.0, 20.0)
    planar_offset_range: tuple[float, float] = (-100.0, 100.0)
    roll_range: tuple[float, float] = (-10.0, 10.0)
    yaw_jitter_far_range: tuple[float, float] = (-30.0, 30.0)
    yaw_jitter_near_range: tuple[float, float] = (-15.0, 15.0)
    near_box_margin: float = 5.0
    day_hour_range: tuple[float, float] = (5.0, 20.0)
    day_fraction: float = 0.9
    placement_retries: int = 0
    min_visible_pixels: int = 9
    far_clip: float = 400.0
    save_vertices: bool = True
    camera: CameraConfig = field(default_factory=CameraConfig)
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    assets: AssetConfig = field(default_factory=AssetConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in (
            "count_range",
            "rect_side_range",
            "scale_range",
            "height_offset_range",
            "planar_offset_range",
            "roll_range",
            "yaw_jitter_far_range",
            "yaw_jitter_near_range",
            "day_hour_range",
        ):
            d[key] = list(d[key])
        return d

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def _check(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _as_range(value, path: str, kind=float):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{path}: expected [low, high], got {value!r}")
    try:
        lo, hi = kind(value[0]), kind(value[1])
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: bounds must be numbers, got {value!r}") from None
    _check(lo <= hi, path, f"lower bound {lo} exceeds upper bound {hi}")
    return (lo, hi)


def _build_nested(cls, data: dict, path: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    _check(not unknown, path, f"unknown fields {sorted(unknown)}")
    return cls(**{k: v for k, v in data.items() if k in known})


def config_from_dict(data: dict) -> SceneConfig:
    """Validate a plain dict (e.g. parsed JSON) into a SceneConfig."""
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    known = {f.name for f in fields(SceneConfig)}
    unknown = set(data) - known
    _check(not unknown, "config", f"unknown fields {sorted(unknown)}")

    kwargs = {}
    for key in (
        "rect_side_range",
        "scale_range",
        "height_offset_range",
        "planar_offset_range",
        "roll_range",
        "yaw_jitter_far_range",
        "yaw_jitter_near_range",
        "day_hour_range",
    ):
        if key in data:
            kwargs[key] = _as_range(data[key], key)
    if "count_range" in data:
        kwargs["count_range"] = _as_range(data["count_range"], "count_range", kind=int)
    for key in (
        "name",
        "environments",
        "placements_per_environment",
        "time_randomizations",
        "cameras_per_snapshot",
        "near_box_margin",
        "day_fraction",
        "placement_retries",
        "min_visible_pixels",
        "far_clip",
        "save_vertices",
    ):
        if key in data:
            kwargs[key] = data[key]
    if "camera" in data:
        kwargs["camera"] = _build_nested(CameraConfig, data["camera"], "camera")
    if "terrain" in data:
        kwargs["terrain"] = _build_nested(TerrainConfig, data["terrain"], "terrain")
    if "assets" in data:
        kwargs["assets"] = _build_nested(AssetConfig, data["assets"], "assets")

    cfg = SceneConfig(**kwargs)
    validate_config(cfg)
    return cfg


def validate_config(cfg: SceneConfig) -> None:
    _check(cfg.environments >= 1, "environments", "must be at least 1")
    _check(cfg.placements_per_environment >= 1, "placements_per_environment", "must be at least 1")
    _check(cfg.time_randomizations >= 1, "time_randomizations", "must be at least 1")
    _check(cfg.cameras_per_snapshot >= 1, "cameras_per_snapshot", "must be at least 1")
    _check(cfg.count_range[0] >= 0, "count_range", "lower bound must be nonnegative")
    _check(cfg.rect_side_range[0] > 0, "rect_side_range", "sides must be positive")
    _check(cfg.scale_range[0] > 0, "scale_range", "scales must be positive")
    _check(
        0.0 <= cfg.day_fraction <= 1.0,
        "day_fraction",
        f"must be within [0, 1], got {cfg.day_fraction}",
    )
    _check(
        0.0 <= cfg.day_hour_range[0] and cfg.day_hour_range[1] < 24.0,
        "day_hour_range",
        "hours must lie in [0, 24)",
    )
    _check(cfg.near_box_margin >= 0, "near_box_margin", "must be nonnegative")
    _check(cfg.placement_retries >= 0, "placement_retries", "must be nonnegative")
    _check(cfg.min_visible_pixels >= 1, "min_visible_pixels", "must be at least 1")
    _check(cfg.far_clip > 0, "far_clip", "must be positive")
    _check(cfg.camera.width >= 1, "camera.width", "must be at least 1")
    _check(cfg.camera.height >= 1, "camera.height", "must be at least 1")
    _check(
        0.0 < cfg.camera.fov_horizontal_deg < 180.0,
        "camera.fov_horizontal_deg",
        "must be in (0, 180)",
    )
    _check(cfg.terrain.extent > 0, "terrain.extent", "must be positive")
    _check(cfg.terrain.cell_size > 0, "terrain.cell_size", "must be positive")
    _check(cfg.terrain.amplitude >= 0, "terrain.amplitude", "must be nonnegative")
    _check(cfg.terrain.hill_scale > 0, "terrain.hill_scale", "must be positive")
    _check(
        (cfg.terrain.heightfield_raster is None) == (cfg.terrain.heightfield_meta is None),
        "terrain.heightfield_raster",
        "raster and meta paths must be given together",
    )
    _check(cfg.assets.sequences >= 1, "assets.sequences", "must be at least 1")
    _check(cfg.assets.variants >= 1, "assets.variants", "must be at least 1")
    if cfg.assets.frames_per_sequence is not None:
        _check(
            cfg.assets.frames_per_sequence >= 1,
            "assets.frames_per_sequence",
            "must be at least 1",
        )
    else:
        _check(
            cfg.assets.total_frames >= cfg.assets.sequences,
            "assets.total_frames",
            f"must cover at least one frame per sequence ({cfg.assets.sequences})",
        )


def load_scene_config(path) -> SceneConfig:
    """Load and validate a JSON config file; absent fields use defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return config_from_dict(data)


def save_scene_config(cfg: SceneConfig, path) -> None:
    atomic_write_text(path, json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
