"""Scene container: terrain, asset catalog, and the instances placed in it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SceneConfig
from .geometry import Obb, Rotation, Vec3
from .quadruped import AssetModel, build_catalog
from .terrain import Terrain, generate_terrain, load_heightfield


@dataclass(frozen=True, eq=False)
class PlacedInstance:
    """One placed animal: sampled parameters plus its world-space box.

    World-space joints and vertices are derived on demand from the model
    frame data under p -> position + R_yaw(scale * p).
    """

    instance_id: int
    model: AssetModel
    frame_index: int
    scale: float
    position: Vec3
    yaw_deg: float
    obb: Obb

    @property
    def model_id(self) -> str:
        return self.model.model_id

    def rotation(self) -> Rotation:
        return Rotation.from_yaw_deg(self.yaw_deg)

    def _transform(self, points: np.ndarray) -> np.ndarray:
        return self.position.as_array() + self.rotation().apply(self.scale * points)

    def world_joints(self) -> np.ndarray:
        return self._transform(self.model.frames[self.frame_index].joints)

    def world_vertices(self) -> np.ndarray:
        return self._transform(self.model.frames[self.frame_index].vertices)

    def to_record(self) -> dict:
        return {
            "id": self.instance_id,
            "model": self.model_id,
            "frame": self.frame_index,
            "scale": self.scale,
            "position": [self.position.x, self.position.y, self.position.z],
            "yaw_deg": self.yaw_deg,
            "obb": {
                "center": self.obb.center.as_array().tolist(),
                "half_extents": self.obb.half_extents.tolist(),
                "quat": self.obb.orientation.quat.tolist(),
            },
        }


def make_instance(
    instance_id: int,
    model: AssetModel,
    frame_index: int,
    scale: float,
    position: Vec3,
    yaw_deg: float,
) -> PlacedInstance:
    canonical = model.frames[frame_index].obb
    world_obb = canonical.transformed(scale, Rotation.from_yaw_deg(yaw_deg), position)
    return PlacedInstance(instance_id, model, frame_index, scale, position, yaw_deg, world_obb)


@dataclass(eq=False)
class Scene:
    """Mutable between snapshots: instances are replaced per placement."""

    terrain: Terrain
    catalog: list[AssetModel]
    config: SceneConfig
    instances: list[PlacedInstance] = field(default_factory=list)

    @classmethod
    def from_config(
        cls,
        cfg: SceneConfig,
        terrain_seed=0,
        catalog_seed=0,
        catalog: list[AssetModel] | None = None,
    ) -> "Scene":
        tc = cfg.terrain
        if tc.heightfield_raster is not None:
            terrain = load_heightfield(tc.heightfield_raster, tc.heightfield_meta)
        else:
            terrain = generate_terrain(
                extent=tc.extent,
                cell_size=tc.cell_size,
                amplitude=tc.amplitude,
                hill_scale=tc.hill_scale,
                base_height=tc.base_height,
                seed=terrain_seed,
            )
        if catalog is None:
            catalog = build_catalog(
                n_variants=cfg.assets.variants,
                n_sequences=cfg.assets.sequences,
                frames_per_sequence=cfg.assets.frames_per_sequence,
                total_frames=cfg.assets.total_frames,
                seed=catalog_seed,
            )
        return cls(terrain=terrain, catalog=catalog, config=cfg)
