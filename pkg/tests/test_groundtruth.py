import math
from dataclasses import dataclass

import numpy as np
import pytest

from zebrasynth.capture import SnapshotRecord, TimeOfDay, run_generation
from zebrasynth.config import AssetConfig, CameraConfig, SceneConfig, TerrainConfig
from zebrasynth.geometry import CameraModel, Rotation, Vec3, obb_from_vertices
from zebrasynth.groundtruth import (
    DepthMap,
    InstanceMap,
    bbox_2d,
    boxes_from_instance_map,
    camera_for_pose,
    frame_ground_truth,
    load_depth_png,
    load_instance_png,
    rasterize,
    render_preview,
    save_depth_png,
    save_instance_png,
    save_preview_png,
)
from zebrasynth.quadruped import build_catalog
from zebrasynth.scene import make_instance
from zebrasynth.terrain import Terrain

from oracles import raycast_depths


@dataclass(eq=False)
class FakeModel:
    faces: np.ndarray


@dataclass(eq=False)
class FakeInst:
    """Bare triangle soup standing in for a placed instance."""

    instance_id: int
    verts: np.ndarray
    model: FakeModel

    def __post_init__(self):
        self.obb = obb_from_vertices(self.verts)

    def world_vertices(self):
        return self.verts


def quad_instance(instance_id, corners):
    """Two-triangle quad from 4 corner points (in order)."""
    verts = np.asarray(corners, dtype=float)
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    return FakeInst(instance_id, verts, FakeModel(faces))


def identity_cam(width=160, height=90, position=Vec3(0, 0, 0)):
    return CameraModel(
        position=position,
        orientation=Rotation.identity(),
        width=width,
        height=height,
        fov_horizontal_deg=90.0,
    )


class TestRasterize:
    def test_empty_scene(self):
        cam = identity_cam()
        depth, ids = rasterize([], None, cam)
        assert np.isinf(depth.values).all()
        assert (ids.ids == 0).all()

    def test_z_buffer_near_wins(self):
        cam = identity_cam()
        near = quad_instance(1, [(2, 1, -1), (2, -1, -1), (2, -1, 1), (2, 1, 1)])
        far = quad_instance(2, [(5, 2, -2), (5, -2, -2), (5, -2, 2), (5, 2, 2)])
        depth, ids = rasterize([far, near], None, cam)
        covered_by_near = ids.ids == 1
        assert covered_by_near.any()
        # Everywhere the near quad is drawn, depth is 2; the far quad only
        # survives outside it.
        assert np.allclose(depth.values[covered_by_near], 2.0)
        assert (ids.ids[np.isclose(depth.values, 5.0)] == 2).all()

    def test_left_half_square_pixel_count(self):
        cam = identity_cam(width=160, height=90)
        f = cam.focal_px
        d = 10.0
        # Corners chosen so the projection covers u in [0, 80], v in [0, 90].
        y_left = (80.0 - 0.0) * d / f
        y_mid = 0.0
        z_top = (45.0 - 0.0) * d / f
        z_bot = (45.0 - 90.0) * d / f
        quad = quad_instance(
            1,
            [(d, y_left, z_bot), (d, y_mid, z_bot), (d, y_mid, z_top), (d, y_left, z_top)],
        )
        _, ids = rasterize([quad], None, cam)
        count = int(np.count_nonzero(ids.ids == 1))
        assert abs(count - 80 * 90) <= 90  # at most one pixel column off

    def test_depth_is_optical_axis_distance(self):
        cam = identity_cam()
        tilted = quad_instance(1, [(4, 2, -2), (6, -2, -2), (6, -2, 2), (4, 2, 2)])
        depth, ids = rasterize([tilted], None, cam)
        hit = ids.ids == 1
        assert hit.any()
        assert depth.values[hit].min() >= 4.0 - 1e-9
        assert depth.values[hit].max() <= 6.0 + 1e-9

    def test_triangle_crossing_near_plane_is_clipped(self):
        cam = identity_cam()
        crossing = FakeInst(
            1,
            np.array([[-1.0, 0.0, -0.5], [3.0, -2.0, -0.5], [3.0, 2.0, -0.5]]),
            FakeModel(np.array([[0, 1, 2]], dtype=np.int32)),
        )
        depth, ids = rasterize([crossing], None, cam)
        hit = ids.ids == 1
        assert hit.any()
        assert np.isfinite(depth.values[hit]).all()
        assert (depth.values[hit] > 0).all()

    def test_terrain_writes_depth_with_zero_id(self):
        terrain = Terrain(origin=(-50, -50), cell_size=5.0, heights=np.zeros((21, 21)))
        cam = CameraModel(
            position=Vec3(0, 0, 10),
            orientation=Rotation.from_rpy_deg(0, -90, 0),
            width=64,
            height=64,
            fov_horizontal_deg=90.0,
        )
        depth, ids = rasterize([], terrain, cam)
        center = depth.values[32, 32]
        assert center == pytest.approx(10.0, abs=1e-9)
        assert (ids.ids == 0).all()


@pytest.fixture(scope="module")
def desk_run():
    cfg = SceneConfig(
        environments=1,
        placements_per_environment=3,
        time_randomizations=1,
        cameras_per_snapshot=2,
        count_range=(4, 10),
        terrain=TerrainConfig(extent=240.0, cell_size=4.0, amplitude=2.0),
        assets=AssetConfig(sequences=3, total_frames=18),
        camera=CameraConfig(width=160, height=90),
        far_clip=300.0,
    )
    runs = run_generation(cfg, seed=7, strategy="near")
    return cfg, runs[0]


class TestFrameGroundTruth:
    def test_modalities_present_and_aligned(self, desk_run):
        cfg, run = desk_run
        snap = run.snapshots[0]
        gt = frame_ground_truth(snap, 0, run.scene.terrain, cfg)
        assert gt.depth.shape == (90, 160)
        assert gt.instance_map.shape == (90, 160)
        snapshot_ids = {i.instance_id for i in snap.instances}
        map_ids = set(np.unique(gt.instance_map.ids)) - {0}
        box_ids = {b.instance_id for b in gt.boxes}
        assert box_ids <= map_ids <= snapshot_ids
        for box in gt.boxes:
            region = gt.instance_map.ids[box.y_min : box.y_max, box.x_min : box.x_max]
            assert (region == box.instance_id).sum() == box.pixel_count

    def test_boxes_are_pixel_tight(self, desk_run):
        cfg, run = desk_run
        for snap in run.snapshots:
            gt = frame_ground_truth(snap, 0, run.scene.terrain, cfg)
            for box in gt.boxes:
                ids = gt.instance_map.ids
                assert (ids[box.y_min, box.x_min : box.x_max] == box.instance_id).any()
                assert (ids[box.y_max - 1, box.x_min : box.x_max] == box.instance_id).any()
                assert (ids[box.y_min : box.y_max, box.x_min] == box.instance_id).any()
                assert (ids[box.y_min : box.y_max, box.x_max - 1] == box.instance_id).any()

    def test_depth_matches_raycast_oracle(self, desk_run):
        cfg, run = desk_run
        snap = run.snapshots[1]
        gt = frame_ground_truth(snap, 1, run.scene.terrain, cfg)
        cam = gt.camera
        tris = [inst.world_vertices()[inst.model.faces] for inst in snap.instances]
        mesh = run.scene.terrain.mesh()
        tris.append(mesh.vertices[mesh.faces])
        tris = np.concatenate(tris)
        ys, xs = np.nonzero(np.isfinite(gt.depth.values))
        rng = np.random.default_rng(0)
        pick = rng.choice(len(ys), size=min(100, len(ys)), replace=False)
        f = cam.focal_px
        cx, cy = cam.principal
        dirs_cam = np.column_stack(
            [
                np.ones(len(pick)),
                (cx - (xs[pick] + 0.5)) / f,
                (cy - (ys[pick] + 0.5)) / f,
            ]
        )
        dirs = dirs_cam @ cam.orientation.as_matrix().T
        expect = raycast_depths(cam.position.as_array(), dirs, tris)
        got = gt.depth.values[ys[pick], xs[pick]]
        np.testing.assert_allclose(got, expect, atol=1e-4)

    def test_joint_visibility_matches_raycast_oracle(self, desk_run):
        cfg, run = desk_run
        snap = next(s for s in run.snapshots if len(s.instances) >= 5)
        gt = frame_ground_truth(snap, 0, run.scene.terrain, cfg)
        cam = gt.camera
        tris = [inst.world_vertices()[inst.model.faces] for inst in snap.instances]
        mesh = run.scene.terrain.mesh()
        tris.append(mesh.vertices[mesh.faces])
        tris = np.concatenate(tris)
        f = cam.focal_px
        cx, cy = cam.principal
        for inst_gt in gt.instances:
            for k in range(len(inst_gt.joints_px)):
                u, v, d = inst_gt.joints_px[k]
                if not np.isfinite(u):
                    assert not inst_gt.joints_visible[k]
                    continue
                ix, iy = int(math.floor(u)), int(math.floor(v))
                if not (0 <= ix < cam.width and 0 <= iy < cam.height):
                    assert not inst_gt.joints_visible[k]
                    continue
                ray_cam = np.array([1.0, (cx - (ix + 0.5)) / f, (cy - (iy + 0.5)) / f])
                ray = ray_cam @ cam.orientation.as_matrix().T
                surf = raycast_depths(cam.position.as_array(), ray[None], tris)[0]
                expect_visible = d <= surf + 0.10
                assert inst_gt.joints_visible[k] == expect_visible

    def test_zero_instances_full_maps(self, desk_run):
        cfg, run = desk_run
        base = run.snapshots[0]
        empty = SnapshotRecord(
            placement_index=0,
            randomization_index=0,
            time_of_day=base.time_of_day,
            cameras=base.cameras,
            instances=[],
            removed=0,
            rect_record=base.rect_record,
        )
        gt = frame_ground_truth(empty, 0, run.scene.terrain, cfg)
        assert gt.boxes == []
        assert gt.depth.shape == (90, 160)
        assert (gt.instance_map.ids == 0).all()


class TestBbox2d:
    def test_instance_outside_frustum(self):
        cam = identity_cam()
        behind = quad_instance(1, [(-5, 1, -1), (-5, -1, -1), (-5, -1, 1), (-5, 1, 1)])
        depth, ids = rasterize([behind], None, cam)
        assert bbox_2d(behind, cam, ids) is None

    def test_unoccluded_box_matches_vertex_projection(self):
        catalog = build_catalog(n_variants=1, n_sequences=2, total_frames=8, seed=1)
        inst = make_instance(1, catalog[0], 3, 0.9, Vec3(8.0, 0.0, 0.0), 30.0)
        cam = identity_cam(position=Vec3(0, 0, 1.2))
        depth, ids = rasterize([inst], None, cam)
        box = bbox_2d(inst, cam, ids)
        assert box is not None
        uv, _, front = cam.project_array(inst.world_vertices())
        assert front.all()
        assert box.x_min >= math.floor(uv[:, 0].min()) - 1
        assert box.x_max <= math.ceil(uv[:, 0].max()) + 1
        assert box.y_min >= math.floor(uv[:, 1].min()) - 1
        assert box.y_max <= math.ceil(uv[:, 1].max()) + 1
        assert box.width >= (uv[:, 0].max() - uv[:, 0].min()) - 2
        assert box.height >= (uv[:, 1].max() - uv[:, 1].min()) - 2

    def test_mostly_hidden_instance_below_min_pixels(self):
        cam = identity_cam()
        target = quad_instance(
            1, [(10, 0.3, -2), (10, -0.3, -2), (10, -0.3, 2), (10, 0.3, 2)]
        )
        # Occluder hides everything except the target's topmost pixel row
        # (wall top at z=0.95 projects to v=29.8, target top to v=29).
        wall = quad_instance(2, [(5, 3, -3), (5, -3, -3), (5, -3, 0.95), (5, 3, 0.95)])
        depth, ids = rasterize([target, wall], None, cam)
        visible = int(np.count_nonzero(ids.ids == 1))
        assert 0 < visible < 9
        assert bbox_2d(target, cam, ids) is None
        unobstructed = rasterize([target], None, cam)[1]
        assert bbox_2d(target, cam, unobstructed) is not None

    def test_matches_grouped_boxes(self, ):
        rng = np.random.default_rng(3)
        ids = InstanceMap(rng.integers(0, 5, size=(40, 50)).astype(np.int32))
        grouped = boxes_from_instance_map(ids, min_pixels=9)
        for iid in range(1, 5):
            fake = FakeInst(iid, np.zeros((3, 3)), FakeModel(np.zeros((1, 3), dtype=np.int32)))
            assert bbox_2d(fake, None, ids) == grouped.get(iid)


class TestPngIo:
    def test_depth_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        vals = rng.uniform(0.1, 60.0, size=(32, 48))
        vals[0, :] = np.inf
        dm = DepthMap(vals)
        save_depth_png(dm, tmp_path / "d.png")
        back = load_depth_png(tmp_path / "d.png")
        assert np.isinf(back.values[0]).all()
        finite = np.isfinite(vals)
        np.testing.assert_allclose(back.values[finite], vals[finite], atol=5e-4)

    def test_depth_clamps_far(self, tmp_path):
        dm = DepthMap(np.full((4, 4), 100.0))
        save_depth_png(dm, tmp_path / "d.png")
        back = load_depth_png(tmp_path / "d.png")
        assert (back.values == 65.535).all()

    def test_instance_round_trip(self, tmp_path):
        ids = InstanceMap(np.arange(12, dtype=np.int32).reshape(3, 4) * 17)
        save_instance_png(ids, tmp_path / "i.png")
        back = load_instance_png(tmp_path / "i.png")
        assert (back.ids == ids.ids).all()

    def test_preview_shape_and_dtype(self, desk_run, tmp_path):
        cfg, run = desk_run
        rgb = render_preview(run.snapshots[0], 0, run.scene.terrain, cfg)
        assert rgb.shape == (90, 160, 3)
        assert rgb.dtype == np.uint8
        save_preview_png(rgb, tmp_path / "p.png")
        assert (tmp_path / "p.png").exists()

    def test_preview_night_darker(self, desk_run):
        cfg, run = desk_run
        snap = run.snapshots[0]
        day = SnapshotRecord(
            snap.placement_index, snap.randomization_index, TimeOfDay(12.0),
            snap.cameras, snap.instances, snap.removed, snap.rect_record,
        )
        night = SnapshotRecord(
            snap.placement_index, snap.randomization_index, TimeOfDay(0.5),
            snap.cameras, snap.instances, snap.removed, snap.rect_record,
        )
        rgb_day = render_preview(day, 0, run.scene.terrain, cfg)
        rgb_night = render_preview(night, 0, run.scene.terrain, cfg)
        assert rgb_night.mean() < rgb_day.mean()
