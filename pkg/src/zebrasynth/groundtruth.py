"""Geometric ground truth per frame: z-buffered depth and instance maps,
tight 2D boxes over visible pixels, world-space 3D boxes, and projected
joints/vertices with occlusion flags.

The rasterizer is a plain software z-buffer over the instance meshes and
the terrain grid. Depth is the distance along the optical axis,
interpolated perspective-correctly (1/depth is affine in screen space).
Background pixels carry +inf depth and instance id 0; terrain writes
depth but keeps id 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .capture import SnapshotRecord, TimeOfDay, sun_direction
from .config import SceneConfig
from .geometry import CameraModel, Vec3
from .scene import PlacedInstance
from .terrain import Terrain

NEAR_PLANE = 0.05
JOINT_VISIBILITY_TOL = 0.10  # meters of depth slack when flagging occlusion
_FRUSTUM_GUARD = 1.05  # relative widening of culling planes


@dataclass(eq=False)
class DepthMap:
    values: np.ndarray  # (H, W) float64, +inf where nothing was hit

    @property
    def shape(self):
        return self.values.shape


@dataclass(eq=False)
class InstanceMap:
    ids: np.ndarray  # (H, W) int32, 0 = background/terrain

    @property
    def shape(self):
        return self.ids.shape


@dataclass(frozen=True)
class Box2D:
    """Pixel-tight box over visible pixels, [x_min, x_max) x [y_min, y_max)."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int
    instance_id: int
    pixel_count: int

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    def to_record(self) -> dict:
        return {
            "instance": self.instance_id,
            "x_min": self.x_min,
            "y_min": self.y_min,
            "x_max": self.x_max,
            "y_max": self.y_max,
            "pixels": self.pixel_count,
        }


@dataclass(eq=False)
class InstanceGroundTruth:
    instance: PlacedInstance
    joints_world: np.ndarray  # (J, 3)
    joints_px: np.ndarray  # (J, 3) u, v, depth; nan when behind the camera
    joints_visible: np.ndarray  # (J,) bool
    vertices_world: np.ndarray  # (V, 3)
    vertices_px: np.ndarray  # (V, 3)


@dataclass(eq=False)
class FrameGroundTruth:
    camera: CameraModel
    time_of_day: TimeOfDay | None
    depth: DepthMap
    instance_map: InstanceMap
    boxes: list[Box2D]
    instances: list[InstanceGroundTruth]


@dataclass(eq=False)
class _SceneTriangles:
    tris_world: np.ndarray  # (T, 3, 3)
    owners: np.ndarray  # (T,) int32 instance id, 0 for terrain


def _gather_scene(
    instances, terrain: Terrain | None, cam: CameraModel, far_clip: float
) -> _SceneTriangles:
    """Collect world triangles, dropping sources clearly outside the view.

    Culling is sphere-vs-frustum, widened by a guard factor, so anything
    that could touch a pixel nearer than far_clip survives.
    """
    rot = cam.orientation.as_matrix()
    cam_pos = cam.position.as_array()
    f = cam.focal_px
    tx = (cam.width / 2.0) / f * _FRUSTUM_GUARD
    ty = (cam.height / 2.0) / f * _FRUSTUM_GUARD
    nx = 1.0 / math.sqrt(1.0 + tx * tx)
    nz = 1.0 / math.sqrt(1.0 + ty * ty)

    def visible(centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
        pc = (centers - cam_pos) @ rot
        pad = radii + 0.5
        keep = pc[:, 0] + pad > NEAR_PLANE
        keep &= pc[:, 0] - pad < far_clip
        keep &= (pc[:, 0] * tx - np.abs(pc[:, 1])) * nx > -pad
        keep &= (pc[:, 0] * ty - np.abs(pc[:, 2])) * nz > -pad
        return keep

    tri_blocks = []
    owner_blocks = []
    if instances:
        centers = np.array([inst.obb.center.as_array() for inst in instances])
        radii = np.array([np.linalg.norm(inst.obb.half_extents) for inst in instances])
        for k in np.nonzero(visible(centers, radii))[0]:
            inst = instances[k]
            wv = inst.world_vertices()
            tri_blocks.append(wv[inst.model.faces])
            owner_blocks.append(
                np.full(len(inst.model.faces), inst.instance_id, dtype=np.int32)
            )
    if terrain is not None:
        mesh = terrain.mesh()
        keep = visible(mesh.chunk_centers, mesh.chunk_radii)
        for k in np.nonzero(keep)[0]:
            lo, hi = mesh.chunk_ranges[k]
            tri_blocks.append(mesh.vertices[mesh.faces[lo:hi]])
            owner_blocks.append(np.zeros(hi - lo, dtype=np.int32))

    if not tri_blocks:
        return _SceneTriangles(np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int32))
    return _SceneTriangles(np.concatenate(tri_blocks), np.concatenate(owner_blocks))


def _clip_near(tris_cam: np.ndarray):
    """Clip camera-space triangles against the near plane.

    Returns (clipped_tris, src_index); output order follows the input
    order so later z-ties resolve deterministically.
    """
    x = tris_cam[:, :, 0]
    front = x > NEAR_PLANE
    n_front = front.sum(axis=1)
    full = np.nonzero(n_front == 3)[0]
    partial = np.nonzero((n_front == 1) | (n_front == 2))[0]
    if len(partial) == 0:
        return tris_cam[full], full.astype(np.int64)

    pieces = []
    piece_src = []
    for t in partial:
        poly = []
        for k in range(3):
            a = tris_cam[t, k]
            b = tris_cam[t, (k + 1) % 3]
            a_in = a[0] > NEAR_PLANE
            b_in = b[0] > NEAR_PLANE
            if a_in:
                poly.append(a)
            if a_in != b_in:
                s = (NEAR_PLANE - a[0]) / (b[0] - a[0])
                poly.append(a + s * (b - a))
        for k in range(1, len(poly) - 1):
            pieces.append(np.stack([poly[0], poly[k], poly[k + 1]]))
            piece_src.append(t)

    tris = np.concatenate([tris_cam[full], np.asarray(pieces).reshape(-1, 3, 3)])
    src = np.concatenate([full, np.asarray(piece_src, dtype=np.int64)])
    order = np.argsort(src, kind="stable")
    return tris[order], src[order]


def _raster_core(screen: np.ndarray, inv_depth: np.ndarray, src: np.ndarray, width, height):
    """Z-buffer loop; returns (depth, src-triangle index per pixel)."""
    depth = np.full((height, width), np.inf)
    tri_at = np.full((height, width), -1, dtype=np.int64)
    if len(screen) == 0:
        return depth, tri_at
    xs = screen[:, :, 0]
    ys = screen[:, :, 1]
    x_lo = np.maximum(np.ceil(xs.min(axis=1) - 0.5), 0.0)
    x_hi = np.minimum(np.floor(xs.max(axis=1) - 0.5), width - 1.0)
    y_lo = np.maximum(np.ceil(ys.min(axis=1) - 0.5), 0.0)
    y_hi = np.minimum(np.floor(ys.max(axis=1) - 0.5), height - 1.0)
    area = (xs[:, 1] - xs[:, 0]) * (ys[:, 2] - ys[:, 0]) - (ys[:, 1] - ys[:, 0]) * (
        xs[:, 2] - xs[:, 0]
    )
    ok = (x_hi >= x_lo) & (y_hi >= y_lo) & (area != 0.0) & np.isfinite(area)

    for t in np.nonzero(ok)[0]:
        ax, bx, cx = xs[t]
        ay, by, cy = ys[t]
        ix0 = int(x_lo[t])
        ix1 = int(x_hi[t])
        iy0 = int(y_lo[t])
        iy1 = int(y_hi[t])
        px = np.arange(ix0, ix1 + 1) + 0.5
        py = (np.arange(iy0, iy1 + 1) + 0.5)[:, None]
        w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
        w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
        w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        a2 = area[t]
        if a2 < 0.0:
            w0, w1, w2, a2 = -w0, -w1, -w2, -a2
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        qa, qb, qc = inv_depth[t]
        d = a2 / (w0 * qa + w1 * qb + w2 * qc)
        sub = depth[iy0 : iy1 + 1, ix0 : ix1 + 1]
        upd = inside & (d < sub)
        if upd.any():
            sub[upd] = d[upd]
            tri_at[iy0 : iy1 + 1, ix0 : ix1 + 1][upd] = src[t]
    return depth, tri_at


@dataclass(eq=False)
class _RenderResult:
    depth: np.ndarray
    tri_at: np.ndarray  # per-pixel index into the gathered triangle arrays
    scene: _SceneTriangles


def _render(instances, terrain, cam: CameraModel, far_clip: float) -> _RenderResult:
    scene = _gather_scene(instances, terrain, cam, far_clip)
    tris_cam = (scene.tris_world - cam.position.as_array()) @ cam.orientation.as_matrix()
    clipped, src = _clip_near(tris_cam)
    if len(clipped):
        x = clipped[:, :, 0]
        inv_depth = 1.0 / x
        f = cam.focal_px
        cx, cy = cam.principal
        screen = np.empty_like(clipped[:, :, :2])
        screen[:, :, 0] = cx - f * clipped[:, :, 1] / x
        screen[:, :, 1] = cy - f * clipped[:, :, 2] / x
    else:
        screen = np.zeros((0, 3, 2))
        inv_depth = np.zeros((0, 3))
    depth, tri_at = _raster_core(screen, inv_depth, src, cam.width, cam.height)
    beyond = depth > far_clip
    depth[beyond] = np.inf
    tri_at[beyond] = -1
    return _RenderResult(depth=depth, tri_at=tri_at, scene=scene)


def rasterize(
    instances, terrain: Terrain | None, cam: CameraModel, far_clip: float = 400.0
) -> tuple[DepthMap, InstanceMap]:
    """Render depth and instance-id maps for one camera view."""
    r = _render(instances, terrain, cam, far_clip)
    ids = np.zeros(r.depth.shape, dtype=np.int32)
    hit = r.tri_at >= 0
    ids[hit] = r.scene.owners[r.tri_at[hit]]
    return DepthMap(r.depth), InstanceMap(ids)


def boxes_from_instance_map(instance_map: InstanceMap, min_pixels: int = 9) -> dict[int, Box2D]:
    """Tight per-id boxes over the map, skipping ids below min_pixels."""
    ids = instance_map.ids
    ys, xs = np.nonzero(ids)
    if len(ys) == 0:
        return {}
    vals = ids[ys, xs]
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    ys = ys[order]
    xs = xs[order]
    out: dict[int, Box2D] = {}
    starts = np.concatenate([[0], np.nonzero(np.diff(vals))[0] + 1, [len(vals)]])
    for s, e in zip(starts[:-1], starts[1:]):
        count = int(e - s)
        if count < min_pixels:
            continue
        iid = int(vals[s])
        out[iid] = Box2D(
            x_min=int(xs[s:e].min()),
            y_min=int(ys[s:e].min()),
            x_max=int(xs[s:e].max()) + 1,
            y_max=int(ys[s:e].max()) + 1,
            instance_id=iid,
            pixel_count=count,
        )
    return out


def bbox_2d(
    instance: PlacedInstance,
    cam: CameraModel | None,
    instance_map: InstanceMap,
    min_pixels: int = 9,
) -> Box2D | None:
    """Tight box over the pixels carrying this instance's id, or None.

    Occluded parts are excluded by construction (the box covers visible
    pixels only); instances with fewer than min_pixels visible pixels
    yield None. The camera, when given, is checked for map consistency.
    """
    if cam is not None and instance_map.ids.shape != (cam.height, cam.width):
        raise ValueError("instance map shape does not match the camera")
    mask = instance_map.ids == instance.instance_id
    count = int(np.count_nonzero(mask))
    if count < min_pixels:
        return None
    ys, xs = np.nonzero(mask)
    return Box2D(
        x_min=int(xs.min()),
        y_min=int(ys.min()),
        x_max=int(xs.max()) + 1,
        y_max=int(ys.max()) + 1,
        instance_id=instance.instance_id,
        pixel_count=count,
    )


def camera_for_pose(pose, cfg: SceneConfig) -> CameraModel:
    return CameraModel(
        position=pose.position,
        orientation=pose.rotation(),
        width=cfg.camera.width,
        height=cfg.camera.height,
        fov_horizontal_deg=cfg.camera.fov_horizontal_deg,
    )


def frame_ground_truth(
    snapshot: SnapshotRecord,
    camera_index: int,
    terrain: Terrain | None,
    cfg: SceneConfig,
) -> FrameGroundTruth:
    """All modalities for one (snapshot, camera) frame."""
    pose = snapshot.cameras[camera_index]
    cam = camera_for_pose(pose, cfg)
    depth_map, instance_map = rasterize(snapshot.instances, terrain, cam, cfg.far_clip)
    box_by_id = boxes_from_instance_map(instance_map, cfg.min_visible_pixels)
    boxes = [box_by_id[k] for k in sorted(box_by_id)]

    gts = []
    for inst in snapshot.instances:
        joints_world = inst.world_joints()
        j_uv, j_depth, j_front = cam.project_array(joints_world)
        joints_px = np.column_stack([j_uv, j_depth])
        visible = np.zeros(len(joints_world), dtype=bool)
        for k in np.nonzero(j_front)[0]:
            u, v = j_uv[k]
            ix, iy = int(math.floor(u)), int(math.floor(v))
            if 0 <= ix < cam.width and 0 <= iy < cam.height:
                visible[k] = j_depth[k] <= depth_map.values[iy, ix] + JOINT_VISIBILITY_TOL
        verts_world = inst.world_vertices()
        v_uv, v_depth, _ = cam.project_array(verts_world)
        gts.append(
            InstanceGroundTruth(
                instance=inst,
                joints_world=joints_world,
                joints_px=joints_px,
                joints_visible=visible,
                vertices_world=verts_world,
                vertices_px=np.column_stack([v_uv, v_depth]),
            )
        )
    return FrameGroundTruth(
        camera=cam,
        time_of_day=snapshot.time_of_day,
        depth=depth_map,
        instance_map=instance_map,
        boxes=boxes,
        instances=gts,
    )


def render_preview(
    snapshot: SnapshotRecord,
    camera_index: int,
    terrain: Terrain | None,
    cfg: SceneConfig,
) -> np.ndarray:
    """Flat-shaded RGB preview (uint8) for human inspection only."""
    pose = snapshot.cameras[camera_index]
    cam = camera_for_pose(pose, cfg)
    r = _render(snapshot.instances, terrain, cam, cfg.far_clip)
    sun = sun_direction(snapshot.time_of_day)
    day = max(0.0, float(sun[2]))

    e1 = r.scene.tris_world[:, 1] - r.scene.tris_world[:, 0]
    e2 = r.scene.tris_world[:, 2] - r.scene.tris_world[:, 0]
    normals = np.cross(e1, e2)
    norms = np.linalg.norm(normals, axis=1)
    norms[norms == 0] = 1.0
    normals /= norms[:, None]
    # Double-sided shading: winding is arbitrary, take the absolute cosine.
    lambert = np.abs(normals @ sun)

    sky = np.array([0.50, 0.66, 0.90]) * (0.25 + 0.75 * day)
    img = np.empty((cam.height, cam.width, 3))
    img[:] = sky
    hit = r.tri_at >= 0
    owners = r.scene.owners[r.tri_at[hit]]
    shade = 0.25 * (0.3 + 0.7 * day) + 0.75 * day * lambert[r.tri_at[hit]]
    terrain_albedo = np.array([0.36, 0.45, 0.25])
    animal_albedo = np.array([0.82, 0.80, 0.78])
    albedo = np.where(owners[:, None] == 0, terrain_albedo, animal_albedo)
    # Small per-instance tint so neighbors are distinguishable by eye.
    tint = ((owners.astype(np.int64) * 2654435761) % 64).astype(float) / 64.0 * 0.25 + 0.75
    tint[owners == 0] = 1.0
    img[hit] = albedo * (shade * tint)[:, None]
    return np.clip(img * 255.0, 0, 255).astype(np.uint8)


def save_depth_png(depth: DepthMap, path) -> None:
    """16-bit grayscale PNG in millimeters, clamped at 65.535 m; 0 = none."""
    mm = np.where(
        np.isfinite(depth.values), np.clip(np.rint(depth.values * 1000.0), 0, 65535), 0
    ).astype(np.uint16)
    Image.fromarray(mm).save(path, format="PNG")


def load_depth_png(path) -> DepthMap:
    mm = np.asarray(Image.open(path), dtype=np.float64)
    values = np.where(mm == 0, np.inf, mm / 1000.0)
    return DepthMap(values)


def save_instance_png(instance_map: InstanceMap, path) -> None:
    ids = instance_map.ids
    if ids.max(initial=0) > 65535:
        raise ValueError("instance ids exceed the 16-bit PNG range")
    Image.fromarray(ids.astype(np.uint16)).save(path, format="PNG")


def load_instance_png(path) -> InstanceMap:
    ids = np.asarray(Image.open(path), dtype=np.int32)
    return InstanceMap(ids)


def save_preview_png(rgb: np.ndarray, path) -> None:
    Image.fromarray(rgb).save(path, format="PNG")
