"""Heightfield terrain: ground-height queries, triangulation, file import.

The terrain is a regular grid of elevations over an axis-aligned x-y
rectangle. heights[j, i] is the elevation at
(origin_x + i * cell_size, origin_y + j * cell_size).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TerrainError(ValueError):
    """Invalid terrain data or out-of-extent query."""


@dataclass(eq=False)
class Terrain:
    origin: tuple[float, float]
    cell_size: float
    heights: np.ndarray
    _mesh: "TerrainMesh | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        if h.ndim != 2 or h.shape[0] < 2 or h.shape[1] < 2:
            raise TerrainError(f"height grid must be at least 2x2, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise TerrainError("height grid contains non-finite values")
        if not self.cell_size > 0:
            raise TerrainError(f"cell_size must be positive, got {self.cell_size}")
        self.heights = h

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max) of the grid rectangle."""
        ny, nx = self.heights.shape
        x0, y0 = self.origin
        return (x0, y0, x0 + (nx - 1) * self.cell_size, y0 + (ny - 1) * self.cell_size)

    def height_at(self, x: float, y: float) -> float:
        return float(self.height_at_many(np.array([x]), np.array([y]))[0])

    def height_at_many(self, xs, ys) -> np.ndarray:
        """Bilinear interpolation of the four surrounding grid heights."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        x0, y0, x1, y1 = self.extent
        if np.any(xs < x0) or np.any(xs > x1) or np.any(ys < y0) or np.any(ys > y1):
            raise TerrainError("height query outside the terrain extent")
        gx = (xs - x0) / self.cell_size
        gy = (ys - y0) / self.cell_size
        ny, nx = self.heights.shape
        i = np.minimum(gx.astype(int), nx - 2)
        j = np.minimum(gy.astype(int), ny - 2)
        fx = gx - i
        fy = gy - j
        h = self.heights
        return (
            h[j, i] * (1 - fx) * (1 - fy)
            + h[j, i + 1] * fx * (1 - fy)
            + h[j + 1, i] * (1 - fx) * fy
            + h[j + 1, i + 1] * fx * fy
        )

    def mesh(self) -> "TerrainMesh":
        if self._mesh is None:
            self._mesh = TerrainMesh.from_terrain(self)
        return self._mesh


def terrain_height(terrain: Terrain, x: float, y: float) -> float:
    """Ground elevation at (x, y); raises outside the terrain extent."""
    return terrain.height_at(x, y)


@dataclass(eq=False)
class TerrainMesh:
    """Triangulated heightfield, grouped in square chunks for culling.

    faces are ordered chunk by chunk; chunk_ranges[k] = (start, stop) into
    the face array, chunk_centers/chunk_radii bound each chunk's geometry.
    """

    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int32
    chunk_ranges: np.ndarray  # (K, 2) int64
    chunk_centers: np.ndarray  # (K, 3)
    chunk_radii: np.ndarray  # (K,)

    CHUNK_CELLS = 16

    @classmethod
    def from_terrain(cls, terrain: Terrain) -> "TerrainMesh":
        ny, nx = terrain.heights.shape
        x0, y0 = terrain.origin
        cs = terrain.cell_size
        gx, gy = np.meshgrid(np.arange(nx), np.arange(ny))
        verts = np.column_stack(
            [x0 + gx.ravel() * cs, y0 + gy.ravel() * cs, terrain.heights.ravel()]
        )

        def vid(j, i):
            return j * nx + i

        faces = []
        ranges = []
        centers = []
        radii = []
        cc = cls.CHUNK_CELLS
        for cj in range(0, ny - 1, cc):
            for ci in range(0, nx - 1, cc):
                start = len(faces)
                j_hi = min(cj + cc, ny - 1)
                i_hi = min(ci + cc, nx - 1)
                jj, ii = np.meshgrid(np.arange(cj, j_hi), np.arange(ci, i_hi), indexing="ij")
                jj = jj.ravel()
                ii = ii.ravel()
                a = vid(jj, ii)
                b = vid(jj, ii + 1)
                c = vid(jj + 1, ii)
                d = vid(jj + 1, ii + 1)
                faces.extend(np.column_stack([a, b, c]))
                faces.extend(np.column_stack([b, d, c]))
                ranges.append((start, len(faces)))
                block = terrain.heights[cj : j_hi + 1, ci : i_hi + 1]
                lo = np.array([x0 + ci * cs, y0 + cj * cs, block.min()])
                hi = np.array([x0 + i_hi * cs, y0 + j_hi * cs, block.max()])
                centers.append((lo + hi) / 2)
                radii.append(np.linalg.norm(hi - lo) / 2)
        return cls(
            vertices=verts,
            faces=np.asarray(faces, dtype=np.int32),
            chunk_ranges=np.asarray(ranges, dtype=np.int64),
            chunk_centers=np.asarray(centers),
            chunk_radii=np.asarray(radii),
        )


def generate_terrain(
    extent: float,
    cell_size: float,
    amplitude: float = 3.0,
    hill_scale: float = 120.0,
    base_height: float = 0.0,
    seed=0,
) -> Terrain:
    """Smooth procedural terrain: a seeded sum of random sinusoidal waves.

    The square extent is centered on the origin. amplitude bounds the
    peak deviation from base_height; hill_scale sets the dominant
    wavelength in meters.
    """
    if extent <= 0 or cell_size <= 0:
        raise TerrainError("extent and cell_size must be positive")
    rng = np.random.default_rng(seed)
    n = max(int(round(extent / cell_size)) + 1, 2)
    coords = -extent / 2.0 + np.arange(n) * cell_size
    gx, gy = np.meshgrid(coords, coords)

    n_waves = 6
    angles = rng.uniform(0.0, 2 * np.pi, n_waves)
    wavelengths = rng.uniform(hill_scale / 2.0, hill_scale * 2.0, n_waves)
    phases = rng.uniform(0.0, 2 * np.pi, n_waves)
    weights = rng.uniform(0.5, 1.0, n_waves)
    h = np.zeros_like(gx)
    for a, lam, ph, w in zip(angles, wavelengths, phases, weights):
        k = 2 * np.pi / lam
        h += w * np.sin(k * (np.cos(a) * gx + np.sin(a) * gy) + ph)
    if weights.sum() > 0 and amplitude > 0:
        h *= amplitude / weights.sum()
    else:
        h[:] = 0.0
    return Terrain(origin=(float(coords[0]), float(coords[0])), cell_size=cell_size, heights=h + base_height)


def save_heightfield(terrain: Terrain, raster_path, meta_path) -> None:
    """Write a little-endian float32 raster plus a JSON sidecar."""
    raster_path = Path(raster_path)
    meta_path = Path(meta_path)
    raster_path.write_bytes(terrain.heights.astype("<f4").tobytes())
    ny, nx = terrain.heights.shape
    meta = {
        "width": int(nx),
        "height": int(ny),
        "cell_size": float(terrain.cell_size),
        "origin": [float(terrain.origin[0]), float(terrain.origin[1])],
    }
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_heightfield(raster_path, meta_path) -> Terrain:
    """Read a terrain written by save_heightfield."""
    try:
        meta = json.loads(Path(meta_path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise TerrainError(f"cannot read heightfield sidecar {meta_path}: {e}") from e
    for key in ("width", "height", "cell_size", "origin"):
        if key not in meta:
            raise TerrainError(f"heightfield sidecar missing field '{key}'")
    nx, ny = int(meta["width"]), int(meta["height"])
    raw = Path(raster_path).read_bytes()
    expected = nx * ny * 4
    if len(raw) != expected:
        raise TerrainError(
            f"heightfield raster is {len(raw)} bytes, expected {expected} for {nx}x{ny}"
        )
    heights = np.frombuffer(raw, dtype="<f4").reshape(ny, nx).astype(float)
    return Terrain(
        origin=(float(meta["origin"][0]), float(meta["origin"][1])),
        cell_size=float(meta["cell_size"]),
        heights=heights,
    )
