"""Orthographic aerial camera frames cut from a tile.

Tile frame: x grows along columns, y along rows, both in meters, with pixel
(r, c) centred at ((c + 0.5) * mpp, (r + 0.5) * mpp). A camera at (x, y) and
altitude a sees a square footprint of side ``2 a tan(fov / 2)`` centred below
it. Output columns run along the heading (cos, sin); output rows run along
(-sin, cos).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import PosePlanar
from .tiles import TileScene

_SCALE_GRID = 2.0**-40


@dataclass(frozen=True)
class CameraSampleSpec:
    altitude_range: tuple[float, float] = (2000.0, 3000.0)
    fov_deg: float = 100.0
    yaw_range: tuple[float, float] = (0.0, 360.0)
    resolution: int = 64

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError(f"field of view must lie in (0, 180) degrees, got {self.fov_deg}")
        lo, hi = self.altitude_range
        if lo <= 0 or hi < lo:
            raise ValueError(f"bad altitude range {self.altitude_range}")
        if self.resolution < 1:
            raise ValueError("resolution must be positive")

    def footprint_side(self, altitude: float) -> float:
        """Ground side length (meters) of the square seen from ``altitude``."""
        return 2.0 * altitude * np.tan(np.deg2rad(self.fov_deg) / 2.0)


@dataclass
class RenderedSample:
    image: np.ndarray  # (C, R, R) in [-1, 1]
    pose: PosePlanar
    scene: str
    seed: int


def clearance(side: float, heading) -> float:
    """Distance the footprint centre must keep from each tile edge at this heading."""
    c, s = heading
    return side * (abs(c) + abs(s)) / 2.0


def check_tile(tile: TileScene, spec: CameraSampleSpec) -> None:
    """Reject tiles too small to hold the largest footprint at the worst heading."""
    side = spec.footprint_side(spec.altitude_range[1])
    need = side * np.sqrt(2.0)
    w, h = tile.extent_m
    if need > min(w, h):
        raise ValueError(
            f"tile {tile.identifier} ({w:.0f} x {h:.0f} m) cannot hold a {side:.0f} m footprint "
            f"at every heading (needs {need:.0f} m)"
        )


def sample_pose(tile: TileScene, spec: CameraSampleSpec, rng: np.random.Generator) -> PosePlanar:
    """Uniform altitude and yaw, then a uniform position among those keeping the footprint inside."""
    check_tile(tile, spec)
    alt = rng.uniform(*spec.altitude_range)
    yaw = rng.uniform(*spec.yaw_range)
    r = np.deg2rad(yaw)
    heading = (float(np.cos(r)), float(np.sin(r)))
    m = clearance(spec.footprint_side(alt), heading)
    w, h = tile.extent_m
    if 2 * m > w or 2 * m > h:
        raise ValueError("no valid camera position for this footprint")
    x = rng.uniform(m, w - m)
    y = rng.uniform(m, h - m)
    return PosePlanar(float(x), float(y), float(alt), heading)


def sample_coordinates(tile: TileScene, pose: PosePlanar, spec: CameraSampleSpec) -> tuple[np.ndarray, np.ndarray]:
    """Tile pixel-centre coordinates (column, row) of every output pixel."""
    res = spec.resolution
    mpp = tile.meters_per_pixel
    scale = spec.footprint_side(pose.altitude) / (mpp * res)
    scale = np.round(scale / _SCALE_GRID) * _SCALE_GRID
    c, s = pose.heading
    a = np.arange(res) + 0.5 - res / 2.0
    b = a[:, None]
    col = pose.x / mpp - 0.5 + scale * (a[None, :] * c - b * s)
    row = pose.y / mpp - 0.5 + scale * (a[None, :] * s + b * c)
    return col, row


def footprint_inside(tile: TileScene, pose: PosePlanar, spec: CameraSampleSpec, tol: float = 1e-6) -> bool:
    m = clearance(spec.footprint_side(pose.altitude), pose.heading)
    w, h = tile.extent_m
    return m - tol <= pose.x <= w - m + tol and m - tol <= pose.y <= h - m + tol


def bilinear(planar: np.ndarray, col: np.ndarray, row: np.ndarray) -> np.ndarray:
    """Sample a (C, H, W) array at fractional pixel-centre coordinates."""
    _, h, w = planar.shape
    col = np.clip(col, 0.0, w - 1.0)
    row = np.clip(row, 0.0, h - 1.0)
    c0 = np.floor(col).astype(np.intp)
    r0 = np.floor(row).astype(np.intp)
    fc = col - c0
    fr = row - r0
    c1 = np.minimum(c0 + 1, w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    top = planar[:, r0, c0] * (1.0 - fc) + planar[:, r0, c1] * fc
    bottom = planar[:, r1, c0] * (1.0 - fc) + planar[:, r1, c1] * fc
    return top * (1.0 - fr) + bottom * fr


def normalize_pixels(values) -> np.ndarray:
    """Map 8-bit intensities to [-1, 1]."""
    return np.asarray(values, dtype=np.float64) / 127.5 - 1.0


def render_aerial_frame(
    tile: TileScene, pose: PosePlanar, spec: CameraSampleSpec, seed: int = -1
) -> RenderedSample:
    if not footprint_inside(tile, pose, spec):
        raise ValueError(f"camera footprint at ({pose.x:.1f}, {pose.y:.1f}) leaves tile {tile.identifier}")
    col, row = sample_coordinates(tile, pose, spec)
    image = normalize_pixels(bilinear(tile.planar, col, row))
    return RenderedSample(image, pose, tile.identifier, seed)


def render_sample(tile: TileScene, spec: CameraSampleSpec, seed: int) -> RenderedSample:
    """Sample a pose from ``seed`` alone and render it."""
    rng = np.random.default_rng(seed)
    return render_aerial_frame(tile, sample_pose(tile, spec, rng), spec, seed)
