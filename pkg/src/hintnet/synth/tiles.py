"""Tile rasters: in-memory scenes, 16-to-8-bit quantization and file formats.

Raw 16-bit tile layout (all little-endian)::

    offset  size  field
    0       4     magic b"T16R"
    4       4     uint32 height
    8       4     uint32 width
    12      4     uint32 channels
    16      2*C*H*W  uint16 samples, planar (channel, row, column)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

RAW16_MAGIC = b"T16R"
_HEADER = struct.Struct("<4sIII")


@dataclass
class TileScene:
    raster: np.ndarray  # (H, W, 3) uint8
    meters_per_pixel: float = 10.0
    season: str = "summer"
    identifier: str = "tile"

    def __post_init__(self):
        r = np.asarray(self.raster)
        if r.ndim != 3 or r.dtype != np.uint8:
            raise ValueError(f"tile raster must be (H, W, C) uint8, got {r.shape} {r.dtype}")
        self.raster = r
        # float view for resampling, computed once
        self._planar = np.ascontiguousarray(r.transpose(2, 0, 1), dtype=np.float64)

    @property
    def height(self) -> int:
        return self.raster.shape[0]

    @property
    def width(self) -> int:
        return self.raster.shape[1]

    @property
    def channels(self) -> int:
        return self.raster.shape[2]

    @property
    def planar(self) -> np.ndarray:
        return self._planar

    @property
    def extent_m(self) -> tuple[float, float]:
        return self.width * self.meters_per_pixel, self.height * self.meters_per_pixel


def quantize_tile(raw, low_pct: float = 1.0, high_pct: float = 99.0) -> np.ndarray:
    """Per-channel linear stretch of a 16-bit (H, W, C) raster to uint8.

    Values at the ``low_pct`` percentile map to 0 and at ``high_pct`` to 255,
    with clamping outside. A channel whose percentile range is empty is set to
    128 throughout.
    """
    r = np.asarray(raw)
    if r.size == 0:
        raise ValueError("cannot quantize an empty raster")
    if r.ndim == 2:
        r = r[..., None]
    out = np.empty(r.shape, dtype=np.uint8)
    for c in range(r.shape[-1]):
        ch = r[..., c].astype(np.float64)
        lo, hi = np.percentile(ch, [low_pct, high_pct])
        if hi <= lo:
            out[..., c] = 128
            continue
        scaled = (ch - lo) * (255.0 / (hi - lo))
        out[..., c] = np.clip(np.round(scaled), 0, 255).astype(np.uint8)
    return out


def write_raw16(path, raster) -> None:
    r = np.asarray(raster)
    if r.ndim == 2:
        r = r[..., None]
    h, w, c = r.shape
    planar = np.ascontiguousarray(r.transpose(2, 0, 1), dtype="<u2")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(RAW16_MAGIC, h, w, c))
        fh.write(planar.tobytes())


def read_raw16(path) -> np.ndarray:
    """Load a raw 16-bit tile as an (H, W, C) uint16 array."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise ValueError(f"{path}: file too short for a raw16 header")
    magic, h, w, c = _HEADER.unpack_from(buf)
    if magic != RAW16_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 2 * h * w * c
    if len(buf) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(buf)}")
    planar = np.frombuffer(buf, dtype="<u2", offset=_HEADER.size).reshape(c, h, w)
    return planar.transpose(1, 2, 0).astype(np.uint16)


def load_tile(path, meters_per_pixel: float = 10.0, season: str = "summer", identifier: str | None = None) -> TileScene:
    """Read a PNG (8-bit) or raw16 tile; raw16 is quantized to 8 bits on load."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"tile not found: {path}")
    if path.suffix.lower() == ".png":
        img = np.asarray(Image.open(path).convert("RGB"))
    else:
        img = quantize_tile(read_raw16(path))
        if img.shape[-1] == 1:
            img = np.repeat(img, 3, axis=-1)
    return TileScene(img, meters_per_pixel, season, identifier or path.stem)


def save_png(path, raster) -> None:
    Image.fromarray(np.asarray(raster, dtype=np.uint8)).save(path, optimize=False)
