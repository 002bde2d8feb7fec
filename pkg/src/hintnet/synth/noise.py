"""Seeded multi-octave value noise for procedural test tiles."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import map_coordinates


def value_noise(size: int, cells: int, rng: np.random.Generator) -> np.ndarray:
    """One octave: a ``cells x cells`` lattice of uniform values, smoothly interpolated."""
    lattice = rng.random((cells + 1, cells + 1))
    t = np.linspace(0.0, cells, size, endpoint=False)
    # smoothstep fade between lattice points
    i = np.floor(t).astype(int)
    f = t - i
    f = f * f * (3.0 - 2.0 * f)
    coords = i + f
    rr, cc = np.meshgrid(coords, coords, indexing="ij")
    return map_coordinates(lattice, [rr, cc], order=1, mode="nearest")


def fractal_noise(
    size: int,
    rng: np.random.Generator,
    base_cells: int = 4,
    octaves: int = 5,
    persistence: float = 0.5,
) -> np.ndarray:
    """Sum of octaves with doubling frequency, rescaled to [0, 1]."""
    total = np.zeros((size, size))
    amp, norm = 1.0, 0.0
    for o in range(octaves):
        total += amp * value_noise(size, base_cells * 2**o, rng)
        norm += amp
        amp *= persistence
    total /= norm
    lo, hi = total.min(), total.max()
    return (total - lo) / (hi - lo) if hi > lo else np.zeros_like(total)


def procedural_tile(
    size: int = 1024,
    seed: int = 0,
    duplicate_patch: int | None = None,
    base_cells: int = 4,
    octaves: int = 5,
) -> tuple[np.ndarray, dict]:
    """RGB uint8 raster of colored fractal noise.

    With ``duplicate_patch=k`` a ``k x k`` patch is copied from one seeded
    location to another, creating two visually identical places. Returns the
    raster and a dict describing the copy (source/destination top-left corners).
    """
    rng = np.random.default_rng(seed)
    channels = [fractal_noise(size, rng, base_cells, octaves) for _ in range(3)]
    rgb = np.stack(channels, axis=-1)
    raster = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)
    info: dict = {}
    if duplicate_patch:
        k = int(duplicate_patch)
        if 2 * k > size:
            raise ValueError(f"patch {k} does not fit twice in a {size} tile")
        # source in the top-left quadrant band, destination in the bottom-right one
        src = rng.integers(0, size // 2 - k + 1, 2)
        dst = rng.integers(size // 2, size - k + 1, 2)
        raster[dst[0] : dst[0] + k, dst[1] : dst[1] + k] = raster[src[0] : src[0] + k, src[1] : src[1] + k]
        info = {"patch": k, "source": [int(v) for v in src], "destination": [int(v) for v in dst]}
    return raster, info
