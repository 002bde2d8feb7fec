"""A one-dimensional world with two identical hills.

A camera at position ``p`` observes terrain height at 32 evenly spaced points
across ``[p - 0.1, p + 0.1]``. Near either hill the observation is identical, so
the pose cannot be recovered from the observation alone.

Each point of the terrain belongs to its nearest hill, and positions are snapped
to a 2**-32 lattice before rendering. Together these make the two hills render
to bit-identical observations, not just approximately equal ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LATTICE = 2.0**-32


@dataclass(frozen=True)
class TwoHillsWorld:
    centers: tuple[float, float] = (0.25, 0.75)
    width: float = 0.05
    half_window: float = 0.1
    samples: int = 32

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.centers[0] + self.centers[1])

    def terrain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        c = np.asarray(self.centers)
        d = x[..., None] - c
        near = np.take_along_axis(d, np.abs(d).argmin(axis=-1)[..., None], axis=-1)[..., 0]
        return np.exp(-0.5 * (near / self.width) ** 2)

    def window_offsets(self) -> np.ndarray:
        return np.linspace(-self.half_window, self.half_window, self.samples)


def snap(position: float) -> float:
    return float(np.round(position / LATTICE) * LATTICE)


def render_two_hills(world: TwoHillsWorld, position: float) -> np.ndarray:
    """Observation vector (``world.samples`` heights) seen from ``position``."""
    p = snap(position)
    if p - world.half_window < 0.0 or p + world.half_window > 1.0:
        raise ValueError(f"observation window around {position} leaves the [0, 1] domain")
    centers = np.asarray(world.centers)
    home = centers[np.abs(p - centers).argmin()]
    # offsets relative to the nearest hill; exact because p sits on the lattice
    local = (p - home) + world.window_offsets()
    d = local[:, None] + (home - centers)[None, :]
    near = np.take_along_axis(d, np.abs(d).argmin(axis=1)[:, None], axis=1)[:, 0]
    return np.exp(-0.5 * (near / world.width) ** 2)


def ambiguous_positions(
    world: TwoHillsWorld, n_pairs: int, rng: np.random.Generator, spread: float = 0.03
) -> np.ndarray:
    """Pairs of positions, one per hill, sharing an offset drawn from U[-spread, spread].

    Returned as shape (2 * n_pairs,) ordered pair by pair, so every observation
    appears with both of its valid poses.
    """
    offsets = rng.uniform(-spread, spread, n_pairs)
    c = np.asarray(world.centers)
    return (offsets[:, None] + c[None, :]).reshape(-1)


def hypotheses(world: TwoHillsWorld, positions) -> np.ndarray:
    """All poses consistent with the observation at each position: shape (n, 2)."""
    p = np.asarray(positions, dtype=np.float64)
    c = np.asarray(world.centers)
    home = c[np.abs(p[:, None] - c[None, :]).argmin(axis=1)]
    return (p - home)[:, None] + c[None, :]
