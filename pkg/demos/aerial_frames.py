"""
Synthetic aerial frames from a procedural tile
==============================================

Builds a seeded value-noise tile with one patch copied elsewhere, renders a
few orthographic frames at random altitude and heading, and writes them as
PNG files together with their poses.

Run with ``python demos/aerial_frames.py --out frames``.
"""

import argparse
from pathlib import Path

import numpy as np

from hintnet.synth import CameraSampleSpec, TileScene, procedural_tile, render_sample
from hintnet.synth.tiles import save_png

parser = argparse.ArgumentParser()
parser.add_argument("--out", default="aerial_frames")
parser.add_argument("--count", type=int, default=6)
args = parser.parse_args()
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)

# %%
# The duplicated patch makes some frames ambiguous, like the two hills.
raster, info = procedural_tile(1024, seed=0, duplicate_patch=256)
print("patch", info)
tile = TileScene(raster, 10.0, "summer", "procedural")
save_png(out / "tile.png", raster)

# %%
# A 100 degree field of view at 2 to 3 km sees a square about 5 to 7 km wide.
spec = CameraSampleSpec()
for alt in spec.altitude_range:
    print(f"altitude {alt:.0f} m -> footprint {spec.footprint_side(alt):.0f} m")

# %%
# Each frame is a pure function of its seed.
for seed in range(args.count):
    s = render_sample(tile, spec, seed)
    pose = s.pose
    print(f"frame {seed}: x {pose.x:7.0f} m  y {pose.y:7.0f} m  alt {pose.altitude:6.0f} m  yaw {pose.yaw_deg:6.1f} deg")
    pixels = np.clip(np.rint((s.image.transpose(1, 2, 0) + 1.0) * 127.5), 0, 255).astype(np.uint8)
    save_png(out / f"frame_{seed:02d}.png", pixels)
print("wrote", out.resolve())
