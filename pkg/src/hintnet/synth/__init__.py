"""Synthetic worlds: the two-hills line world and orthographic aerial frames."""

from .aerial import (
    CameraSampleSpec,
    RenderedSample,
    clearance,
    render_aerial_frame,
    render_sample,
    sample_pose,
)
from .dataset import (
    PoseDataset,
    assign_splits,
    build_dataset,
    build_two_hills,
    read_manifest,
    read_split,
    sample_seed,
    write_manifest,
    write_split,
)
from .noise import fractal_noise, procedural_tile
from .tiles import TileScene, load_tile, quantize_tile, read_raw16, write_raw16
from .twohills import TwoHillsWorld, render_two_hills

__all__ = [
    "CameraSampleSpec",
    "PoseDataset",
    "RenderedSample",
    "TileScene",
    "TwoHillsWorld",
    "assign_splits",
    "build_dataset",
    "build_two_hills",
    "clearance",
    "fractal_noise",
    "load_tile",
    "procedural_tile",
    "quantize_tile",
    "read_manifest",
    "read_raw16",
    "read_split",
    "render_aerial_frame",
    "render_sample",
    "render_two_hills",
    "sample_pose",
    "sample_seed",
    "write_manifest",
    "write_raw16",
    "write_split",
]
