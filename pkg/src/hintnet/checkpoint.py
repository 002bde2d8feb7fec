"""Versioned binary checkpoints.

Layout (little-endian)::

    offset      size   field
    0           8      magic b"HNCKPT\\x00\\x01"
    8           4      uint32 format version
    12          4      uint32 header length L
    16          L      UTF-8 JSON header
    16+L        pad    zero bytes up to the next multiple of 8
    data        8*N    float64 values of every tensor, back to back

The header holds the model configuration (variant, layout, encoder, head
widths), the Adam hyperparameters and step count, and a tensor index: one
entry per tensor with its name, shape and element offset into the data
section. Tensor names are prefixed ``param/``, ``adam_m/``, ``adam_v/`` or
``whitener/<block>/{mean,forward,inverse}``. The learned uncertainty weights
are ordinary parameters (``param/weights.s_x`` ...).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import AdamState
from .geometry import PoseWhitening, Whitener
from .models import HintedModel

MAGIC = b"HNCKPT\x00\x01"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


class CheckpointError(ValueError):
    pass


def _tensors(model: HintedModel, adam: AdamState | None) -> list[tuple[str, np.ndarray]]:
    out = [(f"param/{k}", p.data) for k, p in model.named_parameters()]
    if adam is not None:
        for k in sorted(adam.m):
            out.append((f"adam_m/{k}", adam.m[k]))
            out.append((f"adam_v/{k}", adam.v[k]))
    if model.whitening is not None:
        for block, w in model.whitening.whiteners.items():
            out += [
                (f"whitener/{block}/mean", w.mean),
                (f"whitener/{block}/forward", w.forward),
                (f"whitener/{block}/inverse", w.inverse),
            ]
    return out


def save_checkpoint(path, model: HintedModel, adam: AdamState | None = None, extra: dict | None = None) -> None:
    tensors = _tensors(model, adam)
    index, offset = [], 0
    for name, arr in tensors:
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = {
        "model": model.config(),
        "adam": None
        if adam is None
        else {"beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "t": adam.t},
        "tensors": index,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    pad = (-(_PREFIX.size + len(blob))) % 8
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        fh.write(b"\x00" * pad)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Header and a name -> array mapping, without building a model."""
    buf = Path(path).read_bytes()
    if len(buf) < _PREFIX.size:
        raise CheckpointError(f"{path}: too short to be a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, this build reads {VERSION}")
    header = json.loads(buf[_PREFIX.size : _PREFIX.size + hlen])
    start = _PREFIX.size + hlen
    start += (-start) % 8
    data = np.frombuffer(buf, dtype="<f8", offset=start)
    arrays = {}
    for entry in header["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        arrays[entry["name"]] = data[entry["offset"] : entry["offset"] + n].reshape(entry["shape"]).astype(np.float64)
    return header, arrays


def load_checkpoint(path) -> tuple[HintedModel, AdamState | None, dict]:
    header, arrays = read_checkpoint(path)
    model = HintedModel.from_config(header["model"])
    for name, p in model.named_parameters():
        key = f"param/{name}"
        if key not in arrays:
            raise CheckpointError(f"{path}: missing tensor {key}")
        if arrays[key].shape != p.shape:
            raise CheckpointError(f"{path}: {key} has shape {arrays[key].shape}, model expects {p.shape}")
        p.data[...] = arrays[key]
    blocks = [b.name for b in model.layout.blocks]
    if all(f"whitener/{b}/mean" in arrays for b in blocks):
        model.whitening = PoseWhitening(
            model.layout,
            {
                b: Whitener(arrays[f"whitener/{b}/mean"], arrays[f"whitener/{b}/forward"], arrays[f"whitener/{b}/inverse"])
                for b in blocks
            },
        )
    adam = None
    if header.get("adam"):
        a = header["adam"]
        adam = AdamState(beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], t=a["t"])
        for key, arr in arrays.items():
            if key.startswith("adam_m/"):
                adam.m[key[7:]] = arr.copy()
            elif key.startswith("adam_v/"):
                adam.v[key[7:]] = arr.copy()
    return model, adam, header.get("extra", {})
