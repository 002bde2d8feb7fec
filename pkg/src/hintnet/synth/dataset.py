"""Train/test sample streams, their on-disk form and the dataset manifest.

Every sample owns a seed derived from ``(dataset seed, split, index)``, so any
sample can be regenerated on its own and streams do not depend on generation
order.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import AERIAL, LINE, PoseLayout, PosePlanar
from .aerial import CameraSampleSpec, check_tile, render_aerial_frame, sample_pose
from .tiles import TileScene
from .twohills import TwoHillsWorld, ambiguous_positions, hypotheses, render_two_hills

MANIFEST_FORMAT = "hintnet-dataset"
MANIFEST_VERSION = 1
SPLITS = {"train": 0, "test": 1}


def sample_seed(dataset_seed: int, split: str, index: int) -> int:
    ss = np.random.SeedSequence([int(dataset_seed), SPLITS[split], int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class PoseDataset:
    """Observations with world-unit pose targets.

    ``inputs`` is either a materialised array or ``None`` with a ``loader``
    that produces inputs for given indices. ``hypotheses`` (n, k, d), when set,
    lists every pose consistent with each observation.
    """

    layout: PoseLayout
    targets: np.ndarray
    inputs: np.ndarray | None = None
    loader: object = None
    hypotheses: np.ndarray | None = None
    meta: list[dict] = field(default_factory=list)
    split: str = "train"

    def __len__(self) -> int:
        return len(self.targets)

    def get_inputs(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        if self.inputs is not None:
            return self.inputs[idx]
        return self.loader(idx)

    def materialize(self, workers: int = 1) -> "PoseDataset":
        """Render every sample now; ordering never depends on ``workers``."""
        if self.inputs is not None:
            return self
        idx = np.arange(len(self))
        if workers > 1:
            chunks = np.array_split(idx, workers * 4)
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(self.loader, chunks))
            inputs = np.concatenate(parts)
        else:
            inputs = self.loader(idx)
        return PoseDataset(self.layout, self.targets, inputs, None, self.hypotheses, self.meta, self.split)


# -- two hills ---------------------------------------------------------------


def two_hills_split(world: TwoHillsWorld, n: int, seed: int, split: str, spread: float = 0.03) -> PoseDataset:
    """``n`` ambiguous observations, generated as pairs sharing one observation."""
    if n % 2:
        raise ValueError("two-hills splits hold pairs of samples; n must be even")
    rng = np.random.default_rng(sample_seed(seed, split, 0))
    positions = ambiguous_positions(world, n // 2, rng, spread)
    obs = np.stack([render_two_hills(world, p) for p in positions])
    meta = [{"index": i, "position": float(p)} for i, p in enumerate(positions)]
    return PoseDataset(
        LINE,
        positions[:, None].copy(),
        obs,
        hypotheses=hypotheses(world, positions)[:, :, None],
        meta=meta,
        split=split,
    )


def build_two_hills(n_train: int, n_test: int, seed: int, world: TwoHillsWorld | None = None,
                    spread: float = 0.03) -> tuple[PoseDataset, PoseDataset]:
    world = world or TwoHillsWorld()
    return two_hills_split(world, n_train, seed, "train", spread), two_hills_split(world, n_test, seed, "test", spread)


# -- aerial ------------------------------------------------------------------


def assign_splits(scenes: list[TileScene], policy: str, declared: dict[str, str] | None = None):
    """Return (train_tiles, test_tiles) under ``policy``.

    ``"by_tile"`` gives each side disjoint tiles and requires every season on
    both sides; explicit assignments come from ``declared`` (identifier ->
    split), the rest alternate within each season. ``"shared"`` puts every
    tile on both sides and keeps only the sample streams disjoint.
    """
    if policy == "shared":
        return list(scenes), list(scenes)
    if policy != "by_tile":
        raise ValueError(f"unknown split policy {policy!r}")
    declared = declared or {}
    train, test = [], []
    by_season: dict[str, list[TileScene]] = defaultdict(list)
    for s in scenes:
        by_season[s.season].append(s)
    for season, tiles in sorted(by_season.items()):
        free = []
        for t in sorted(tiles, key=lambda t: t.identifier):
            side = declared.get(t.identifier)
            if side == "train":
                train.append(t)
            elif side == "test":
                test.append(t)
            else:
                free.append(t)
        for i, t in enumerate(free):
            # fill whichever side of this season is still empty first
            has_train = any(x.season == season for x in train)
            has_test = any(x.season == season for x in test)
            if not has_train:
                train.append(t)
            elif not has_test:
                test.append(t)
            else:
                (train if i % 2 == 0 else test).append(t)
    seasons = set(by_season)
    missing = [
        f"{season} has no {side} tile"
        for season in sorted(seasons)
        for side, group in (("train", train), ("test", test))
        if not any(t.season == season for t in group)
    ]
    if missing:
        raise ValueError("season coverage violated: " + "; ".join(missing))
    return train, test


def _aerial_split(tiles: list[TileScene], spec: CameraSampleSpec, n: int, seed: int, split: str) -> PoseDataset:
    seeds, poses, which = [], [], []
    for i in range(n):
        s = sample_seed(seed, split, i)
        rng = np.random.default_rng(s)
        k = int(rng.integers(len(tiles)))
        poses.append(sample_pose(tiles[k], spec, rng))
        seeds.append(s)
        which.append(k)
    targets = np.array([p.as_vector() for p in poses]) if poses else np.zeros((0, AERIAL.dim))

    def loader(idx):
        idx = np.atleast_1d(idx)
        out = np.empty((len(idx), tiles[0].channels, spec.resolution, spec.resolution))
        for j, i in enumerate(idx):
            out[j] = render_aerial_frame(tiles[which[i]], poses[i], spec, seeds[i]).image
        return out

    meta = [
        {"index": i, "tile": tiles[which[i]].identifier, "season": tiles[which[i]].season, "seed": seeds[i]}
        for i in range(n)
    ]
    return PoseDataset(AERIAL, targets, None, loader, None, meta, split)


def build_dataset(
    scenes: list[TileScene],
    spec: CameraSampleSpec,
    counts: tuple[int, int],
    split_policy: str,
    seed: int,
    declared: dict[str, str] | None = None,
) -> tuple[PoseDataset, PoseDataset]:
    """Lazy train/test aerial streams; call ``materialize`` to render everything."""
    if not scenes:
        raise ValueError("need at least one tile")
    for t in scenes:
        check_tile(t, spec)
    train_tiles, test_tiles = assign_splits(scenes, split_policy, declared)
    return (
        _aerial_split(train_tiles, spec, counts[0], seed, "train"),
        _aerial_split(test_tiles, spec, counts[1], seed, "test"),
    )


# -- manifest and on-disk form -----------------------------------------------


def write_manifest(path, manifest: dict) -> None:
    body = {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION, **manifest}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    m = json.loads(path.read_text())
    if m.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path}: not a dataset manifest")
    if m.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: manifest version {m.get('version')} unsupported (want {MANIFEST_VERSION})")
    return m


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v))


def write_split(directory, ds: PoseDataset) -> None:
    """Materialise one split: observations or image files plus a poses table."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if ds.layout.name == "line":
        rows = [[i, *(_fmt(v) for v in ds.inputs[i])] for i in range(len(ds))]
        header = ["index", *(f"h{j}" for j in range(ds.inputs.shape[1]))]
        (d / "observations.csv").write_text(_csv_text(header, rows))
        poses = [[i, _fmt(ds.targets[i, 0]), *(_fmt(h) for h in ds.hypotheses[i, :, 0])] for i in range(len(ds))]
        hyp = [f"hypothesis{j}" for j in range(ds.hypotheses.shape[1])]
        (d / "poses.csv").write_text(_csv_text(["index", "position", *hyp], poses))
        return
    images = d / "images"
    images.mkdir(exist_ok=True)
    rows = []
    for i in range(len(ds)):
        np.save(images / f"{i:06d}.npy", ds.get_inputs([i])[0])
        m = ds.meta[i]
        x, y, alt, hc, hs = ds.targets[i]
        rows.append([i, _fmt(x), _fmt(y), _fmt(alt), _fmt(hc), _fmt(hs), m["tile"], m["seed"]])
    header = ["index", "x", "y", "altitude", "yaw_cos", "yaw_sin", "tile", "seed"]
    (d / "poses.csv").write_text(_csv_text(header, rows))


def read_split(directory, layout_name: str, split: str) -> PoseDataset:
    d = Path(directory)
    with open(d / "poses.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if layout_name == "line":
        with open(d / "observations.csv", newline="") as fh:
            obs_rows = list(csv.reader(fh))[1:]
        obs = np.array([[float(v) for v in r[1:]] for r in obs_rows])
        targets = np.array([[float(r["position"])] for r in rows])
        hyp_keys = sorted(k for k in rows[0] if k.startswith("hypothesis")) if rows else []
        hyp = np.array([[[float(r[k])] for k in hyp_keys] for r in rows]) if hyp_keys else None
        return PoseDataset(LINE, targets, obs, hypotheses=hyp, meta=[{"index": int(r["index"])} for r in rows], split=split)
    targets = np.array([[float(r[k]) for k in ("x", "y", "altitude", "yaw_cos", "yaw_sin")] for r in rows])
    images = np.stack([np.load(d / "images" / f"{int(r['index']):06d}.npy") for r in rows]) if rows else None
    meta = [{"index": int(r["index"]), "tile": r["tile"], "seed": int(r["seed"])} for r in rows]
    return PoseDataset(AERIAL, targets, images, meta=meta, split=split)


def spec_to_dict(spec: CameraSampleSpec) -> dict:
    return asdict(spec)


def spec_from_dict(d: dict) -> CameraSampleSpec:
    d = dict(d)
    for key in ("altitude_range", "yaw_range"):
        if key in d:
            d[key] = tuple(d[key])
    return CameraSampleSpec(**d)


def planar_poses(ds: PoseDataset) -> list[PosePlanar]:
    return [PosePlanar(t[0], t[1], t[2], (t[3], t[4])) for t in ds.targets]
