"""Command-line front end: ``generate``, ``train``, ``eval``, ``sweep`` and ``modes``.

Every command reads one JSON experiment config (``--config``) and lets flags
override it. Outputs are files under ``--out``. Errors are reported as one
JSON line on stderr with the exit code: 0 success, 1 runtime failure,
2 invalid input.

Config keys (all optional)::

    {
      "world": "two-hills" | "aerial-procedural" | "aerial-tiles",
      "variant": "hinted_residual",
      "seed": 0,
      "strict": false,
      "counts": [1000, 200],
      "dataset": "path/to/generated/dataset",
      "train": {"iterations": 5000, "batch_size": 64, "learning_rate": 1e-4, "hint_sigma": [0.3]},
      "hint": {"max_iterations": 20, "tolerance": 1e-3},
      "encoder": {...EncoderConfig fields...},
      "camera": {...CameraSampleSpec fields...},
      "procedural": {"size": 1024, "duplicate_patch": 256, "seed": 0},
      "tiles": [{"path": "...", "meters_per_pixel": 10, "season": "summer", "split": "train"}],
      "split_policy": "by_tile" | "shared",
      "scales": [0.01, 0.3, 1.0],
      "two_hills": {"spread": 0.03}
    }
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .models import VARIANTS, EncoderConfig, HintConfig, build_model
from .synth.aerial import CameraSampleSpec
from .synth.dataset import (
    build_dataset,
    build_two_hills,
    read_manifest,
    read_split,
    spec_from_dict,
    spec_to_dict,
    write_manifest,
    write_split,
)
from .synth.noise import procedural_tile
from .synth.tiles import TileScene, load_tile, save_png
from .synth.twohills import TwoHillsWorld
from .training import (
    AERIAL_HINT_SIGMA,
    TrainConfig,
    curves_table,
    evaluate,
    hint_scale_sweep,
    mode_metrics,
    sweep_table,
    train,
    write_report,
)

CONFIG_VERSION = 1
WORLDS = ("two-hills", "aerial-procedural", "aerial-tiles")

TWO_HILLS_ENCODER = EncoderConfig(kind="dense", input_dim=32, hidden=(64,))
AERIAL_ENCODER = EncoderConfig(kind="conv", channels=(16, 32, 64), first_stride=4, first_kernel=4, pool="flatten")


class InputError(Exception):
    """Bad configuration or input files; exit code 2."""


# -- config ------------------------------------------------------------------


def load_config(args) -> dict:
    cfg: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise InputError(f"config not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(cfg, dict):
            raise InputError(f"{path}: config must be a JSON object")
        if cfg.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise InputError(f"{path}: config version {cfg['version']} unsupported (want {CONFIG_VERSION})")
        base = path.parent
        # relative paths in a config file are relative to that file
        for t in cfg.get("tiles", []):
            if "path" in t:
                t["path"] = str(base / t["path"])
        if "dataset" in cfg:
            cfg["dataset"] = str(base / cfg["dataset"])
    # flags win
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "strict", False):
        cfg["strict"] = True
    if getattr(args, "variant", None):
        cfg["variant"] = args.variant
    train_cfg = dict(cfg.get("train", {}))
    if getattr(args, "iterations", None) is not None:
        train_cfg["iterations"] = args.iterations
    if getattr(args, "hint_sigma", None):
        train_cfg["hint_sigma"] = list(args.hint_sigma)
    cfg["train"] = train_cfg
    hint = dict(cfg.get("hint", {}))
    if getattr(args, "max_infer_iters", None) is not None:
        hint["max_iterations"] = args.max_infer_iters
    cfg["hint"] = hint
    cfg.setdefault("world", "two-hills")
    cfg.setdefault("seed", 0)
    cfg.setdefault("strict", False)
    if cfg["world"] not in WORLDS:
        raise InputError(f"unknown world {cfg['world']!r}; expected one of {', '.join(WORLDS)}")
    if "variant" in cfg and cfg["variant"] not in VARIANTS:
        raise InputError(f"unknown variant {cfg['variant']!r}; expected one of {', '.join(VARIANTS)}")
    return cfg


def validate_paths(cfg: dict, extra=()) -> None:
    """Check every input path named by the config before any work starts."""
    paths = [Path(t["path"]) for t in cfg.get("tiles", []) if "path" in t] + [Path(p) for p in extra]
    if cfg["world"] == "aerial-tiles" and not cfg.get("tiles") and not cfg.get("dataset"):
        raise InputError("world aerial-tiles needs a 'tiles' list")
    if cfg.get("dataset"):
        paths.append(Path(cfg["dataset"]) / "manifest.json")
    for p in paths:
        if not p.exists():
            raise InputError(f"file not found: {p}")


def _is_aerial(cfg: dict) -> bool:
    return cfg["world"] != "two-hills"


def encoder_config(cfg: dict) -> EncoderConfig:
    base = AERIAL_ENCODER if _is_aerial(cfg) else TWO_HILLS_ENCODER
    d = base.to_dict()
    if _is_aerial(cfg):
        d["resolution"] = camera_spec(cfg).resolution
    d.update(cfg.get("encoder", {}))
    return _build(EncoderConfig.from_dict, d, "encoder")


def camera_spec(cfg: dict) -> CameraSampleSpec:
    return _build(spec_from_dict, cfg.get("camera", {}), "camera")


def train_config(cfg: dict) -> TrainConfig:
    d = dict(cfg["train"])
    d.setdefault("hint_sigma", list(AERIAL_HINT_SIGMA) if _is_aerial(cfg) else [0.3])
    d["seed"] = cfg["seed"]
    d["strict"] = bool(cfg["strict"])
    return _build(lambda kw: TrainConfig(**kw), d, "train")


def hint_config(cfg: dict) -> HintConfig:
    d = {"train_sigma": (1.0,), **cfg["hint"]}
    return _build(lambda kw: HintConfig(**kw), d, "hint")


def _build(factory, d, what):
    try:
        return factory(d)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid {what} settings: {exc}") from exc


def _counts(cfg: dict) -> tuple[int, int]:
    default = (1000, 200) if cfg["world"] == "two-hills" else (2048, 256)
    counts = tuple(int(c) for c in cfg.get("counts", default))
    if len(counts) != 2 or min(counts) < 1:
        raise InputError("counts must be two positive integers [train, test]")
    return counts


# -- datasets ----------------------------------------------------------------


def _tiles(cfg: dict, out_dir: Path | None):
    """Tile scenes plus their manifest entries."""
    if cfg["world"] == "aerial-procedural":
        p = {"size": 1024, "duplicate_patch": 256, "seed": cfg["seed"], **cfg.get("procedural", {})}
        raster, info = procedural_tile(int(p["size"]), int(p["seed"]), p.get("duplicate_patch"))
        tile = TileScene(raster, 10.0, "summer", "procedural")
        entry = {"path": "tiles/procedural.png", "meters_per_pixel": 10.0, "season": "summer",
                 "split": "both", "identifier": "procedural", "procedural": {**p, **info}}
        if out_dir is not None:
            (out_dir / "tiles").mkdir(parents=True, exist_ok=True)
            save_png(out_dir / entry["path"], raster)
        return [tile], [entry], {}
    tiles, entries, declared = [], [], {}
    for t in cfg["tiles"]:
        mpp = float(t.get("meters_per_pixel", 10.0))
        season = t.get("season", "summer")
        try:
            scene = load_tile(t["path"], mpp, season, t.get("identifier"))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read tile {t['path']}: {exc}") from exc
        tiles.append(scene)
        if "split" in t:
            declared[scene.identifier] = t["split"]
        entries.append({"path": str(Path(t["path"]).resolve()), "meters_per_pixel": mpp, "season": season,
                        "split": t.get("split", "auto"), "identifier": scene.identifier})
    return tiles, entries, declared


def make_datasets(cfg: dict, out_dir: Path | None = None):
    """Train/test datasets and the manifest describing them."""
    seed = int(cfg["seed"])
    n_train, n_test = _counts(cfg)
    if cfg["world"] == "two-hills":
        spread = float(cfg.get("two_hills", {}).get("spread", 0.03))
        world = TwoHillsWorld()
        try:
            tr, te = build_two_hills(n_train, n_test, seed, world, spread)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        manifest = {"world": "two-hills", "layout": "line", "seed": seed, "counts": [n_train, n_test],
                    "two_hills": {"centers": list(world.centers), "width": world.width,
                                  "half_window": world.half_window, "samples": world.samples, "spread": spread}}
        return tr, te, manifest
    spec = camera_spec(cfg)
    tiles, entries, declared = _tiles(cfg, out_dir)
    policy = cfg.get("split_policy", "shared" if len(tiles) == 1 else "by_tile")
    try:
        tr, te = build_dataset(tiles, spec, (n_train, n_test), policy, seed, declared)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    manifest = {"world": cfg["world"], "layout": "aerial", "seed": seed, "counts": [n_train, n_test],
                "camera": spec_to_dict(spec), "split_policy": policy, "tiles": entries}
    return tr.materialize(), te.materialize(), manifest


def load_datasets(directory) -> tuple:
    d = Path(directory)
    try:
        manifest = read_manifest(d / "manifest.json")
    except (FileNotFoundError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    layout = manifest["layout"]
    return read_split(d / "train", layout, "train"), read_split(d / "test", layout, "test"), manifest


def _datasets_for(cfg: dict, positional: str | None):
    source = positional or cfg.get("dataset")
    if source:
        tr, te, manifest = load_datasets(source)
        cfg["world"] = manifest["world"]
        return tr, te
    tr, te, _ = make_datasets(cfg)
    return tr, te


# -- commands ----------------------------------------------------------------


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> None:
    cfg = load_config(args)
    validate_paths(cfg)
    out = _out(args)
    tr, te, manifest = make_datasets(cfg, out)
    write_split(out / "train", tr)
    write_split(out / "test", te)
    write_manifest(out / "manifest.json", manifest)


def cmd_train(args) -> None:
    cfg = load_config(args)
    validate_paths(cfg, [Path(args.dataset) / "manifest.json"] if args.dataset else [])
    tr, _ = _datasets_for(cfg, args.dataset)
    enc = encoder_config(cfg)
    tcfg = train_config(cfg)
    out = _out(args)
    try:
        model = build_model(cfg.get("variant", "hinted_residual"), enc, tr.layout, np.random.default_rng(cfg["seed"]))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    result = train(model, tr, tcfg)
    save_checkpoint(out / "checkpoint.hnck", model, result.adam,
                    extra={"train": {**vars(tcfg), "hint_sigma": list(tcfg.hint_sigma)}, "seed": cfg["seed"]})
    (out / "loss_log.csv").write_text(result.log.to_csv())


def cmd_eval(args) -> None:
    cfg = load_config(args)
    validate_paths(cfg, [args.checkpoint, Path(args.dataset) / "manifest.json"])
    try:
        model, _, _ = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise InputError(str(exc)) from exc
    _, te, _ = load_datasets(args.dataset)
    if te.layout != model.layout:
        raise InputError(f"checkpoint layout {model.layout.name} does not match dataset layout {te.layout.name}")
    report = evaluate(model, te, hint_config(cfg), seed=int(cfg["seed"]), strict=bool(cfg["strict"]))
    out = _out(args)
    write_report(report, out)
    (out / "curves.csv").write_text(curves_table(report))


def cmd_sweep(args) -> None:
    cfg = load_config(args)
    validate_paths(cfg, [Path(args.dataset) / "manifest.json"] if args.dataset else [])
    scales = args.scales or cfg.get("scales") or [0.01, 0.3, 1.0]
    if len(scales) < 2:
        raise InputError("a sweep needs at least two scales")
    tr, te = _datasets_for(cfg, args.dataset)
    out = _out(args)
    rows = hint_scale_sweep(tr, te, cfg.get("variant", "hinted_residual"), scales, train_config(cfg),
                            encoder_config(cfg), hint_config(cfg), model_seed=int(cfg["seed"]),
                            eval_seed=int(cfg["seed"]))
    (out / "sweep.csv").write_text(sweep_table(rows))


def cmd_modes(args) -> None:
    report_dir = Path(args.report)
    records = report_dir / "records.jsonl"
    if not records.exists():
        raise InputError(f"file not found: {records}")
    preds = []
    for line in records.read_text().splitlines():
        if line.strip():
            preds.append(json.loads(line)["prediction"][0])
    try:
        rep = mode_metrics(preds, tuple(args.modes), args.midpoint, args.delta)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    body = {"delta": rep.delta, "fraction_a": rep.fraction_a, "fraction_b": rep.fraction_b,
            "fraction_midpoint": rep.fraction_midpoint, "fraction_any_mode": rep.fraction_any_mode,
            "modes": list(args.modes), "midpoint": args.midpoint, "count": len(preds)}
    text = json.dumps(body, indent=2, sort_keys=True) + "\n"
    if args.out:
        _out(args)
        (Path(args.out) / "modes.json").write_text(text)
    else:
        sys.stdout.write(text)


# -- entry point -------------------------------------------------------------


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--strict", action="store_true", help="single-threaded, bit-reproducible run")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--iterations", type=int)
    p.add_argument("--hint-sigma", type=float, action="append", help="training hint sigma; repeat once per axis")
    p.add_argument("--max-infer-iters", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hintnet", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("generate", help="render a dataset to disk")
    _common(p)
    p.set_defaults(func=cmd_generate)
    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("dataset", nargs="?", help="generated dataset directory (default: build from config)")
    _common(p)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    _common(p)
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("sweep", help="train and score one model per training-hint scale")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--scales", type=float, nargs="+")
    _common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("modes", help="mode statistics of a line-world eval report")
    p.add_argument("report", help="eval output directory")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--modes", type=float, nargs=2, default=[0.25, 0.75])
    p.add_argument("--midpoint", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_modes)
    return parser


def _error(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"status": "error", "code": code, "kind": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if not exc.code:
            return 0
        return _error(2, "invalid_input", "bad command line (see usage above)")
    try:
        args.func(args)
    except InputError as exc:
        return _error(2, "invalid_input", str(exc))
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        return _error(1, "runtime", f"{type(exc).__name__}: {exc}")
    return 0


__all__ = ["main", "build_parser", "load_config", "make_datasets", "load_datasets"]
