import json

import numpy as np
import pytest

from hintnet.cli import main
from hintnet.synth.tiles import save_png


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _error_line(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


@pytest.fixture(scope="module")
def hills_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("hills")
    assert main(["generate", "--out", str(out), "--seed", "3"]) == 0
    return out


def test_generate_two_hills_counts(hills_dir):
    manifest = json.loads((hills_dir / "manifest.json").read_text())
    assert manifest["counts"] == [1000, 200]
    rows = 0
    for split in ("train", "test"):
        obs = (hills_dir / split / "observations.csv").read_text().splitlines()
        poses = (hills_dir / split / "poses.csv").read_text().splitlines()
        assert len(obs) == len(poses)
        rows += len(obs) - 1
    assert rows == 1200


def test_generate_is_byte_identical(hills_dir, tmp_path):
    assert main(["generate", "--out", str(tmp_path), "--seed", "3"]) == 0
    assert _files(tmp_path) == _files(hills_dir)


def test_generate_aerial_tiles_from_config(tmp_path):
    rng = np.random.default_rng(0)
    for name in ("a", "b"):
        save_png(tmp_path / f"{name}.png", rng.integers(0, 256, (96, 96, 3), dtype=np.uint8))
    cfg = {"world": "aerial-tiles", "counts": [4, 2],
           "camera": {"altitude_range": [150.0, 200.0], "resolution": 16},
           "tiles": [{"path": "a.png", "meters_per_pixel": 10, "split": "train"},
                     {"path": "b.png", "meters_per_pixel": 10, "split": "test"}]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    out = tmp_path / "data"
    assert main(["generate", "--config", str(tmp_path / "cfg.json"), "--out", str(out)]) == 0
    assert len(list((out / "train" / "images").glob("*.npy"))) == 4
    assert len(list((out / "test" / "images").glob("*.npy"))) == 2


def test_missing_tile_exits_2_naming_path(tmp_path, capsys):
    cfg = {"world": "aerial-tiles", "tiles": [{"path": "nowhere/missing.png", "split": "train"}]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    code = main(["generate", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "o")])
    assert code == 2
    err = _error_line(capsys)
    assert err["status"] == "error" and err["code"] == 2 and "missing.png" in err["message"]
    assert not (tmp_path / "o").exists()  # validation happens before any work


def test_config_version_mismatch_exits_nonzero(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"version": 99}))
    assert main(["generate", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "o")]) == 2
    assert "version" in _error_line(capsys)["message"]


def test_bad_command_line_exits_2(capsys):
    assert main(["train", "--variant", "nonsense", "--out", "x"]) == 2
    assert _error_line(capsys)["kind"] == "invalid_input"


def test_checkpoint_mismatch_exits_nonzero(hills_dir, tmp_path, capsys):
    bogus = tmp_path / "bogus.hnck"
    bogus.write_bytes(b"not a checkpoint at all")
    assert main(["eval", str(bogus), str(hills_dir), "--out", str(tmp_path / "e")]) == 2
    assert "magic" in _error_line(capsys)["message"]


@pytest.fixture(scope="module")
def trained_dir(hills_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", str(hills_dir), "--out", str(out), "--iterations", "30", "--strict"])
    assert code == 0
    return out


def test_train_then_eval_round_trip(hills_dir, trained_dir, tmp_path):
    log = (trained_dir / "loss_log.csv").read_text().splitlines()
    assert log[0] == "step,loss,s_x" and len(log) == 31
    ev = tmp_path / "eval"
    assert main(["eval", str(trained_dir / "checkpoint.hnck"), str(hills_dir), "--out", str(ev),
                 "--max-infer-iters", "5"]) == 0
    summary = json.loads((ev / "summary.json").read_text())
    assert summary["variant"] == "hinted_residual" and summary["median_position_error"] >= 0
    assert len((ev / "records.jsonl").read_text().splitlines()) == 200
    assert len((ev / "curves.csv").read_text().splitlines()) == 6
    assert main(["modes", str(ev), "--delta", "0.05", "--out", str(tmp_path / "m")]) == 0
    modes = json.loads((tmp_path / "m" / "modes.json").read_text())
    assert modes["count"] == 200
    assert 0.0 <= modes["fraction_any_mode"] <= 1.0


def test_modes_rejects_overlapping_delta(trained_dir, hills_dir, tmp_path, capsys):
    ev = tmp_path / "eval"
    main(["eval", str(trained_dir / "checkpoint.hnck"), str(hills_dir), "--out", str(ev), "--max-infer-iters", "2"])
    assert main(["modes", str(ev), "--delta", "0.3"]) == 2
    _error_line(capsys)


def test_baseline_eval_independent_of_hint_seed(hills_dir, tmp_path):
    run = tmp_path / "base"
    assert main(["train", str(hills_dir), "--out", str(run), "--variant", "baseline", "--iterations", "5"]) == 0
    outs = []
    for seed in ("1", "2"):
        ev = tmp_path / f"ev{seed}"
        assert main(["eval", str(run / "checkpoint.hnck"), str(hills_dir), "--out", str(ev), "--seed", seed]) == 0
        outs.append(_files(ev))
    assert outs[0] == outs[1]


def test_strict_train_is_a_pure_function(hills_dir, trained_dir, tmp_path):
    assert main(["train", str(hills_dir), "--out", str(tmp_path), "--iterations", "30", "--strict"]) == 0
    assert _files(tmp_path) == _files(trained_dir)


def test_sweep_emits_one_row_per_scale(tmp_path):
    cfg = {"counts": [60, 20], "train": {"iterations": 5}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(tmp_path / "cfg.json"), "--scales", "0.01", "0.3", "1.0",
                 "--out", str(out), "--strict", "--max-infer-iters", "3"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 4
    assert [float(line.split(",")[0]) for line in lines[1:]] == [0.01, 0.3, 1.0]
