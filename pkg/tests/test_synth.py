import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from hintnet.geometry import PosePlanar
from hintnet.synth import (
    CameraSampleSpec,
    TileScene,
    TwoHillsWorld,
    assign_splits,
    build_dataset,
    build_two_hills,
    clearance,
    load_tile,
    procedural_tile,
    quantize_tile,
    read_manifest,
    read_raw16,
    read_split,
    render_aerial_frame,
    render_sample,
    render_two_hills,
    sample_pose,
    sample_seed,
    write_manifest,
    write_raw16,
    write_split,
)
from hintnet.synth.aerial import check_tile
from hintnet.synth.tiles import save_png

WORLD = TwoHillsWorld()
# altitude at which a 100 degree footprint is exactly 64 px of 10 m
UNIT_ALT = 320.0 / np.tan(np.deg2rad(50.0))
SMALL_SPEC = CameraSampleSpec(altitude_range=(200.0, 300.0), resolution=16)


def _tile(rng, size=128, season="summer", name="t"):
    return TileScene(rng.integers(0, 256, (size, size, 3), dtype=np.uint8), 10.0, season, name)


# -- two hills ---------------------------------------------------------------


def test_two_hills_symmetry_examples():
    assert np.array_equal(render_two_hills(WORLD, 0.25), render_two_hills(WORLD, 0.75))
    assert np.array_equal(render_two_hills(WORLD, 0.25 + 0.03), render_two_hills(WORLD, 0.75 + 0.03))
    obs = render_two_hills(WORLD, 0.25)
    assert obs.shape == (32,) and 0.0 < obs.min() and obs.max() <= 1.0


def test_two_hills_symmetry_over_grid():
    for delta in np.linspace(-0.1, 0.1, 4001):
        assert np.array_equal(render_two_hills(WORLD, 0.25 + delta), render_two_hills(WORLD, 0.75 + delta))


@settings(max_examples=300)
@given(st.integers(-(2**20) // 10, 2**20 // 10))
def test_two_hills_symmetry_property(k):
    delta = k * 2.0**-20
    assert np.array_equal(render_two_hills(WORLD, 0.25 + delta), render_two_hills(WORLD, 0.75 + delta))


def test_two_hills_far_window_is_flat():
    # the window edge samples sit exactly 0.15 from a hill, so the bound is attained there
    obs = render_two_hills(WORLD, 0.5)
    assert obs.max() <= np.exp(-((0.15 / 0.05) ** 2) / 2)
    assert np.all(obs[1:-1] < np.exp(-((0.15 / 0.05) ** 2) / 2))
    assert np.exp(-((0.15 / 0.05) ** 2) / 2) == pytest.approx(0.011, abs=5e-4)


def test_two_hills_window_must_stay_in_domain():
    with pytest.raises(ValueError):
        render_two_hills(WORLD, 0.05)
    with pytest.raises(ValueError):
        render_two_hills(WORLD, 0.95)


def test_two_hills_dataset_is_balanced():
    tr, te = build_two_hills(100, 20, seed=4)
    assert len(tr) == 100 and len(te) == 20
    assert tr.layout.name == "line" and tr.inputs.shape == (100, 32)
    # every observation appears once per hill, so each is exactly ambiguous
    np.testing.assert_array_equal(tr.inputs[0::2], tr.inputs[1::2])
    np.testing.assert_allclose(tr.targets[1::2] - tr.targets[0::2], 0.5, atol=1e-15)
    np.testing.assert_allclose(tr.hypotheses[:, :, 0].min(1), tr.targets[0::2].repeat(2), atol=1e-15)
    assert np.all(np.abs(tr.targets - np.where(tr.targets < 0.5, 0.25, 0.75)) <= 0.03)
    tr2, _ = build_two_hills(100, 20, seed=4)
    assert np.array_equal(tr.inputs, tr2.inputs) and np.array_equal(tr.targets, tr2.targets)
    assert not np.array_equal(tr.targets[:20], te.targets)


# -- aerial geometry ---------------------------------------------------------


def test_footprint_and_clearance_arithmetic():
    spec = CameraSampleSpec()
    side = spec.footprint_side(2500.0)
    assert side == pytest.approx(5958.8, abs=0.05)
    assert side / 10.0 == pytest.approx(595.9, abs=0.05)
    assert clearance(side, (np.cos(np.pi / 4), np.sin(np.pi / 4))) == pytest.approx(side / np.sqrt(2), rel=1e-12)
    assert clearance(side, (1.0, 0.0)) == side / 2


def test_camera_spec_validation():
    with pytest.raises(ValueError):
        CameraSampleSpec(fov_deg=180.0)
    with pytest.raises(ValueError):
        CameraSampleSpec(altitude_range=(0.0, 10.0))


def _crop_setup(rng):
    tile = _tile(rng, 128)
    spec = CameraSampleSpec(altitude_range=(UNIT_ALT, UNIT_ALT), resolution=64)
    r0, c0 = 17, 40
    crop = tile.raster[r0 : r0 + 64, c0 : c0 + 64].astype(np.float64) / 127.5 - 1.0
    return tile, spec, r0, c0, crop


def test_identity_resample_equals_crop(rng):
    tile, spec, r0, c0, crop = _crop_setup(rng)
    pose = PosePlanar((c0 + 32) * 10.0, (r0 + 32) * 10.0, UNIT_ALT, (1.0, 0.0))
    img = render_aerial_frame(tile, pose, spec).image
    np.testing.assert_array_equal(img, crop.transpose(2, 0, 1))


def test_quarter_turn_equals_rotated_crop(rng):
    tile, spec, r0, c0, crop = _crop_setup(rng)
    pose = PosePlanar((c0 + 32) * 10.0, (r0 + 32) * 10.0, UNIT_ALT, (0.0, 1.0))
    img = render_aerial_frame(tile, pose, spec).image
    # brute-force oracle: output column u runs along +y (tile rows), output row v along -x
    R = 64
    oracle = np.empty((3, R, R))
    for v in range(R):
        for u in range(R):
            oracle[:, v, u] = crop[u, R - 1 - v]
    np.testing.assert_array_equal(img, oracle)


def test_constant_region_renders_constant(rng):
    raster = np.full((128, 128, 3), 200, dtype=np.uint8)
    tile = TileScene(raster, 10.0, "summer", "flat")
    for _ in range(5):
        s = render_sample(tile, SMALL_SPEC, int(rng.integers(1 << 30)))
        np.testing.assert_allclose(s.image, 200 / 127.5 - 1.0, rtol=0, atol=1e-12)


def test_render_rejects_footprint_outside(rng):
    tile = _tile(rng, 128)
    with pytest.raises(ValueError):
        render_aerial_frame(tile, PosePlanar(100.0, 640.0, 250.0, (1.0, 0.0)), SMALL_SPEC)


def test_small_tile_rejected(rng):
    with pytest.raises(ValueError):
        check_tile(_tile(rng, 64), SMALL_SPEC)


def test_sampled_poses_fit_and_pixels_in_range(rng):
    tile = _tile(rng, 128)
    for seed in range(30):
        s = render_sample(tile, SMALL_SPEC, seed)
        m = clearance(SMALL_SPEC.footprint_side(s.pose.altitude), s.pose.heading)
        assert m <= s.pose.x <= 1280 - m and m <= s.pose.y <= 1280 - m
        assert 200.0 <= s.pose.altitude <= 300.0
        assert abs(np.hypot(*s.pose.heading) - 1.0) < 1e-9
        assert s.image.shape == (3, 16, 16) and s.image.min() >= -1.0 and s.image.max() <= 1.0
        assert np.array_equal(s.image, render_sample(tile, SMALL_SPEC, seed).image)


def test_yaw_is_uniform(rng):
    tile = _tile(rng, 128)
    gen = np.random.default_rng(99)
    yaw = np.array([sample_pose(tile, SMALL_SPEC, gen).yaw_deg for _ in range(100_000)]) % 360.0
    counts, _ = np.histogram(yaw, bins=36, range=(0.0, 360.0))
    assert chisquare(counts).pvalue > 0.001


# -- tiles -------------------------------------------------------------------


def test_quantize_full_range():
    raw = np.array([[100, 300], [500, 900]], dtype=np.uint16)
    q = quantize_tile(raw, 0.0, 100.0)
    assert q[0, 0, 0] == 0 and q[1, 1, 0] == 255


def test_quantize_constant_channel():
    raw = np.stack([np.full((4, 4), 7), np.arange(16).reshape(4, 4)], axis=-1).astype(np.uint16)
    q = quantize_tile(raw)
    assert np.all(q[..., 0] == 128)


def test_quantize_linear_ramp_handpicked():
    ramp = np.arange(10001, dtype=np.uint16).reshape(1, -1)
    q = quantize_tile(ramp)[0, :, 0]
    # 1st/99th percentiles of 0..10000 are 100 and 9900: v -> (v - 100) * 255 / 9800
    assert q[100] == 0
    assert q[2550] == 64  # 63.75
    assert q[9900] == 255
    assert q[0] == 0 and q[10000] == 255


def test_quantize_rejects_empty():
    with pytest.raises(ValueError):
        quantize_tile(np.zeros((0, 3), dtype=np.uint16))


def test_raw16_round_trip_and_load(tmp_path, rng):
    raw = rng.integers(0, 65536, (130, 120, 3)).astype(np.uint16)
    path = tmp_path / "tile.r16"
    write_raw16(path, raw)
    assert path.read_bytes()[:4] == b"T16R"
    np.testing.assert_array_equal(read_raw16(path), raw)
    scene = load_tile(path, 10.0, "winter")
    assert scene.raster.dtype == np.uint8 and scene.raster.shape == (130, 120, 3)
    assert scene.season == "winter" and scene.identifier == "tile"
    png = tmp_path / "tile.png"
    save_png(png, scene.raster)
    np.testing.assert_array_equal(load_tile(png).raster, scene.raster)
    with pytest.raises(FileNotFoundError):
        load_tile(tmp_path / "missing.png")
    bad = tmp_path / "bad.r16"
    bad.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(ValueError):
        read_raw16(bad)


def test_procedural_tile_is_seeded_and_duplicates_patch():
    a, info = procedural_tile(256, seed=3, duplicate_patch=64)
    b, _ = procedural_tile(256, seed=3, duplicate_patch=64)
    assert np.array_equal(a, b) and a.shape == (256, 256, 3) and a.dtype == np.uint8
    (sr, sc), (dr, dc) = info["source"], info["destination"]
    np.testing.assert_array_equal(a[sr : sr + 64, sc : sc + 64], a[dr : dr + 64, dc : dc + 64])
    assert not np.array_equal(a, procedural_tile(256, seed=4, duplicate_patch=64)[0])


# -- datasets ----------------------------------------------------------------


def test_seasons_cover_both_splits_and_tiles_are_disjoint(rng):
    tiles = [_tile(rng, 128, season, f"{season}{i}") for season in ("summer", "winter") for i in range(2)]
    train, test = assign_splits(tiles, "by_tile")
    assert {t.season for t in train} == {t.season for t in test} == {"summer", "winter"}
    assert not {t.identifier for t in train} & {t.identifier for t in test}
    tr, te = build_dataset(tiles, SMALL_SPEC, (20, 10), "by_tile", seed=1)
    assert not {m["tile"] for m in tr.meta} & {m["tile"] for m in te.meta}


def test_season_coverage_violation_rejected(rng):
    tiles = [_tile(rng, 128, "summer", "s0"), _tile(rng, 128, "summer", "s1"), _tile(rng, 128, "winter", "w0")]
    with pytest.raises(ValueError, match="season coverage"):
        build_dataset(tiles, SMALL_SPEC, (4, 4), "by_tile", seed=0)
    with pytest.raises(ValueError, match="season coverage"):
        assign_splits(tiles[:2], "by_tile", {"s0": "train", "s1": "train"})


def test_dataset_streams_are_deterministic(rng):
    tiles = [_tile(rng, 128, s, f"{s}{i}") for s in ("summer", "autumn") for i in range(2)]
    a = build_dataset(tiles, SMALL_SPEC, (12, 6), "by_tile", seed=7)
    b = build_dataset(tiles, SMALL_SPEC, (12, 6), "by_tile", seed=7)
    for x, y in zip(a, b):
        assert np.array_equal(x.targets, y.targets)
        assert np.array_equal(x.materialize().inputs, y.materialize(workers=3).inputs)
    # lazy access agrees with materialised access
    np.testing.assert_array_equal(a[0].get_inputs([3, 5]), a[0].materialize().inputs[[3, 5]])


def test_sample_seeds_depend_on_split_and_index():
    seeds = {sample_seed(0, split, i) for split in ("train", "test") for i in range(1000)}
    assert len(seeds) == 2000
    assert sample_seed(5, "train", 3) == sample_seed(5, "train", 3)


def test_split_files_round_trip(tmp_path, rng):
    tr, _ = build_two_hills(10, 4, seed=0)
    write_split(tmp_path / "line", tr)
    back = read_split(tmp_path / "line", "line", "train")
    np.testing.assert_array_equal(back.inputs, tr.inputs)
    np.testing.assert_array_equal(back.targets, tr.targets)
    np.testing.assert_array_equal(back.hypotheses, tr.hypotheses)
    tiles = [_tile(rng, 128)]
    atr, _ = build_dataset(tiles, SMALL_SPEC, (5, 2), "shared", seed=2)
    write_split(tmp_path / "aerial", atr)
    header = (tmp_path / "aerial" / "poses.csv").read_text().splitlines()[0]
    assert header == "index,x,y,altitude,yaw_cos,yaw_sin,tile,seed"
    back = read_split(tmp_path / "aerial", "aerial", "train")
    np.testing.assert_array_equal(back.targets, atr.targets)
    np.testing.assert_array_equal(back.inputs, atr.materialize().inputs)


def test_manifest_round_trip(tmp_path):
    write_manifest(tmp_path / "m.json", {"seed": 3, "tiles": []})
    m = read_manifest(tmp_path / "m.json")
    assert m["seed"] == 3 and m["version"] == 1
    (tmp_path / "bad.json").write_text('{"format": "hintnet-dataset", "version": 99}')
    with pytest.raises(ValueError):
        read_manifest(tmp_path / "bad.json")
