import numpy as np
import pytest

import motion_graph as mg

CONFIG = """
H = 16
W = 16
T = 4
M = 2
k = 2
d_tf = 4
d_lf = 2
C_img = 4
dtype = f64
seed = 7
"""

SCENE = """
width = 16
height = 16
frames = 8
background = 0.1 0.1 0.1
sprite = 2 3 4 4 0.9 0.2 0.2 1.0 0.0
"""


def test_default_k():
    assert mg.default_k(32, 32) == 10
    assert mg.default_k(16, 52) == 8


def test_pixel_shuffle_round_trip():
    rng = np.random.default_rng(0)
    for r in (1, 2, 4):
        x = rng.standard_normal((2, 3 * r * r, 4, 5))
        y = mg.pixel_unshuffle(mg.pixel_shuffle(x, r), r)
        np.testing.assert_array_equal(x, y)


def test_cosine_matches_numpy():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((5, 7)), rng.standard_normal((6, 7))
    got = mg.cosine_similarity_rows(a, b)
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    np.testing.assert_allclose(got, an @ bn.T, atol=1e-12)


def test_identity_warp():
    rng = np.random.default_rng(2)
    frame = rng.uniform(0, 1, (6, 6, 3))
    frames = np.stack([frame, frame])
    field = np.zeros((2 * 36, 3))
    out = mg.forward_warp(frames, field, 1)
    np.testing.assert_allclose(out, frame, atol=1e-6)


def test_build_edges_shapes():
    rng = np.random.default_rng(3)
    view = rng.standard_normal((3 * 16, 5))
    es = mg.build_edges(view, 3, 4, 4, k=2)
    assert len(es["spatial"]["src"]) == 48
    assert len(es["forward"]["src"]) == 32  # last frame has no forward rows
    assert len(es["backward"]["src"]) == 32
    assert len(es["forward"]["nbr"]) == 32 * 2


def test_model_forward_and_rollout():
    model = mg.Model(CONFIG)
    clip = mg.render_clip(SCENE)[:4]
    out = model.forward(clip)
    assert out["prediction"].shape == (16, 16, 3)
    assert out["blocks_spatial"] == 6 * 2  # two views, T=4
    roll = model.rollout(clip, steps=2)
    assert roll.shape == (2, 16, 16, 3)
    np.testing.assert_array_equal(roll[0], out["prediction"])


def test_fit_reduces_loss_and_is_deterministic():
    h1 = mg.Model(CONFIG).fit(SCENE, steps=25)
    h2 = mg.Model(CONFIG).fit(SCENE, steps=25)
    assert h1 == h2
    assert h1[-1] < 0.5 * h1[0]


def test_checkpoint_round_trip(tmp_path):
    model = mg.Model(CONFIG)
    clip = mg.render_clip(SCENE)[:4]
    before = model.forward(clip)["prediction"]
    model.save(str(tmp_path / "ckpt"))
    loaded = mg.Model.load(str(tmp_path / "ckpt"))
    np.testing.assert_array_equal(loaded.forward(clip)["prediction"], before)


def test_summary_and_metrics():
    model = mg.Model(CONFIG)
    s = model.summary()
    assert s["total"] == sum(v for k, v in s.items() if k != "total")
    psnr, ssim = mg.metrics(np.zeros((8, 8, 3)), np.full((8, 8, 3), 0.1))
    assert psnr == pytest.approx(20.0)
    assert ssim <= 1.0


def test_bench_slopes():
    rep = mg.bench_memory([(16, 16), (32, 32), (64, 64)])
    assert rep["graph_slope"] == pytest.approx(1.0, abs=0.1)
    assert rep["dense_slope"] == pytest.approx(2.0, abs=0.1)


def test_bad_config_rejected():
    with pytest.raises(Exception, match="bogus_key"):
        mg.Model("bogus_key = 3\n")
