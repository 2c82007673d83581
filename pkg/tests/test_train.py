import numpy as np
import pytest

from durnet import networks as N
from durnet import training as TR
from durnet.data import load_manifest
from durnet.errors import ConfigError


def tiny_net(seed=0, **kw):
    return N.build_network("durn_p", n_blocks=2, base_channels=16, seed=seed, **kw)


def test_zero_steps_is_noop(fixture_pair):
    net = tiny_net()
    before = {name: t.data.copy() for name, t in net.store.items()}
    history, ck = TR.train(net, load_manifest(fixture_pair), TR.TrainConfig(steps=0))
    assert history == []
    assert ck.step == 0
    for name, t in net.store.items():
        assert np.array_equal(t.data, before[name])


def test_empty_manifest_rejected(tmp_path):
    path = tmp_path / "m.tsv"
    path.write_text("# empty\n")
    with pytest.raises(ConfigError, match="empty"):
        TR.train(tiny_net(), load_manifest(path), TR.TrainConfig(steps=1))


def test_oversized_crop_rejected_before_any_step(fixture_pair):
    net = tiny_net()
    before = {name: t.data.copy() for name, t in net.store.items()}
    with pytest.raises(ConfigError, match="crop"):
        TR.train(net, load_manifest(fixture_pair), TR.TrainConfig(steps=5, crop=100))
    for name, t in net.store.items():
        assert np.array_equal(t.data, before[name])


def test_encoder_decoder_crop_divisibility(rgb_manifest):
    net = N.build_network("durn_u", n_blocks=1, base_channels=16)
    with pytest.raises(ConfigError, match="divisible"):
        TR.train(net, load_manifest(rgb_manifest), TR.TrainConfig(steps=1, crop=30))


def test_channel_mismatch_rejected(rgb_manifest):
    with pytest.raises(ConfigError, match="channel"):
        TR.train(tiny_net(), load_manifest(rgb_manifest),
                 TR.TrainConfig(steps=1, crop=16))


def test_same_seed_bit_identical_histories(fixture_pair):
    manifest = load_manifest(fixture_pair)
    cfg = TR.TrainConfig(steps=5, crop=32, seed=7, loss="l2_only")
    h1, _ = TR.train(tiny_net(seed=7), manifest, cfg)
    h2, _ = TR.train(tiny_net(seed=7), manifest, cfg)
    assert h1 == h2


def test_different_seed_differs(fixture_pair):
    manifest = load_manifest(fixture_pair)
    h1, _ = TR.train(tiny_net(seed=1), manifest,
                     TR.TrainConfig(steps=3, crop=32, seed=1, loss="l2_only"))
    h2, _ = TR.train(tiny_net(seed=2), manifest,
                     TR.TrainConfig(steps=3, crop=32, seed=2, loss="l2_only"))
    assert h1 != h2


def test_loss_decreases_on_overfit_fixture(fixture_pair):
    manifest = load_manifest(fixture_pair)
    for seed in range(5):
        net = tiny_net(seed=seed)
        history, _ = TR.train(net, manifest,
                              TR.TrainConfig(steps=40, crop=48, seed=seed, loss="l2_only"))
        assert history[-1][1] < history[0][1]


def test_phase_schedule_switches_loss(fixture_pair):
    manifest = load_manifest(fixture_pair)
    net = tiny_net()
    cfg = TR.TrainConfig(steps=0, crop=32, phases=(("main", 2), ("l1_only", 2)))
    history, ck = TR.train(net, manifest, cfg)
    assert len(history) == 4
    assert ck.step == 4


def test_noise_synthesis_during_training(rgb_manifest):
    manifest = load_manifest(rgb_manifest)
    net = N.build_network("durn_p", in_channels=3, n_blocks=1, base_channels=16)
    cfg = TR.TrainConfig(steps=3, crop=16, sigma=30, loss="l2_only", seed=3)
    history, _ = TR.train(net, manifest, cfg)
    assert len(history) == 3
    assert all(np.isfinite(v) for _, v in history)


def test_interval_checkpoints_written(fixture_pair, tmp_path):
    manifest = load_manifest(fixture_pair)
    out = tmp_path / "run"
    out.mkdir()
    cfg = TR.TrainConfig(steps=4, crop=32, loss="l2_only",
                         checkpoint_interval=2, checkpoint_dir=out)
    TR.train(tiny_net(), manifest, cfg)
    names = sorted(p.name for p in out.iterdir())
    assert names == ["checkpoint.durn", "checkpoint_000002.durn", "checkpoint_000004.durn"]


def test_history_csv_roundtrip(tmp_path):
    path = tmp_path / "history.csv"
    TR.write_history_csv([(0, 0.5), (1, 0.25)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,loss"
    assert lines[1].startswith("0,0.5")
    assert len(lines) == 3


def test_evaluate_reports_both_psnrs(fixture_pair):
    manifest = load_manifest(fixture_pair)
    net = tiny_net()
    TR.train(net, manifest, TR.TrainConfig(steps=2, crop=32, loss="l2_only"))
    rows = TR.evaluate(net, manifest)
    assert len(rows) == 1
    assert {"psnr", "ssim", "input_psnr", "name"} <= set(rows[0])
    assert np.isfinite(rows[0]["psnr"])


def test_config_validation():
    with pytest.raises(ConfigError):
        TR.TrainConfig(steps=-1)
    with pytest.raises(ConfigError):
        TR.TrainConfig(loss="l3")
    with pytest.raises(ConfigError):
        TR.TrainConfig(phases=(("nope", 1),))
    with pytest.raises(ConfigError):
        TR.TrainConfig(checkpoint_interval=0)
