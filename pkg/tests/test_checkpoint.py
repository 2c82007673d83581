import numpy as np
import pytest

from durnet import checkpoint as C
from durnet import networks as N
from durnet.errors import FormatError
from durnet.optim import AdamState


def tiny_net(seed=0):
    return N.build_network("durn_p", n_blocks=2, base_channels=16, seed=seed)


def test_roundtrip_bit_exact(tmp_path):
    net = tiny_net()
    ck = C.checkpoint_from_network(net, step=7, seed=3)
    path = tmp_path / "ck.durn"
    C.save_checkpoint(ck, path)
    back = C.load_checkpoint(path)
    assert back.step == 7 and back.seed == 3
    assert set(back.params) == set(ck.params)
    for name, arr in ck.params.items():
        assert arr.dtype == np.float32
        assert np.array_equal(back.params[name], arr), name
    assert set(back.norm_stats) == set(ck.norm_stats)


def test_roundtrip_with_adam_state(tmp_path):
    net = tiny_net()
    adam = AdamState(
        m={name: np.full_like(t.data, 0.25) for name, t in net.store.items()},
        v={name: np.full_like(t.data, 0.5) for name, t in net.store.items()},
        t=42)
    ck = C.checkpoint_from_network(net, step=42, adam=adam)
    path = tmp_path / "ck.durn"
    C.save_checkpoint(ck, path)
    back = C.load_checkpoint(path)
    assert back.adam is not None and back.adam.t == 42
    for name in adam.m:
        assert np.array_equal(back.adam.m[name], adam.m[name])
        assert np.array_equal(back.adam.v[name], adam.v[name])


def test_forward_outputs_identical_after_reload(tmp_path):
    net = tiny_net(seed=11)
    # make running stats non-trivial before snapshotting
    x = np.random.default_rng(0).uniform(0, 1, size=(1, 1, 24, 24)).astype(np.float32)
    N.net_forward(net, x, mode="train")
    path = tmp_path / "ck.durn"
    C.save_checkpoint(C.checkpoint_from_network(net), path)
    restored = C.network_from_checkpoint(C.load_checkpoint(path))
    a = N.net_forward(net, x, mode="eval").data
    b = N.net_forward(restored, x, mode="eval").data
    assert np.array_equal(a, b)


def test_truncated_file_rejected(tmp_path):
    net = tiny_net()
    path = tmp_path / "ck.durn"
    C.save_checkpoint(C.checkpoint_from_network(net), path)
    raw = path.read_bytes()
    for cut in (4, 11, len(raw) // 2, len(raw) - 1):
        clipped = tmp_path / f"cut{cut}.durn"
        clipped.write_bytes(raw[:cut])
        with pytest.raises(FormatError):
            C.load_checkpoint(clipped)


def test_bad_magic_reported(tmp_path):
    path = tmp_path / "bad.durn"
    path.write_bytes(b"WAT?" + b"\0" * 32)
    with pytest.raises(FormatError, match="WAT"):
        C.load_checkpoint(path)


def test_bad_version_rejected(tmp_path):
    net = tiny_net()
    path = tmp_path / "ck.durn"
    C.save_checkpoint(C.checkpoint_from_network(net), path)
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version"):
        C.load_checkpoint(path)


def test_strict_key_matching():
    net = tiny_net()
    ck = C.checkpoint_from_network(net)
    ck.params["mystery.weight"] = np.zeros(3, dtype=np.float32)
    with pytest.raises(FormatError, match="mystery.weight"):
        C.apply_to_network(ck, tiny_net())

    ck2 = C.checkpoint_from_network(net)
    del ck2.params["head.conv.bias"]
    with pytest.raises(FormatError, match="head.conv.bias"):
        C.apply_to_network(ck2, tiny_net())


def test_config_of_checkpoint_rebuilds_same_arch(tmp_path):
    net = N.build_network("durn_us", n_blocks=2, base_channels=16, seed=5)
    path = tmp_path / "ck.durn"
    C.save_checkpoint(C.checkpoint_from_network(net, seed=5), path)
    restored = C.network_from_checkpoint(C.load_checkpoint(path))
    assert restored.spec.arch == "durn_us"
    assert restored.spec.n_blocks == 2
    assert restored.spec.base_channels == 16
