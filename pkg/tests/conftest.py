import numpy as np
import pytest

from durnet.data import from_tensor, save_image


def make_image(shape, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, size=shape).astype(np.float32)


@pytest.fixture
def fixture_pair(tmp_path):
    """A 48x48 grayscale sigma=30 noisy/clean pair plus a manifest."""
    clean = make_image((1, 48, 48), seed=20)
    rng = np.random.default_rng(21)
    noisy = clean + rng.normal(0, 30 / 255.0, size=clean.shape).astype(np.float32)
    clean_path = tmp_path / "clean.png"
    noisy_path = tmp_path / "noisy.png"
    save_image(from_tensor(clean), clean_path)
    save_image(from_tensor(noisy), noisy_path)
    manifest = tmp_path / "pairs.tsv"
    manifest.write_text("noisy.png\tclean.png\n")
    return manifest


@pytest.fixture
def rgb_manifest(tmp_path):
    """Five 32x32 RGB pairs listed in a manifest."""
    lines = []
    for i in range(5):
        clean = make_image((3, 32, 32), seed=100 + i)
        degraded = np.clip(clean * 0.8 + 0.05, 0, 1)
        save_image(from_tensor(clean), tmp_path / f"clean_{i}.png")
        save_image(from_tensor(degraded), tmp_path / f"bad_{i}.png")
        lines.append(f"bad_{i}.png\tclean_{i}.png")
    manifest = tmp_path / "pairs.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
