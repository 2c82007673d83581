"""Image I/O, Gaussian noise synthesis, patch sampling, dataset manifests.

Images are 8-bit PNG (via Pillow) or binary PPM/PGM (parsed here).
Tensors use the [0, 1] scale, channel-first (C, H, W); 8-bit data
round-trips exactly through the conversion.

A manifest is a tab-separated text file, one pair per line:

    degraded.png<TAB>clean.png[<TAB>tag]

'#' starts a comment. Paths are resolved relative to the manifest file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DimensionError, FormatError


@dataclass
class ImageBuffer:
    width: int
    height: int
    channels: int  # 1 or 3
    data: np.ndarray  # uint8, (height, width, channels)

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise FormatError(f"unsupported channel count {self.channels}")
        if self.data.shape != (self.height, self.width, self.channels):
            raise FormatError(f"sample count mismatch: {self.data.shape} vs "
                              f"({self.height}, {self.width}, {self.channels})")
        if self.data.dtype != np.uint8:
            raise FormatError(f"expected 8-bit samples, got {self.data.dtype}")


def to_tensor(buf: ImageBuffer) -> np.ndarray:
    """(C, H, W) float32 in [0, 1]."""
    return (buf.data.astype(np.float32) / 255.0).transpose(2, 0, 1)


def from_tensor(arr: np.ndarray) -> ImageBuffer:
    """Clamp to [0, 1], quantize to 8 bits."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise DimensionError(f"expected (C, H, W) with 1 or 3 channels, got {arr.shape}")
    u8 = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)
    return ImageBuffer(width=u8.shape[1], height=u8.shape[0],
                       channels=u8.shape[2], data=u8)


_PNM_MAGIC = {b"P5": 1, b"P6": 3}


def _read_pnm(raw: bytes, path) -> ImageBuffer:
    magic = raw[:2]
    channels = _PNM_MAGIC.get(magic)
    if channels is None:
        raise FormatError(f"{path}: not a binary PGM/PPM (magic {magic!r})")
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed up to the single whitespace after maxval
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        m = re.match(rb"\d+", raw[pos:])
        if not m:
            raise FormatError(f"{path}: malformed PNM header")
        fields.append(int(m.group()))
        pos += m.end()
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise FormatError(f"{path}: malformed PNM header")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PNM supported (maxval {maxval})")
    expected = width * height * channels
    pixels = raw[pos:pos + expected]
    if len(pixels) != expected:
        raise FormatError(f"{path}: PNM pixel data truncated "
                          f"({len(pixels)} of {expected} bytes)")
    data = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, channels)
    return ImageBuffer(width=width, height=height, channels=channels, data=data.copy())


def load_image(path) -> ImageBuffer:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] in _PNM_MAGIC:
        return _read_pnm(raw, path)
    try:
        with Image.open(path) as img:
            if img.mode in ("L", "I;16", "I"):
                img = img.convert("L")
            elif img.mode != "RGB":
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"{path}: unsupported or corrupt image ({exc})") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return ImageBuffer(width=arr.shape[1], height=arr.shape[0],
                       channels=arr.shape[2], data=arr)


def save_image(buf: ImageBuffer, path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pgm"):
        if suffix == ".pgm" and buf.channels != 1:
            raise FormatError("PGM holds a single channel")
        if suffix == ".ppm" and buf.channels != 3:
            raise FormatError("PPM holds three channels")
        magic = b"P5" if buf.channels == 1 else b"P6"
        with open(path, "wb") as fh:
            fh.write(magic + b"\n%d %d\n255\n" % (buf.width, buf.height))
            fh.write(buf.data.tobytes())
        return
    if suffix == ".png":
        mode = "L" if buf.channels == 1 else "RGB"
        arr = buf.data[:, :, 0] if buf.channels == 1 else buf.data
        Image.fromarray(arr, mode=mode).save(path, format="PNG")
        return
    raise FormatError(f"unsupported image suffix {suffix!r} (use .png, .ppm, .pgm)")


def image_size(path) -> tuple[int, int, int]:
    """(height, width, channels) without decoding the full image."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(512)
    if head[:2] in _PNM_MAGIC:
        nums = [int(t) for t in re.findall(rb"\d+", re.sub(rb"#[^\n]*", b"", head[2:]))]
        if len(nums) < 2:
            raise FormatError(f"{path}: malformed PNM header")
        return nums[1], nums[0], _PNM_MAGIC[head[:2]]
    try:
        with Image.open(path) as img:
            channels = 1 if img.mode in ("L", "I;16", "I", "1") else 3
            return img.height, img.width, channels
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"{path}: unsupported or corrupt image ({exc})") from exc


def add_gaussian_noise(img: np.ndarray, sigma_8bit: float, seed,
                       clamp: bool = False) -> np.ndarray:
    """Add i.i.d. normal noise with std sigma/255 on the [0, 1] scale.

    Unclamped by default so the realized noise level is exact.
    """
    if sigma_8bit < 0:
        raise ConfigError(f"noise level must be nonnegative, got {sigma_8bit}")
    img = np.asarray(img)
    rng = np.random.default_rng(seed)
    noisy = img + rng.normal(0.0, sigma_8bit / 255.0, size=img.shape).astype(img.dtype)
    return np.clip(noisy, 0.0, 1.0) if clamp else noisy


def sample_patches(pair: tuple[np.ndarray, np.ndarray], size: int, count: int,
                   seed) -> list[tuple[np.ndarray, np.ndarray]]:
    """Aligned random crops from a (degraded, clean) pair of (C, H, W) arrays."""
    degraded, clean = pair
    if degraded.shape != clean.shape:
        raise DimensionError(f"pair shapes differ: {degraded.shape} vs {clean.shape}")
    h, w = degraded.shape[-2:]
    if size > h or size > w:
        raise ConfigError(f"crop {size} exceeds image size {h}x{w}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        oy = int(rng.integers(0, h - size + 1))
        ox = int(rng.integers(0, w - size + 1))
        out.append((degraded[..., oy:oy + size, ox:ox + size].copy(),
                    clean[..., oy:oy + size, ox:ox + size].copy()))
    return out


@dataclass
class PairRecord:
    degraded: Path
    clean: Path
    tag: str | None
    line: int


@dataclass
class DatasetManifest:
    root: Path
    records: list[PairRecord]

    def __len__(self):
        return len(self.records)


def load_manifest(path, check_dims: bool = True) -> DatasetManifest:
    """Parse a manifest; reports parse errors and missing files by line."""
    path = Path(path)
    root = path.parent
    records = []
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: cannot read manifest ({exc})") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (2, 3):
            raise FormatError(f"{path}:{lineno}: expected 2 or 3 tab-separated "
                              f"fields, got {len(fields)}")
        degraded = (root / fields[0]).resolve()
        clean = (root / fields[1]).resolve()
        tag = fields[2] if len(fields) == 3 else None
        records.append(PairRecord(degraded=degraded, clean=clean, tag=tag, line=lineno))
    missing = []
    for rec in records:
        for p in (rec.degraded, rec.clean):
            if not p.is_file():
                missing.append(f"line {rec.line}: {p}")
    if missing:
        raise FormatError(f"{path}: missing files:\n  " + "\n  ".join(missing))
    if check_dims:
        for rec in records:
            if image_size(rec.degraded) != image_size(rec.clean):
                raise FormatError(f"{path}:{rec.line}: pair dimensions differ "
                                  f"({rec.degraded.name} vs {rec.clean.name})")
    return DatasetManifest(root=root, records=records)


def load_pair(rec: PairRecord) -> tuple[np.ndarray, np.ndarray]:
    degraded = to_tensor(load_image(rec.degraded))
    clean = to_tensor(load_image(rec.clean))
    if degraded.shape != clean.shape:
        raise DimensionError(f"pair shapes differ: {degraded.shape} vs {clean.shape}")
    return degraded, clean
