"""Dataset containers, the BGDS file format, and synthetic desk-scale data.

Rasters are stored as raw uint8 and normalized to [-1, 1] only when handed
to the networks (x / 127.5 - 1, matching the generator's tanh range).
Synthetic generators use integer-only pixel pipelines so payloads are
byte-identical for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError, DimensionError, FormatError
from .io_formats import Reader, Writer

MAGIC = "BGDS"
_KIND_IMAGE = 0
_KIND_PAIRS = 1
_SPLITS = ("train", "test")


def normalize(pixels):
    """uint8 [0,255] -> float64 [-1,1]."""
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


@dataclass
class ImageSet:
    images: np.ndarray  # N,C,H,W uint8
    labels: np.ndarray  # N int32
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.images.ndim != 4:
            raise DimensionError("ImageSet images must be N,C,H,W")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError("ImageSet: one label per image required")
        if self.split not in _SPLITS:
            raise DataError(f"unknown split {self.split!r}")
        if len(self.labels) and self.labels.min() < 0:
            raise DataError("labels must be non-negative")

    def __len__(self):
        return self.images.shape[0]

    def float_images(self):
        return normalize(self.images)


@dataclass
class PatchPairSet:
    patches_a: np.ndarray  # N,1,H,W uint8
    patches_b: np.ndarray  # N,1,H,W uint8
    match: np.ndarray      # N bool

    def __post_init__(self):
        self.patches_a = np.asarray(self.patches_a, dtype=np.uint8)
        self.patches_b = np.asarray(self.patches_b, dtype=np.uint8)
        self.match = np.asarray(self.match, dtype=bool)
        if self.patches_a.shape != self.patches_b.shape:
            raise DimensionError("patch arrays must have equal shapes")
        if self.patches_a.ndim != 4 or self.patches_a.shape[1] != 1:
            raise DimensionError("patches must be N,1,H,W")
        if self.match.shape != (self.patches_a.shape[0],):
            raise DataError("one match flag per pair required")

    def __len__(self):
        return self.patches_a.shape[0]

    def all_patches(self):
        """Pool of individual patches (2N,1,H,W) for unsupervised training."""
        return np.concatenate([self.patches_a, self.patches_b], axis=0)

    def float_pairs(self):
        return normalize(self.patches_a), normalize(self.patches_b)


# BGDS container ------------------------------------------------------------

def save_container(dataset, path):
    w = Writer(MAGIC)
    if isinstance(dataset, ImageSet):
        n, c, h, wd = dataset.images.shape
        w.u8(_KIND_IMAGE)
        w.u32(n); w.u32(c); w.u32(h); w.u32(wd)
        w.u8(_SPLITS.index(dataset.split))
        w.array(dataset.labels.astype(np.int32))
        w.array(dataset.images)
    elif isinstance(dataset, PatchPairSet):
        n, _, h, wd = dataset.patches_a.shape
        w.u8(_KIND_PAIRS)
        w.u32(n); w.u32(h); w.u32(wd)
        w.array(dataset.match.astype(np.uint8))
        w.array(dataset.patches_a)
        w.array(dataset.patches_b)
    else:
        raise ContractError(f"cannot save {type(dataset).__name__} as BGDS")
    return w.write(path)


def load_container(path):
    r = Reader.open(path, MAGIC)
    kind = r.u8()
    if kind == _KIND_IMAGE:
        n, c, h, wd = r.u32(), r.u32(), r.u32(), r.u32()
        split_idx = r.u8()
        if split_idx >= len(_SPLITS):
            raise FormatError(f"{path}: bad split tag {split_idx}")
        labels = r.array(np.int32, (n,))
        images = r.array(np.uint8, (n, c, h, wd))
        r.expect_exhausted()
        return ImageSet(images, labels, split=_SPLITS[split_idx])
    if kind == _KIND_PAIRS:
        n, h, wd = r.u32(), r.u32(), r.u32()
        match = r.array(np.uint8, (n,)).astype(bool)
        pa = r.array(np.uint8, (n, 1, h, wd))
        pb = r.array(np.uint8, (n, 1, h, wd))
        r.expect_exhausted()
        return PatchPairSet(pa, pb, match)
    raise FormatError(f"{path}: unknown dataset kind tag {kind} at byte offset 8")


# processing ------------------------------------------------------------

def downsample(patches):
    """2x2 box-filter downsampling of uint8 rasters (..., H, W)."""
    p = np.asarray(patches)
    h, w = p.shape[-2], p.shape[-1]
    if h % 2 or w % 2:
        raise DimensionError(f"downsample needs even dims, got {h}x{w}")
    blocks = p.astype(np.float64).reshape(*p.shape[:-2], h // 2, 2, w // 2, 2)
    avg = blocks.mean(axis=(-3, -1))
    return np.round(avg).astype(np.uint8)


# synthetic generators ----------------------------------------------------

def _texture(rng, hw, family, p1, p2, phase_x, phase_y):
    """Integer-only parametric texture in {0..255}."""
    y, x = np.meshgrid(np.arange(hw), np.arange(hw), indexing="ij")
    if family == 0:   # oriented bars
        v = (p1 * (x + phase_x) + p2 * (y + phase_y)) % 16
        img = np.where(v < 8, 40, 215)
    elif family == 1:  # radial blobs
        cx, cy = phase_x % hw, phase_y % hw
        d2 = (x - cx) ** 2 + (y - cy) ** 2
        img = np.where((d2 // max(p1, 1)) % 2 == 0, 60, 200)
    else:              # checkerboard
        s = max(p1, 1)
        img = np.where(((x + phase_x) // s + (y + phase_y) // s) % 2 == 0, 30, 225)
    return img.astype(np.int32)


def _add_noise(rng, img, amplitude):
    if amplitude <= 0:
        return np.clip(img, 0, 255).astype(np.uint8)
    noise = rng.integers(-amplitude, amplitude + 1, size=img.shape, dtype=np.int32)
    return np.clip(img + noise, 0, 255).astype(np.uint8)


def synth_toy_retrieval(seed, n_per_class=500, n_classes=4, hw=16, channels=3,
                        noise=25, split="train"):
    """Class-labeled texture images: one parametric family per class."""
    if n_classes < 2:
        raise ContractError("need at least 2 classes")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5D]))
    images = np.empty((n_classes * n_per_class, channels, hw, hw), dtype=np.uint8)
    labels = np.empty(n_classes * n_per_class, dtype=np.int32)
    # fixed per-class texture parameters; phases vary per image
    params = [(c % 3, 2 + (c * 3) % 5, 1 + (c * 5) % 7) for c in range(n_classes)]
    i = 0
    for c in range(n_classes):
        family, p1, p2 = params[c]
        for _ in range(n_per_class):
            px = int(rng.integers(0, hw))
            py = int(rng.integers(0, hw))
            base = _texture(rng, hw, family, p1, p2, px, py)
            for ch in range(channels):
                # class-dependent integer channel tint
                tinted = (base * (6 + ((c + ch) % 3)) ) // 8 + 10 * ((c * ch) % 3)
                images[i, ch] = _add_noise(rng, tinted, noise)
            labels[i] = c
            i += 1
    return ImageSet(images, labels, split=split)


def synth_toy_pairs(seed, n_pairs=1000, hw=16, jitter=2, noise=12):
    """Match-labeled patch pairs; matched = same base under integer jitter.

    Jitter is a small circular shift plus a brightness offset; at jitter 0
    (and noise 0) matched pairs are pixel-identical.
    """
    if n_pairs % 2:
        raise ContractError("n_pairs must be even for a 50/50 balance")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9A]))
    pa = np.empty((n_pairs, 1, hw, hw), dtype=np.uint8)
    pb = np.empty((n_pairs, 1, hw, hw), dtype=np.uint8)
    match = np.zeros(n_pairs, dtype=bool)
    match[: n_pairs // 2] = True

    def rand_base():
        family = int(rng.integers(0, 3))
        p1 = int(rng.integers(2, 7))
        p2 = int(rng.integers(1, 8))
        px = int(rng.integers(0, hw))
        py = int(rng.integers(0, hw))
        return _texture(rng, hw, family, p1, p2, px, py)

    for i in range(n_pairs):
        base = rand_base()
        pa[i, 0] = _add_noise(rng, base, noise if jitter > 0 else 0)
        if match[i]:
            other = base
            if jitter > 0:
                dx = int(rng.integers(-jitter, jitter + 1))
                dy = int(rng.integers(-jitter, jitter + 1))
                db = int(rng.integers(-5 * jitter, 5 * jitter + 1))
                other = np.roll(np.roll(base, dy, axis=0), dx, axis=1) + db
            pb[i, 0] = _add_noise(rng, other, noise if jitter > 0 else 0)
        else:
            pb[i, 0] = _add_noise(rng, rand_base(), noise if jitter > 0 else 0)
    return PatchPairSet(pa, pb, match)
