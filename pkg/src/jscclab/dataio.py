"""Dataset ingestion: CIFAR-10 binary batches, image folders with center
cropping, and deterministic procedural images for desk-scale runs.

Every handle yields 8-bit [0, 255] images in (H, W, C) layout; the
model's input normalization layer is the only place pixels become unit
scale.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IngestionError
from .runspec import derive_seed

log = logging.getLogger(__name__)

CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILES = ("test_batch.bin",)
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 channel-planar pixels
CIFAR_RECORDS_PER_FILE = 10000


@dataclass
class DatasetHandle:
    """In-memory image collection with a fixed split and geometry."""

    id: str
    split: str  # 'train' | 'test'
    geometry: tuple[int, int, int]
    images: np.ndarray  # (N, H, W, C) uint8
    order: str = "sequential"  # 'sequential' | 'seeded_shuffle'

    def __post_init__(self):
        n, h, w, c = self.images.shape
        if (h, w, c) != self.geometry:
            raise IngestionError(
                f"{self.id}: images are {h}x{w}x{c}, expected {self.geometry}")
        if self.images.dtype != np.uint8:
            raise IngestionError(f"{self.id}: expected uint8 pixels, got {self.images.dtype}")

    def __len__(self) -> int:
        return self.images.shape[0]

    def image(self, i: int) -> np.ndarray:
        return self.images[i]

    def batch(self, indices) -> np.ndarray:
        return self.images[np.asarray(indices, dtype=np.int64)]

    def take(self, n: int) -> np.ndarray:
        """First n images in storage order (evaluation subsets)."""
        if not 1 <= n <= len(self):
            raise ConfigurationError(f"{self.id}: cannot take {n} of {len(self)} images")
        return self.images[:n]


def _read_cifar_file(path: Path) -> np.ndarray:
    expected = CIFAR_RECORDS_PER_FILE * CIFAR_RECORD_BYTES
    if not path.exists():
        raise IngestionError(f"missing CIFAR-10 batch file {path} "
                             f"(expected {expected} bytes)")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != expected:
        raise IngestionError(
            f"{path}: has {raw.size} bytes, expected {expected}")
    records = raw.reshape(CIFAR_RECORDS_PER_FILE, CIFAR_RECORD_BYTES)
    pixels = records[:, 1:].reshape(-1, 3, 32, 32)  # channel-planar layout
    return np.ascontiguousarray(pixels.transpose(0, 2, 3, 1))


def _cifar_root(root: str | Path) -> Path:
    root = Path(root)
    nested = root / "cifar-10-batches-bin"
    return nested if nested.is_dir() else root


def load_cifar10(root: str | Path, split: str, limit: int | None = None) -> DatasetHandle:
    """Decode the canonical CIFAR-10 binary batches under ``root``.

    ``limit`` (used by the cifar10-mini preset) keeps only the first
    images of the split.
    """
    if split not in ("train", "test"):
        raise ConfigurationError(f"split must be 'train' or 'test', got {split!r}")
    root = _cifar_root(root)
    files = CIFAR_TRAIN_FILES if split == "train" else CIFAR_TEST_FILES
    images = np.concatenate([_read_cifar_file(root / f) for f in files], axis=0)
    if limit is not None:
        images = images[:limit]
    return DatasetHandle(id="cifar10", split=split, geometry=(32, 32, 3),
                         images=images)


def load_image_folder(root: str | Path, target_hw: tuple[int, int],
                      split_fraction: float = 0.9,
                      seed: int = 0) -> tuple[DatasetHandle, DatasetHandle]:
    """Image-folder ingestion: center-crop the largest square, resize to
    ``target_hw``, then split deterministically by seeded shuffle of the
    sorted filenames."""
    from PIL import Image, UnidentifiedImageError

    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"image folder {root} does not exist")
    if not 0.0 < split_fraction < 1.0:
        raise ConfigurationError(f"split fraction must be in (0,1), got {split_fraction}")
    th, tw = target_hw
    decoded = []
    for path in sorted(p for p in root.iterdir() if p.is_file()):
        try:
            with Image.open(path) as img:
                img = img.convert("RGB")
                w, h = img.size
                if h < th or w < tw:
                    log.warning("skipping %s: %dx%d smaller than target %dx%d",
                                path.name, h, w, th, tw)
                    continue
                side = min(w, h)
                left, top = (w - side) // 2, (h - side) // 2
                img = img.crop((left, top, left + side, top + side))
                img = img.resize((tw, th), Image.BILINEAR)
                decoded.append(np.asarray(img, dtype=np.uint8))
        except (UnidentifiedImageError, OSError) as exc:
            log.warning("skipping undecodable file %s: %s", path.name, exc)
    if not decoded:
        raise IngestionError(f"no usable images under {root}")
    images = np.stack(decoded)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(images))
    n_train = int(len(images) * split_fraction + 0.5)
    if n_train == 0 or n_train == len(images):
        raise IngestionError(
            f"split fraction {split_fraction} leaves an empty split for "
            f"{len(images)} images")
    geometry = (th, tw, 3)
    name = f"folder:{root.name}"
    return (
        DatasetHandle(id=name, split="train", geometry=geometry,
                      images=images[perm[:n_train]]),
        DatasetHandle(id=name, split="test", geometry=geometry,
                      images=images[perm[n_train:]]),
    )


def _bandlimited_texture(rng: np.random.Generator, h: int, w: int,
                         cutoff: float) -> np.ndarray:
    """Low-pass filtered white noise in [0, 1]."""
    white = rng.standard_normal((h, w))
    spectrum = np.fft.rfft2(white)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    spectrum[(fy ** 2 + fx ** 2) > cutoff ** 2] = 0.0
    tex = np.fft.irfft2(spectrum, s=(h, w))
    lo, hi = tex.min(), tex.max()
    return (tex - lo) / (hi - lo) if hi > lo else np.zeros_like(tex)


def synthetic_dataset(n: int, geometry: tuple[int, int, int],
                      seed: int, split: str = "train",
                      dataset_id: str | None = None) -> DatasetHandle:
    """Procedural test corpus: oriented gradients, random rectangles, and
    band-limited noise textures, fully determined by the seed."""
    if n < 1:
        raise ConfigurationError(f"need n >= 1 synthetic images, got {n}")
    h, w, c = geometry
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    images = np.empty((n, h, w, c), dtype=np.uint8)
    for i in range(n):
        angle = rng.uniform(0, 2 * np.pi)
        ramp = (np.cos(angle) * xx / w + np.sin(angle) * yy / h)
        ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
        base = np.empty((h, w, c))
        for ch in range(c):
            lo, hi = np.sort(rng.uniform(0, 1, size=2))
            base[..., ch] = lo + (hi - lo) * ramp
        tex = _bandlimited_texture(rng, h, w, cutoff=rng.uniform(0.05, 0.3))
        weight = rng.uniform(0.1, 0.5)
        base = (1 - weight) * base + weight * tex[..., None] * rng.uniform(0.3, 1.0, size=c)
        for _ in range(rng.integers(1, 4)):
            y0, y1 = np.sort(rng.integers(0, h, size=2))
            x0, x1 = np.sort(rng.integers(0, w, size=2))
            color = rng.uniform(0, 1, size=c)
            alpha = rng.uniform(0.4, 1.0)
            base[y0:y1 + 1, x0:x1 + 1] = (
                (1 - alpha) * base[y0:y1 + 1, x0:x1 + 1] + alpha * color)
        images[i] = np.clip(np.rint(base * 255.0), 0, 255).astype(np.uint8)
    return DatasetHandle(id=dataset_id or f"synthetic:{n}@{h}x{w}",
                         split=split, geometry=geometry, images=images)


_SYNTH_RE = re.compile(r"^synthetic:(\d+)@(\d+)x(\d+)$")
_FOLDER_RE = re.compile(r"^folder:(.+)@(\d+)x(\d+)$")


def dataset_geometry(spec: str) -> tuple[int, int, int]:
    """Image geometry implied by a dataset spec string."""
    if spec in ("cifar10", "cifar10-mini"):
        return (32, 32, 3)
    if spec == "synthetic-200":
        return (32, 32, 3)
    m = _SYNTH_RE.match(spec)
    if m:
        return (int(m.group(2)), int(m.group(3)), 3)
    m = _FOLDER_RE.match(spec)
    if m:
        return (int(m.group(2)), int(m.group(3)), 3)
    raise ConfigurationError(
        f"unknown dataset spec {spec!r}; expected cifar10, cifar10-mini, "
        "synthetic-200, synthetic:<n>@<HxW>, or folder:<path>@<HxW>")


def load_dataset(spec: str, split: str, root: str | Path | None = None) -> DatasetHandle:
    """Resolve a dataset spec string into a handle for one split.

    Synthetic corpora derive their content seed from the spec string and
    split, so the same spec names the same images in every process.
    """
    if split not in ("train", "test"):
        raise ConfigurationError(f"split must be 'train' or 'test', got {split!r}")
    if spec == "cifar10":
        if root is None:
            raise ConfigurationError("cifar10 needs --data-root")
        return load_cifar10(root, split)
    if spec == "cifar10-mini":
        if root is None:
            raise ConfigurationError("cifar10-mini needs --data-root")
        limit = 5000 if split == "train" else 1000
        handle = load_cifar10(root, split, limit=limit)
        handle.id = "cifar10-mini"
        return handle
    if spec == "synthetic-200":
        spec = "synthetic:200@32x32"
        handle = load_dataset(spec, split)
        handle.id = "synthetic-200"
        return handle
    m = _SYNTH_RE.match(spec)
    if m:
        n, h, w = (int(g) for g in m.groups())
        seed = derive_seed(0, f"dataset/{spec}/{split}")
        return synthetic_dataset(n, (h, w, 3), seed, split=split, dataset_id=spec)
    m = _FOLDER_RE.match(spec)
    if m:
        path, h, w = m.group(1), int(m.group(2)), int(m.group(3))
        seed = derive_seed(0, f"dataset/folder/{h}x{w}")
        train, test = load_image_folder(path, (h, w), seed=seed)
        return train if split == "train" else test
    raise ConfigurationError(f"unknown dataset spec {spec!r}")
