"""Datasets, iid sharding, and BadNets-style trigger poisoning."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
NUM_CLASSES = 10
DATA_DIR_ENV = "P2PBD_DATA_DIR"

# file stems per dataset and split; a trailing .gz is also accepted
IDX_FILES = {
    "fashion_mnist": {
        "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    },
    "mnist": {
        "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    },
    "emnist_digits": {
        "train": ("emnist-digits-train-images-idx3-ubyte", "emnist-digits-train-labels-idx1-ubyte"),
        "test": ("emnist-digits-test-images-idx3-ubyte", "emnist-digits-test-labels-idx1-ubyte"),
    },
}


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    name: str = "dataset"
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(f"count mismatch: {len(self.images)} images vs {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, images=self.images[idx], labels=self.labels[idx])

    @property
    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)

    def save(self, path) -> None:
        np.savez(path, images=self.images, labels=self.labels,
                 name=np.array(self.name), num_classes=np.array(self.num_classes))

    @classmethod
    def load_npz(cls, path) -> "Dataset":
        with np.load(path) as z:
            return cls(images=z["images"], labels=z["labels"], name=str(z["name"]),
                       num_classes=int(z["num_classes"]))


@dataclass(frozen=True)
class Shard:
    owner: int
    train: Dataset
    poisoned: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.train)


@dataclass(frozen=True)
class Trigger:
    """Solid square stamped at a corner of the image."""
    size: int = 3
    position: str = "bottom_right"
    value: float = 1.0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("trigger size must be >= 1")
        if self.position not in ("bottom_right", "bottom_left", "top_right", "top_left"):
            raise ValueError(f"unknown trigger position {self.position!r}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("trigger value must be in [0, 1]")

    def region(self, h: int, w: int) -> Tuple[slice, slice]:
        s = self.size
        rows = slice(h - s, h) if self.position.startswith("bottom") else slice(0, s)
        cols = slice(w - s, w) if self.position.endswith("right") else slice(0, s)
        return rows, cols

    def stamp(self, images: np.ndarray) -> np.ndarray:
        out = images.copy()
        rows, cols = self.region(*images.shape[-2:])
        out[..., rows, cols] = self.value
        return out

    def present(self, images: np.ndarray) -> np.ndarray:
        rows, cols = self.region(*images.shape[-2:])
        return np.all(images[..., rows, cols] == np.float32(self.value), axis=(-2, -1))


@dataclass(frozen=True)
class BackdoorSpec:
    pdr: float = 0.5
    target_class: int = 2
    trigger: Trigger = field(default_factory=Trigger)

    def __post_init__(self):
        if not 0.0 <= self.pdr <= 1.0:
            raise ValueError(f"pdr must be in [0, 1], got {self.pdr}")
        if not 0 <= self.target_class < NUM_CLASSES:
            raise ValueError(f"target_class must be in [0, {NUM_CLASSES}), got {self.target_class}")


@dataclass(frozen=True)
class EvalSplit:
    clean: Dataset
    backdoored: Dataset


# ------------------------------------------------------------------ loading

def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path, expected_magic: int) -> np.ndarray:
    path = Path(path)
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise DataError(f"{path}: file too short for an IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise DataError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    body = np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim)
    count = int(np.prod(dims))
    if body.size < count:
        # header promises more entries than the file holds
        raise DataError(f"{path}: count mismatch, header says {dims[0]} items but data is truncated")
    return body[:count].reshape(dims)


def _find(root: Path, stem: str) -> Path:
    for cand in (root / stem, root / (stem + ".gz")):
        if cand.exists():
            return cand
    raise DataError(f"missing dataset file {stem}[.gz] under {root}")


def load(name: str, path=None, split: str = "train", *, n: int = 1000, seed: int = 0,
         prototype_seed: int = 0, jitter: float = 1.0) -> Dataset:
    """Load a named dataset.

    ``name="synthetic"`` needs no files; ``n``, ``seed`` and ``prototype_seed``
    control the generated set. IDX datasets are read from ``path`` (or the
    ``P2PBD_DATA_DIR`` environment variable).
    """
    if name == "synthetic":
        return synthetic(n=n, seed=seed, prototype_seed=prototype_seed, name=f"synthetic-{split}",
                         split=split, jitter=jitter)
    if name not in IDX_FILES:
        raise DataError(f"unknown dataset {name!r}")
    if split not in IDX_FILES[name]:
        raise DataError(f"unknown split {split!r}")
    root = Path(path or os.environ.get(DATA_DIR_ENV, "."))
    img_stem, lbl_stem = IDX_FILES[name][split]
    images = read_idx(_find(root, img_stem), IMAGE_MAGIC)
    labels = read_idx(_find(root, lbl_stem), LABEL_MAGIC)
    if len(images) != len(labels):
        raise DataError(f"count mismatch: {len(images)} images vs {len(labels)} labels")
    if name.startswith("emnist"):
        # EMNIST ships column-major images
        images = images.transpose(0, 2, 1)
    return Dataset(images=(images.astype(np.float32) / 255.0), labels=labels.astype(np.int64),
                   name=f"{name}-{split}")


def idx_available(name: str, path=None) -> bool:
    root = Path(path or os.environ.get(DATA_DIR_ENV, "."))
    try:
        for split in ("train", "test"):
            for stem in IDX_FILES[name][split]:
                _find(root, stem)
    except (DataError, KeyError):
        return False
    return True


# ---------------------------------------------------------------- synthetic

SIDE = 28
_GRID = np.stack(np.meshgrid(np.arange(SIDE), np.arange(SIDE), indexing="ij"), axis=-1).astype(np.float32)


def _prototypes(prototype_seed: int, strokes: int = 4) -> np.ndarray:
    """Per-class stroke endpoints, shape (classes, strokes, 2 points, 2 coords)."""
    rng = np.random.default_rng([prototype_seed, 0xD161])
    return rng.uniform(5.0, 21.0, size=(NUM_CLASSES, strokes, 2, 2)).astype(np.float32)


def _render(segments: np.ndarray, width: float) -> np.ndarray:
    """Rasterise (S, 2, 2) segments into a SIDE x SIDE image."""
    a, b = segments[:, 0], segments[:, 1]
    ab = b - a
    p = _GRID[None] - a[:, None, None, :]
    denom = np.maximum((ab * ab).sum(-1), 1e-6)[:, None, None]
    tt = np.clip((p * ab[:, None, None, :]).sum(-1) / denom, 0.0, 1.0)
    d2 = ((p - tt[..., None] * ab[:, None, None, :]) ** 2).sum(-1)
    return np.exp(-d2 / (2 * width ** 2)).max(axis=0)


def synthetic(n: int = 1000, seed: int = 0, prototype_seed: int = 0, name: str = "synthetic",
              split: str = "train", jitter: float = 1.0, shift: int = 2, noise: float = 0.1) -> Dataset:
    """Stroke-drawn 10-class digits-like images.

    Every class owns a fixed set of strokes (from ``prototype_seed``); each
    sample perturbs the stroke endpoints, shifts the glyph, scales its
    intensity and adds pixel noise. The bottom-right corner stays dark so a
    corner trigger is an out-of-distribution feature, as on MNIST.
    """
    if n < 1:
        raise DataError("synthetic dataset needs n >= 1")
    protos = _prototypes(prototype_seed)
    rng = np.random.default_rng([seed, 0x5A3, 0 if split == "train" else 1])
    labels = rng.permutation(np.arange(n) % NUM_CLASSES).astype(np.int64)
    images = np.empty((n, SIDE, SIDE), dtype=np.float32)
    for i, c in enumerate(labels):
        segs = protos[c] + rng.normal(0.0, jitter, size=protos[c].shape).astype(np.float32)
        segs += rng.integers(-shift, shift + 1, size=2).astype(np.float32)
        img = _render(segs, width=float(rng.uniform(0.8, 1.3))) * rng.uniform(0.7, 1.0)
        img += rng.normal(0.0, noise, size=img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
    return Dataset(images=images, labels=labels, name=name)


# ------------------------------------------------------------- partitioning

def partition_iid(d: Dataset, n: int, seed: int = 0) -> List[Shard]:
    """Seeded shuffle split into ``n`` shards; lower ids get the remainder."""
    if n < 1 or len(d) < n:
        raise DataError(f"cannot split {len(d)} samples into {n} shards")
    perm = np.random.default_rng([seed, 0x5A4D]).permutation(len(d))
    # array_split hands the extra samples to the leading chunks
    return [Shard(owner=i, train=d.subset(np.sort(chunk))) for i, chunk in enumerate(np.array_split(perm, n))]


def poison_count(size: int, pdr: float) -> int:
    return int(np.floor(pdr * size + 0.5))


def poison_shard(s: Shard, spec: BackdoorSpec, seed: int = 0) -> Shard:
    """Stamp the trigger on ``round(pdr * |s|)`` samples and relabel them to the target."""
    count = poison_count(len(s), spec.pdr)
    if count == 0:
        return s
    rng = np.random.default_rng([seed, s.owner, 0xBAD])
    idx = np.sort(rng.choice(len(s), size=count, replace=False))
    images = s.train.images.copy()
    labels = s.train.labels.copy()
    images[idx] = spec.trigger.stamp(images[idx])
    labels[idx] = spec.target_class
    return Shard(owner=s.owner, train=replace(s.train, images=images, labels=labels),
                 poisoned=tuple(int(i) for i in idx))


def make_eval_split(test: Dataset, spec: BackdoorSpec) -> EvalSplit:
    """First half stays clean; second half loses target-class samples and gets triggered."""
    if len(test) < 2:
        raise DataError("evaluation set needs at least 2 samples")
    half = len(test) // 2
    clean = test.subset(np.arange(half))
    second = np.arange(half, len(test))
    keep = second[test.labels[second] != spec.target_class]
    if len(keep) == 0:
        raise DataError("empty backdoor split")
    back = test.subset(keep)
    back = replace(back, images=spec.trigger.stamp(back.images), name=back.name + "-backdoored")
    return EvalSplit(clean=clean, backdoored=back)


def take(d: Dataset, count: Optional[int], seed: int = 0) -> Dataset:
    """Seeded subsample of ``count`` items (all of them when ``count`` is None)."""
    if count is None or count >= len(d):
        return d
    idx = np.sort(np.random.default_rng([seed, 0x7A4E]).choice(len(d), size=count, replace=False))
    return d.subset(idx)


def class_histogram(labels: Sequence[int], num_classes: int = NUM_CLASSES) -> np.ndarray:
    return np.bincount(np.asarray(labels), minlength=num_classes)
