"""Dataset loading: built-in desk-scale datasets and per-class directory import.

All datasets are materialized as in-memory float32 arrays in [0, 1] with
shape [N, C, H, W]. Built-in synthetic datasets are generated from a fixed
seed so they behave like files on disk: every run sees identical data.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATA_ROOT_ENV = "STREAMKD_DATA_ROOT"

_SYNTHETIC_SEED = 1234509


@dataclass(frozen=True)
class ArrayDataset:
    """An image classification dataset held fully in memory."""

    name: str
    train_images: np.ndarray  # [N, C, H, W] float32 in [0, 1]
    train_labels: np.ndarray  # [N] int64
    test_images: np.ndarray
    test_labels: np.ndarray

    def __post_init__(self):
        for imgs, labels in ((self.train_images, self.train_labels),
                             (self.test_images, self.test_labels)):
            if imgs.ndim != 4:
                raise ValueError(f"images must be [N, C, H, W], got shape {imgs.shape}")
            if len(imgs) != len(labels):
                raise ValueError("images and labels disagree on sample count")

    @property
    def n_classes(self) -> int:
        return len(self.class_universe)

    @property
    def class_universe(self) -> tuple[int, ...]:
        return tuple(sorted(np.unique(np.concatenate([self.train_labels, self.test_labels])).tolist()))

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.train_images.shape[1:])


def _upsample_fields(coarse: np.ndarray, size: int) -> np.ndarray:
    """Bilinear upsample of [N, 4, 4] random fields to [N, size, size]."""
    src = np.linspace(0, 3, size)
    i0 = np.floor(src).astype(int).clip(0, 2)
    frac = src - i0
    rows = (coarse[:, i0, :] * (1 - frac)[None, :, None]
            + coarse[:, i0 + 1, :] * frac[None, :, None])
    return (rows[:, :, i0] * (1 - frac)[None, None, :]
            + rows[:, :, i0 + 1] * frac[None, None, :])


def _smooth_templates(n_classes: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One low-frequency random field per class, values in [0.15, 0.85].

    Templates are symmetrized along the width axis so horizontal flips are
    label-natural, as they are for photographic data.
    """
    fields = _upsample_fields(rng.normal(size=(n_classes, 4, 4)), size)
    fields = (fields + fields[:, :, ::-1]) / 2.0
    lo = fields.min(axis=(1, 2), keepdims=True)
    hi = fields.max(axis=(1, 2), keepdims=True)
    return (0.15 + 0.7 * (fields - lo) / (hi - lo)).astype(np.float32)


def synthetic_dataset(n_classes: int = 10, train_per_class: int = 500,
                      test_per_class: int = 100, size: int = 16,
                      noise: float = 0.15, modes_per_class: int = 1,
                      field_noise: float = 0.0,
                      name: str = "synthetic") -> ArrayDataset:
    """Template-plus-noise desk-scale dataset.

    Each class holds `modes_per_class` smooth random templates; a sample is a
    circular shift of one of them with a per-sample gain, Gaussian pixel
    noise, and (optionally) a per-sample low-frequency field of amplitude
    `field_noise`. Extra modes make class distributions multi-modal; the
    smooth field inflates within-class variance that survives spatial
    pooling, unlike i.i.d. pixel noise. Deterministic regardless of caller
    seeds.
    """
    rng = np.random.default_rng([_SYNTHETIC_SEED, n_classes, size, modes_per_class])
    templates = _smooth_templates(n_classes * modes_per_class, size, rng)
    templates = templates.reshape(n_classes, modes_per_class, size, size)

    def draw(per_class: int) -> tuple[np.ndarray, np.ndarray]:
        images = np.empty((n_classes * per_class, 1, size, size), dtype=np.float32)
        labels = np.empty(n_classes * per_class, dtype=np.int64)
        row = 0
        for c in range(n_classes):
            modes = rng.integers(0, modes_per_class, size=per_class)
            shifts = rng.integers(-3, 4, size=(per_class, 2))
            gains = rng.uniform(0.85, 1.15, size=per_class).astype(np.float32)
            eps = rng.normal(0.0, noise, size=(per_class, size, size)).astype(np.float32)
            if field_noise > 0:
                eps += field_noise * _upsample_fields(
                    rng.normal(size=(per_class, 4, 4)), size).astype(np.float32)
            for s in range(per_class):
                img = np.roll(templates[c, modes[s]], tuple(shifts[s]), axis=(0, 1))
                images[row, 0] = np.clip(img * gains[s] + eps[s], 0.0, 1.0)
                labels[row] = c
                row += 1
        return images, labels

    train_x, train_y = draw(train_per_class)
    test_x, test_y = draw(test_per_class)
    return ArrayDataset(name, train_x, train_y, test_x, test_y)


def digits_dataset() -> ArrayDataset:
    """scikit-learn's bundled 8x8 digits, split 80/20 per class."""
    from sklearn.datasets import load_digits

    raw = load_digits()
    images = (raw.images[:, None, :, :] / 16.0).astype(np.float32)
    labels = raw.target.astype(np.int64)
    train_mask = np.zeros(len(labels), dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        train_mask[idx[: int(0.8 * len(idx))]] = True
    return ArrayDataset("digits", images[train_mask], labels[train_mask],
                        images[~train_mask], labels[~train_mask])


def load_dataset_dir(root: str | Path, name: str | None = None) -> ArrayDataset:
    """Load a dataset from a directory of per-class image arrays.

    Layout: <root>/train/<class_id>.npy and <root>/test/<class_id>.npy, each
    an array [N, C, H, W] (float in [0,1] or uint8, converted here).
    """
    root = Path(root)
    splits = {}
    for split in ("train", "test"):
        split_dir = root / split
        if not split_dir.is_dir():
            raise FileNotFoundError(f"missing dataset split directory: {split_dir}")
        images, labels = [], []
        for f in sorted(split_dir.glob("*.npy"), key=lambda p: int(p.stem)):
            arr = np.load(f)
            if arr.dtype == np.uint8:
                arr = arr.astype(np.float32) / 255.0
            images.append(arr.astype(np.float32))
            labels.append(np.full(len(arr), int(f.stem), dtype=np.int64))
        if not images:
            raise FileNotFoundError(f"no per-class .npy files in {split_dir}")
        splits[split] = (np.concatenate(images), np.concatenate(labels))
    return ArrayDataset(name or root.name, *splits["train"], *splits["test"])


def save_dataset_dir(dataset: ArrayDataset, root: str | Path) -> None:
    """Write a dataset in the per-class directory layout read by load_dataset_dir."""
    root = Path(root)
    for split, images, labels in (("train", dataset.train_images, dataset.train_labels),
                                  ("test", dataset.test_images, dataset.test_labels)):
        split_dir = root / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for c in np.unique(labels):
            np.save(split_dir / f"{int(c)}.npy", images[labels == c])


# The default entry is deliberately multi-modal with a smooth per-sample
# field: single-template classes with i.i.d. noise are too easy for replay
# baselines to forget, which flattens every method comparison.
_BUILTIN = {
    "synthetic": lambda: synthetic_dataset(modes_per_class=2, field_noise=0.15),
    "synthetic_small": lambda: synthetic_dataset(train_per_class=120, test_per_class=40,
                                                 modes_per_class=2, field_noise=0.15,
                                                 name="synthetic_small"),
    "digits": digits_dataset,
}


def load_dataset(dataset_id: str, root: str | Path | None = None) -> ArrayDataset:
    """Resolve a dataset id: a built-in name or a per-class directory.

    Directory ids are resolved relative to `root`, falling back to the
    STREAMKD_DATA_ROOT environment variable.
    """
    if dataset_id in _BUILTIN:
        return _BUILTIN[dataset_id]()
    base = root or os.environ.get(DATA_ROOT_ENV)
    candidate = Path(base) / dataset_id if base else Path(dataset_id)
    if candidate.is_dir():
        return load_dataset_dir(candidate, name=dataset_id)
    raise ValueError(f"unknown dataset id {dataset_id!r} "
                     f"(not a built-in, not a directory under {base or '.'})")
