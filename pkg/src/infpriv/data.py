"""Desk-scale classification data: Gaussian blobs and a CSV format."""
from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path
from typing import Union

import numpy as np

from infpriv.rng import RandomSource

SPLITS = ("train", "val", "test")
# Fractions of each class assigned to train / val / test.
SPLIT_FRACTIONS = (0.64, 0.16, 0.20)


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    classes: int
    splits: np.ndarray  # one of SPLITS per row

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        s = np.asarray(self.splits, dtype=object)
        if x.ndim != 2:
            raise ValueError(f"features must be an N x n matrix, got shape {x.shape}")
        if y.shape != (x.shape[0],) or s.shape != (x.shape[0],):
            raise ValueError("labels and split tags need one entry per row")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        if self.classes < 1 or (y.size and (y.min() < 0 or y.max() >= self.classes)):
            raise ValueError(f"labels must lie in [0, {self.classes})")
        bad = set(s.tolist()) - set(SPLITS)
        if bad:
            raise ValueError(f"unknown split tags {sorted(bad)}")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "splits", s)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.splits == name
        if not mask.any():
            raise ValueError(f"split {name!r} is empty")
        return self.features[mask], self.labels[mask]

    def equals(self, other: Dataset) -> bool:
        return (self.classes == other.classes
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.splits, other.splits))


def lattice_centers(classes: int, dim: int, spacing: float) -> np.ndarray:
    """Distinct integer lattice points (base-b digits of the class index)."""
    base = 2
    while base**dim < classes:
        base += 1
    centers = np.zeros((classes, dim))
    for c in range(classes):
        v = c
        for j in range(dim):
            centers[c, j] = v % base
            v //= base
    centers -= centers.mean(axis=0)
    return spacing * centers


def gen_blobs(n_per_class: int, classes: int, dim: int, spread: float = 1.0,
              seed: int = 0) -> Dataset:
    """Isotropic Gaussian clusters, one per class.

    Centres sit on an integer lattice scaled by ``max(6 * spread, 1)`` so
    any two are at least that far apart in l_2. Every class is split
    64/16/20 into train/val/test with a seeded shuffle.
    """
    if n_per_class < 1 or classes < 1 or dim < 1:
        raise ValueError("n_per_class, classes and dim must be positive")
    if spread < 0:
        raise ValueError(f"spread must be >= 0, got {spread}")
    centers = lattice_centers(classes, dim, max(6.0 * spread, 1.0))
    rows, labels, splits = [], [], []
    n_train = int(round(SPLIT_FRACTIONS[0] * n_per_class))
    n_val = int(round(SPLIT_FRACTIONS[1] * n_per_class))
    for c in range(classes):
        noise = RandomSource.for_trial(seed, c, "blobs/points").gaussian(n_per_class * dim, spread)
        rows.append(centers[c] + noise.reshape(n_per_class, dim))
        labels.append(np.full(n_per_class, c))
        tags = np.array(["train"] * n_train + ["val"] * n_val
                        + ["test"] * (n_per_class - n_train - n_val), dtype=object)
        order = RandomSource.for_trial(seed, c, "blobs/split").generator().permutation(n_per_class)
        splits.append(tags[order])
    return Dataset(np.vstack(rows), np.concatenate(labels), classes, np.concatenate(splits))


def gen_fine_coarse_blobs(n_per_class: int, fine_dims: int = 4, coarse_dims: int = 4,
                          fine_gap: float = 0.5, fine_spread: float = 0.05,
                          coarse_gap: float = 1.0, coarse_spread: float = 1.0,
                          seed: int = 0) -> Dataset:
    """Two blobs separated along both low-variance and high-variance axes.

    The class means are ``-gap/2`` and ``+gap/2`` on every coordinate. The
    first ``fine_dims`` coordinates have a small gap and a tiny spread, so a
    noiseless classifier leans on them; additive input noise wipes them out
    while the coarse coordinates survive. A model fine-tuned on noisy inputs
    can shift its weight to the coarse coordinates, a clean model cannot.
    Splits and seeding follow :func:`gen_blobs`.
    """
    if n_per_class < 1 or fine_dims < 0 or coarse_dims < 0 or fine_dims + coarse_dims < 1:
        raise ValueError("need a positive size and at least one coordinate")
    gap = np.array([fine_gap] * fine_dims + [coarse_gap] * coarse_dims, dtype=float)
    std = np.array([fine_spread] * fine_dims + [coarse_spread] * coarse_dims, dtype=float)
    dim = gap.size
    rows, labels, splits = [], [], []
    n_train = int(round(SPLIT_FRACTIONS[0] * n_per_class))
    n_val = int(round(SPLIT_FRACTIONS[1] * n_per_class))
    for c in range(2):
        z = RandomSource.for_trial(seed, c, "fine-coarse/points").gaussian(n_per_class * dim)
        rows.append((c - 0.5) * gap + z.reshape(n_per_class, dim) * std)
        labels.append(np.full(n_per_class, c))
        tags = np.array(["train"] * n_train + ["val"] * n_val
                        + ["test"] * (n_per_class - n_train - n_val), dtype=object)
        order = RandomSource.for_trial(seed, c, "fine-coarse/split").generator().permutation(n_per_class)
        splits.append(tags[order])
    return Dataset(np.vstack(rows), np.concatenate(labels), 2, np.concatenate(splits))


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(dataset.dim)] + ["label", "split"])
        for row, label, split in zip(dataset.features, dataset.labels, dataset.splits):
            writer.writerow([repr(float(v)) for v in row] + [int(label), split])


def load_dataset(path: Union[str, Path], classes: Union[int, None] = None) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-2:] != ["label", "split"] or header[:-2] != [f"f{i}" for i in range(len(header) - 2)]:
            raise ValueError(f"{path}: expected header f0,...,f<n-1>,label,split")
        feats, labels, splits = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            feats.append([float(v) for v in row[:-2]])
            labels.append(int(row[-2]))
            splits.append(row[-1])
    labels_arr = np.array(labels, dtype=np.int64)
    if classes is None:
        classes = int(labels_arr.max()) + 1 if labels_arr.size else 1
    features = np.array(feats, dtype=np.float64).reshape(len(feats), len(header) - 2)
    return Dataset(features, labels_arr, classes, np.array(splits, dtype=object))


def accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(labels))) if len(labels) else math.nan
