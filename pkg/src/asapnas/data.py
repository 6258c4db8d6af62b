"""Synthetic classification data and the equal train/validation split.

CSV schema written by :meth:`Dataset.to_csv`: a header ``x0,...,x{d-1},label``
followed by one row per sample; features use ``repr`` floats so a round trip
is exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

KINDS = ("blobs", "moons", "xor_grid")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    kind: str = "custom"
    seed: int | None = None
    classes: int | None = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError(
                f"features {self.features.shape} and labels {self.labels.shape} do not align")
        if self.classes is None:
            object.__setattr__(self, "classes", int(self.labels.max()) + 1 if len(self) else 0)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.kind, self.seed, self.classes)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k}" for k in range(self.d)] + ["label"])
            for x, y in zip(self.features, self.labels):
                w.writerow([repr(float(v)) for v in x] + [int(y)])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[-1] != "label":
            raise ValueError(f"{path}: last column must be 'label'")
        X = np.array([[float(v) for v in r[:-1]] for r in body], dtype=np.float64)
        y = np.array([int(r[-1]) for r in body], dtype=np.int64)
        return cls(X.reshape(len(body), len(header) - 1), y)


def _balanced_labels(n: int, classes: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % classes)


def _blobs(y, d, classes, noise, rng):
    centers = rng.normal(size=(classes, d)) * 4.0
    return centers[y] + noise * rng.normal(size=(len(y), d))


def _moons(y, d, classes, noise, rng):
    if classes != 2:
        raise ValueError(f"moons has exactly 2 classes, got {classes}")
    angle = rng.uniform(0, np.pi, size=len(y))
    X = np.where(y[:, None] == 0,
                 np.c_[np.cos(angle), np.sin(angle)],
                 np.c_[1 - np.cos(angle), 0.5 - np.sin(angle)])
    X = X + noise * rng.normal(size=X.shape)
    return _pad(X, d, rng)


def _xor_grid(y, d, classes, noise, rng, cells: int = 3):
    # checkerboard over a cells x cells grid; cell (i, j) has class (i + j) % classes
    ij = np.array([(i, j) for i in range(cells) for j in range(cells)])
    cell_class = ij.sum(axis=1) % classes
    X = np.empty((len(y), 2))
    for c in range(classes):
        rows = np.flatnonzero(y == c)
        own = ij[cell_class == c]
        pick = own[rng.integers(len(own), size=len(rows))]
        X[rows] = pick + rng.uniform(size=(len(rows), 2))
    X = X / cells * 2 - 1
    X = X + noise / cells * rng.normal(size=X.shape)
    return _pad(X, d, rng)


def _pad(X, d, rng):
    if d > X.shape[1]:
        X = np.c_[X, rng.normal(size=(X.shape[0], d - X.shape[1]))]
    return X


def make_dataset(kind: str, n: int, d: int = 2, classes: int = 2, noise: float = 0.0,
                 seed: int = 0) -> Dataset:
    """Deterministic, class-balanced dataset with standardized features.

    ``moons`` and ``xor_grid`` place the signal in the first two features and
    pad the rest with unit gaussian distractors.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; choose from {KINDS}")
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if n < 4 * classes:
        raise ValueError(f"need n >= 4 * classes = {4 * classes}, got n={n}")
    if d < 2:
        raise ValueError(f"need d >= 2, got d={d}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    y = _balanced_labels(n, classes, rng)
    gen = {"blobs": _blobs, "moons": _moons, "xor_grid": _xor_grid}[kind]
    X = gen(y, d, classes, noise, rng)
    std = X.std(axis=0)
    if np.any(std == 0):
        raise ValueError("a feature has zero variance; increase n or noise")
    X = (X - X.mean(axis=0)) / std
    return Dataset(X, y.astype(np.int64), kind, seed, classes)


def split_half(dataset: Dataset, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Disjoint, class-stratified halves of equal size."""
    n = len(dataset)
    if n == 0 or n % 2:
        raise ValueError(f"split_half needs a positive even number of samples, got {n}")
    rng = np.random.default_rng(seed)
    train, val = [], []
    extra_to_train = True
    for c in range(dataset.classes):
        idx = rng.permutation(np.flatnonzero(dataset.labels == c))
        half = len(idx) // 2
        if len(idx) % 2:
            half += extra_to_train
            extra_to_train = not extra_to_train
        train.append(idx[:half])
        val.append(idx[half:])
    train = rng.permutation(np.concatenate(train))
    val = rng.permutation(np.concatenate(val))
    return dataset.subset(train), dataset.subset(val)
