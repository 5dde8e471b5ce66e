"""Datasets, CSV loading, the unlabeled/online target split and stream permutation.

Labels are 1-based in files and 0-based in memory.  Conversion happens only
in :func:`load_dataset` and :func:`save_dataset`.

All randomness goes through ``numpy.random.Generator`` seeded with PCG64, so a
split or permutation is reproducible from its integer seed alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent dataset input."""


class LabeledInstance(NamedTuple):
    features: np.ndarray
    label: int  # 0-based


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Dataset:
    """A domain's instances as a feature matrix ``X`` (n, m) and 0-based labels ``y``."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"{X.shape[0]} feature rows but {y.shape} labels")
        if self.num_classes < 1:
            raise DataError("num_classes must be positive")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError(
                f"labels must lie in 1..{self.num_classes} (got {y.min() + 1}..{y.max() + 1})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self) -> Iterator[LabeledInstance]:
        for x, y in zip(self.X, self.y):
            yield LabeledInstance(x, int(y))

    def __getitem__(self, i: int) -> LabeledInstance:
        return LabeledInstance(self.X[i], int(self.y[i]))

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.num_classes,
                       self.name if name is None else name)

    def with_num_classes(self, num_classes: int) -> "Dataset":
        return Dataset(self.X, self.y, num_classes, self.name)

    def projected(self, A: np.ndarray) -> "Dataset":
        """Return the dataset with every row mapped through ``A`` (d, m)."""
        return Dataset(self.X @ np.asarray(A).T, self.y, self.num_classes, self.name)


@dataclass(frozen=True)
class TargetSplit:
    """Offline unlabeled pool plus the labeled online stream of a target domain.

    ``unlabeled`` keeps its true labels so that verification code can use
    them; learning code must only read ``unlabeled.X``.
    """

    unlabeled: Dataset
    online_stream: Dataset
    seed: int
    unlabeled_index: np.ndarray = field(repr=False)
    online_index: np.ndarray = field(repr=False)


def load_dataset(path, fmt: str = "csv", header: bool = False,
                 num_classes: int | None = None, name: str | None = None) -> Dataset:
    """Read a CSV of ``m`` feature columns followed by one integer label per row.

    ``num_classes`` defaults to the largest label in the file.
    """
    if fmt != "csv":
        raise DataError(f"unsupported format {fmt!r}")
    path = Path(path)
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise DataError(f"{path}: row {lineno}: need at least one feature and a label")
            elif len(row) != width:
                raise DataError(
                    f"{path}: row {lineno}: expected {width} fields, found {len(row)}")
            try:
                feats = [float(c) for c in row[:-1]]
                label = float(row[-1])
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
            if not label.is_integer():
                raise DataError(f"{path}: row {lineno}: label {row[-1]!r} is not an integer")
            if not all(math.isfinite(v) for v in feats):
                raise DataError(f"{path}: row {lineno}: non-finite feature")
            rows.append(feats)
            labels.append(int(label))
    if not rows:
        raise DataError(f"{path}: empty dataset")
    y = np.asarray(labels, dtype=np.int64)
    if y.min() < 1:
        raise DataError(f"{path}: row {int(np.argmin(y)) + 1}: labels must be >= 1")
    k = int(y.max()) if num_classes is None else int(num_classes)
    if y.max() > k:
        bad = int(np.argmax(y > k))
        raise DataError(f"{path}: row {bad + 1}: label {y[bad]} exceeds K={k}")
    return Dataset(np.asarray(rows, dtype=float), y - 1, k,
                   path.stem if name is None else name)


def save_dataset(d: Dataset, path) -> None:
    """Write ``d`` in the CSV layout :func:`load_dataset` reads.

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for x, y in zip(d.X, d.y):
            writer.writerow([repr(float(v)) for v in x] + [int(y) + 1])


def infer_num_classes(datasets: Sequence[Dataset]) -> int:
    return max(d.num_classes for d in datasets)


def split_target(d: Dataset, unlabeled_fraction: float, seed: int) -> TargetSplit:
    """Randomly assign ``round(fraction * n)`` instances to the unlabeled pool.

    Both parts keep the original file order; only membership is random.
    """
    if not 0.0 < unlabeled_fraction < 1.0:
        raise ValueError(f"unlabeled_fraction must be in (0, 1), got {unlabeled_fraction}")
    n = len(d)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    n_u = int(math.floor(unlabeled_fraction * n + 0.5))
    perm = make_rng(seed).permutation(n)
    unl = np.sort(perm[:n_u])
    onl = np.sort(perm[n_u:])
    return TargetSplit(
        unlabeled=d.subset(unl, f"{d.name}_unlabeled"),
        online_stream=d.subset(onl, f"{d.name}_online"),
        seed=seed,
        unlabeled_index=unl,
        online_index=onl,
    )


def permute_stream(split: TargetSplit | Dataset, trial_seed: int) -> Dataset:
    """Uniformly random reordering of the online stream."""
    stream = split.online_stream if isinstance(split, TargetSplit) else split
    order = make_rng(trial_seed).permutation(len(stream))
    return stream.subset(order)
