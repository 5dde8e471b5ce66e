"""Synthetic multi-source tasks with controlled covariate shift."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, make_rng


@dataclass(frozen=True)
class SyntheticSpec:
    """Class-conditional Gaussian domains.

    Source ``i`` (1-based) is the target distribution rotated by
    ``rotation * i / n`` radians and translated by ``shift * i / n`` along a
    fixed random direction.  The rotation acts on ``rotation_planes``
    orthogonal planes of a random basis (all ``dim // 2`` planes by default).
    ``target_per_class_count`` defaults to ``per_class_count``; ``target_size``
    instead fixes the total number of target instances, with labels assigned
    round-robin.
    """

    num_sources: int = 3
    dim: int = 20
    classes: int = 4
    per_class_count: int = 200
    shift: float = 3.0
    rotation: float = 0.6
    noise_std: float = 1.0
    seed: int = 0
    class_sep: float = 1.0
    target_per_class_count: int | None = None
    target_size: int | None = None
    rotation_planes: int | None = None

    def __post_init__(self):
        if min(self.num_sources, self.dim, self.classes, self.per_class_count) < 1:
            raise ValueError("counts and dimensions must be positive")
        if self.target_per_class_count is not None and self.target_per_class_count < 1:
            raise ValueError("target_per_class_count must be positive")
        if self.target_size is not None and self.target_size < 1:
            raise ValueError("target_size must be positive")
        if self.rotation_planes is not None and not 0 <= self.rotation_planes <= self.dim // 2:
            raise ValueError("rotation_planes must lie in 0..dim // 2")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


def rotation_matrix(basis: np.ndarray, angle: float, planes: int | None = None) -> np.ndarray:
    """Rotate the first ``planes`` consecutive column pairs of ``basis`` by ``angle``."""
    m = basis.shape[0]
    planes = m // 2 if planes is None else planes
    B = np.eye(m)
    c, s = np.cos(angle), np.sin(angle)
    for j in range(0, 2 * planes, 2):
        B[j:j + 2, j:j + 2] = [[c, -s], [s, c]]
    return basis @ B @ basis.T


def _draw(rng, means, per_class, noise_std, name, num_classes, total=None) -> Dataset:
    K, m = means.shape
    y = np.arange(total) % K if total else np.repeat(np.arange(K), per_class)
    X = means[y] + noise_std * rng.standard_normal((y.size, m))
    order = rng.permutation(y.size)
    return Dataset(X[order], y[order], num_classes, name)


def gen_synthetic(spec: SyntheticSpec) -> tuple[list[Dataset], Dataset]:
    """Return ``(sources, target)`` drawn deterministically from ``spec.seed``."""
    rng = make_rng(spec.seed)
    m, K, n = spec.dim, spec.classes, spec.num_sources
    means = spec.class_sep * rng.standard_normal((K, m))
    basis, _ = np.linalg.qr(rng.standard_normal((m, m)))
    direction = rng.standard_normal(m)
    direction /= np.linalg.norm(direction)

    target = _draw(rng, means, spec.target_per_class_count or spec.per_class_count,
                   spec.noise_std, "target", K, spec.target_size)
    sources = []
    for i in range(1, n + 1):
        R = rotation_matrix(basis, spec.rotation * i / n, spec.rotation_planes)
        offset = spec.shift * i / n * direction
        base = _draw(rng, means, spec.per_class_count, spec.noise_std, f"source_{i}", K)
        sources.append(Dataset(base.X @ R.T + offset, base.y, K, f"source_{i}"))
    return sources, target
