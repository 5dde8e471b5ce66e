"""Per-domain linear transformations and the closed-form MMD-reducing update.

A transformation ``A`` (d x m) maps raw features into the space shared by a
source domain and the target.  Every ``T_w`` rounds it is replaced by the
minimiser of

    ||A' - A||_F^2 + mu * sum_k ||A' (cs_k - ct_k)||^2

where k = 0 pairs the overall source/target means and k = 1..K the class
means.  The minimiser is ``A (I + mu * sum_k d_k d_k^T)^-1``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .data import Dataset

log = logging.getLogger(__name__)

# above this condition number the update falls back to the pseudo-inverse
SINGULAR_COND = 1e12


@dataclass
class TransformMatrix:
    entries: np.ndarray
    source_domain: str = ""

    def __post_init__(self):
        self.entries = np.array(self.entries, dtype=float, ndmin=2)
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("transformation matrix has non-finite entries")

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def identity(cls, m: int, source_domain: str = "") -> "TransformMatrix":
        return cls(np.eye(m), source_domain)


def _entries(A) -> np.ndarray:
    return A.entries if isinstance(A, TransformMatrix) else np.asarray(A, dtype=float)


def project(A, x) -> np.ndarray:
    M = _entries(A)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != M.shape[1]:
        raise ValueError(f"matrix expects {M.shape[1]} features, got {x.shape[-1]}")
    return M @ x if x.ndim == 1 else x @ M.T


@dataclass(frozen=True)
class SourceStats:
    overall_mean: np.ndarray
    class_means: np.ndarray  # (K, m); rows of empty classes are zero
    class_counts: np.ndarray

    @classmethod
    def from_dataset(cls, d: Dataset) -> "SourceStats":
        counts = np.bincount(d.y, minlength=d.num_classes)
        sums = np.zeros((d.num_classes, d.dim))
        np.add.at(sums, d.y, d.X)
        means = np.divide(sums, counts[:, None], out=np.zeros_like(sums),
                          where=counts[:, None] > 0)
        return cls(d.X.mean(axis=0), means, counts)


@dataclass
class TargetRunningStats:
    """Running overall and per-class means of the labeled target instances seen so far.

    ``pool_sum``/``pool_count`` optionally carry an unlabeled pool that only
    enters the marginal (k = 0) mean; see :meth:`marginal_mean`.
    """

    dim: int
    num_classes: int
    count: int = 0
    total: np.ndarray = field(default=None, repr=False)
    class_sums: np.ndarray = field(default=None, repr=False)
    class_counts: np.ndarray = field(default=None)
    pool_sum: np.ndarray = field(default=None, repr=False)
    pool_count: int = 0

    def __post_init__(self):
        if self.total is None:
            self.total = np.zeros(self.dim)
        if self.class_sums is None:
            self.class_sums = np.zeros((self.num_classes, self.dim))
        if self.class_counts is None:
            self.class_counts = np.zeros(self.num_classes, dtype=np.int64)
        if self.pool_sum is None:
            self.pool_sum = np.zeros(self.dim)

    @property
    def overall_mean(self) -> np.ndarray:
        if self.count == 0:
            return np.full(self.dim, np.nan)
        return self.total / self.count

    @property
    def class_means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.class_sums / self.class_counts[:, None]

    def marginal_mean(self) -> np.ndarray:
        n = self.count + self.pool_count
        if n == 0:
            return np.full(self.dim, np.nan)
        return (self.total + self.pool_sum) / n

    def add_pool(self, X) -> None:
        X = np.asarray(X, dtype=float)
        self.pool_sum = self.pool_sum + X.sum(axis=0)
        self.pool_count += X.shape[0]

    def copy(self) -> "TargetRunningStats":
        return TargetRunningStats(self.dim, self.num_classes, self.count, self.total.copy(),
                                  self.class_sums.copy(), self.class_counts.copy(),
                                  self.pool_sum.copy(), self.pool_count)


def observe(stats: TargetRunningStats, x, y: int) -> TargetRunningStats:
    """Fold one labeled target instance into ``stats`` (in place)."""
    if not 0 <= y < stats.num_classes:
        raise ValueError(f"label {y} outside 0..{stats.num_classes - 1}")
    x = np.asarray(x, dtype=float)
    stats.total += x
    stats.count += 1
    stats.class_sums[y] += x
    stats.class_counts[y] += 1
    return stats


def mean_differences(src: SourceStats, tgt: TargetRunningStats) -> np.ndarray:
    """Stack the available ``cs_k - ct_k`` rows (k = 0 first).

    Classes unseen on either side are left out rather than compared with a
    made-up zero mean.
    """
    rows = []
    if tgt.count + tgt.pool_count > 0:
        rows.append(src.overall_mean - tgt.marginal_mean())
    both = (src.class_counts > 0) & (tgt.class_counts > 0)
    if np.any(both):
        tmeans = tgt.class_sums[both] / tgt.class_counts[both][:, None]
        rows.extend(src.class_means[both] - tmeans)
    if not rows:
        return np.zeros((0, src.overall_mean.shape[0]))
    return np.vstack(rows)


def mmd_objective(A, src: SourceStats, tgt: TargetRunningStats) -> float:
    """Sum of squared projected mean gaps, marginal term plus class terms."""
    D = mean_differences(src, tgt)
    return float(np.sum((D @ _entries(A).T) ** 2))


def regularized_objective(A_new, A_old, D: np.ndarray, mu: float) -> float:
    """``||A_new - A_old||_F^2 + mu * sum_k ||A_new d_k||^2`` for the rows ``d_k`` of ``D``."""
    A_new, A_old = _entries(A_new), _entries(A_old)
    return float(np.sum((A_new - A_old) ** 2) + mu * np.sum((D @ A_new.T) ** 2))


def update_matrix(A, src: SourceStats, tgt: TargetRunningStats, mu: float) -> TransformMatrix:
    """Closed-form minimiser of the regularized MMD objective around ``A``."""
    if mu < 0:
        raise ValueError("mu must be non-negative")
    if tgt.count + tgt.pool_count < 1:
        raise ValueError("no target statistics to align with")
    M = _entries(A)
    name = A.source_domain if isinstance(A, TransformMatrix) else ""
    D = mean_differences(src, tgt)
    if not np.all(np.isfinite(D)):
        raise ValueError("non-finite mean statistics")
    if mu == 0 or D.shape[0] == 0:
        return TransformMatrix(M.copy(), name)
    G = np.eye(M.shape[1]) + mu * (D.T @ D)
    # eigenvalues of G are 1 + mu * eig(D D^T) plus ones, so cond(G) is cheap
    top = np.linalg.eigvalsh(D @ D.T)[-1]
    cond = 1.0 + mu * max(top, 0.0)
    solved = None
    if cond <= SINGULAR_COND:
        try:
            # A' G = A  <=>  G A'^T = A^T
            solved = scipy.linalg.cho_solve(scipy.linalg.cho_factor(G), M.T).T
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            solved = None
    if solved is None:
        log.warning("update matrix is ill-conditioned (cond ~ %.3g); using pseudo-inverse", cond)
        solved = M @ np.linalg.pinv(G, hermitian=True)
    return TransformMatrix(solved, name)


def should_update(t: int, window: int) -> bool:
    if window < 1:
        raise ValueError("time window must be a positive integer")
    if t < 1:
        raise ValueError("rounds are counted from 1")
    return t % window == 0


def export_matrix(A: TransformMatrix, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(f"{A.d},{A.m},{A.source_domain}\n")
        for row in A.entries:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def import_matrix(path, expected_domain: str | None = None) -> TransformMatrix:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    head = lines[0].split(",", 2)
    try:
        d, m = int(head[0]), int(head[1])
    except (ValueError, IndexError):
        raise ValueError(f"{path}: header must be 'd,m,domain_name'") from None
    name = head[2] if len(head) > 2 else ""
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    if len(rows) != d or any(len(r) != m for r in rows):
        got = f"{len(rows)}x{len(rows[0]) if rows else 0}"
        raise ValueError(f"{path}: header says {d}x{m}, body is {got}")
    if expected_domain is not None and name != expected_domain:
        warnings.warn(f"{path}: matrix was computed for domain {name!r}, "
                      f"using it for {expected_domain!r}", stacklevel=2)
    return TransformMatrix(np.asarray(rows, dtype=float).reshape(d, m), name)
