"""Offline stage: initial transformation per source domain and its averaged PA classifier.

The initial matrices come from linear Joint Distribution Adaptation (JDA)
between each source and the unlabeled target pool, or are imported from
files computed elsewhere.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .data import Dataset
from .pa import PAModel, load_model, save_model, train_offline
from .transform import SourceStats, TransformMatrix, export_matrix, import_matrix

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class OfflineError(RuntimeError):
    pass


@dataclass
class JdaConfig:
    subspace_dim: int = 100
    iterations: int = 10
    reg: float = 1.0
    base_learner: str = "pa"
    pseudo_C: float = 5.0

    def __post_init__(self):
        if self.subspace_dim < 1:
            raise ValueError("subspace_dim must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.reg < 0:
            raise ValueError("reg must be non-negative")
        if self.base_learner != "pa":
            raise ValueError(f"unsupported base learner {self.base_learner!r}")


@dataclass
class OfflineArtifacts:
    matrices: list[TransformMatrix]
    source_models: list[PAModel]
    source_stats: list[SourceStats] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.matrices) != len(self.source_models):
            raise ValueError("one matrix per source model is required")
        for i, (A, f) in enumerate(zip(self.matrices, self.source_models)):
            if A.d != f.dim:
                raise ValueError(f"source {i}: matrix maps to {A.d} dims, model expects {f.dim}")

    @property
    def n(self) -> int:
        return len(self.matrices)


def _class_mean_gaps(Xs, ys, Xu, yu, num_classes) -> list[np.ndarray]:
    gaps = []
    for k in range(num_classes):
        ms, mu = ys == k, yu == k
        if ms.any() and mu.any():
            gaps.append(Xs[ms].mean(axis=0) - Xu[mu].mean(axis=0))
    return gaps


def _fix_signs(V: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip each column so that its first entry with magnitude above ``tol`` is positive."""
    V = V.copy()
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > tol)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return V


def jda_basis(Xs, Xu, gaps: Sequence[np.ndarray], dim: int, reg: float) -> np.ndarray:
    """Leading ``dim`` directions of the JDA pencil as rows of a (dim, m) matrix.

    The MMD coefficient matrices only enter through ``X M X^T``, which equals
    ``sum_k g_k g_k^T`` for the mean gaps ``g_k``; the (n x n) matrices are
    never formed.  Directions minimise ``a^T (sum g g^T + reg I) a`` relative
    to the centred scatter ``a^T X H X^T a``.
    """
    Z = np.vstack([Xs, Xu])
    Zc = Z - Z.mean(axis=0)
    scatter = Zc.T @ Zc
    m = Z.shape[1]
    G = np.zeros((m, m))
    for g in gaps:
        G += np.outer(g, g)
    P = G + reg * np.eye(m)
    try:
        if reg > 0:
            # P is definite: solve scatter a = gamma P a and keep the largest gamma = 1/eta
            gamma, V = scipy.linalg.eigh(scatter, P)
            order = np.argsort(-gamma, kind="stable")
        else:
            eta, V = scipy.linalg.eigh(P, scatter)
            order = np.argsort(eta, kind="stable")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise OfflineError(
            f"generalized eigensolver failed ({exc}); cond(scatter)={np.linalg.cond(scatter):.3g}, "
            f"cond(P)={np.linalg.cond(P):.3g}") from exc
    V = V[:, order[:dim]]
    V /= np.linalg.norm(V, axis=0)
    return _fix_signs(V).T


def compute_jda(source: Dataset, target_unlabeled: Dataset, cfg: JdaConfig,
                seed: int = 0) -> TransformMatrix:
    """Iterated linear JDA; pseudo-labels come from a PA model on the projected source."""
    if source.dim != target_unlabeled.dim:
        raise ValueError(f"source has {source.dim} features, target {target_unlabeled.dim}")
    m = source.dim
    Z = np.vstack([source.X, target_unlabeled.X])
    rank = int(np.linalg.matrix_rank(Z - Z.mean(axis=0)))
    dim = min(cfg.subspace_dim, m)
    if dim > rank:
        warnings.warn(f"subspace dimension {dim} exceeds the rank {rank} of the centred "
                      f"data; using {rank}", stacklevel=2)
        dim = rank
    if dim < 1:
        raise OfflineError("centred data has rank 0")
    K = max(source.num_classes, target_unlabeled.num_classes)
    pseudo = None
    A = None
    for it in range(cfg.iterations):
        gaps = [source.X.mean(axis=0) - target_unlabeled.X.mean(axis=0)]
        if pseudo is not None:
            gaps += _class_mean_gaps(source.X, source.y, target_unlabeled.X, pseudo, K)
        A = jda_basis(source.X, target_unlabeled.X, gaps, dim, cfg.reg)
        if it + 1 < cfg.iterations:
            clf = train_offline(source.with_num_classes(K).projected(A), cfg.pseudo_C,
                                seed=seed + it)
            pseudo = np.argmax(target_unlabeled.X @ A.T @ clf.weights.T, axis=1)
    return TransformMatrix(A, source.name)


def default_subspace_dim(m: int, n_total: int, cap: int = 100) -> int:
    return max(1, min(cap, m, n_total - 1))


def offline_stage(sources: Sequence[Dataset], target_unlabeled: Dataset | None,
                  jda: JdaConfig | None, C: float, seed: int = 0, *,
                  matrices: Sequence[TransformMatrix] | None = None,
                  epochs: int = 1) -> OfflineArtifacts:
    """Build one matrix and one averaged PA source classifier per source domain."""
    if not sources:
        raise ValueError("at least one source domain is required")
    m = sources[0].dim
    K = max(d.num_classes for d in sources)
    if target_unlabeled is not None:
        K = max(K, target_unlabeled.num_classes)
        if target_unlabeled.dim != m:
            raise ValueError(f"target has {target_unlabeled.dim} features, sources {m}")
    for d in sources:
        if d.dim != m:
            raise ValueError(f"source {d.name!r} has {d.dim} features, expected {m}")
    if matrices is not None and len(matrices) != len(sources):
        raise ValueError(f"{len(matrices)} matrices for {len(sources)} sources")
    if matrices is None and (target_unlabeled is None or jda is None):
        raise ValueError("JDA needs the unlabeled target pool and a JdaConfig")

    mats, models, stats = [], [], []
    for i, src in enumerate(sources):
        src = src.with_num_classes(K)
        try:
            if matrices is not None:
                A = matrices[i]
                if A.m != m:
                    raise ValueError(f"matrix expects {A.m} features, data has {m}")
            else:
                tgt = target_unlabeled.with_num_classes(K)
                A = compute_jda(src, tgt, jda, seed=seed + 1000 * i)
            model = train_offline(src.projected(A.entries), C, epochs=epochs, seed=seed + i)
        except Exception as exc:
            raise OfflineError(f"source domain {i} ({src.name!r}): {exc}") from exc
        log.info("source %d (%s): A is %dx%d", i, src.name, A.d, A.m)
        mats.append(A)
        models.append(model)
        stats.append(SourceStats.from_dataset(src))
    echo = {"C": C, "seed": seed, "epochs": epochs, "num_classes": K, "dim": m,
            "jda": asdict(jda) if jda is not None and matrices is None else None,
            "imported": matrices is not None,
            "sources": [d.name for d in sources]}
    return OfflineArtifacts(mats, models, stats, echo)


def save_artifacts(art: OfflineArtifacts, out_dir, extra: dict | None = None) -> Path:
    """Write matrices, models and a JSON manifest into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (A, f) in enumerate(zip(art.matrices, art.source_models)):
        mpath, fpath = f"matrix_{i}.csv", f"model_{i}.csv"
        export_matrix(A, out / mpath)
        save_model(f, out / fpath)
        entries.append({"domain": A.source_domain, "matrix": mpath, "model": fpath})
    manifest = {"config": art.config_echo, "domains": entries}
    if extra:
        manifest.update(extra)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out / MANIFEST


def load_artifacts(art_dir, sources: Sequence[Dataset] | None = None) -> tuple[OfflineArtifacts, dict]:
    """Read a directory written by :func:`save_artifacts`.

    Source statistics are recomputed from ``sources`` when given.
    """
    root = Path(art_dir)
    manifest = json.loads((root / MANIFEST).read_text())
    mats = [import_matrix(root / e["matrix"]) for e in manifest["domains"]]
    models = [load_model(root / e["model"]) for e in manifest["domains"]]
    stats = []
    if sources is not None:
        K = manifest["config"].get("num_classes")
        stats = [SourceStats.from_dataset(d.with_num_classes(K) if K else d) for d in sources]
    return OfflineArtifacts(mats, models, stats, manifest["config"]), manifest
