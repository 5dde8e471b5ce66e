"""Multi-class Passive-Aggressive classifier (PA-I, max-violation pair update)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .data import Dataset, make_rng

TAU_RULES = ("standard", "paper")
_PAPER_TAU_FLOOR = 1e-12


class MarginViolation(NamedTuple):
    r: int
    s: int
    loss: float


@dataclass
class PAModel:
    """K weight vectors of length d stored as rows of ``weights``."""

    weights: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int, dim: int) -> "PAModel":
        if num_classes < 2:
            raise ValueError("PA needs at least two classes")
        return cls(np.zeros((num_classes, dim)))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "PAModel":
        return PAModel(self.weights.copy())

    def predict(self, x) -> int:
        return int(np.argmax(predict_scores(self, x)))


def predict_scores(model: PAModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"expected a vector of length {model.dim}, got shape {x.shape}")
    return model.weights @ x


def _violation(scores: np.ndarray, y: int) -> MarginViolation:
    rival = scores.copy()
    rival[y] = -np.inf
    s = int(np.argmax(rival))  # argmax returns the first maximum
    return MarginViolation(y, s, max(0.0, 1.0 - scores[y] + scores[s]))


def margin_violation(model: PAModel, x, y: int) -> MarginViolation:
    """Most violated margin constraint for the 0-based label ``y``."""
    if not 0 <= y < model.num_classes:
        raise ValueError(f"label {y} outside 0..{model.num_classes - 1}")
    return _violation(predict_scores(model, x), y)


def step_size(loss: float, x: np.ndarray, margin: float, C: float,
              tau_rule: str = "standard") -> float:
    """Clipped PA step.

    ``standard`` divides the loss by ``2 * ||x||^2``, the squared norm of the
    joint update direction.  ``paper`` divides by ``|w^r.x - w^s.x|`` floored
    at 1e-12.
    """
    if tau_rule == "standard":
        denom = 2.0 * float(x @ x)
    elif tau_rule == "paper":
        denom = max(abs(margin), _PAPER_TAU_FLOOR)
    else:
        raise ValueError(f"unknown tau rule {tau_rule!r}")
    if loss >= C * denom:
        return C
    return loss / denom


def pa_update(model: PAModel, x, y: int, C: float,
              tau_rule: str = "standard") -> MarginViolation:
    """Update ``model`` in place on ``(x, y)`` and return the pre-update violation.

    Does nothing when the loss is zero or ``||x||^2`` is zero (or underflows).
    """
    if C <= 0:
        raise ValueError("C must be positive")
    x = np.asarray(x, dtype=float)
    scores = predict_scores(model, x)
    v = _violation(scores, y)
    if v.loss > 0.0 and float(x @ x) > 0.0:
        tau = step_size(v.loss, x, scores[v.r] - scores[v.s], C, tau_rule)
        model.weights[v.r] += tau * x
        model.weights[v.s] -= tau * x
    return v


def train_offline(d: Dataset, C: float, epochs: int = 1, seed: int = 0,
                  tau_rule: str = "standard") -> PAModel:
    """Averaged multi-class PA over ``epochs`` shuffled passes of ``d``.

    The result is the mean of the post-update model after every step; the
    initial zero model is not part of the average.
    """
    if len(d) == 0:
        raise ValueError("cannot train on an empty dataset")
    if epochs < 1:
        raise ValueError("epochs must be positive")
    rng = make_rng(seed)
    model = PAModel.zeros(d.num_classes, d.dim)
    total = np.zeros_like(model.weights)
    steps = 0
    for _ in range(epochs):
        for i in rng.permutation(len(d)):
            pa_update(model, d.X[i], int(d.y[i]), C, tau_rule)
            total += model.weights
            steps += 1
    return PAModel(total / steps)


def train_online_mistakes(d: Dataset, C: float, epochs: int = 1, seed: int = 0) -> list[int]:
    """Per-epoch count of predict-then-update mistakes of a plain PA pass."""
    rng = make_rng(seed)
    model = PAModel.zeros(d.num_classes, d.dim)
    counts = []
    for _ in range(epochs):
        wrong = 0
        for i in rng.permutation(len(d)):
            wrong += model.predict(d.X[i]) != d.y[i]
            pa_update(model, d.X[i], int(d.y[i]), C)
        counts.append(wrong)
    return counts


def accuracy(model: PAModel, d: Dataset) -> float:
    if len(d) == 0:
        return float("nan")
    pred = np.argmax(d.X @ model.weights.T, axis=1)
    return float(np.mean(pred == d.y))


def save_model(model: PAModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(f"{model.num_classes},{model.dim}\n")
        for row in model.weights:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_model(path) -> PAModel:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty model file")
    try:
        k, d = (int(v) for v in lines[0].split(","))
    except ValueError:
        raise ValueError(f"{path}: header must be 'K,d'") from None
    body = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    W = np.asarray(body, dtype=float)
    if W.shape != (k, d):
        raise ValueError(f"{path}: header says {k}x{d}, body is {W.shape[0]}x"
                         f"{W.shape[1] if W.ndim == 2 else 0}")
    return PAModel(W)
