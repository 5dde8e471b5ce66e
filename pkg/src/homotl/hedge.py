"""Hedge weighting of n source and n target experts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


def _logsumexp(a: np.ndarray) -> float:
    # scipy.special.logsumexp is ~10x slower on vectors this short
    top = a.max()
    return float(top + np.log(np.exp(a - top).sum()))


class RoundOutcome(NamedTuple):
    z: np.ndarray  # source expert i erred
    r: np.ndarray  # target expert i erred
    ensemble_mistake: bool = False


@dataclass
class EnsembleState:
    """Normalised expert weights, kept as logs so a long losing streak cannot underflow.

    ``log_w`` holds the n source weights followed by the n target weights.
    """

    log_w: np.ndarray
    beta: float

    @property
    def n(self) -> int:
        return self.log_w.shape[0] // 2

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_w - self.log_w.max())
        return w / w.sum()

    @property
    def u(self) -> np.ndarray:
        return self.weights[: self.n]

    @property
    def v(self) -> np.ndarray:
        return self.weights[self.n:]

    def copy(self) -> "EnsembleState":
        return EnsembleState(self.log_w.copy(), self.beta)


def init_weights(n: int, beta: float = 0.5) -> EnsembleState:
    if n < 1:
        raise ValueError("need at least one source domain")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    return EnsembleState(np.full(2 * n, -math.log(2 * n)), beta)


def horizon_beta(T: int) -> float:
    """``sqrt(T) / (sqrt(T) + sqrt(ln 2))`` for a stream of length T."""
    T = max(int(T), 1)
    return math.sqrt(T) / (math.sqrt(T) + math.sqrt(math.log(2)))


def best_expert_beta(m_min: float, n: int, floor: float = 1e-12) -> float:
    """Discount that yields the mistake bound, given the best expert's mistakes.

    ``m_min = 0`` would give beta = 0; it is floored so the weights stay positive.
    """
    a = math.sqrt(m_min)
    b = math.sqrt(math.log(2 * n))
    return max(a / (a + b), floor)


def ensemble_predict(src_scores, tgt_scores, state: EnsembleState) -> tuple[np.ndarray, int]:
    """Weighted score sum and its argmax (first index on ties)."""
    S = np.atleast_2d(np.asarray(src_scores, dtype=float))
    T = np.atleast_2d(np.asarray(tgt_scores, dtype=float))
    if S.shape != T.shape or S.shape[0] != state.n:
        raise ValueError(f"expected {state.n} source and target score vectors of equal "
                         f"length, got {S.shape} and {T.shape}")
    w = state.weights
    F = w[: state.n] @ S + w[state.n:] @ T
    return F, int(np.argmax(F))


def hedge_update(state: EnsembleState, outcome: RoundOutcome) -> EnsembleState:
    """Discount every erring expert by beta and renormalise (in place)."""
    losses = np.concatenate([np.asarray(outcome.z, dtype=float),
                             np.asarray(outcome.r, dtype=float)])
    if losses.shape != state.log_w.shape:
        raise ValueError(f"expected {state.n} source and {state.n} target indicators")
    state.log_w = state.log_w + losses * math.log(state.beta)
    state.log_w -= _logsumexp(state.log_w)
    return state


def mistake_bound(m_min: float, n: int) -> float:
    """Upper bound on ensemble mistakes given the best expert's count ``m_min``."""
    if m_min < 0:
        raise ValueError("m_min must be non-negative")
    ln2n = math.log(2 * n)
    return m_min + 1.5 * math.sqrt(ln2n * m_min) + ln2n


def hedge_loss(losses, beta: float) -> tuple[float, np.ndarray]:
    """Run Hedge over a (T, 2n) 0/1 loss table.

    Returns the learner's cumulative expected loss (the weighted mistake
    count) and the final weights.
    """
    L = np.asarray(losses, dtype=float)
    state = EnsembleState(np.full(L.shape[1], -math.log(L.shape[1])), beta)
    total = 0.0
    n = L.shape[1] // 2
    for row in L:
        total += float(state.weights @ row)
        hedge_update(state, RoundOutcome(row[:n], row[n:]))
    return total, state.weights
