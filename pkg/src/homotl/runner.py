"""Online protocol: the transfer ensemble, its baselines, and multi-trial experiments."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, TargetSplit, permute_stream
from .hedge import (RoundOutcome, ensemble_predict, hedge_update,
                    init_weights, horizon_beta, best_expert_beta)
from .offline import OfflineArtifacts
from .pa import PAModel, pa_update, train_offline
from .transform import TargetRunningStats, mmd_objective, observe, update_matrix

VARIANTS = ("full", "fixed", "pa", "paio")
BETA_RULES = ("horizon", "best-expert")


class DivergenceError(RuntimeError):
    """Online state became non-finite."""


@dataclass
class RunConfig:
    C: float = 5.0
    mu: float = 1.0
    window: int = 50
    beta_rule: str = "horizon"
    beta: float | None = None
    trials: int = 20
    seed: int = 0
    variant: str = "full"
    tau_rule: str = "standard"
    epochs: int = 1
    warm_stats: bool = False
    log_weights: bool = False
    log_mmd: bool = True

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if self.window < 1:
            raise ValueError("time window must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.beta_rule not in BETA_RULES:
            raise ValueError(f"beta rule must be one of {BETA_RULES}")
        if self.beta is not None and not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")


@dataclass
class TrialResult:
    mistakes: list[int]
    beta: float | None = None
    mmd: list[dict] = field(default_factory=list)
    weights: list[list[float]] = field(default_factory=list)
    final_weights: list[float] = field(default_factory=list)
    expert_mistakes: list[int] = field(default_factory=list)
    seconds: float | None = None

    @property
    def rounds(self) -> int:
        return len(self.mistakes)

    @property
    def num_mistakes(self) -> int:
        return int(sum(self.mistakes))

    @property
    def mistake_rate(self) -> float:
        return self.num_mistakes / self.rounds if self.rounds else 0.0

    def curve(self) -> np.ndarray:
        """Cumulative mistake rate after each round."""
        m = np.asarray(self.mistakes, dtype=float)
        return np.cumsum(m) / np.arange(1, m.size + 1) if m.size else m

    def to_dict(self) -> dict:
        out = {"rounds": self.rounds, "num_mistakes": self.num_mistakes,
               "mistake_rate": self.mistake_rate, "mistakes": list(self.mistakes),
               "curve": self.curve().tolist()}
        if self.beta is not None:
            out["beta"] = self.beta
        if self.mmd:
            out["mmd"] = self.mmd
        if self.weights:
            out["weights"] = self.weights
        if self.final_weights:
            out["final_weights"] = self.final_weights
        if self.expert_mistakes:
            out["expert_mistakes"] = self.expert_mistakes
        if self.seconds is not None:
            out["seconds"] = self.seconds
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrialResult":
        return cls(mistakes=list(d["mistakes"]), beta=d.get("beta"), mmd=d.get("mmd", []),
                   weights=d.get("weights", []), final_weights=d.get("final_weights", []),
                   expert_mistakes=d.get("expert_mistakes", []), seconds=d.get("seconds"))


@dataclass
class RunReport:
    variant: str
    config: dict
    trials: list[TrialResult]

    @property
    def rates(self) -> list[float]:
        return [t.mistake_rate for t in self.trials]

    def summary(self) -> dict:
        return aggregate_trials(self)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "config": self.config,
                "trials": [t.to_dict() for t in self.trials], "summary": self.summary()}

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["variant"], d.get("config", {}),
                   [TrialResult.from_dict(t) for t in d["trials"]])


def _check_finite(arr, what: str, t: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"non-finite {what} at round {t}")


def _mmd_sample(t, mats, art, stats) -> dict:
    return {"round": t, "values": [mmd_objective(A, s, stats)
                                   for A, s in zip(mats, art.source_stats)]}


def run_homotl_oddm(art: OfflineArtifacts, stream: Dataset, cfg: RunConfig, *,
                    update_matrices: bool | None = None,
                    unlabeled_pool: np.ndarray | None = None,
                    beta: float | None = None) -> TrialResult:
    """One pass of the transfer ensemble over ``stream``.

    Each round projects the instance through every matrix, predicts with the
    weighted sum of frozen source and online target classifiers, discounts
    erring experts, updates every target classifier, and every ``window``
    rounds re-solves the matrices against the running target means.
    """
    if update_matrices is None:
        update_matrices = cfg.variant != "fixed"
    n = art.n
    if stream.dim and any(A.m != stream.dim for A in art.matrices):
        raise ValueError(f"matrices expect {art.matrices[0].m} features, stream has {stream.dim}")
    K = art.source_models[0].num_classes
    if len(stream) and stream.num_classes > K:
        raise ValueError(f"stream has {stream.num_classes} classes, models {K}")
    needs_stats = update_matrices or cfg.log_mmd
    if needs_stats and len(art.source_stats) != n:
        raise ValueError("source statistics are required for matrix updates and MMD logging")

    T = len(stream)
    if beta is None:
        beta = cfg.beta if cfg.beta is not None else horizon_beta(T)
        if cfg.beta_rule == "best-expert" and cfg.beta is None and T:
            first = run_homotl_oddm(art, stream, _quiet(cfg), update_matrices=update_matrices,
                                    unlabeled_pool=unlabeled_pool, beta=0.5)
            beta = best_expert_beta(min(first.expert_mistakes), n)
    result = TrialResult(mistakes=[], beta=beta)
    if T == 0:
        return result

    mats = [A.entries.copy() for A in art.matrices]
    src_W = [f.weights for f in art.source_models]
    tgt = [PAModel.zeros(K, A.d) for A in art.matrices]
    state = init_weights(n, beta)
    stats = TargetRunningStats(stream.dim, K)
    if cfg.warm_stats and unlabeled_pool is not None:
        stats.add_pool(unlabeled_pool)
    expert_err = np.zeros(2 * n, dtype=np.int64)
    S = np.empty((n, K))
    Tg = np.empty((n, K))
    xp = [None] * n

    started = time.perf_counter()
    for t in range(1, T + 1):
        x = stream.X[t - 1]
        y = int(stream.y[t - 1])
        for i in range(n):
            xp[i] = mats[i] @ x
            S[i] = src_W[i] @ xp[i]
            Tg[i] = tgt[i].weights @ xp[i]
        F, y_hat = ensemble_predict(S, Tg, state)
        _check_finite(F, "ensemble scores", t)
        result.mistakes.append(int(y_hat != y))

        z = np.argmax(S, axis=1) != y
        r = np.argmax(Tg, axis=1) != y
        expert_err[:n] += z
        expert_err[n:] += r
        hedge_update(state, RoundOutcome(z, r, y_hat != y))
        if cfg.log_weights:
            result.weights.append(state.weights.tolist())
        for i in range(n):
            pa_update(tgt[i], xp[i], y, cfg.C, cfg.tau_rule)

        observe(stats, x, y)

        boundary = t % cfg.window == 0
        if boundary and update_matrices:
            for i in range(n):
                mats[i] = update_matrix(mats[i], art.source_stats[i], stats, cfg.mu).entries
                _check_finite(mats[i], f"matrix {i}", t)
        if cfg.log_mmd and (t == 1 or boundary or t == T):
            sample = _mmd_sample(t, mats, art, stats)
            sample["checkpoint"] = bool(boundary)
            result.mmd.append(sample)

    result.seconds = time.perf_counter() - started
    result.final_weights = state.weights.tolist()
    result.expert_mistakes = expert_err.tolist()
    return result


def _quiet(cfg: RunConfig) -> RunConfig:
    d = asdict(cfg)
    d.update(log_weights=False, log_mmd=False)
    return RunConfig(**d)


def run_pa(stream: Dataset, C: float, num_classes: int, init: PAModel | None = None,
           tau_rule: str = "standard") -> TrialResult:
    """Plain multi-class PA in the original feature space."""
    model = init.copy() if init is not None else PAModel.zeros(num_classes, stream.dim)
    result = TrialResult(mistakes=[])
    started = time.perf_counter()
    for t, (x, y) in enumerate(zip(stream.X, stream.y), start=1):
        scores = model.weights @ x
        _check_finite(scores, "scores", t)
        result.mistakes.append(int(np.argmax(scores) != y))
        pa_update(model, x, int(y), C, tau_rule)
    result.seconds = time.perf_counter() - started
    return result


def pooled_sources(sources: Sequence[Dataset], num_classes: int) -> Dataset:
    return Dataset(np.vstack([d.X for d in sources]), np.concatenate([d.y for d in sources]),
                   num_classes, "sources")


def run_baseline(variant: str, stream: Dataset, cfg: RunConfig,
                 source_data: Sequence[Dataset] | None = None,
                 art: OfflineArtifacts | None = None, num_classes: int | None = None,
                 paio_model: PAModel | None = None) -> TrialResult:
    """``pa``: PA from zero; ``paio``: PA started from an averaged PA fit to all
    sources pooled; ``fixed``: the ensemble with frozen matrices."""
    if variant == "fixed":
        if art is None:
            raise ValueError("fixed variant needs offline artifacts")
        return run_homotl_oddm(art, stream, cfg, update_matrices=False)
    K = num_classes
    if K is None:
        if art is not None:
            K = art.source_models[0].num_classes
        else:
            K = max([stream.num_classes] + [d.num_classes for d in source_data or []])
    if variant == "pa":
        return run_pa(stream, cfg.C, K, tau_rule=cfg.tau_rule)
    if variant == "paio":
        if paio_model is None:
            if not source_data:
                raise ValueError("paio needs the source datasets")
            paio_model = train_offline(pooled_sources(source_data, K), cfg.C,
                                       epochs=cfg.epochs, seed=cfg.seed)
        return run_pa(stream, cfg.C, K, init=paio_model, tau_rule=cfg.tau_rule)
    raise ValueError(f"unknown baseline {variant!r}")


def mmd_trajectory(report: RunReport | TrialResult, trial: int = 0,
                   checkpoints_only: bool = False) -> dict[int, list[tuple[int, float]]]:
    """Per-domain ``(round, aggregate MMD)`` series recorded during a run."""
    res = report.trials[trial] if isinstance(report, RunReport) else report
    series: dict[int, list[tuple[int, float]]] = {}
    for sample in res.mmd:
        if checkpoints_only and not sample.get("checkpoint"):
            continue
        for i, v in enumerate(sample["values"]):
            series.setdefault(i, []).append((sample["round"], v))
    return series


def aggregate_trials(reports) -> dict:
    """Mean and sample standard deviation of per-trial mistake rates."""
    if isinstance(reports, RunReport):
        rates = reports.rates
    else:
        rates = []
        for r in reports:
            rates.extend(r.rates if isinstance(r, RunReport) else [r.mistake_rate])
    if not rates:
        raise ValueError("no trials to aggregate")
    arr = np.asarray(sorted(rates), dtype=float)
    mean = float(math.fsum(arr) / arr.size)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return {"trials": int(arr.size), "mean": mean, "std": std,
            "formatted": f"{100 * mean:.2f} ± {100 * std:.2f}"}


def run_trials(variant: str, stream: Dataset, cfg: RunConfig, *,
               art: OfflineArtifacts | None = None,
               sources: Sequence[Dataset] | None = None,
               unlabeled_pool: np.ndarray | None = None,
               timings: bool = False) -> RunReport:
    """Repeat ``variant`` over ``cfg.trials`` permutations of ``stream``.

    Trial ``j`` uses the permutation seeded by ``cfg.seed + j``.
    """
    if isinstance(stream, TargetSplit):
        stream = stream.online_stream
    K = art.source_models[0].num_classes if art is not None else None
    paio_model = None
    if variant == "paio":
        if not sources:
            raise ValueError("paio needs the source datasets")
        K = K or max([stream.num_classes] + [d.num_classes for d in sources])
        paio_model = train_offline(pooled_sources(sources, K), cfg.C, epochs=cfg.epochs,
                                   seed=cfg.seed)
    trials = []
    for j in range(cfg.trials):
        order = permute_stream(stream, cfg.seed + j)
        if variant in ("full", "fixed"):
            if art is None:
                raise ValueError(f"{variant} needs offline artifacts")
            res = run_homotl_oddm(art, order, cfg, update_matrices=variant == "full",
                                  unlabeled_pool=unlabeled_pool)
        else:
            res = run_baseline(variant, order, cfg, sources, art, K, paio_model)
        if not timings:
            res.seconds = None
        trials.append(res)
    config = asdict(cfg)
    config["variant"] = variant
    return RunReport(variant, config, trials)
