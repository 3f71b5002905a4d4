"""Robust cross-validated wrapper over a base discovery method.

The base method runs once on the full series and once per temporal fold.
Each full-data edge is scored by sign consistency across folds and by the
normalized spread of its fold estimates; edges failing either threshold
are dropped, survivors are optionally adjusted toward the fold mean.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from rcvcausal.core import (
    CoefficientStack,
    EdgeKey,
    ShapeMismatch,
    TimeSeriesDataset,
)
from rcvcausal import pcmci as _pcmci
from rcvcausal import varlingam as _varlingam

MIN_FOLD_ROWS = 20

DEFAULT_TAU_C = {"varlingam": 0.4, "pcmci": 0.7}
DEFAULT_TAU_V = 0.4
DEFAULT_K = 7


class TooShortForFolds(ValueError):
    """Series cannot be split into k workable folds."""


class BaseMethodFailure(RuntimeError):
    """Full-data run failed, or too many fold runs failed."""


@dataclass(frozen=True)
class RcvConfig:
    base: str = "varlingam"
    k: int = DEFAULT_K
    tau_c: Optional[float] = None  # None -> per-base default
    tau_v: float = DEFAULT_TAU_V
    w: float = 0.0
    epsilon: float = 1e-8
    base_params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.base not in DEFAULT_TAU_C:
            raise ValueError(f"unknown base method {self.base!r}")
        if self.k < 2:
            raise ValueError("fold count k must be >= 2")
        if self.tau_c is not None and not 0 <= self.tau_c <= 1:
            raise ValueError("tau_c must be in [0, 1]")
        if self.tau_v < 0:
            raise ValueError("tau_v must be >= 0")
        if not 0 <= self.w <= 1:
            raise ValueError("adjustment weight w must be in [0, 1]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def consistency_threshold(self) -> float:
        return DEFAULT_TAU_C[self.base] if self.tau_c is None else self.tau_c

    @property
    def base_max_lag(self) -> int:
        if self.base == "pcmci":
            return int(self.base_params.get("tau_max", 1))
        return int(self.base_params.get("max_lag", 1))


@dataclass(frozen=True)
class EdgeRecord:
    key: EdgeKey
    r0: float
    fold_estimates: tuple[Optional[float], ...]
    consistency: float
    variability: float
    retained: bool
    adjusted: float

    def to_dict(self) -> dict:
        return {
            "cause": self.key.cause,
            "effect": self.key.effect,
            "lag": self.key.lag,
            "r0": self.r0,
            "fold_estimates": list(self.fold_estimates),
            "consistency": self.consistency,
            "variability": self.variability,
            "retained": self.retained,
            "adjusted": self.adjusted,
        }


@dataclass(frozen=True)
class RcvReport:
    edges: tuple[EdgeRecord, ...]
    k: int
    runtimes: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "runtimes": dict(self.runtimes),
            "edges": [rec.to_dict() for rec in self.edges],
        }


def split_dataset(data: TimeSeriesDataset, k: int,
                  max_lag: int = 0) -> list[TimeSeriesDataset]:
    """k contiguous, non-overlapping, temporally ordered folds.

    Each fold has floor(T/k) rows; remainder rows go to the last fold.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    base_len = data.t_len // k
    if base_len < MIN_FOLD_ROWS + max_lag:
        raise TooShortForFolds(
            f"T={data.t_len} gives folds of {base_len} rows; "
            f"need at least {MIN_FOLD_ROWS + max_lag}"
        )
    folds = []
    for i in range(k):
        lo = i * base_len
        hi = (i + 1) * base_len if i < k - 1 else data.t_len
        folds.append(TimeSeriesDataset(
            values=data.values[lo:hi], names=data.names, seed=data.seed
        ))
    return folds


def consistency(r0: float, folds: Sequence[float], k: int) -> float:
    """Fraction of folds whose estimate sign matches sign(r0); sign(0) = 0."""
    if len(folds) != k:
        raise ValueError(f"expected {k} fold estimates, got {len(folds)}")
    s0 = np.sign(r0)
    return float(sum(1 for v in folds if np.sign(v) == s0)) / k


def variability(r0: float, folds: Sequence[float], epsilon: float) -> float:
    """Population std of the fold estimates over (|r0| + epsilon)."""
    if len(folds) == 0:
        raise ValueError("folds must be nonempty")
    return float(np.std(np.asarray(folds, dtype=float))) / (abs(r0) + epsilon)


def validate_and_adjust(
    full: CoefficientStack,
    folds: Sequence[Optional[CoefficientStack]],
    cfg: RcvConfig,
) -> tuple[CoefficientStack, RcvReport]:
    """Filter full-data edges by consistency/variability and adjust survivors.

    A fold entry of None marks a failed fold run: it counts as a sign
    mismatch for consistency and is excluded from the std and the mean.
    Edges absent from the full-data stack are never resurrected.
    """
    for st in folds:
        if st is not None and not st.same_shape(full):
            raise ShapeMismatch("fold stack shape differs from full stack")
    k = len(folds)
    tau_c = cfg.consistency_threshold

    mats = [np.zeros_like(m) for m in full.mats]
    records = []
    for key in full.positions():
        r0 = full.entry(key)
        if r0 == 0.0:
            continue
        estimates = tuple(
            None if st is None else st.entry(key) for st in folds
        )
        ok_vals = [v for v in estimates if v is not None]
        matches = sum(1 for v in ok_vals if np.sign(v) == np.sign(r0))
        cons = matches / k
        var = (
            variability(r0, ok_vals, cfg.epsilon)
            if ok_vals else float("inf")
        )
        retained = cons >= tau_c and var <= cfg.tau_v
        adjusted = 0.0
        if retained:
            fold_mean = float(np.mean(ok_vals)) if ok_vals else 0.0
            adjusted = (1.0 - cfg.w) * r0 + cfg.w * fold_mean
            mats[key.lag][key.effect, key.cause] = adjusted
        records.append(EdgeRecord(
            key=key, r0=r0, fold_estimates=estimates,
            consistency=cons, variability=var,
            retained=retained, adjusted=adjusted,
        ))
    stack = CoefficientStack(mats=tuple(mats))
    return stack, RcvReport(edges=tuple(records), k=k)


def _base_runner(cfg: RcvConfig,
                 fold_run: bool = False,
                 ) -> Callable[[TimeSeriesDataset], CoefficientStack]:
    """Base-method closure; fold runs return raw (unpruned) coefficient
    estimates, since the consistency/variability scores need the numeric
    fold estimate at every full-data edge position, not a thresholded one.
    """
    params = dict(cfg.base_params)
    if cfg.base == "pcmci":
        pc_cfg = _pcmci.PcmciConfig(**params)
        return lambda d: _pcmci.pcmci(d, pc_cfg)
    max_lag = int(params.pop("max_lag", 1))
    prune = float(params.pop("prune", _varlingam.PRUNE_THRESHOLD))
    if params:
        raise ValueError(f"unknown varlingam params: {sorted(params)}")
    if fold_run:
        prune = 0.0
    # non-converged ICA still yields a usable best-effort stack
    return lambda d: _varlingam.var_lingam_best_effort(d, max_lag,
                                                       prune=prune)[0]


def rcv_discover(data: TimeSeriesDataset,
                 cfg: RcvConfig) -> tuple[CoefficientStack, RcvReport]:
    """Full RCV run: base method on the full data and on each fold, then
    validate-and-adjust. Tolerates up to ceil(k/3) failed fold runs."""
    run_full = _base_runner(cfg)
    run_fold = _base_runner(cfg, fold_run=True)
    fold_data = split_dataset(data, cfg.k, max_lag=cfg.base_max_lag)

    t0 = time.perf_counter()
    try:
        full = run_full(data)
    except Exception as err:
        raise BaseMethodFailure(f"full-data {cfg.base} run failed: {err}") from err
    t_full = time.perf_counter() - t0

    fold_stacks: list[Optional[CoefficientStack]] = []
    failures = 0
    t0 = time.perf_counter()
    for fd in fold_data:
        try:
            fold_stacks.append(run_fold(fd))
        except Exception:
            fold_stacks.append(None)
            failures += 1
    t_folds = time.perf_counter() - t0
    if failures > -(-cfg.k // 3):  # ceil(k / 3)
        raise BaseMethodFailure(
            f"{failures}/{cfg.k} fold runs failed (tolerated {-(-cfg.k // 3)})"
        )

    stack, report = validate_and_adjust(full, fold_stacks, cfg)
    runtimes = {
        "full_s": t_full,
        "folds_s": t_folds,
        "total_s": t_full + t_folds,
    }
    return stack, RcvReport(edges=report.edges, k=report.k, runtimes=runtimes)
