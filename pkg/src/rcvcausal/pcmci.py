"""Two-stage lagged causal discovery: PC condition-selection, then
momentary-conditional-independence tests.

The PC step prunes, per target variable, the set of lagged candidate
parents by iterated partial-correlation tests with growing conditioning
sets. The MCI step then tests every ordered (cause, effect, lag) triple
conditioned on the selected parents of the effect plus the time-shifted
parents of the cause. Only lagged links are considered; the lag-0 slice of
the returned stack is identically zero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from rcvcausal.core import CoefficientStack, TimeSeriesDataset

_SUBSET_CAP = 3  # subsets tested per candidate per PC round


class DegenerateTest(ValueError):
    """A test series has (near) zero residual variance."""


@dataclass(frozen=True)
class PcmciConfig:
    tau_max: int = 1
    alpha_pc: float = 0.2
    alpha_mci: float = 0.05
    p_max: int = 3
    ci_test: str = "partial_correlation"

    def __post_init__(self) -> None:
        if self.tau_max < 1:
            raise ValueError("tau_max must be >= 1")
        if not 0 < self.alpha_pc <= 1 or not 0 < self.alpha_mci <= 1:
            raise ValueError("significance levels must be in (0, 1]")
        if self.p_max < 0:
            raise ValueError("p_max must be >= 0")
        if self.ci_test != "partial_correlation":
            raise ValueError(f"unsupported ci_test {self.ci_test!r}")


@dataclass(frozen=True)
class Parent:
    cause: int
    lag: int
    p_value: float
    strength: float


@dataclass(frozen=True)
class ParentSet:
    """Selected lagged parents per target variable."""

    tau_max: int
    parents: Mapping[int, tuple[Parent, ...]] = field(default_factory=dict)

    def of(self, var: int) -> tuple[Parent, ...]:
        return self.parents.get(var, ())


def ci_test_parcorr(x: np.ndarray, y: np.ndarray,
                    z: Sequence[np.ndarray]) -> tuple[float, float]:
    """Partial correlation of x and y given z, with a t-distribution p-value.

    x and y are residualized on z (OLS with intercept); the statistic is
    the Pearson correlation of the residuals, df = N - |z| - 2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_obs = x.shape[0]
    if y.shape[0] != n_obs or any(len(s) != n_obs for s in z):
        raise ValueError("all series must have equal length")
    if n_obs < len(z) + 10:
        raise ValueError(f"need at least |z| + 10 = {len(z) + 10} observations")

    if z:
        design = np.column_stack([np.ones(n_obs)] + [np.asarray(s) for s in z])
        coef, *_ = np.linalg.lstsq(design, np.column_stack([x, y]), rcond=None)
        resid = np.column_stack([x, y]) - design @ coef
        rx, ry = resid[:, 0], resid[:, 1]
    else:
        rx, ry = x - x.mean(), y - y.mean()

    vx = float(rx @ rx) / n_obs
    vy = float(ry @ ry) / n_obs
    if vx < 1e-14 or vy < 1e-14:
        raise DegenerateTest("residual variance below 1e-14")

    r = float(rx @ ry / np.sqrt((rx @ rx) * (ry @ ry)))
    r = max(-1.0, min(1.0, r))
    df = n_obs - len(z) - 2
    if 1.0 - r * r < 1e-15:
        return r, 0.0
    t_stat = r * np.sqrt(df / (1.0 - r * r))
    p = 2.0 * float(stats.t.sf(abs(t_stat), df))
    return r, p


def _lagged(values: np.ndarray, var: int, lag: int, window: int) -> np.ndarray:
    """Series of variable `var` shifted back by `lag`, aligned to [window, T)."""
    t_len = values.shape[0]
    return values[window - lag:t_len - lag, var]


def pc_select(data: TimeSeriesDataset, cfg: PcmciConfig) -> ParentSet:
    """PC condition-selection over lagged candidates.

    Conditioning-set size p grows from 0; a candidate is removed as soon
    as it tests independent of the target given some subset (size p) of
    the current parents, strongest parents first, at most 3 subsets per
    candidate per round.
    """
    t_len, n = data.values.shape
    if t_len <= cfg.tau_max + cfg.p_max + 10:
        raise ValueError("series too short for the requested tau_max/p_max")
    values = data.values
    window = cfg.tau_max

    def series(cause: int, lag: int) -> np.ndarray:
        return _lagged(values, cause, lag, window)

    out: dict[int, tuple[Parent, ...]] = {}
    for j in range(n):
        target = series(j, 0)
        # round p=0: unconditional screening
        survivors: dict[tuple[int, int], Parent] = {}
        for i, tau in itertools.product(range(n), range(1, cfg.tau_max + 1)):
            stat, p_val = ci_test_parcorr(series(i, tau), target, [])
            if p_val < cfg.alpha_pc:
                survivors[(i, tau)] = Parent(i, tau, p_val, abs(stat))

        size = 1
        while size <= cfg.p_max and size <= len(survivors):
            ranked = sorted(survivors.values(),
                            key=lambda par: par.strength, reverse=True)
            removed = []
            for cand_key, cand in list(survivors.items()):
                others = [par for par in ranked
                          if (par.cause, par.lag) != cand_key]
                if len(others) < size:
                    continue
                subsets = itertools.islice(
                    itertools.combinations(others, size), _SUBSET_CAP
                )
                for subset in subsets:
                    conds = [series(par.cause, par.lag) for par in subset]
                    stat, p_val = ci_test_parcorr(
                        series(cand.cause, cand.lag), target, conds
                    )
                    if p_val >= cfg.alpha_pc:
                        removed.append(cand_key)
                        break
                    survivors[cand_key] = Parent(
                        cand.cause, cand.lag, p_val,
                        min(cand.strength, abs(stat)),
                    )
                    cand = survivors[cand_key]
            for key in removed:
                del survivors[key]
            size += 1

        out[j] = tuple(sorted(survivors.values(),
                              key=lambda par: par.strength, reverse=True))
    return ParentSet(tau_max=cfg.tau_max, parents=out)


def mci_step(data: TimeSeriesDataset, parents: ParentSet,
             cfg: PcmciConfig) -> CoefficientStack:
    """Momentary conditional independence tests for every lagged pair.

    The stack entry at (effect, cause, lag) is the signed partial
    correlation when significant at alpha_mci, zero otherwise.
    """
    t_len, n = data.values.shape
    values = data.values
    window = 2 * cfg.tau_max

    def series(cause: int, lag: int) -> np.ndarray:
        return _lagged(values, cause, lag, window)

    mats = [np.zeros((n, n)) for _ in range(cfg.tau_max + 1)]
    for j in range(n):
        target = series(j, 0)
        for i, tau in itertools.product(range(n), range(1, cfg.tau_max + 1)):
            cond_keys: list[tuple[int, int]] = []
            for par in parents.of(j):
                if (par.cause, par.lag) != (i, tau):
                    cond_keys.append((par.cause, par.lag))
            for par in parents.of(i):
                shifted = (par.cause, par.lag + tau)
                if shifted != (i, tau) and shifted not in cond_keys:
                    cond_keys.append(shifted)
            conds = [series(c, lag) for c, lag in cond_keys]
            stat, p_val = ci_test_parcorr(series(i, tau), target, conds)
            if p_val < cfg.alpha_mci:
                mats[tau][j, i] = stat
    return CoefficientStack(mats=tuple(mats))


def pcmci(data: TimeSeriesDataset, cfg: PcmciConfig) -> CoefficientStack:
    """PC condition-selection followed by the MCI step."""
    return mci_step(data, pc_select(data, cfg), cfg)
