"""Graph and matrix comparison metrics, plus ABM ensemble similarity tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from rcvcausal.core import (
    CausalGraph,
    CoefficientStack,
    ShapeMismatch,
    stack_to_graph,
)


class NeedAtLeastTwoRuns(ValueError):
    """The similarity std needs at least two ABM stacks."""


@dataclass(frozen=True)
class MetricReport:
    shd: int
    f1: float
    f1_directed: float
    frobenius: float
    runtime_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "shd": self.shd,
            "f1": self.f1,
            "f1_directed": self.f1_directed,
            "frobenius": self.frobenius,
            "runtime_s": self.runtime_s,
        }


@dataclass(frozen=True)
class SimilarityReport:
    s_sign: float
    s_size: float
    s_conj: float
    sigma: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "s_sign": self.s_sign,
            "s_size": self.s_size,
            "s_conj": self.s_conj,
            "sigma": self.sigma.tolist(),
        }


def _check_graph_shapes(truth: CausalGraph, est: CausalGraph) -> None:
    if truth.n != est.n or truth.max_lag != est.max_lag:
        raise ShapeMismatch(
            f"graphs differ: n {truth.n} vs {est.n}, "
            f"max_lag {truth.max_lag} vs {est.max_lag}"
        )


def _check_stack_shapes(a: CoefficientStack, b: CoefficientStack) -> None:
    if not a.same_shape(b):
        raise ShapeMismatch(
            f"stacks differ: n {a.n_vars} vs {b.n_vars}, "
            f"max_lag {a.max_lag} vs {b.max_lag}"
        )


def _lag_slice(g: CausalGraph, lag: int) -> set[tuple[int, int]]:
    return {(k.cause, k.effect) for k, _ in g.edges if k.lag == lag}


def shd(truth: CausalGraph, est: CausalGraph) -> int:
    """Edge additions + deletions + reversals.

    A flipped lag-0 edge counts as one reversal; lagged links are oriented
    by construction, so their mismatches are plain additions/deletions.
    """
    _check_graph_shapes(truth, est)
    total = 0

    t0, e0 = _lag_slice(truth, 0), _lag_slice(est, 0)
    for a in range(truth.n):
        for b in range(a + 1, truth.n):
            t_ab, t_ba = (a, b) in t0, (b, a) in t0
            e_ab, e_ba = (a, b) in e0, (b, a) in e0
            one_dir_t = t_ab != t_ba
            one_dir_e = e_ab != e_ba
            if one_dir_t and one_dir_e and t_ab != e_ab:
                total += 1  # reversal
            else:
                total += int(t_ab != e_ab) + int(t_ba != e_ba)

    for lag in range(1, truth.max_lag + 1):
        total += len(_lag_slice(truth, lag) ^ _lag_slice(est, lag))
    return total


def _skeleton(g: CausalGraph) -> set[tuple[int, int, int]]:
    return {
        (min(k.cause, k.effect), max(k.cause, k.effect), k.lag)
        for k, _ in g.edges
    }


def _f1(tp: int, fp: int, fn: int) -> float:
    if tp + fp + fn == 0:
        return 1.0  # both empty: perfect-match convention
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def f1_undirected(truth: CausalGraph, est: CausalGraph) -> float:
    """F1 over the unordered-pair-plus-lag skeleton (direction ignored)."""
    _check_graph_shapes(truth, est)
    t_skel, e_skel = _skeleton(truth), _skeleton(est)
    tp = len(t_skel & e_skel)
    return _f1(tp, len(e_skel - t_skel), len(t_skel - e_skel))


def _signs(stack: CoefficientStack) -> np.ndarray:
    arr = np.sign(np.stack(stack.mats))
    idx = np.arange(stack.n_vars)
    arr[0, idx, idx] = 0.0  # lag-0 diagonal is not an edge
    return arr


def f1_directed(truth_stack: CoefficientStack,
                est_stack: CoefficientStack) -> float:
    """F1 over signed directed entries.

    A sign mismatch at a common position counts once as a false positive
    and once as a false negative (the reversal accounting of the standard
    worked example).
    """
    _check_stack_shapes(truth_stack, est_stack)
    st, se = _signs(truth_stack), _signs(est_stack)
    tp = int(np.sum((st != 0) & (se == st)))
    fp = int(np.sum((se != 0) & (se != st)))
    fn = int(np.sum((st != 0) & (se != st)))
    return _f1(tp, fp, fn)


def frobenius(truth_stack: CoefficientStack,
              est_stack: CoefficientStack) -> float:
    """sqrt of the summed squared entry differences over all lags."""
    _check_stack_shapes(truth_stack, est_stack)
    diff = np.stack(truth_stack.mats) - np.stack(est_stack.mats)
    return float(np.sqrt(np.sum(diff * diff)))


def compare(truth_stack: CoefficientStack, est_stack: CoefficientStack,
            zero_tol: float = 1e-8, runtime_s: float = 0.0) -> MetricReport:
    """Full metric block for one truth/estimate stack pair."""
    t_graph = stack_to_graph(truth_stack, zero_tol)
    e_graph = stack_to_graph(est_stack, zero_tol)
    return MetricReport(
        shd=shd(t_graph, e_graph),
        f1=f1_undirected(t_graph, e_graph),
        f1_directed=f1_directed(truth_stack, est_stack),
        frobenius=frobenius(truth_stack, est_stack),
        runtime_s=runtime_s,
    )


def similarity(real: CoefficientStack,
               abm_stacks: list[CoefficientStack]) -> SimilarityReport:
    """Sign / size / conjugate similarity of a real-data stack against an
    ABM ensemble.

    sigma is the per-position std across the ABM stacks, B their mean;
    fractions run over all n^2 (p+1) positions.
    """
    if len(abm_stacks) < 2:
        raise NeedAtLeastTwoRuns("similarity needs >= 2 ABM stacks")
    for st in abm_stacks:
        _check_stack_shapes(real, st)
    ens = np.stack([np.stack(st.mats) for st in abm_stacks])
    sigma = ens.std(axis=0)
    b_mean = ens.mean(axis=0)
    a = np.stack(real.mats)

    sign_ok = np.sign(a) == np.sign(b_mean)
    size_ok = np.abs(a - b_mean) <= 2.0 * sigma
    return SimilarityReport(
        s_sign=float(np.mean(sign_ok)),
        s_size=float(np.mean(size_ok)),
        s_conj=float(np.mean(sign_ok & size_ok)),
        sigma=sigma,
    )


def timed_compare(truth_stack: CoefficientStack,
                  est_stack: CoefficientStack,
                  zero_tol: float = 1e-8) -> MetricReport:
    t0 = time.perf_counter()
    report = compare(truth_stack, est_stack, zero_tol)
    return MetricReport(
        shd=report.shd,
        f1=report.f1,
        f1_directed=report.f1_directed,
        frobenius=report.frobenius,
        runtime_s=time.perf_counter() - t0,
    )
