"""VAR estimation by least squares plus ICA-LiNGAM on the residuals.

Pipeline: equation-by-equation OLS gives reduced-form lag matrices M_k and
residuals; FastICA on the residuals identifies the instantaneous effect
matrix B0 (exploiting non-Gaussianity); structural lag matrices follow as
B_k = (I - B0) M_k. A moving-block bootstrap variant aggregates edge
presence across resamples.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import kurtosis

from rcvcausal.core import CoefficientStack, TimeSeriesDataset
from rcvcausal.rng import STREAM_BOOTSTRAP, rng_stream

PRUNE_THRESHOLD = 0.05

_ICA_MAX_ITER = 1000
_ICA_TOL = 1e-6
_ICA_RESTARTS = 5
_ICA_INIT_SEED = 0x1CA5EED


class SingularDesign(ValueError):
    """Lagged design matrix is rank-deficient (constant/duplicated columns)."""


class IcaNonConvergence(RuntimeError):
    """FastICA failed to converge in all restarts.

    Carries the best-effort `result` (flagged non-converged) so callers can
    still use it: a LingamResult when raised by ica_lingam, the completed
    CoefficientStack when re-raised by var_lingam. Exactly-Gaussian
    residuals land here by construction (no identifiable non-Gaussian
    directions), which is why downstream consumers unwrap rather than fail.
    """

    def __init__(self, message: str, result):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class VarFit:
    """Reduced-form VAR(tau) fit: intercept, lag matrices M_k, residuals."""

    intercept: np.ndarray
    lag_mats: tuple[np.ndarray, ...]
    residuals: np.ndarray


@dataclass(frozen=True)
class LingamResult:
    """Instantaneous effects and the identified causal order."""

    b0: np.ndarray
    causal_order: tuple[int, ...]
    converged: bool
    non_gaussianity: float


def fit_var(data: TimeSeriesDataset, max_lag: int,
            rows: np.ndarray | None = None) -> VarFit:
    """Equation-by-equation OLS with intercept.

    `rows` optionally selects aligned regression rows (indices into the
    T - max_lag target/lag tuples), which is how the bootstrap resamples
    without breaking lag alignment. Raises SingularDesign when the lagged
    design matrix is rank-deficient.
    """
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    x = data.values
    t_len, n = x.shape
    if t_len <= n * max_lag + n + 1:
        raise ValueError(
            f"T={t_len} too short for VAR({max_lag}) with n={n} variables"
        )
    y = x[max_lag:]
    blocks = [np.ones((t_len - max_lag, 1))]
    for k in range(1, max_lag + 1):
        blocks.append(x[max_lag - k:t_len - k])
    z = np.hstack(blocks)
    if rows is not None:
        y, z = y[rows], z[rows]
    if np.linalg.matrix_rank(z) < z.shape[1]:
        raise SingularDesign("lagged design matrix is rank-deficient")
    coef, *_ = np.linalg.lstsq(z, y, rcond=None)
    lag_mats = tuple(
        coef[1 + (k - 1) * n:1 + k * n].T for k in range(1, max_lag + 1)
    )
    return VarFit(
        intercept=coef[0].copy(),
        lag_mats=lag_mats,
        residuals=y - z @ coef,
    )


# ---------------------------------------------------------------------------
# FastICA (symmetric decorrelation, tanh contrast)


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    s, u = np.linalg.eigh(w @ w.T)
    s = np.clip(s, 1e-12, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ w


def _fastica(z: np.ndarray, w_init: np.ndarray,
             max_iter: int = _ICA_MAX_ITER,
             tol: float = _ICA_TOL) -> tuple[np.ndarray, bool]:
    """Unmixing matrix for whitened rows z (n x N); returns (W, converged)."""
    n_samples = z.shape[1]
    w = _sym_decorrelate(w_init)
    for _ in range(max_iter):
        gw = np.tanh(w @ z)
        g_prime = 1.0 - gw ** 2
        w_new = (gw @ z.T) / n_samples - np.mean(g_prime, axis=1)[:, None] * w
        w_new = _sym_decorrelate(w_new)
        lim = float(np.max(np.abs(np.abs(np.diag(w_new @ w.T)) - 1.0)))
        w = w_new
        if lim < tol:
            return w, True
    return w, False


def _whiten(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Center + PCA-whiten columns of x; returns (z rows, whitening K)."""
    xc = x - x.mean(axis=0)
    cov = (xc.T @ xc) / xc.shape[0]
    d, e = np.linalg.eigh(cov)
    if np.min(d) < 1e-12 * max(np.max(d), 1.0):
        raise SingularDesign("residual covariance is (near) singular")
    k = (e / np.sqrt(d)).T
    return k @ xc.T, k


def _causal_order(b: np.ndarray) -> tuple[int, ...]:
    """Permutation minimizing the squared upper-triangular mass of b.

    Exhaustive for n <= 8, greedy most-exogenous-first beyond.
    """
    n = b.shape[0]
    b2 = b ** 2
    if n <= 8:
        iu = np.triu_indices(n, k=1)
        best, best_cost = None, math.inf
        for perm in itertools.permutations(range(n)):
            p = np.array(perm)
            cost = float(b2[np.ix_(p, p)][iu].sum())
            if cost < best_cost:
                best, best_cost = perm, cost
        return tuple(best)
    order: list[int] = []
    remaining = list(range(n))
    while remaining:
        # upper-triangular mass a variable would add if placed next
        costs = [
            sum(b2[i, j] for j in remaining if j != i) for i in remaining
        ]
        nxt = remaining[int(np.argmin(costs))]
        order.append(nxt)
        remaining.remove(nxt)
    return tuple(order)


def ica_lingam(residuals: np.ndarray) -> LingamResult:
    """ICA-LiNGAM on (centered) residual rows.

    Steps: whiten; FastICA with tanh contrast and symmetric decorrelation
    (up to 5 deterministic seeded restarts); permute/scale the unmixing
    matrix to a dominant diagonal via Hungarian assignment on 1/|W|;
    B = I - W_normalized; search the causal order minimizing upper
    triangular mass; prune the upper triangle and re-estimate the lower
    triangle by regression along the order.

    Raises IcaNonConvergence (carrying the best-effort result) when no
    restart converges.
    """
    x = np.asarray(residuals, dtype=float)
    if x.ndim != 2:
        raise ValueError("residuals must be 2-D (samples x variables)")
    n = x.shape[1]
    ng_score = float(np.mean(np.abs(kurtosis(x, axis=0, fisher=True)))) \
        if x.shape[0] > 3 else 0.0

    if n == 1:
        return LingamResult(b0=np.zeros((1, 1)), causal_order=(0,),
                            converged=True, non_gaussianity=ng_score)

    z, k_white = _whiten(x)
    w_white, converged = None, False
    for restart in range(_ICA_RESTARTS):
        init = rng_stream(_ICA_INIT_SEED, restart).standard_normal((n, n))
        init, _ = np.linalg.qr(init)
        w_white, converged = _fastica(z, init)
        if converged:
            break

    w = w_white @ k_white
    cost = 1.0 / (np.abs(w) + 1e-12)
    rows, cols = linear_sum_assignment(cost)
    w_perm = np.zeros_like(w)
    w_perm[cols] = w[rows]
    w_perm = w_perm / np.diag(w_perm)[:, None]
    b = np.eye(n) - w_perm

    order = _causal_order(b)

    # re-estimate along the order; upper triangle (in order) is exact zero
    b0 = np.zeros((n, n))
    for pos in range(1, n):
        j = order[pos]
        preds = list(order[:pos])
        coef, *_ = np.linalg.lstsq(x[:, preds] - x[:, preds].mean(axis=0),
                                   x[:, j] - x[:, j].mean(), rcond=None)
        b0[j, preds] = coef

    result = LingamResult(b0=b0, causal_order=order, converged=converged,
                          non_gaussianity=ng_score)
    if not converged:
        raise IcaNonConvergence(
            f"FastICA did not converge in {_ICA_RESTARTS} restarts", result
        )
    return result


_T_CRIT = 1.5  # structural-regression |t| gate for coefficient pruning


def _structural_tstats(values: np.ndarray, order: tuple[int, ...],
                       max_lag: int,
                       rows: np.ndarray | None = None) -> list[np.ndarray]:
    """|t| statistics of the structural coefficients, per lag matrix.

    Each variable is regressed on its contemporaneous predecessors in the
    causal order plus all lagged variables; positions never entered keep
    |t| = +inf so only estimated coefficients can be pruned.
    """
    t_len, n = values.shape
    y_all = values[max_lag:]
    lag_cols = [values[max_lag - k:t_len - k] for k in range(1, max_lag + 1)]
    if rows is not None:
        y_all = y_all[rows]
        lag_cols = [c[rows] for c in lag_cols]
    pos = {v: q for q, v in enumerate(order)}
    tmats = [np.full((n, n), np.inf) for _ in range(max_lag + 1)]
    for j in range(n):
        preds = [i for i in range(n) if pos[i] < pos[j]]
        design = np.column_stack(
            [np.ones(len(y_all))]
            + ([y_all[:, preds]] if preds else [])
            + lag_cols
        )
        coef, *_ = np.linalg.lstsq(design, y_all[:, j], rcond=None)
        resid = y_all[:, j] - design @ coef
        dof = max(len(y_all) - design.shape[1], 1)
        sigma2 = float(resid @ resid) / dof
        cov_diag = np.diag(np.linalg.pinv(design.T @ design)) * sigma2
        t_abs = np.abs(coef) / np.sqrt(np.maximum(cov_diag, 1e-300))
        col = 1
        for i in preds:
            tmats[0][j, i] = t_abs[col]
            col += 1
        for k in range(1, max_lag + 1):
            for i in range(n):
                tmats[k][j, i] = t_abs[col]
                col += 1
    return tmats


def _prune_stack(mats: list[np.ndarray], values: np.ndarray,
                 order: tuple[int, ...], threshold: float,
                 rows: np.ndarray | None = None) -> list[np.ndarray]:
    """Zero entries that are small or statistically insignificant.

    An entry survives when its scale-standardized magnitude (|b[j, i]| *
    std_i / std_j, invariant to rescaling a data column) reaches the
    threshold and its structural-regression |t| reaches the gate.
    """
    if threshold <= 0:
        return mats
    col_std = values.std(axis=0)
    sd = np.where(col_std > 0, col_std, 1.0)
    ratio = sd[None, :] / sd[:, None]
    tmats = _structural_tstats(values, order, len(mats) - 1, rows=rows)
    return [
        np.where((np.abs(m) * ratio >= threshold) & (t >= _T_CRIT), m, 0.0)
        for m, t in zip(mats, tmats)
    ]


def var_lingam(data: TimeSeriesDataset, max_lag: int,
               prune: float = PRUNE_THRESHOLD,
               rows: np.ndarray | None = None) -> CoefficientStack:
    """Full VAR-LiNGAM stack [B0, B1, ..., B_tau].

    B0 comes from ICA-LiNGAM on the VAR residuals, lagged matrices from
    B_k = (I - B0) M_k. Entries are pruned by the standardized-magnitude
    and significance rule (pass prune=0 for the raw stack). When the ICA
    did not converge the completed stack is attached to the re-raised
    IcaNonConvergence.
    """
    fit = fit_var(data, max_lag, rows=rows)
    n = data.n_vars
    ica_error: IcaNonConvergence | None = None
    if n == 1:
        b0 = np.zeros((1, 1))
        order: tuple[int, ...] = (0,)
    else:
        try:
            lr = ica_lingam(fit.residuals)
        except IcaNonConvergence as err:
            ica_error, lr = err, err.result
        b0, order = lr.b0, lr.causal_order

    perm = np.array(order)
    reordered = b0[np.ix_(perm, perm)]
    upper = np.abs(reordered[np.triu_indices(n, k=1)]) if n > 1 else np.zeros(0)
    if upper.size and upper.max() > 1e-7:
        raise AssertionError("identified B0 is not lower triangular in order")

    eye_minus_b0 = np.eye(n) - b0
    mats = [b0] + [eye_minus_b0 @ m for m in fit.lag_mats]
    mats = _prune_stack(mats, data.values, order, prune, rows=rows)
    stack = CoefficientStack(mats=tuple(mats))
    if ica_error is not None:
        raise IcaNonConvergence(str(ica_error), stack) from ica_error
    return stack


def var_lingam_best_effort(data: TimeSeriesDataset, max_lag: int,
                           prune: float = PRUNE_THRESHOLD,
                           ) -> tuple[CoefficientStack, bool]:
    """var_lingam that unwraps non-convergence; returns (stack, converged)."""
    try:
        return var_lingam(data, max_lag, prune=prune), True
    except IcaNonConvergence as err:
        return err.result, False


def var_lingam_bootstrap(data: TimeSeriesDataset, max_lag: int,
                         n_boot: int, seed: int,
                         prune: float = PRUNE_THRESHOLD) -> CoefficientStack:
    """Moving-block bootstrap aggregation of VAR-LiNGAM.

    Blocks of length ceil(T^(1/3)) are drawn over the aligned regression
    rows (target plus its lag tuple), so resampling never breaks the lag
    structure inside a block. An edge is kept iff it appears with a
    consistent sign in more than half of the resamples, with magnitude
    equal to its mean over the resamples where present.
    """
    if n_boot < 10:
        raise ValueError("n_boot must be >= 10")
    t_len = data.t_len
    n_rows = t_len - max_lag
    block = int(math.ceil(t_len ** (1.0 / 3.0)))
    block = min(block, n_rows)
    n_blocks = int(math.ceil(n_rows / block))

    stacks: list[CoefficientStack] = []
    last_error: Exception | None = None
    failures = 0
    for b in range(n_boot):
        rng = rng_stream(seed, STREAM_BOOTSTRAP, b)
        starts = rng.integers(0, n_rows - block + 1, size=n_blocks)
        rows = np.concatenate(
            [np.arange(s, s + block) for s in starts]
        )[:n_rows]
        try:
            stacks.append(var_lingam(data, max_lag, prune=prune, rows=rows))
        except IcaNonConvergence as err:
            stacks.append(err.result)
        except SingularDesign as err:
            failures += 1
            last_error = err
    if failures > n_boot / 2:
        raise RuntimeError(
            f"{failures}/{n_boot} bootstrap resamples failed"
        ) from last_error

    n = data.n_vars
    shape = (max_lag + 1, n, n)
    values = np.zeros((len(stacks),) + shape)
    for idx, st in enumerate(stacks):
        values[idx] = np.stack(st.mats)
    signs = np.sign(values)
    pos_frac = (signs > 0).sum(axis=0) / n_boot
    neg_frac = (signs < 0).sum(axis=0) / n_boot
    keep = (pos_frac > 0.5) | (neg_frac > 0.5)
    present = signs != 0
    counts = np.maximum(present.sum(axis=0), 1)
    mean_present = values.sum(axis=0) / counts
    agg = np.where(keep, mean_present, 0.0)
    return CoefficientStack(mats=tuple(agg[k] for k in range(max_lag + 1)))
