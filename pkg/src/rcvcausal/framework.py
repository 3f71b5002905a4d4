"""Four-stage ABM validation pipeline.

Stages: (1) dataset uniformity (preprocessing + length alignment),
(2) statistical property analysis, (3) causal structure identification
with a selectable method, (4) validation assessment (metric block per ABM
run against the real-data stack, similarity block over the ensemble).
The pipeline consumes ABM *output* series; it never executes an ABM.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from statsmodels.tsa.stattools import adfuller

from rcvcausal.core import CoefficientStack, TimeSeriesDataset
from rcvcausal.metrics import (
    MetricReport,
    NeedAtLeastTwoRuns,
    SimilarityReport,
    compare,
    similarity,
)
from rcvcausal.pcmci import PcmciConfig, pcmci
from rcvcausal.rcv import RcvConfig, rcv_discover
from rcvcausal.varlingam import var_lingam_best_effort, var_lingam_bootstrap

METHOD_NAMES = (
    "varlingam", "vl-bootstrap", "rcv-varlingam", "pcmci", "rcv-pcmci",
)

_OUTLIER_SIGMAS = 6.0


class AllMissingColumn(ValueError):
    """A column holds no finite value at all."""


class NonPositiveForLog(ValueError):
    """Log transform requested on data with values <= 0."""


class VariableMismatch(ValueError):
    """Datasets disagree on variable names/order."""


class TooShort(ValueError):
    """Series too short for property analysis."""


class PipelineStageError(RuntimeError):
    """A pipeline stage failed; carries the stage tag."""

    def __init__(self, stage: str, err: Exception):
        super().__init__(f"[{stage}] {err}")
        self.stage = stage


@dataclass(frozen=True)
class PreprocessSpec:
    missing: str = "interpolate"      # interpolate | drop
    transform: str = "none"           # none | log | pct_change
    align: str = "truncate_to_min"

    def __post_init__(self) -> None:
        if self.missing not in ("interpolate", "drop"):
            raise ValueError(f"unknown missing policy {self.missing!r}")
        if self.transform not in ("none", "log", "pct_change"):
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.align != "truncate_to_min":
            raise ValueError(f"unknown align policy {self.align!r}")


@dataclass(frozen=True)
class PipelineConfig:
    method: str = "rcv-varlingam"
    method_params: dict = field(default_factory=dict)
    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)
    analyze_properties: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in METHOD_NAMES:
            raise ValueError(
                f"method must be one of {METHOD_NAMES}, got {self.method!r}"
            )

    def config_hash(self) -> str:
        payload = json.dumps({
            "method": self.method,
            "method_params": self.method_params,
            "preprocess": [self.preprocess.missing, self.preprocess.transform,
                           self.preprocess.align],
            "analyze_properties": self.analyze_properties,
            "seed": self.seed,
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PropertyReport:
    stationary_fraction: float
    linearity_score: float
    n: int
    t_len: int
    equilibrium_fraction: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "stationary_fraction": self.stationary_fraction,
            "linearity_score": self.linearity_score,
            "n": self.n,
            "t_len": self.t_len,
            "equilibrium_fraction": self.equilibrium_fraction,
        }


@dataclass(frozen=True)
class ValidationReport:
    method: str
    metrics_mean: dict
    metrics_std: dict
    per_run_metrics: tuple[MetricReport, ...]
    similarity: SimilarityReport
    properties_real: Optional[PropertyReport]
    properties_abm: Optional[PropertyReport]
    real_stack: CoefficientStack
    abm_stacks: tuple[CoefficientStack, ...]
    provenance: dict

    def to_dict(self, include_runtimes: bool = True) -> dict:
        per_run = []
        for rep in self.per_run_metrics:
            d = rep.to_dict()
            if not include_runtimes:
                d.pop("runtime_s")
            per_run.append(d)
        prov = dict(self.provenance)
        if not include_runtimes:
            prov.pop("runtimes", None)
        return {
            "method": self.method,
            "metrics_mean": self.metrics_mean,
            "metrics_std": self.metrics_std,
            "per_run_metrics": per_run,
            "similarity": self.similarity.to_dict(),
            "properties_real": (
                self.properties_real.to_dict() if self.properties_real else None
            ),
            "properties_abm": (
                self.properties_abm.to_dict() if self.properties_abm else None
            ),
            "provenance": prov,
        }


# ---------------------------------------------------------------------------
# Stage 1: uniformity


def preprocess(raw: TimeSeriesDataset, spec: PreprocessSpec) -> TimeSeriesDataset:
    """Fill or drop missing values, winsorize 6-sigma outliers, transform."""
    values = np.array(raw.values, dtype=float)
    t_len, n = values.shape

    finite = np.isfinite(values)
    for j in range(n):
        if not finite[:, j].any():
            raise AllMissingColumn(f"column {raw.names[j]!r} has no data")

    if not finite.all():
        if spec.missing == "drop":
            values = values[finite.all(axis=1)]
        else:
            idx = np.arange(t_len)
            for j in range(n):
                good = finite[:, j]
                if not good.all():
                    values[~good, j] = np.interp(
                        idx[~good], idx[good], values[good, j]
                    )
    if values.shape[0] < 2:
        raise ValueError("fewer than 2 rows left after missing-value handling")

    mu = values.mean(axis=0)
    sd = values.std(axis=0)
    lo, hi = mu - _OUTLIER_SIGMAS * sd, mu + _OUTLIER_SIGMAS * sd
    values = np.clip(values, lo, hi)

    if spec.transform == "log":
        if np.any(values <= 0):
            raise NonPositiveForLog("log transform needs strictly positive data")
        values = np.log(values)
    elif spec.transform == "pct_change":
        denom = values[:-1]
        if np.any(denom == 0):
            raise ValueError("pct_change undefined: zero value in series")
        values = (values[1:] - denom) / denom

    return TimeSeriesDataset(values=values, names=raw.names, seed=raw.seed)


def align(a: TimeSeriesDataset,
          b: TimeSeriesDataset) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """Truncate both series to the shorter length, keeping the latest rows."""
    if a.names != b.names:
        raise VariableMismatch(f"names differ: {a.names} vs {b.names}")
    t = min(a.t_len, b.t_len)
    if a.t_len == b.t_len:
        return a, b
    return (
        TimeSeriesDataset(values=a.values[-t:], names=a.names, seed=a.seed),
        TimeSeriesDataset(values=b.values[-t:], names=b.names, seed=b.seed),
    )


# ---------------------------------------------------------------------------
# Stage 2: property analysis


def _adf_rejects(x: np.ndarray, lag_order: int) -> bool:
    stat, _, _, _, crit = adfuller(
        x, maxlag=lag_order, regression="c", autolag=None
    )[:5]
    return bool(stat < crit["5%"])


def _reset_linear_vote(x: np.ndarray, lag_order: int) -> bool:
    """RESET-style check: own-lag regression, then t-test on squared fit.

    Returns True (a linearity vote) when the squared fitted term is
    insignificant at 5%.
    """
    y = x[lag_order:]
    design = np.column_stack(
        [np.ones(len(y))]
        + [x[lag_order - k:len(x) - k] for k in range(1, lag_order + 1)]
    )
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    if fitted.std() < 1e-10:
        return True
    aug = (fitted - fitted.mean()) / fitted.std()
    design2 = np.column_stack([design, aug ** 2])
    coef2, *_ = np.linalg.lstsq(design2, y, rcond=None)
    resid = y - design2 @ coef2
    dof = len(y) - design2.shape[1]
    if dof < 1:
        return True
    sigma2 = float(resid @ resid) / dof
    xtx_inv = np.linalg.pinv(design2.T @ design2)
    se = math.sqrt(max(sigma2 * xtx_inv[-1, -1], 1e-300))
    t_stat = coef2[-1] / se
    p = 2.0 * float(stats.t.sf(abs(t_stat), dof))
    return p >= 0.05


def _equilibrium_fraction(values: np.ndarray) -> float:
    """Share of variables whose half-sample means differ by < 2 std errors."""
    t_len = values.shape[0]
    half = t_len // 2
    a, b = values[:half], values[half:]
    se = np.sqrt(a.var(axis=0) / len(a) + b.var(axis=0) / len(b))
    se = np.where(se > 0, se, 1e-300)
    gap = np.abs(a.mean(axis=0) - b.mean(axis=0)) / se
    return float(np.mean(gap < 2.0))


def analyze_properties(d: TimeSeriesDataset,
                       equilibrium: bool = False) -> PropertyReport:
    """Stationarity (ADF at 5%) and linearity (RESET-style) per variable."""
    if d.t_len < 30:
        raise TooShort(f"need T >= 30 for property analysis, got {d.t_len}")
    lag_order = max(1, int(math.floor((d.t_len - 1) ** (1.0 / 3.0))))
    stationary = 0
    linear = 0
    for j in range(d.n_vars):
        col = d.values[:, j]
        if _adf_rejects(col, lag_order):
            stationary += 1
        if _reset_linear_vote(col, lag_order):
            linear += 1
    return PropertyReport(
        stationary_fraction=stationary / d.n_vars,
        linearity_score=linear / d.n_vars,
        n=d.n_vars,
        t_len=d.t_len,
        equilibrium_fraction=(
            _equilibrium_fraction(d.values) if equilibrium else None
        ),
    )


# ---------------------------------------------------------------------------
# Stage 3: causal identification (shared method dispatch)


def run_method(name: str, data: TimeSeriesDataset,
               params: Optional[dict] = None, seed: int = 0) -> CoefficientStack:
    """Run one of the five supported discovery methods on a dataset.

    Flat parameter keys: max_lag, prune (VAR-LiNGAM family); n_boot
    (bootstrap); tau_max, alpha_pc, alpha_mci, p_max (PCMCI family);
    k, tau_c, tau_v, w (RCV family).
    """
    p = dict(params or {})
    max_lag = int(p.get("max_lag", 1))
    if name == "varlingam":
        return var_lingam_best_effort(
            data, max_lag, prune=float(p.get("prune", 0.05))
        )[0]
    if name == "vl-bootstrap":
        return var_lingam_bootstrap(
            data, max_lag, n_boot=int(p.get("n_boot", 20)), seed=seed,
            prune=float(p.get("prune", 0.05)),
        )
    if name == "pcmci":
        return pcmci(data, _pcmci_config(p))
    if name in ("rcv-varlingam", "rcv-pcmci"):
        return rcv_discover(data, rcv_config_from_params(name, p))[0]
    raise ValueError(f"unknown method {name!r}")


def _pcmci_config(p: dict) -> PcmciConfig:
    return PcmciConfig(
        tau_max=int(p.get("tau_max", p.get("max_lag", 1))),
        alpha_pc=float(p.get("alpha_pc", 0.2)),
        alpha_mci=float(p.get("alpha_mci", 0.05)),
        p_max=int(p.get("p_max", 3)),
    )


def rcv_config_from_params(name: str, p: dict) -> RcvConfig:
    base = "varlingam" if name == "rcv-varlingam" else "pcmci"
    if base == "varlingam":
        base_params = {
            "max_lag": int(p.get("max_lag", 1)),
            "prune": float(p.get("prune", 0.05)),
        }
    else:
        cfg = _pcmci_config(p)
        base_params = {
            "tau_max": cfg.tau_max, "alpha_pc": cfg.alpha_pc,
            "alpha_mci": cfg.alpha_mci, "p_max": cfg.p_max,
        }
    return RcvConfig(
        base=base,
        k=int(p.get("k", 7)),
        tau_c=(None if p.get("tau_c") is None else float(p["tau_c"])),
        tau_v=float(p.get("tau_v", 0.4)),
        w=float(p.get("w", 0.0)),
        base_params=base_params,
    )


# ---------------------------------------------------------------------------
# Stage 4: full pipeline


def _population_std(xs: Sequence[float]) -> float:
    return float(np.std(np.asarray(xs, dtype=float)))


def _mean_property(reports: Sequence[PropertyReport]) -> PropertyReport:
    eq = [r.equilibrium_fraction for r in reports
          if r.equilibrium_fraction is not None]
    return PropertyReport(
        stationary_fraction=float(np.mean(
            [r.stationary_fraction for r in reports]
        )),
        linearity_score=float(np.mean([r.linearity_score for r in reports])),
        n=reports[0].n,
        t_len=reports[0].t_len,
        equilibrium_fraction=float(np.mean(eq)) if eq else None,
    )


def run_validation(real: TimeSeriesDataset,
                   abm_runs: Sequence[TimeSeriesDataset],
                   cfg: PipelineConfig) -> ValidationReport:
    """Run all four pipeline stages and assemble the validation report."""
    if len(abm_runs) < 2:
        raise NeedAtLeastTwoRuns("validation needs >= 2 ABM runs")

    # stage 1: uniformity
    try:
        for run in abm_runs:
            if run.names != real.names:
                raise VariableMismatch(
                    f"ABM variables {run.names} differ from real {real.names}"
                )
        real_p = preprocess(real, cfg.preprocess)
        abm_p = [preprocess(run, cfg.preprocess) for run in abm_runs]
        t_min = min([real_p.t_len] + [d.t_len for d in abm_p])
        real_p = TimeSeriesDataset(values=real_p.values[-t_min:],
                                   names=real_p.names, seed=real_p.seed)
        abm_p = [
            TimeSeriesDataset(values=d.values[-t_min:], names=d.names,
                              seed=d.seed)
            for d in abm_p
        ]
    except Exception as err:
        raise PipelineStageError("uniformity", err) from err

    # stage 2: property analysis
    props_real = props_abm = None
    if cfg.analyze_properties:
        try:
            props_real = analyze_properties(real_p)
            props_abm = _mean_property(
                [analyze_properties(d, equilibrium=True) for d in abm_p]
            )
        except Exception as err:
            raise PipelineStageError("property-analysis", err) from err

    # stage 3: causal identification
    runtimes: dict[str, float] = {}
    try:
        t0 = time.perf_counter()
        real_stack = run_method(cfg.method, real_p, cfg.method_params, cfg.seed)
        runtimes["real_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        abm_stacks = [
            run_method(cfg.method, d, cfg.method_params, cfg.seed)
            for d in abm_p
        ]
        runtimes["abm_s"] = time.perf_counter() - t0
    except Exception as err:
        raise PipelineStageError("identification", err) from err

    # stage 4: validation assessment
    try:
        per_run = tuple(compare(real_stack, st) for st in abm_stacks)
        fields = ("shd", "f1", "f1_directed", "frobenius")
        metrics_mean = {
            f: float(np.mean([getattr(r, f) for r in per_run])) for f in fields
        }
        metrics_std = {
            f: _population_std([getattr(r, f) for r in per_run])
            for f in fields
        }
        sim = similarity(real_stack, list(abm_stacks))
    except Exception as err:
        raise PipelineStageError("assessment", err) from err

    provenance = {
        "method": cfg.method,
        "method_params": dict(cfg.method_params),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "n_abm_runs": len(abm_runs),
        "runtimes": runtimes,
        "notes": (
            "equilibrium check: half-sample mean gap < 2 standard errors; "
            "ergodicity analysis omitted (needs multiple runs at multiple "
            "lengths)"
        ),
    }
    return ValidationReport(
        method=cfg.method,
        metrics_mean=metrics_mean,
        metrics_std=metrics_std,
        per_run_metrics=per_run,
        similarity=sim,
        properties_real=props_real,
        properties_abm=props_abm,
        real_stack=real_stack,
        abm_stacks=tuple(abm_stacks),
        provenance=provenance,
    )
