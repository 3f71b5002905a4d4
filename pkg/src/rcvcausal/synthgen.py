"""Ground-truthed synthetic VAR time series generator.

Simulates x_t = B0 x_t + sum_k B_k phi(x_{t-k}) + trend_t + w_t + eps_t,
solved per step through (I - B0)^-1. Controllable knobs: linearity (phi is
tanh on the lagged regressors when nonlinear, identity otherwise), noise
family (gaussian or Student-t), deterministic per-variable trends, additive
random-walk fluctuations, edge density, variable count and series length.
The drawn coefficient stack is kept as ground truth alongside the data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from rcvcausal.core import CoefficientStack, TimeSeriesDataset
from rcvcausal.rng import (
    STREAM_NOISE,
    STREAM_STRUCTURE,
    STREAM_TREND,
    STREAM_WALK,
    derive_seed,
    rng_stream,
)

RHO_MAX = 0.95
DIVERGENCE_LIMIT = 1e12

NOISE_GAUSSIAN = "gaussian"
NOISE_STUDENT_T = "student_t"

SUITE_KINDS = (
    "linear", "nonlinear",
    "gaussian", "non-gaussian",
    "stationary", "non-stationary",
    "sparse", "dense",
    "var-scale-5", "var-scale-20", "var-scale-50",
    "length-250", "length-1000", "length-2000",
)


class NumericalDivergence(RuntimeError):
    """Simulated values exceeded the divergence limit."""


class UnknownSuiteKind(ValueError):
    """Suite kind is not one of the documented presets."""


@dataclass(frozen=True)
class GeneratorConfig:
    n_vars: int = 5
    t_len: int = 1000
    max_lag: int = 1
    density: float = 0.15
    nonlinear: bool = False
    noise: str = NOISE_GAUSSIAN
    t_dof: float = 5.0
    noise_scale: float = 1.0
    trend: bool = False
    trend_slope: tuple[float, float] = (0.0005, 0.002)
    fluctuation_scale: float = 0.0
    coef_range: tuple[float, float] = (0.2, 0.8)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_vars < 1:
            raise ValueError("n_vars must be >= 1")
        if self.max_lag < 1:
            raise ValueError("max_lag must be >= 1")
        if self.t_len <= 10 * self.max_lag:
            raise ValueError("t_len must exceed 10 * max_lag")
        if not 0 < self.density <= 1:
            raise ValueError("density must be in (0, 1]")
        if self.noise not in (NOISE_GAUSSIAN, NOISE_STUDENT_T):
            raise ValueError(f"unknown noise family {self.noise!r}")
        if self.noise == NOISE_STUDENT_T and self.t_dof <= 2:
            raise ValueError("student_t dof must exceed 2 (finite variance)")
        if self.fluctuation_scale < 0 or self.noise_scale < 0:
            raise ValueError("scales must be nonnegative")
        lo, hi = self.coef_range
        if not 0 < lo <= hi:
            raise ValueError("coef_range must satisfy 0 < low <= high")


@dataclass(frozen=True)
class GeneratedDataset:
    data: TimeSeriesDataset
    truth: CoefficientStack
    config: GeneratorConfig


def companion_matrix(stack: CoefficientStack,
                     reduced_form: bool = False) -> np.ndarray:
    """VAR(p) companion form of the lagged matrices B1..Bp.

    With reduced_form=True the blocks are (I - B0)^-1 B_k, whose spectral
    radius is the one that governs stationarity of the simulated process.
    """
    n, p = stack.n_vars, stack.max_lag
    if p == 0:
        return np.zeros((n, n))
    solve = (
        np.linalg.inv(np.eye(n) - stack.mats[0]) if reduced_form else np.eye(n)
    )
    c = np.zeros((n * p, n * p))
    for k in range(1, p + 1):
        c[:n, (k - 1) * n:k * n] = solve @ stack.mats[k]
    if p > 1:
        c[n:, :-n] = np.eye(n * (p - 1))
    return c


def spectral_radius(stack: CoefficientStack,
                    reduced_form: bool = False) -> float:
    p = stack.max_lag
    if p == 0:
        return 0.0
    comp = companion_matrix(stack, reduced_form=reduced_form)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def stabilize(stack: CoefficientStack, rho_max: float = RHO_MAX) -> CoefficientStack:
    """Shrink the lagged part until the companion spectral radius < rho_max.

    The binding radius is the larger of the structural companion (B1..Bp)
    and the reduced-form companion ((I - B0)^-1 B_k); the second one is
    what actually decides whether the simulated process is stationary.
    Lag k is scaled by s**k with s = rho_max / rho, which rescales every
    companion eigenvalue by exactly s (a uniform factor would overshoot
    for p >= 2). B0 is untouched.
    """
    def binding_rho(st: CoefficientStack) -> float:
        return max(spectral_radius(st), spectral_radius(st, reduced_form=True))

    rho = binding_rho(stack)
    for _ in range(8):
        if rho < rho_max + 1e-9:
            break
        s = rho_max / rho
        mats = [stack.mats[0]] + [
            (s ** k) * stack.mats[k] for k in range(1, stack.max_lag + 1)
        ]
        stack = CoefficientStack(mats=tuple(mats))
        rho = binding_rho(stack)
    return stack


def draw_structure(cfg: GeneratorConfig) -> CoefficientStack:
    """Random signed coefficient stack with strictly lower-triangular B0.

    Eligible positions (strict lower triangle of B0, every lagged entry)
    are nonzero with probability cfg.density, magnitudes uniform in
    cfg.coef_range with random sign; the result is stabilized.
    """
    rng = rng_stream(cfg.seed, STREAM_STRUCTURE)
    n, p = cfg.n_vars, cfg.max_lag
    lo, hi = cfg.coef_range

    def fill(mask: np.ndarray) -> np.ndarray:
        keep = (rng.random((n, n)) < cfg.density) & mask
        mag = rng.uniform(lo, hi, size=(n, n))
        sign = np.where(rng.random((n, n)) < 0.5, -1.0, 1.0)
        return np.where(keep, sign * mag, 0.0)

    b0 = fill(np.tril(np.ones((n, n), dtype=bool), k=-1))
    lagged = [fill(np.ones((n, n), dtype=bool)) for _ in range(p)]
    return stabilize(CoefficientStack(mats=tuple([b0] + lagged)))


def _draw_noise(rng: np.random.Generator, cfg: GeneratorConfig,
                steps: int) -> np.ndarray:
    if cfg.noise == NOISE_STUDENT_T:
        eps = rng.standard_t(cfg.t_dof, size=(steps, cfg.n_vars))
    else:
        eps = rng.standard_normal((steps, cfg.n_vars))
    return cfg.noise_scale * eps


def simulate_from_stack(truth: CoefficientStack,
                        cfg: GeneratorConfig) -> GeneratedDataset:
    """Simulate cfg.t_len observations from a fixed ground-truth stack.

    The first 10 * max_lag burn-in steps are discarded. Deterministic
    given cfg.seed; raises NumericalDivergence when any value exceeds
    the divergence limit.
    """
    n, p = cfg.n_vars, cfg.max_lag
    if truth.n_vars != n or truth.max_lag != p:
        raise ValueError("truth stack does not match the config dimensions")
    burn = 10 * p
    total = cfg.t_len + burn

    eps = _draw_noise(rng_stream(cfg.seed, STREAM_NOISE), cfg, total)
    drive = eps

    if cfg.trend:
        rng_t = rng_stream(cfg.seed, STREAM_TREND)
        lo, hi = cfg.trend_slope
        slope = rng_t.uniform(lo, hi, size=n)
        slope *= np.where(rng_t.random(n) < 0.5, -1.0, 1.0)
        drive = drive + np.arange(total)[:, None] * slope[None, :]

    if cfg.fluctuation_scale > 0:
        rng_w = rng_stream(cfg.seed, STREAM_WALK)
        steps = cfg.fluctuation_scale * rng_w.standard_normal((total, n))
        drive = drive + np.cumsum(steps, axis=0)

    solve = np.linalg.inv(np.eye(n) - truth.mats[0])
    phi = np.tanh if cfg.nonlinear else (lambda v: v)
    lagged = [np.asarray(truth.mats[k]) for k in range(1, p + 1)]

    x = np.zeros((total, n))
    for t in range(total):
        acc = drive[t].copy()
        for k in range(1, p + 1):
            if t - k >= 0:
                acc += lagged[k - 1] @ phi(x[t - k])
        x[t] = solve @ acc
        if np.max(np.abs(x[t])) > DIVERGENCE_LIMIT:
            raise NumericalDivergence(
                f"|x| exceeded {DIVERGENCE_LIMIT:g} at step {t}"
            )

    data = TimeSeriesDataset(
        values=x[burn:],
        names=tuple(f"x{i}" for i in range(n)),
        seed=cfg.seed,
    )
    return GeneratedDataset(data=data, truth=truth, config=cfg)


def simulate(cfg: GeneratorConfig) -> GeneratedDataset:
    """Draw a structure and simulate from it; fully determined by cfg."""
    return simulate_from_stack(draw_structure(cfg), cfg)


_BASE = GeneratorConfig(
    n_vars=5, t_len=1000, max_lag=1, density=0.15,
    noise=NOISE_STUDENT_T, t_dof=5.0,
)

_PRESETS: dict[str, GeneratorConfig] = {
    "linear": _BASE,
    "nonlinear": replace(_BASE, nonlinear=True),
    "gaussian": replace(_BASE, noise=NOISE_GAUSSIAN),
    "non-gaussian": _BASE,
    "stationary": _BASE,
    "non-stationary": replace(_BASE, trend=True, fluctuation_scale=0.02),
    "sparse": replace(_BASE, density=0.15),
    "dense": replace(_BASE, density=0.5),
    "var-scale-5": replace(_BASE, n_vars=5),
    "var-scale-20": replace(_BASE, n_vars=20),
    "var-scale-50": replace(_BASE, n_vars=50),
    "length-250": replace(_BASE, t_len=250),
    "length-1000": replace(_BASE, t_len=1000),
    "length-2000": replace(_BASE, t_len=2000),
}


def suite_config(kind: str) -> GeneratorConfig:
    """Preset config for a suite kind; accepts var-scale(50)-style spelling."""
    norm = kind.strip().lower().replace("(", "-").replace(")", "")
    if norm not in _PRESETS:
        raise UnknownSuiteKind(
            f"unknown suite kind {kind!r}; expected one of {SUITE_KINDS}"
        )
    return _PRESETS[norm]


def make_suite(kind: str, reps: int, seed: int) -> list[GeneratedDataset]:
    """reps independently drawn datasets for one preset configuration."""
    base = suite_config(kind)
    out = []
    for i in range(reps):
        cfg = replace(base, seed=derive_seed(seed, i))
        out.append(simulate(cfg))
    return out
