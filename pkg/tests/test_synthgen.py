import numpy as np
import pytest
from scipy.stats import kurtosis

from rcvcausal.core import CoefficientStack
from rcvcausal.rng import derive_seed
from rcvcausal.synthgen import (
    GeneratorConfig,
    NumericalDivergence,
    UnknownSuiteKind,
    draw_structure,
    make_suite,
    simulate,
    simulate_from_stack,
    spectral_radius,
    stabilize,
    suite_config,
)

RHO_LIMIT = 0.95 + 1e-9


class TestDrawStructure:
    def test_full_density_counts(self):
        cfg = GeneratorConfig(n_vars=3, max_lag=1, t_len=100, density=1.0, seed=0)
        stack = draw_structure(cfg)
        assert np.count_nonzero(stack.mats[0]) == 3  # strict lower triangle
        assert np.count_nonzero(stack.mats[1]) == 9
        assert np.count_nonzero(np.triu(stack.mats[0])) == 0

    def test_degenerate_density_still_valid(self):
        cfg = GeneratorConfig(n_vars=4, max_lag=2, t_len=100, density=1e-9, seed=1)
        stack = draw_structure(cfg)
        assert stack.n_vars == 4 and stack.max_lag == 2
        assert sum(np.count_nonzero(m) for m in stack.mats) == 0

    def test_monte_carlo_nonzero_count(self):
        # n=5, p=2, density 0.3: eligible positions 10 + 25 + 25, expect 18
        counts = []
        for seed in range(1000):
            cfg = GeneratorConfig(n_vars=5, max_lag=2, t_len=100,
                                  density=0.3, seed=seed)
            stack = draw_structure(cfg)
            counts.append(sum(np.count_nonzero(m) for m in stack.mats))
        assert abs(np.mean(counts) - 18.0) < 1.0


class TestStabilize:
    def test_already_stable_untouched(self):
        stack = CoefficientStack(mats=(np.zeros((1, 1)), np.array([[0.5]])))
        out = stabilize(stack)
        assert out.mats[1][0, 0] == 0.5

    def test_scalar_forced_to_rho_max(self):
        stack = CoefficientStack(mats=(np.zeros((1, 1)), np.array([[2.0]])))
        out = stabilize(stack)
        assert out.mats[1][0, 0] == pytest.approx(0.95, abs=1e-12)

    def test_p2_radius_lands_in_band(self):
        rng = np.random.default_rng(3)
        mats = [np.zeros((4, 4)), rng.normal(size=(4, 4)), rng.normal(size=(4, 4))]
        stack = CoefficientStack(mats=tuple(mats))
        s = 1.7 / spectral_radius(stack)
        inflated = CoefficientStack(
            mats=(mats[0], s * mats[1], s ** 2 * mats[2])
        )
        assert spectral_radius(inflated) == pytest.approx(1.7, abs=1e-9)
        out = stabilize(inflated)
        assert 0.94 <= spectral_radius(out) <= RHO_LIMIT

    def test_b0_untouched(self):
        b0 = np.array([[0.0, 0.0], [0.7, 0.0]])
        stack = CoefficientStack(mats=(b0, np.full((2, 2), 2.0)))
        out = stabilize(stack)
        assert np.array_equal(out.mats[0], b0)


class TestSimulate:
    def test_deterministic_given_seed(self):
        cfg = GeneratorConfig(n_vars=3, t_len=300, max_lag=2, density=0.4,
                              noise="student_t", trend=True,
                              fluctuation_scale=0.05, seed=5)
        a, b = simulate(cfg), simulate(cfg)
        assert np.array_equal(a.data.values, b.data.values)
        assert a.truth == b.truth

    def test_lag_regression_recovers_single_edge(self):
        truth = CoefficientStack(
            mats=(np.zeros((2, 2)), np.array([[0.0, 0.0], [0.4, 0.0]]))
        )
        cfg = GeneratorConfig(n_vars=2, t_len=50000, max_lag=1, density=0.5,
                              noise="gaussian", seed=11)
        gd = simulate_from_stack(truth, cfg)
        x = gd.data.values
        design = np.column_stack([np.ones(len(x) - 1), x[:-1]])
        coef, *_ = np.linalg.lstsq(design, x[1:, 1], rcond=None)
        assert coef[1] == pytest.approx(0.4, abs=0.02)
        assert coef[2] == pytest.approx(0.0, abs=0.02)

    def test_student_t_noise_is_heavy_tailed(self):
        truth = CoefficientStack(
            mats=(np.zeros((2, 2)), np.array([[0.0, 0.0], [0.4, 0.0]]))
        )
        cfg = GeneratorConfig(n_vars=2, t_len=50000, max_lag=1, density=0.5,
                              noise="student_t", t_dof=3.0, seed=11)
        gd = simulate_from_stack(truth, cfg)
        x = gd.data.values
        resid = x[1:] - x[:-1] @ np.asarray(truth.mats[1]).T
        assert np.all(kurtosis(resid, axis=0, fisher=True) > 0.5)

    def test_divergence_raises(self):
        # bypass stabilization with an explosive hand-made stack
        truth = CoefficientStack(mats=(np.zeros((1, 1)), np.array([[1.5]])))
        cfg = GeneratorConfig(n_vars=1, t_len=500, max_lag=1, seed=0)
        with pytest.raises(NumericalDivergence):
            simulate_from_stack(truth, cfg)

    def test_no_nan_inf(self):
        for seed in range(5):
            cfg = GeneratorConfig(n_vars=4, t_len=200, max_lag=2, density=0.5,
                                  noise="student_t", trend=True,
                                  fluctuation_scale=0.1, seed=seed)
            gd = simulate(cfg)
            assert np.isfinite(gd.data.values).all()


class TestMakeSuite:
    def test_length_preset(self):
        suite = make_suite("length-250", reps=10, seed=3)
        assert len(suite) == 10
        assert all(gd.data.t_len == 250 for gd in suite)

    def test_length_paren_spelling(self):
        assert suite_config("length(250)").t_len == 250
        assert suite_config("var-scale(50)").n_vars == 50

    def test_var_scale_preset(self):
        suite = make_suite("var-scale-50", reps=10, seed=3)
        assert len(suite) == 10
        assert all(gd.data.n_vars == 50 for gd in suite)

    def test_zero_reps(self):
        assert make_suite("linear", reps=0, seed=0) == []

    def test_unknown_kind(self):
        with pytest.raises(UnknownSuiteKind):
            make_suite("quarterly", reps=1, seed=0)

    def test_density_presets(self):
        assert suite_config("sparse").density == 0.15
        assert suite_config("dense").density == 0.5

    def test_distinct_datasets_within_suite(self):
        suite = make_suite("linear", reps=3, seed=9)
        assert not np.array_equal(suite[0].data.values, suite[1].data.values)


class TestInvariants:
    def test_spectral_radius_bound_over_random_configs(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            cfg = GeneratorConfig(
                n_vars=int(rng.integers(2, 7)),
                t_len=150,
                max_lag=int(rng.integers(1, 4)),
                density=float(rng.uniform(0.1, 1.0)),
                seed=int(rng.integers(0, 2 ** 31)),
            )
            stack = draw_structure(cfg)
            assert spectral_radius(stack) < RHO_LIMIT
            assert spectral_radius(stack, reduced_form=True) < RHO_LIMIT

    def test_covariance_stationary_baseline(self):
        cfg = GeneratorConfig(n_vars=3, t_len=20000, max_lag=1, density=0.15,
                              noise="student_t", seed=123)
        gd = simulate(cfg)
        x = gd.data.values
        half = len(x) // 2
        a, b = x[:half], x[half:]
        se = np.sqrt(a.var(axis=0) / len(a) + b.var(axis=0) / len(b))
        gap = np.abs(a.mean(axis=0) - b.mean(axis=0))
        assert np.all(gap < 5.0 * se)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GeneratorConfig(t_len=10, max_lag=1)  # t_len must exceed 10*p
        with pytest.raises(ValueError):
            GeneratorConfig(density=0.0)
        with pytest.raises(ValueError):
            GeneratorConfig(noise="student_t", t_dof=2.0)
        with pytest.raises(ValueError):
            GeneratorConfig(noise="cauchy")
