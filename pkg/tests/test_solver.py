import pathlib
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from scipy.optimize import minimize
from scipy.sparse.linalg import aslinearoperator

from lq_shrinkage.config import BENCHMARK_ALPHA, BENCHMARK_Q
from lq_shrinkage.errors import DimensionError, DivergenceError, DomainError
from lq_shrinkage.lib.fredholm import default_benchmark
from lq_shrinkage.lib.runner import compare_methods
from lq_shrinkage.lib.shrinkage import soft
from lq_shrinkage.lib.solver import (
    LandweberConfig,
    SupportRefiner,
    landweber_shrink,
    maxent_solve,
    nonzero_count,
    objective_monotone_check,
    peak_positions,
    spectral_norm,
)
from lq_shrinkage.lib.variational import support_search

TRACE_PATH = "tests/input_files/tmp_trace.csv"


def l1_reference(operator, f, alpha) -> float:
    """min |f - T g|^2 + alpha |g|_1 through g = u - v, u, v >= 0."""
    cols = operator.shape[1]

    def fun(x):
        u, v = x[:cols], x[cols:]
        residual = operator @ (u - v) - f
        gradient = 2.0 * operator.T @ residual
        value = residual @ residual + alpha * np.sum(x)
        return value, np.concatenate([gradient + alpha, -gradient + alpha])

    result = minimize(
        fun,
        np.zeros(2 * cols),
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, None)] * (2 * cols),
        options={"maxiter": 50_000, "maxfun": 500_000, "ftol": 1e-15, "gtol": 1e-12},
    )
    return float(result.fun)


def l1_duality_gap(operator, f, alpha, g) -> float:
    """Upper bound on P(g) - min P for P(g) = |f - T g|^2 + alpha |g|_1.

    2 <theta, f> - |theta|^2 is a lower bound whenever |T* theta|_inf <= alpha / 2;
    theta is the residual scaled into that set.
    """
    residual = f - operator @ g
    primal = residual @ residual + alpha * np.sum(np.abs(g))
    correlation = np.max(np.abs(operator.T @ residual))
    theta = residual * min(1.0, alpha / (2.0 * correlation)) if correlation > 0 else residual
    return float(primal - (2.0 * theta @ f - theta @ theta))


class TestLandweberShrink(unittest.TestCase):
    def tearDown(self):
        pathlib.Path(TRACE_PATH).unlink(missing_ok=True)

    def test_identity_operator_one_step(self):
        f = np.array([5.0, -1.0, 2.5, 0.0])
        cfg = LandweberConfig(q=1, alpha=4.0, normalize_operator=False)
        trace = landweber_shrink(np.eye(4), f, cfg)
        assert_allclose(trace.iterate, soft()(f, 2.0))
        assert_allclose(trace.iterate, [3.0, 0.0, 0.5, 0.0])
        self.assertEqual(trace.records[1].objective, trace.final.objective)
        self.assertEqual(trace.stop_reason, "converged")
        self.assertEqual(trace.iterations_used, 2)
        self.assertEqual(trace.scale, 1.0)

    def test_zero_data(self):
        operator = np.random.default_rng(0).standard_normal((5, 7))
        trace = landweber_shrink(operator, np.zeros(5), LandweberConfig(q=0.5, alpha=0.1))
        assert_array_equal(trace.iterate, np.zeros(7))
        self.assertEqual(trace.stop_reason, "converged")

    def test_nonneg(self):
        rng = np.random.default_rng(1)
        operator = rng.standard_normal((8, 8))
        f = operator @ rng.standard_normal(8)
        trace = landweber_shrink(operator, f, LandweberConfig(q=0.5, alpha=0.05, nonneg=True, max_iters=2000))
        self.assertTrue(np.all(trace.iterate >= 0))

    def test_residual_nonincreasing_without_penalty(self):
        rng = np.random.default_rng(2)
        operator = rng.standard_normal((6, 4))
        f = rng.standard_normal(6)
        trace = landweber_shrink(operator, f, LandweberConfig(q=0.5, alpha=0.0, max_iters=50))
        residuals = [r.residual_norm for r in trace.records]
        self.assertTrue(all(b <= a + 1e-12 for a, b in zip(residuals, residuals[1:])))

    def test_soft_thresholding_is_monotone(self):
        rng = np.random.default_rng(3)
        operator = rng.standard_normal((10, 15))
        f = rng.standard_normal(10)
        trace = landweber_shrink(operator, f, LandweberConfig(q=1, alpha=0.5, max_iters=3000))
        self.assertTrue(objective_monotone_check(trace))
        self.assertEqual(trace.scale, spectral_norm(operator) / 0.99)

    def test_hard_thresholding_against_support_search(self):
        rng = np.random.default_rng(4)
        operator = rng.standard_normal((6, 10))
        truth = np.zeros(10)
        truth[[2, 7]] = [3.0, -2.5]
        f = operator @ truth
        coefficients, optimum = support_search(operator, f, 0.1)
        assert_array_equal(coefficients != 0, truth != 0)
        trace = landweber_shrink(operator, f, LandweberConfig(q=0, alpha=0.1, max_iters=5000))
        assert_array_equal(trace.iterate != 0, truth != 0)
        assert_allclose(trace.iterate, coefficients, atol=1e-9)
        self.assertAlmostEqual(trace.final.objective, optimum, delta=1e-6 * max(optimum, 1.0))
        self.assertGreater(trace.refine_moves, 0)

    def test_polished_entries_respect_the_local_minimizer_bound(self):
        rng = np.random.default_rng(4)
        operator = rng.standard_normal((6, 10))
        f = operator @ rng.standard_normal(10)
        cfg = LandweberConfig(q=0.5, alpha=0.5)
        refiner = SupportRefiner(operator, f, cfg)
        start = np.zeros(10)
        start[[1, 4, 8]] = [1e-6, -1e-6, 1e-6]
        polished = refiner.polish({1, 4, 8}, start)
        lower = (0.5 * 0.5 * 0.5 / (2.0 * np.sum(operator**2, axis=0))) ** (1.0 / 1.5)
        support = [1, 4, 8]
        self.assertTrue(np.all(np.abs(polished[support]) >= lower[support] * (1.0 - 1e-12)))
        assert_array_equal(np.sign(polished[support]), [1.0, -1.0, 1.0])
        assert_array_equal(np.delete(polished, support), np.zeros(7))

    def test_without_refinement_final_is_last_iteration(self):
        rng = np.random.default_rng(4)
        operator = rng.standard_normal((6, 10))
        f = operator @ rng.standard_normal(10)
        trace = landweber_shrink(operator, f, LandweberConfig(q=0, alpha=0.1, max_iters=500, refine=False))
        self.assertIsNone(trace.refined)
        self.assertEqual(trace.refine_moves, 0)
        self.assertIs(trace.final, trace.records[-1])

    def test_recorded_objective_is_unscaled(self):
        rng = np.random.default_rng(5)
        operator = 3.0 * rng.standard_normal((5, 5))
        f = rng.standard_normal(5)
        trace = landweber_shrink(operator, f, LandweberConfig(q=1, alpha=0.2, max_iters=200))
        g = trace.iterate
        expected = float(np.sum((f - operator @ g) ** 2) + 0.2 * np.sum(np.abs(g)))
        self.assertAlmostEqual(trace.final.objective, expected, delta=1e-9 * max(1.0, expected))

    def test_matrix_free_operator(self):
        operator = np.random.default_rng(6).standard_normal((6, 6))
        f = np.ones(6)
        cfg = LandweberConfig(q=1, alpha=0.3, rel_tol=1e-12)
        dense = landweber_shrink(operator, f, cfg)
        free = landweber_shrink(aslinearoperator(operator), f, cfg)
        assert_allclose(free.iterate, dense.iterate, atol=1e-5)

    def test_trace_csv(self):
        trace = landweber_shrink(np.eye(2), [1.0, 2.0], LandweberConfig(q=1, alpha=1.0, normalize_operator=False))
        path = trace.to_csv(TRACE_PATH)
        with open(path) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], "iteration,residual_norm,penalty,objective,nonzero_count")
        self.assertEqual(len(lines), len(trace.records) + 1)

    def test_invalid_config(self):
        with self.assertRaises(DomainError):
            LandweberConfig(q=1.5, alpha=1.0)
        with self.assertRaises(DomainError):
            LandweberConfig(q=0.5, alpha=-1.0)
        with self.assertRaises(DomainError):
            LandweberConfig(q=0.5, alpha=1.0, max_iters=0)
        with self.assertRaises(DimensionError):
            landweber_shrink(np.eye(3), np.ones(2), LandweberConfig(q=1, alpha=1.0))
        with self.assertRaises(DimensionError):
            landweber_shrink(np.eye(3), np.ones(3), LandweberConfig(q=1, alpha=1.0), g0=np.ones(2))

    def test_divergence(self):
        cfg = LandweberConfig(q=1, alpha=0.0, normalize_operator=False, max_iters=5000)
        with self.assertRaises(DivergenceError):
            landweber_shrink(10.0 * np.eye(2), [1.0, 1.0], cfg)

    def test_warm_start_converges_to_same_point(self):
        problem = default_benchmark(20)
        cfg = LandweberConfig(q=1, alpha=0.05, nonneg=True, max_iters=100_000, rel_tol=1e-12)
        cold = landweber_shrink(problem.kernel_matrix, problem.data, cfg)
        warm = landweber_shrink(problem.kernel_matrix, problem.data, cfg, g0=np.ones(20))
        self.assertAlmostEqual(
            warm.final.objective, cold.final.objective, delta=1e-7 * max(1.0, cold.final.objective)
        )


class TestBenchmarkL1(unittest.TestCase):
    def test_matches_split_variable_reference(self):
        problem = default_benchmark(30)
        alpha = 0.05
        trace = landweber_shrink(problem.kernel_matrix, problem.data, LandweberConfig(q=1, alpha=alpha, rel_tol=1e-12))
        reference = l1_reference(problem.kernel_matrix, problem.data, alpha)
        self.assertAlmostEqual(trace.final.objective, reference, delta=1e-4 * max(1.0, reference))

    def test_soft_thresholding_reaches_the_l1_minimizer(self):
        problem = default_benchmark()
        trace = landweber_shrink(problem.kernel_matrix, problem.data, LandweberConfig(q=1, alpha=BENCHMARK_ALPHA))
        self.assertTrue(objective_monotone_check(trace))
        gap = l1_duality_gap(problem.kernel_matrix, problem.data, BENCHMARK_ALPHA, trace.iterate)
        self.assertGreaterEqual(gap, -1e-12)
        self.assertLessEqual(gap, 1e-6 * trace.final.objective)


class TestMaxEnt(unittest.TestCase):
    def test_stationarity_on_identity(self):
        f = np.array([1.0, 2.0, 0.5])
        beta = 0.5
        result = maxent_solve(np.eye(3), f, beta)
        g = result.solution
        gradient = 2.0 * (g - f) + beta * (np.log(g) + 1.0)
        self.assertLess(np.max(np.abs(gradient)), 1e-5)
        self.assertTrue(np.all(g > 0))

    def test_small_beta_reproduces_data(self):
        f = np.array([1.0, 2.0, 0.5])
        result = maxent_solve(np.eye(3), f, 1e-8)
        assert_allclose(result.solution, f, atol=1e-4)

    def test_invalid(self):
        with self.assertRaises(DomainError):
            maxent_solve(np.eye(2), np.ones(2), 0.0)
        with self.assertRaises(DimensionError):
            maxent_solve(np.eye(2), np.ones(3), 1.0)


class TestCompareMethods(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        problem = default_benchmark()
        cls.matched = compare_methods(problem, BENCHMARK_Q)
        cls.fixed = compare_methods(problem, BENCHMARK_Q, BENCHMARK_ALPHA, beta=cls.matched["beta"])

    @staticmethod
    def by_method(summary) -> dict:
        return {record["method"]: record for record in summary["methods"]}

    def test_matched_alpha_fits_as_closely_as_maxent(self):
        self.assertEqual(self.matched["alpha_selection"], "matched")
        self.assertEqual(self.fixed["alpha_selection"], "given")
        methods = self.by_method(self.matched)
        self.assertLessEqual(methods["landweber_shrink"]["residual"], methods["maxent"]["residual"])

    def test_shrinkage_is_sparser_than_maxent(self):
        for summary in (self.matched, self.fixed):
            methods = self.by_method(summary)
            shrink, maxent = methods["landweber_shrink"], methods["maxent"]
            self.assertLess(shrink["nonzeros"], maxent["nonzeros"])
            self.assertEqual(len(shrink["peaks"]), 4)
            for found, expected in zip(shrink["peaks"], summary["truth_peaks"]):
                self.assertLessEqual(abs(found - expected), 1)

    def test_warm_start_reaches_the_cold_start_objective(self):
        self.assertIn("landweber_shrink_warm", self.by_method(self.fixed))
        self.assertLessEqual(self.fixed["warm_start_gap"], 1e-4)


class TestDiagnostics(unittest.TestCase):
    def test_peak_positions(self):
        g = np.zeros(20)
        g[[3, 9, 15]] = [1.0, 2.0, 0.5]
        g[10] = 1.5
        self.assertEqual(peak_positions(g, count=2), [3, 9])
        self.assertEqual(peak_positions(g), [3, 9, 15])
        self.assertEqual(peak_positions(np.zeros(5)), [])

    def test_nonzero_count(self):
        self.assertEqual(nonzero_count([0.0, 1e-300, -2.0]), 2)
        self.assertEqual(nonzero_count([1e-9, 1.0, 0.5], rtol=1e-6), 2)
        self.assertEqual(nonzero_count(np.zeros(3), rtol=1e-6), 0)

    def test_spectral_norm(self):
        self.assertAlmostEqual(spectral_norm(np.diag([3.0, -4.0])), 4.0)
        operator = np.random.default_rng(7).standard_normal((30, 20))
        self.assertAlmostEqual(
            spectral_norm(aslinearoperator(operator)), np.linalg.norm(operator, 2), delta=1e-4
        )


if __name__ == "__main__":
    unittest.main()
