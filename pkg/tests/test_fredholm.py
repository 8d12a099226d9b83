import filecmp
import json
import os
import pathlib
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from lq_shrinkage.errors import DimensionError, DomainError, ProblemFileError
from lq_shrinkage.lib.fredholm import (
    FredholmProblem,
    benchmark_grid,
    default_benchmark,
    load_problem,
    make_sparse_truth,
    make_synthetic_kernel,
    observe,
    save_problem,
    snr,
    trapezoid_weights,
)
from lq_shrinkage.lib.solver import peak_positions


def inline_problem() -> FredholmProblem:
    return FredholmProblem(
        x_grid=[0.0, 1.0],
        y_grid=[0.0, 1.0],
        kernel_matrix=[[1.0, 0.0], [0.0, 2.0]],
        ground_truth=[1.0, 0.5],
        noise_sigma=0.0,
        seed=42,
        data=[1.0, 1.0],
    )


class TestKernels(unittest.TestCase):
    def test_narrow_blur_is_diagonal(self):
        grid = benchmark_grid(10)
        kernel = make_synthetic_kernel("gaussian_blur", {"s": 1e-3}, grid, grid)
        assert_allclose(kernel, np.diag(trapezoid_weights(grid)), atol=1e-300)

    def test_sigmoid_at_rest(self):
        x_grid = np.array([0.0, 1.0, 2.0])
        kernel = make_synthetic_kernel("sigmoid_front", {"t": 0.0, "w": 1.0}, x_grid, np.array([0.0, 1.0]))
        assert_allclose(kernel[0], 0.5 * trapezoid_weights(x_grid))

    def test_wide_blur_is_ill_conditioned(self):
        grid = benchmark_grid(100)
        kernel = make_synthetic_kernel("gaussian_blur", {"s": 3.0}, grid, grid)
        self.assertGreater(np.linalg.cond(kernel), 1e6)

    def test_quadrature_is_second_order(self):
        errors = []
        for step in (0.5, 0.25):
            grid = np.arange(0.0, 1.0 + step / 2, step)
            errors.append(abs(trapezoid_weights(grid) @ np.exp(grid) - (np.e - 1.0)))
        self.assertTrue(3.0 < errors[0] / errors[1] < 5.0)

    def test_invalid(self):
        grid = benchmark_grid(5)
        with self.assertRaises(DomainError):
            make_synthetic_kernel("box", {}, grid, grid)
        with self.assertRaises(DomainError):
            make_synthetic_kernel("gaussian_blur", {}, grid, grid)
        with self.assertRaises(DomainError):
            make_synthetic_kernel("gaussian_blur", {"s": -1.0}, grid, grid)
        with self.assertRaises(DomainError):
            make_synthetic_kernel("sigmoid_front", {"t": 1.0, "w": 1.0}, grid[::-1], grid)
        with self.assertRaises(DomainError):
            trapezoid_weights([1.0])


class TestSparseTruth(unittest.TestCase):
    def test_spikes(self):
        assert_array_equal(make_sparse_truth(6, [(1, 2.0), (4, 0.5)]), [0, 2.0, 0, 0, 0.5, 0])
        assert_array_equal(make_sparse_truth(3, []), np.zeros(3))

    def test_invalid_spikes(self):
        with self.assertRaises(DomainError):
            make_sparse_truth(5, [(2, 1.0), (2, 3.0)])
        with self.assertRaises(DomainError):
            make_sparse_truth(5, [(5, 1.0)])
        with self.assertRaises(DomainError):
            make_sparse_truth(5, [(1, 0.0)])


class TestProblem(unittest.TestCase):
    def test_shapes(self):
        with self.assertRaises(DimensionError):
            FredholmProblem([0.0, 1.0], [0.0, 1.0, 2.0], np.ones((2, 2)))
        with self.assertRaises(DomainError):
            FredholmProblem([0.0, 1.0], [0.0, 1.0], [[1.0, 0.0], [1.0, 0.0]])
        with self.assertRaises(DomainError):
            FredholmProblem([0.0, 1.0], [0.0, 1.0], np.eye(2), ground_truth=[1.0, -1.0])

    def test_observe_is_seeded(self):
        problem = default_benchmark(20)
        assert_array_equal(observe(problem), observe(problem))
        assert_array_equal(problem.data, default_benchmark(20).data)
        self.assertFalse(np.array_equal(problem.data, default_benchmark(20, seed=7).data))

    def test_noise_free_observation(self):
        problem = default_benchmark(20, noise_ratio=0.0)
        assert_array_equal(problem.data, problem.kernel_matrix @ problem.ground_truth)
        self.assertEqual(snr(problem), float("inf"))

    def test_snr_metadata(self):
        problem = default_benchmark(20)
        self.assertEqual(problem.to_dict()["metadata"]["snr"], snr(problem))
        self.assertGreater(snr(problem), 1.0)

    def test_benchmark_truth(self):
        truth = default_benchmark().ground_truth
        self.assertEqual(peak_positions(truth), [45, 55, 66, 89])
        self.assertEqual(int(np.count_nonzero(truth)), 4)

    def test_least_squares_recovers_truth(self):
        problem = default_benchmark(20, noise_ratio=0.0, kind="gaussian_blur", params={"s": 0.3})
        solution = np.linalg.lstsq(problem.kernel_matrix, problem.data, rcond=None)[0]
        assert_allclose(solution, problem.ground_truth, atol=1e-8)

    def test_variational_view(self):
        problem = default_benchmark(10)
        variational = problem.to_variational(0.5)
        self.assertEqual(variational.q, 0.5)
        assert_array_equal(variational.data, problem.data)
        with self.assertRaises(DomainError):
            FredholmProblem([0.0, 1.0], [0.0, 1.0], np.eye(2)).forward()


class TestProblemFiles(unittest.TestCase):
    def tearDown(self):
        for generated in ("tests/input_files/inline_problem.json", "tests/input_files/benchmark.json"):
            if os.path.exists(generated):
                os.remove(generated)

    def test_save_inline_problem(self):
        save_problem(inline_problem(), "tests/input_files/inline_problem.json")
        path = pathlib.Path("tests/input_files/inline_problem.json")
        self.assertTrue(path.is_file())  # generated file exists
        comparison = filecmp.cmp(
            "tests/input_files/inline_problem.json",
            "tests/output_files/inline_problem.json",
            shallow=False,
        )
        self.assertTrue(comparison)  # generated file content is as expected

    def test_load_inline_problem(self):
        problem = load_problem("tests/output_files/inline_problem.json")
        assert_array_equal(problem.kernel_matrix, [[1.0, 0.0], [0.0, 2.0]])
        assert_array_equal(problem.data, [1.0, 1.0])
        self.assertEqual((problem.seed, problem.noise_sigma, problem.kernel_kind), (42, 0.0, "inline"))

    def test_generated_kernel_round_trip(self):
        problem = default_benchmark(10)
        save_problem(problem, "tests/input_files/benchmark.json")
        loaded = load_problem("tests/input_files/benchmark.json")
        assert_array_equal(loaded.kernel_matrix, problem.kernel_matrix)
        assert_array_equal(loaded.data, problem.data)
        assert_array_equal(loaded.ground_truth, problem.ground_truth)
        self.assertEqual(loaded.kernel_params, problem.kernel_params)
        with open("tests/input_files/benchmark.json") as f:
            self.assertNotIn("matrix", json.load(f)["kernel"])

    def test_invalid_files(self):
        with self.assertRaises(ProblemFileError):
            load_problem("tests/input_files/missing.json")
        content = inline_problem().to_dict()
        for broken in (
            {**content, "format": "other"},
            {**content, "version": 2},
            {**content, "kernel": {"kind": "box"}},
            {key: value for key, value in content.items() if key != "x_grid"},
        ):
            with self.assertRaises(ProblemFileError):
                FredholmProblem.from_dict(broken)

    def test_missing_data_is_observed(self):
        content = inline_problem().to_dict()
        content["data"] = None
        problem = FredholmProblem.from_dict(content)
        assert_array_equal(problem.data, [1.0, 1.0])


if __name__ == "__main__":
    unittest.main()
