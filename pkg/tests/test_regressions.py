import filecmp
import math
import os
import pathlib
import shutil
import unittest
from glob import glob

import numpy as np

from lq_shrinkage import main
from lq_shrinkage.config import BENCHMARK_ALPHA, BENCHMARK_Q
from lq_shrinkage.lib.frames import BiFrame, ForwardProblem, boundedness_audit, mercedes_benz
from lq_shrinkage.lib.fredholm import benchmark_grid, default_benchmark, make_synthetic_kernel
from lq_shrinkage.lib.matrixio import read_json, write_json
from lq_shrinkage.lib.prox import constant_factor_audit, log_grid_sample, oracle_scalar, scalar_objective
from lq_shrinkage.lib.shrinkage import catalog, rho_hs
from lq_shrinkage.lib.solver import LandweberConfig, landweber_shrink, objective_monotone_check, peak_positions
from lq_shrinkage.lib.variational import VariationalProblem, constant_factor_audit_Kq, default_probes

RECORDED = "tests/output_files/recorded_{}"
GENERATED = ("tests/input_files/tmp_*",)

# worst ratio of rho_hs(q) to the exact minimizer over log_grid_sample()
HS_AUDIT_MAXIMA = {
    0.1: 1.002123282060,
    0.2: 1.007014521073,
    0.3: 1.012669398682,
    0.4: 1.017624375197,
    0.5: 1.021864739870,
    0.6: 1.024798801111,
    0.7: 1.025157125496,
    0.8: 1.021933389870,
    0.9: 1.013032667102,
}


def recorded(test: unittest.TestCase, name: str, value):
    """The stored value for `name`; the first run stores `value` and skips."""
    path = pathlib.Path(RECORDED.format(name) + ".json")
    if not path.is_file():
        write_json(path, value)
        test.skipTest(f"recorded {path}")
    return read_json(path)


class TestExactValues(unittest.TestCase):
    def test_q_half_oracle(self):
        # w = s^2 with s the root near 1.347 of s^3 - 2 s + 1/4
        omega = oracle_scalar(2.0, 1.0, 0.5)
        self.assertAlmostEqual(omega, 1.8144020185805396, delta=1e-6)
        self.assertAlmostEqual(float(scalar_objective(omega, 2.0, 1.0, 0.5)), 1.3814440192347526, delta=1e-12)
        self.assertEqual(oracle_scalar(-2.0, 1.0, 0.5), -omega)

    def test_hs_audit_maxima(self):
        sample = log_grid_sample()
        for q, expected in HS_AUDIT_MAXIMA.items():
            worst = constant_factor_audit(q, rho_hs(q), sample, workers=4)
            self.assertAlmostEqual(worst, expected, delta=1e-6 * expected, msg=f"q={q}")

    def test_mercedes_benz_l1_bound(self):
        cross_gram = BiFrame.canonical(mercedes_benz()).cross_gram
        self.assertAlmostEqual(boundedness_audit(cross_gram, 1.0), 4 / 3, delta=1e-12)


class TestRecordedValues(unittest.TestCase):
    def tearDown(self):
        for pattern in GENERATED:
            for delete_file in glob(pattern):
                os.remove(delete_file)

    def test_catalog_audit_maxima(self):
        sample = log_grid_sample()
        found = {rule.name: constant_factor_audit(rule.min_q, rule, sample, workers=4) for rule in catalog()}
        expected = recorded(self, "catalog_audit_maxima", found)
        self.assertEqual(sorted(found), sorted(expected))
        for name, worst in found.items():
            self.assertAlmostEqual(worst, expected[name], delta=1e-9 * expected[name], msg=name)

    def test_mercedes_benz_Kq_audit(self):
        biframe = BiFrame.canonical(mercedes_benz())
        h = np.array([1.0, -2.0])
        p = VariationalProblem(ForwardProblem(np.eye(2), h), biframe, 0.5, 0.5)
        probes = default_probes(p, seed=11, domain="sequence")
        worst = constant_factor_audit_Kq(biframe, h, 0.5, 0.5, rho_hs(0.5), probes)
        expected = recorded(self, "mercedes_benz_Kq", worst)
        self.assertAlmostEqual(worst, expected, delta=1e-9 * expected)

    def test_benchmark_nonneg_outcome(self):
        problem = default_benchmark()
        cfg = LandweberConfig(q=BENCHMARK_Q, alpha=BENCHMARK_ALPHA, nonneg=True)
        trace = landweber_shrink(problem.kernel_matrix, problem.data, cfg)
        outcome = {
            "objective": trace.final.objective,
            "nonzeros": trace.final.nonzero_count,
            "peaks": peak_positions(trace.iterate),
            "monotone": objective_monotone_check(trace),
        }
        expected = recorded(self, "benchmark_q0.3", outcome)
        self.assertAlmostEqual(outcome["objective"], expected["objective"], delta=1e-9 * expected["objective"])
        self.assertEqual(outcome["nonzeros"], expected["nonzeros"])
        self.assertEqual(outcome["peaks"], expected["peaks"])
        self.assertEqual(outcome["monotone"], expected["monotone"])

    def test_lcurve_file(self):
        path = "tests/input_files/tmp_lcurve.csv"
        with self.assertRaises(SystemExit) as context:
            main(["--quiet", "lcurve", "--input", "benchmark:30", "--q", "1", "--out", path])
        self.assertEqual(context.exception.code, 0)
        stored = pathlib.Path(RECORDED.format("lcurve_q1.csv"))
        if not stored.is_file():
            shutil.copyfile(path, stored)
            self.skipTest(f"recorded {stored}")
        self.assertTrue(filecmp.cmp(path, stored, shallow=False))  # byte-identical rerun

    def test_wide_blur_condition_number(self):
        grid = benchmark_grid(100)
        kernel = make_synthetic_kernel("gaussian_blur", {"s": 3.0}, grid, grid)
        exponent = math.log10(np.linalg.cond(kernel))
        expected = recorded(self, "blur_condition", exponent)
        self.assertAlmostEqual(exponent, expected, delta=0.5)


if __name__ == "__main__":
    unittest.main()
