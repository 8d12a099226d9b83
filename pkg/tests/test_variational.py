import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from lq_shrinkage.errors import DimensionError, DomainError, HypothesisError, RangeError
from lq_shrinkage.lib.frames import (
    BiFrame,
    ForwardProblem,
    Frame,
    canonical_basis,
    mercedes_benz,
)
from lq_shrinkage.lib.prox import DecoupledProblem, oracle_vector
from lq_shrinkage.lib.shrinkage import diffusion1, rho_hs, soft
from lq_shrinkage.lib.variational import (
    VariationalProblem,
    constant_factor_audit_Jq,
    constant_factor_audit_Kq,
    default_probes,
    eval_Jq,
    eval_Kq,
    support_search,
    theorem1_minimizer,
    theorem2_minimizer,
)


def orthonormal_biframe(n: int, seed: int) -> BiFrame:
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    return BiFrame(Frame(q), Frame(q))


def identity_problem(h, weights, q, biframe=None) -> VariationalProblem:
    h = np.asarray(h, dtype=float)
    biframe = biframe or BiFrame(canonical_basis(h.size), canonical_basis(h.size))
    return VariationalProblem(ForwardProblem(np.eye(h.size), h), biframe, weights, q)


class TestEvalJq(unittest.TestCase):
    def test_zero_signal(self):
        p = identity_problem([3.0, -4.0], 1.0, 0.5)
        breakdown = eval_Jq(p, np.zeros(2))
        self.assertEqual((breakdown.residual_sq, breakdown.penalty, breakdown.total), (25.0, 0.0, 25.0))

    def test_signal_equal_to_data(self):
        h = np.array([1.0, -4.0, 9.0])
        breakdown = eval_Jq(identity_problem(h, [1.0, 2.0, 3.0], 0.5), h)
        self.assertEqual(breakdown.residual_sq, 0.0)
        self.assertAlmostEqual(breakdown.penalty, 1.0 + 4.0 + 9.0)
        self.assertEqual(breakdown.total, breakdown.penalty)

    def test_zero_power_counts(self):
        p = identity_problem(np.ones(5), 0.7, 0)
        self.assertAlmostEqual(eval_Jq(p, [1.0, 0.0, 2.0, 0.0, -1.0]).penalty, 3 * 0.7)

    def test_shape(self):
        with self.assertRaises(DimensionError):
            eval_Jq(identity_problem(np.ones(3), 1.0, 1), np.ones(4))
        with self.assertRaises(DimensionError):
            identity_problem(np.ones(3), [1.0, 2.0], 1)


class TestDecouplingEquivalence(unittest.TestCase):
    def test_orthonormal_identity_case(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            biframe = orthonormal_biframe(6, seed)
            h, weights = rng.standard_normal(6), rng.uniform(0.1, 2.0, 6)
            omega = rng.standard_normal(6)
            for q in (0.5, 1.0):
                p = identity_problem(h, weights, q, biframe)
                lhs = eval_Jq(p, biframe.synthesize(omega)).total
                rhs = DecoupledProblem(biframe.analyze(h), weights, q).objective(omega)
                self.assertAlmostEqual(lhs, rhs, delta=1e-12 * max(1.0, abs(rhs)))


class TestTheorem1(unittest.TestCase):
    def test_soft_with_half_alpha_is_exact(self):
        h = np.array([5.0, -0.5, 2.0, -3.0])
        weights = np.array([4.0, 4.0, 1.0, 2.0])
        g = theorem1_minimizer(identity_problem(h, weights, 1), rho_hs(1))
        assert_allclose(g, soft()(h, weights / 2), atol=1e-12)
        assert_allclose(g, oracle_vector(h, weights, 1), atol=1e-8)

    def test_zero_data(self):
        g = theorem1_minimizer(identity_problem(np.zeros(3), 1.0, 0.5), rho_hs(0.5))
        assert_array_equal(g, np.zeros(3))

    def test_q_one_rotated_basis_matches_oracle(self):
        biframe = orthonormal_biframe(5, seed=3)
        h = np.random.default_rng(3).standard_normal(5) * 3
        p = identity_problem(h, 1.5, 1, biframe)
        g = theorem1_minimizer(p, rho_hs(1))
        best = DecoupledProblem(biframe.analyze(h), 1.5, 1)
        optimum = best.objective(oracle_vector(best.v, best.weights, 1))
        self.assertAlmostEqual(eval_Jq(p, g).total, optimum, delta=1e-9 * max(1.0, optimum))

    def test_q_zero_is_globally_optimal(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            size = 12 if seed == 0 else 8
            h = rng.standard_normal(size) * 2
            weights = rng.uniform(0.5, 3.0, size)
            p = identity_problem(h, weights, 0)
            g = theorem1_minimizer(p, rho_hs(0), variant="direct")
            _, optimum = support_search(np.eye(size), h, weights)
            self.assertAlmostEqual(eval_Jq(p, g).total, optimum, delta=1e-9 * max(1.0, optimum))
            assert_array_equal(g != 0, np.abs(h) > np.sqrt(weights))

    def test_hypothesis_and_range(self):
        with self.assertRaises(HypothesisError):
            theorem1_minimizer(identity_problem(np.ones(2), 1.0, 0.5), diffusion1())
        basis = canonical_basis(2)
        p = VariationalProblem(
            ForwardProblem(np.diag([1.0, 0.0]), [1.0, 1.0]), BiFrame(basis, basis), 1.0, 1
        )
        with self.assertRaises(RangeError):
            theorem1_minimizer(p, rho_hs(1))
        with self.assertRaises(DomainError):
            theorem1_minimizer(identity_problem(np.ones(2), 1.0, 1), rho_hs(1), variant="other")

    def test_rank_deficient_operator_pulls_back(self):
        basis = canonical_basis(3)
        operator = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 2.0]])
        p = VariationalProblem(ForwardProblem(operator, [4.0, 2.0]), BiFrame(basis, basis), 0.5, 1)
        g = theorem1_minimizer(p, rho_hs(1))
        pulled = p.forward.pinv_apply(p.forward.apply(g))
        assert_allclose(g, pulled, atol=1e-12)  # g lies in the row space of L


class TestTheorem2(unittest.TestCase):
    def test_plain_variant_is_exact_for_orthonormal_q_one(self):
        biframe = orthonormal_biframe(4, seed=5)
        h = np.array([3.0, -1.0, 0.2, 2.5])
        result = theorem2_minimizer(biframe, h, 1.0, 1, rho_hs(1), variant="plain")
        v = biframe.analyze(h)
        optimum = eval_Kq(biframe, h, 1.0, 1, oracle_vector(v, 1.0, 1)).total
        self.assertAlmostEqual(result.objective.total, optimum, delta=1e-9 * max(1.0, optimum))

    def test_zero_data(self):
        result = theorem2_minimizer(BiFrame.canonical(mercedes_benz()), np.zeros(2), 1.0, 0.5, rho_hs(0.5))
        assert_array_equal(result.omega, np.zeros(3))
        self.assertEqual(result.objective.total, 0.0)

    def test_projected_lies_in_range_of_analysis(self):
        biframe = BiFrame.canonical(mercedes_benz())
        result = theorem2_minimizer(biframe, [1.0, -2.0], 0.3, 0.5, rho_hs(0.5))
        assert_allclose(biframe.cross_gram @ result.omega, result.omega, atol=1e-12)

    def test_mercedes_benz_audit(self):
        biframe = BiFrame.canonical(mercedes_benz())
        h = np.random.default_rng(11).standard_normal(2) * 2
        p = identity_problem(h, 0.5, 0.5, biframe)
        probes = default_probes(p, seed=11, domain="sequence")
        worst = constant_factor_audit_Kq(biframe, h, 0.5, 0.5, rho_hs(0.5), probes)
        self.assertTrue(math.isfinite(worst))
        self.assertGreater(worst, 0.0)
        self.assertEqual(worst, constant_factor_audit_Kq(biframe, h, 0.5, 0.5, rho_hs(0.5), probes, workers=2))


class TestAuditJq(unittest.TestCase):
    def test_endpoints_on_canonical_basis(self):
        rng = np.random.default_rng(8)
        for q in (0.0, 1.0):
            h = rng.standard_normal(6) * 2
            p = identity_problem(h, rng.uniform(0.5, 2.0, 6), q)
            probes = default_probes(p, seed=8)
            variant = "direct" if q == 0 else "pulled_back"
            worst = constant_factor_audit_Jq(p, rho_hs(q), probes, variant)
            self.assertAlmostEqual(worst, 1.0, delta=1e-9)

    def test_probe_set_containing_the_minimizer(self):
        biframe = BiFrame.canonical(mercedes_benz())
        p = identity_problem([1.0, 2.0], 0.4, 0.5, biframe)
        g = theorem1_minimizer(p, rho_hs(0.5))
        self.assertGreaterEqual(constant_factor_audit_Jq(p, rho_hs(0.5), [g]), 1.0 - 1e-12)

    def test_general_biframe_is_finite(self):
        biframe = BiFrame.canonical(mercedes_benz())
        p = identity_problem([0.3, -2.0], 0.4, 0.5, biframe)
        worst = constant_factor_audit_Jq(p, rho_hs(0.5), default_probes(p, seed=2))
        self.assertTrue(math.isfinite(worst))

    def test_empty_probe_set(self):
        p = identity_problem([1.0], 1.0, 1)
        self.assertEqual(constant_factor_audit_Jq(p, rho_hs(1), []), 0.0)


class TestSupportSearch(unittest.TestCase):
    def test_identity(self):
        coefficients, value = support_search(np.eye(3), [3.0, 1.0, -2.0], 4.0)
        assert_array_equal(coefficients != 0, [True, False, False])
        self.assertAlmostEqual(value, 4.0 + 1.0 + 4.0)

    def test_too_large(self):
        with self.assertRaises(DomainError):
            support_search(np.eye(21), np.ones(21), 1.0)


if __name__ == "__main__":
    unittest.main()
