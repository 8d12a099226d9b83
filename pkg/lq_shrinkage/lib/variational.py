"""Objectives J_q and K_q and their closed-form constant-factor minimizers.

    J_q(h, g) = |h - L g|^2 + sum_n alpha_n |<g, f~_n>|^q       (signal space)
    K_q(h, w) = |h - F w|^2 + sum_n alpha_n |w_n|^q             (sequence space)

Both minimizers apply a q-dependent shrinkage rule to the analysis
coefficients v = F~* L# h (respectively v = F~* h) and synthesize back.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from lq_shrinkage.errors import DimensionError, DomainError
from lq_shrinkage.lib.frames import BiFrame, ForwardProblem
from lq_shrinkage.lib.prox import (
    WeightedPenalty,
    check_hypothesis,
    objective_ratio,
    oracle_vector,
)
from lq_shrinkage.lib.shrinkage import ShrinkageRule, wrap_q
from lq_shrinkage.lib.workers import parallel_map

THEOREM1_VARIANTS = ("pulled_back", "direct")
THEOREM2_VARIANTS = ("projected", "plain")
SUPPORT_SEARCH_MAX = 20


@dataclass(frozen=True)
class ObjectiveBreakdown:
    residual_sq: float
    penalty: float
    total: float

    def to_dict(self) -> dict:
        return {"residual_sq": self.residual_sq, "penalty": self.penalty, "total": self.total}


class VariationalProblem:
    """min_g |h - L g|^2 + sum_n alpha_n |<g, f~_n>|^q with a <= alpha_n <= b."""

    def __init__(
        self,
        forward: ForwardProblem,
        biframe: BiFrame,
        weights,
        q: float,
        bounds: tuple[float, float] | None = None,
    ) -> None:
        if biframe.dim != forward.shape[1]:
            raise DimensionError(
                f"bi-frame lives on R^{biframe.dim} but L acts on R^{forward.shape[1]}"
            )
        if forward.data is None:
            raise DomainError("variational problem needs observed data h")
        weights = np.asarray(weights, dtype=float)
        if weights.ndim and weights.shape != (len(biframe),):
            raise DimensionError(f"{weights.size} weights for {len(biframe)} frame vectors")
        self.forward = forward
        self.biframe = biframe
        self.penalty = WeightedPenalty(np.broadcast_to(weights, (len(biframe),)), q, bounds)

    @property
    def q(self) -> float:
        return self.penalty.q

    @property
    def weights(self) -> np.ndarray:
        return self.penalty.weights

    @property
    def data(self) -> np.ndarray:
        return self.forward.data

    def with_weights(self, weights, q: float | None = None) -> "VariationalProblem":
        return VariationalProblem(
            self.forward, self.biframe, weights, self.q if q is None else q
        )


def eval_Jq(p: VariationalProblem, g) -> ObjectiveBreakdown:
    g = np.asarray(g, dtype=float)
    if g.shape != (p.forward.shape[1],):
        raise DimensionError(f"g of shape {g.shape} is not in R^{p.forward.shape[1]}")
    residual_sq = float(np.sum((p.data - p.forward.apply(g)) ** 2))
    penalty = p.penalty(p.biframe.analyze(g))
    return ObjectiveBreakdown(residual_sq, penalty, residual_sq + penalty)


def eval_Kq(biframe: BiFrame, h, weights, q: float, omega) -> ObjectiveBreakdown:
    omega = np.asarray(omega, dtype=float)
    h = np.asarray(h, dtype=float)
    if omega.shape != (len(biframe),):
        raise DimensionError(f"w of shape {omega.shape} does not index {len(biframe)} frame vectors")
    if h.shape != (biframe.dim,):
        raise DimensionError(f"h of shape {h.shape} is not in R^{biframe.dim}")
    penalty = WeightedPenalty(np.broadcast_to(np.asarray(weights, float), omega.shape), q)
    residual_sq = float(np.sum((h - biframe.synthesize(omega)) ** 2))
    value = penalty(omega)
    return ObjectiveBreakdown(residual_sq, value, residual_sq + value)


def theorem1_minimizer(
    p: VariationalProblem, rule: ShrinkageRule, variant: str = "pulled_back"
) -> np.ndarray:
    """g^ = L# L F w^ (pulled_back) or F w^ (direct), w^ the shrunk F~* L# h.

    Requires h in range(L).
    """
    if variant not in THEOREM1_VARIANTS:
        raise DomainError(f"unknown variant {variant}, expected one of {THEOREM1_VARIANTS}")
    check_hypothesis(rule, p.q)
    p.forward.check_in_range()
    v = p.biframe.analyze(p.forward.pinv_apply(p.data))
    omega = np.asarray(wrap_q(rule, p.q).evaluate(v, p.weights), dtype=float)
    g = p.biframe.synthesize(omega)
    if variant == "pulled_back":
        g = p.forward.pinv_apply(p.forward.apply(g))
    return g


@dataclass
class Theorem2Result:
    omega: np.ndarray
    objective: ObjectiveBreakdown


def theorem2_minimizer(
    biframe: BiFrame,
    h,
    weights,
    q: float,
    rule: ShrinkageRule,
    variant: str = "projected",
) -> Theorem2Result:
    """w^ = F~* F shrink(v) (projected) or shrink(v) (plain) with v = F~* h."""
    if variant not in THEOREM2_VARIANTS:
        raise DomainError(f"unknown variant {variant}, expected one of {THEOREM2_VARIANTS}")
    check_hypothesis(rule, q)
    h = np.asarray(h, dtype=float)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (len(biframe),))
    omega = np.asarray(wrap_q(rule, q).evaluate(biframe.analyze(h), weights), dtype=float)
    if variant == "projected":
        omega = biframe.cross_gram @ omega
    return Theorem2Result(omega, eval_Kq(biframe, h, weights, q, omega))


def _sparse_coefficients(rng, size: int) -> np.ndarray:
    coefficients = np.zeros(size)
    support = rng.choice(size, size=max(1, size // 4), replace=False)
    coefficients[support] = rng.standard_normal(support.size)
    return coefficients


def default_probes(
    p: VariationalProblem, seed: int = 0, count: int = 8, domain: str = "signal"
) -> list[np.ndarray]:
    """Oracle image of the decoupled surrogate, Gaussian, sparse-support and zero probes.

    `domain="signal"` gives vectors g for J_q, `domain="sequence"` gives
    coefficient sequences w for K_q (with v = F~* h).
    """
    rng = np.random.default_rng(seed)
    size = len(p.biframe)
    if domain == "signal":
        v = p.biframe.analyze(p.forward.pinv_apply(p.data))
        dim = p.forward.shape[1]
        scale = max(float(np.linalg.norm(v)), 1.0) / np.sqrt(size)
        probes = [p.biframe.synthesize(oracle_vector(v, p.weights, p.q))]
        probes += [scale * rng.standard_normal(dim) for _ in range(count)]
        probes += [scale * p.biframe.synthesize(_sparse_coefficients(rng, size)) for _ in range(count)]
        probes.append(np.zeros(dim))
    elif domain == "sequence":
        v = p.biframe.analyze(p.data)
        scale = max(float(np.linalg.norm(v)), 1.0) / np.sqrt(size)
        probes = [oracle_vector(v, p.weights, p.q)]
        probes += [scale * rng.standard_normal(size) for _ in range(count)]
        probes += [scale * _sparse_coefficients(rng, size) for _ in range(count)]
        probes.append(np.zeros(size))
    else:
        raise DomainError(f"unknown probe domain {domain}")
    return probes


def constant_factor_audit_Jq(
    p: VariationalProblem,
    rule: ShrinkageRule,
    probes,
    variant: str = "pulled_back",
    workers: int = 1,
) -> float:
    """max over probes of J_q(h, g^) / J_q(h, g), with 0/0 = 1."""
    best = eval_Jq(p, theorem1_minimizer(p, rule, variant)).total
    ratios = parallel_map(lambda g: objective_ratio(best, eval_Jq(p, g).total), probes, workers)
    worst = max([0.0, *ratios])
    logging.debug(f"J_q audit over {len(ratios)} probes: max ratio {worst:.12g}")
    return worst


def constant_factor_audit_Kq(
    biframe: BiFrame,
    h,
    weights,
    q: float,
    rule: ShrinkageRule,
    probes,
    variant: str = "projected",
    workers: int = 1,
) -> float:
    best = theorem2_minimizer(biframe, h, weights, q, rule, variant).objective.total
    ratios = parallel_map(
        lambda omega: objective_ratio(best, eval_Kq(biframe, h, weights, q, omega).total),
        probes,
        workers,
    )
    worst = max([0.0, *ratios])
    logging.debug(f"K_q audit over {len(ratios)} probes: max ratio {worst:.12g}")
    return worst


def support_search(matrix, h, weights) -> tuple[np.ndarray, float]:
    """Global minimizer of |h - A c|^2 + sum_n alpha_n 1{c_n != 0} over all supports.

    Least squares on each of the 2^N supports; exponential, meant for N <= 20.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    h = np.asarray(h, dtype=float)
    size = matrix.shape[1]
    if size > SUPPORT_SEARCH_MAX:
        raise DomainError(f"support search over 2^{size} supports is out of reach")
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (size,))
    best_coefficients, best_value = np.zeros(size), float(h @ h)
    for k in range(1, size + 1):
        for support in itertools.combinations(range(size), k):
            columns = list(support)
            solution = np.linalg.lstsq(matrix[:, columns], h, rcond=None)[0]
            coefficients = np.zeros(size)
            coefficients[columns] = solution
            value = float(np.sum((h - matrix @ coefficients) ** 2))
            value += float(weights @ (coefficients != 0))
            if value < best_value:
                best_coefficients, best_value = coefficients, value
    return best_coefficients, best_value
