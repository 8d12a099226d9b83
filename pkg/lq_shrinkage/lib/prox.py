"""The decoupled problem I_q(v, w) = |v - w|^2 + sum_n alpha_n |w_n|^q.

Closed-form constant-factor minimizers come from q-dependent shrinkage; the
brute-force scalar oracle is independent of every rule and serves as ground
truth for the audits.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.optimize import minimize_scalar

from lq_shrinkage.config import ORACLE_GRID_POINTS, ORACLE_XATOL
from lq_shrinkage.errors import DimensionError, DomainError, HypothesisError
from lq_shrinkage.lib.shrinkage import ShrinkageRule, cq, wrap_q
from lq_shrinkage.lib.workers import parallel_map


def lq_terms(omega, q: float) -> np.ndarray:
    """|w_n|^q elementwise, with 0^0 = 0 so that q = 0 counts nonzeros."""
    omega = np.asarray(omega, dtype=float)
    if q == 0:
        return (omega != 0).astype(float)
    return np.abs(omega) ** q


def check_q(q: float, high: float = 2.0) -> float:
    q = float(q)
    if not 0.0 <= q <= high:
        raise DomainError(f"q must lie in [0, {high:g}], got {q}")
    return q


@dataclass(frozen=True)
class WeightedPenalty:
    """sum_n alpha_n |w_n|^q, optionally with validated bounds a <= alpha_n <= b."""

    weights: np.ndarray
    q: float
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "q", check_q(self.q))
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DomainError("weights must be finite and nonnegative")
        if self.bounds is not None:
            low, high = self.bounds
            if not 0 <= low <= high:
                raise DomainError(f"invalid weight bounds {self.bounds}")
            if np.any(weights < low) or np.any(weights > high):
                raise DomainError(
                    f"weights violate {low:g} <= alpha_n <= {high:g}: "
                    f"range is [{weights.min():g}, {weights.max():g}]"
                )

    def __len__(self) -> int:
        return self.weights.size

    def terms(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if omega.shape != self.weights.shape:
            raise DimensionError(
                f"coefficients of shape {omega.shape} do not match weights {self.weights.shape}"
            )
        return self.weights * lq_terms(omega, self.q)

    def __call__(self, omega) -> float:
        return float(np.sum(self.terms(omega)))


@dataclass(frozen=True)
class DecoupledProblem:
    v: np.ndarray
    weights: np.ndarray
    q: float

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        raw = np.asarray(self.weights, dtype=float)
        if raw.ndim and raw.shape != v.shape:
            raise DimensionError(f"v has length {v.size} but {raw.size} weights were given")
        weights = np.broadcast_to(raw, v.shape).copy()
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "q", check_q(self.q))

    @property
    def penalty(self) -> WeightedPenalty:
        return WeightedPenalty(self.weights, self.q)

    def objective(self, omega) -> float:
        omega = np.asarray(omega, dtype=float)
        return float(np.sum((self.v - omega) ** 2)) + self.penalty(omega)


@dataclass
class ProxResult:
    omega: np.ndarray
    objective: float
    ratio_to_oracle: float | None = field(default=None)


def check_hypothesis(rule: ShrinkageRule, q: float) -> None:
    if q < rule.min_q:
        raise HypothesisError(rule.name, q, rule.min_q)


def shrink_minimize(
    p: DecoupledProblem, rule: ShrinkageRule, with_oracle: bool = False
) -> ProxResult:
    """Componentwise w_n = rule(v_n, alpha_n |v_n|^(q-1)).

    With `with_oracle` the result also carries its objective ratio to the
    brute-force minimizer.
    """
    check_hypothesis(rule, p.q)
    omega = np.asarray(wrap_q(rule, p.q).evaluate(p.v, p.weights), dtype=float)
    result = ProxResult(omega=omega, objective=p.objective(omega))
    if with_oracle:
        best = p.objective(oracle_vector(p.v, p.weights, p.q))
        result.ratio_to_oracle = objective_ratio(result.objective, best)
    return result


def scalar_objective(omega, v: float, alpha: float, q: float):
    omega = np.asarray(omega, dtype=float)
    return (v - omega) ** 2 + alpha * lq_terms(omega, q)


def oracle_scalar(v: float, alpha: float, q: float) -> float:
    """Global minimizer of w -> (v - w)^2 + alpha |w|^q by exhaustive search.

    A minimizer has sign in {0, sign(v)} and |w| <= |v|: outside that interval
    moving w toward v lowers the quadratic term without raising |w|^q. The
    search runs on |w| in [0, |v|] with a dense grid, a bounded Brent
    refinement inside the best grid cell and an explicit comparison against
    w = 0. Ties go to the nonzero minimizer.
    """
    v, alpha, q = float(v), float(alpha), check_q(q)
    if alpha < 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha}")
    if v == 0 or alpha == 0:
        return v
    magnitude, sign = abs(v), np.sign(v)

    def objective(w):
        return scalar_objective(w, magnitude, alpha, q)

    grid = np.linspace(0.0, magnitude, ORACLE_GRID_POINTS)
    values = objective(grid)
    # grid[0] = 0 is handled separately, the penalty jumps there for q < 1
    best = int(np.argmin(values[1:])) + 1
    low, high = grid[best - 1], grid[min(best + 1, grid.size - 1)]
    refined = minimize_scalar(
        lambda w: float(objective(w)),
        bounds=(low, high),
        method="bounded",
        options={"xatol": ORACLE_XATOL},
    )
    candidates = [grid[best], magnitude]
    if refined.x > 0:
        candidates.append(float(refined.x))
    omega = min(candidates, key=lambda w: (float(objective(w)), -w))
    if float(objective(omega)) <= float(objective(0.0)):
        return float(sign * omega)
    return 0.0


def oracle_vector(v, weights, q: float, workers: int = 1) -> np.ndarray:
    """Componentwise oracle; exact for the separable vector problem."""
    p = DecoupledProblem(v, weights, q)
    values = parallel_map(
        lambda item: oracle_scalar(item[0], item[1], p.q),
        zip(p.v, p.weights),
        workers,
    )
    return np.asarray(values, dtype=float).reshape(p.v.shape)


def zero_threshold(alpha: float, q: float) -> float:
    """(c_q alpha)^(1/(2-q)): below it the exact minimizer is 0."""
    if not 0.0 <= q < 1.0:
        raise DomainError(f"zero threshold is defined for q in [0, 1), got {q}")
    if alpha < 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha}")
    return float((cq(q) * alpha) ** (1.0 / (2.0 - q)))


@dataclass(frozen=True)
class AuditRow:
    v: float
    alpha: float
    shrink_objective: float
    oracle_objective: float
    ratio: float

    header = ("v", "alpha", "shrink_obj", "oracle_obj", "ratio")

    def as_row(self) -> tuple:
        return (self.v, self.alpha, self.shrink_objective, self.oracle_objective, self.ratio)


def objective_ratio(numerator: float, denominator: float) -> float:
    if denominator == 0:
        return 1.0 if numerator == 0 else np.inf
    return numerator / denominator


def audit_rows(
    q: float, rule: ShrinkageRule, sample: Iterable[tuple[float, float]], workers: int = 1
) -> list[AuditRow]:
    q = check_q(q)
    check_hypothesis(rule, q)
    wrapped = wrap_q(rule, q)

    def audit(point):
        v, alpha = float(point[0]), float(point[1])
        shrink = float(scalar_objective(wrapped.apply(v, alpha), v, alpha, q))
        oracle = float(scalar_objective(oracle_scalar(v, alpha, q), v, alpha, q))
        return AuditRow(v, alpha, shrink, oracle, objective_ratio(shrink, oracle))

    rows = parallel_map(audit, sample, workers)
    if not rows:
        raise DomainError("audit sample is empty")
    return rows


def constant_factor_audit(
    q: float, rule: ShrinkageRule, sample: Iterable[tuple[float, float]], workers: int = 1
) -> float:
    """max over the sample of I_q(v, shrink) / I_q(v, oracle), 0/0 = 1."""
    rows = audit_rows(q, rule, sample, workers)
    worst = max(row.ratio for row in rows)
    logging.debug(f"{rule.name} at q={q:g}: max ratio {worst:.12g} over {len(rows)} points")
    return worst


def log_grid_sample(
    v_range: tuple[float, float, int] = (1e-3, 1e3, 41),
    alpha_range: tuple[float, float, int] = (1e-2, 1e2, 21),
    signed: bool = True,
) -> list[tuple[float, float]]:
    """Cartesian product of log-spaced |v| and alpha, both signs of v if `signed`."""
    magnitudes = np.geomspace(*v_range)
    values = np.concatenate([-magnitudes[::-1], magnitudes]) if signed else magnitudes
    alphas = np.geomspace(*alpha_range)
    return [(float(v), float(a)) for v in values for a in alphas]


def log_uniform_sample(
    size: int,
    seed: int,
    v_range: tuple[float, float] = (1e-3, 1e3),
    alpha_range: tuple[float, float] = (1e-2, 1e2),
) -> list[tuple[float, float]]:
    """Random (v, alpha) pairs, log-uniform in |v| and alpha with a random sign."""
    rng = np.random.default_rng(seed)
    magnitudes = 10 ** rng.uniform(*np.log10(v_range), size)
    signs = rng.choice([-1.0, 1.0], size)
    alphas = 10 ** rng.uniform(*np.log10(alpha_range), size)
    return [(float(s * m), float(a)) for s, m, a in zip(signs, magnitudes, alphas)]


def parse_grid_spec(spec: str) -> list[tuple[float, float]]:
    """`VMIN:VMAX:NV,AMIN:AMAX:NA` into a signed log grid sample."""
    try:
        v_part, alpha_part = spec.split(",")
        v_range = tuple(float(i) for i in v_part.split(":"))
        alpha_range = tuple(float(i) for i in alpha_part.split(":"))
        v_range = (v_range[0], v_range[1], int(v_range[2]))
        alpha_range = (alpha_range[0], alpha_range[1], int(alpha_range[2]))
    except (ValueError, IndexError) as e:
        raise DomainError(f"malformed grid spec {spec!r}, expected VMIN:VMAX:NV,AMIN:AMAX:NA") from e
    if min(v_range[0], v_range[1], alpha_range[0], alpha_range[1]) <= 0:
        raise DomainError(f"grid bounds must be positive: {spec!r}")
    if v_range[2] < 1 or alpha_range[2] < 1:
        raise DomainError(f"grid sizes must be positive: {spec!r}")
    return log_grid_sample(v_range, alpha_range)
