"""Regularization parameter selection on the curve alpha -> (residual^2, penalty).

The corner of the curve is located by the largest discrete curvature, taken
from the circle through three consecutive points.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import aslinearoperator

from lq_shrinkage.config import (
    CURVATURE_TIE_RTOL,
    CURVE_SCALES,
    DEFAULT_ALPHA_GRID,
    DEFAULT_BETA_GRID,
    MATCH_ALPHA_FACTOR,
    MATCH_ALPHA_STEPS,
    MIN_CURVE_POINTS,
)
from lq_shrinkage.errors import CurvatureError, DomainError, LqShrinkageError, SweepError
from lq_shrinkage.lib.prox import WeightedPenalty
from lq_shrinkage.lib.shrinkage import ShrinkageRule, get_rule
from lq_shrinkage.lib.solver import (
    LandweberConfig,
    SolverTrace,
    landweber_shrink,
    maxent_nonzero_count,
    maxent_solve,
    nonzero_count,
)
from lq_shrinkage.lib.variational import VariationalProblem, theorem1_minimizer
from lq_shrinkage.lib.workers import parallel_map

SOLVERS = ("closed_form", "landweber")
ENTROPY_SHIFT = 1.0 / math.e


@dataclass
class RegCurve:
    """Points of the regularization curve, kept sorted by the parameter."""

    alphas: np.ndarray
    residual_sq: np.ndarray
    penalty: np.ndarray
    objective: np.ndarray
    nonzeros: np.ndarray
    q: float | None = None
    parameter: str = "alpha"
    solutions: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        order = np.argsort(np.asarray(self.alphas, dtype=float), kind="stable")
        self.alphas = np.asarray(self.alphas, dtype=float)[order]
        self.residual_sq = np.asarray(self.residual_sq, dtype=float)[order]
        self.penalty = np.asarray(self.penalty, dtype=float)[order]
        self.objective = np.asarray(self.objective, dtype=float)[order]
        self.nonzeros = np.asarray(self.nonzeros, dtype=int)[order]
        if self.solutions is not None:
            self.solutions = np.asarray(self.solutions, dtype=float)[order]
        if np.any(self.alphas <= 0):
            raise DomainError(f"{self.parameter} grid must be positive")

    def __len__(self) -> int:
        return self.alphas.size

    def residual_monotone(self) -> bool:
        slack = 1e-12 * np.maximum(self.residual_sq[:-1], 1.0)
        return bool(np.all(np.diff(self.residual_sq) >= -slack))


def parse_log_grid(spec) -> np.ndarray:
    """`LOW:HIGH:N` or a (low, high, n) tuple into a log-spaced grid."""
    try:
        if isinstance(spec, str):
            low, high, count = spec.split(":")
        else:
            low, high, count = spec
        low, high, count = float(low), float(high), int(count)
    except (ValueError, TypeError) as e:
        raise DomainError(f"malformed grid {spec!r}, expected LOW:HIGH:N") from e
    if not 0 < low <= high or count < 1:
        raise DomainError(f"invalid grid {spec!r}")
    return np.geomspace(low, high, count)


def _check_grid(alpha_grid) -> np.ndarray:
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    if alpha_grid.ndim != 1 or np.any(alpha_grid <= 0):
        raise DomainError("regularization grid must hold positive values")
    if np.any(np.diff(alpha_grid) <= 0):
        raise DomainError("regularization grid must be sorted increasingly")
    return alpha_grid


def _is_canonical(problem: VariationalProblem) -> bool:
    identity = np.eye(problem.biframe.dim)
    primal, dual = problem.biframe.primal.synthesis, problem.biframe.dual.synthesis
    if primal.shape != identity.shape:
        return False
    return np.array_equal(primal, identity) and np.array_equal(dual, identity)


def sweep_alpha(
    problem: VariationalProblem,
    q: float,
    rule: ShrinkageRule,
    alpha_grid=None,
    solver: str = "closed_form",
    workers: int = 1,
    landweber_options: dict | None = None,
    variant: str = "direct",
) -> RegCurve:
    """One minimizer per alpha; the problem weights act as a profile scaled by alpha.

    The curve penalty is the profile-weighted sum |<g, f~_n>|^q. The landweber
    solver penalizes every entry alike and needs a uniform profile.
    """
    if solver not in SOLVERS:
        raise DomainError(f"unknown solver {solver}, expected one of {SOLVERS}")
    alpha_grid = _check_grid(np.geomspace(*DEFAULT_ALPHA_GRID) if alpha_grid is None else alpha_grid)
    if solver == "landweber" and not _is_canonical(problem):
        raise DomainError("the landweber solver penalizes g itself and needs the canonical basis")
    profile = np.asarray(problem.weights, dtype=float)
    if solver == "landweber" and np.ptp(profile) > 0:
        raise DomainError(
            f"the landweber solver needs uniform weights, got [{profile.min():g}, {profile.max():g}]"
        )
    penalty = WeightedPenalty(profile, q)
    data = problem.data

    def solve(alpha):
        try:
            if solver == "closed_form":
                g = theorem1_minimizer(problem.with_weights(alpha * profile, q), rule, variant)
            else:
                cfg = LandweberConfig(
                    q=q, alpha=alpha * float(profile.flat[0]), rule=rule, **(landweber_options or {})
                )
                g = landweber_shrink(problem.forward.operator, data, cfg).iterate
        except LqShrinkageError as e:
            raise SweepError(alpha, e) from e
        coefficients = problem.biframe.analyze(g)
        residual_sq = float(np.sum((data - problem.forward.apply(g)) ** 2))
        value = penalty(coefficients)
        return g, residual_sq, value, residual_sq + alpha * value, nonzero_count(coefficients)

    results = parallel_map(solve, alpha_grid, workers)
    curve = RegCurve(
        alphas=alpha_grid,
        residual_sq=[r[1] for r in results],
        penalty=[r[2] for r in results],
        objective=[r[3] for r in results],
        nonzeros=[r[4] for r in results],
        q=float(q),
        solutions=np.array([r[0] for r in results]),
    )
    if not curve.residual_monotone():
        logging.warning(f"residual is not nondecreasing in alpha at q={q:g} (solver noise)")
    return curve


def match_residual_alpha(
    operator,
    f,
    target: float,
    cfg: LandweberConfig,
    factor: float = MATCH_ALPHA_FACTOR,
    steps: int = MATCH_ALPHA_STEPS,
) -> tuple[float, SolverTrace]:
    """Largest alpha = cfg.alpha * factor^k, k < steps, whose cold solve has residual <= target.

    Without a match the smallest alpha tried is returned with a warning.
    """
    if not 0 < factor < 1:
        raise DomainError(f"factor must lie in (0, 1), got {factor}")
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    for k in range(steps):
        trial = replace(cfg, alpha=cfg.alpha * factor**k)
        trace = landweber_shrink(operator, f, trial)
        logging.info(f"alpha={trial.alpha:g}: residual {trace.final.residual_norm:.6g}, target {target:.6g}")
        if trace.final.residual_norm <= target:
            return trial.alpha, trace
    logging.warning(f"no alpha down to {trial.alpha:g} reaches residual {target:.6g}")
    return trial.alpha, trace


def sweep_beta(operator, f, beta_grid=None, workers: int = 1) -> RegCurve:
    """Maximum-entropy curve beta -> (residual^2, sum g ln g + 1/e).

    The constant shift keeps the entropy penalty positive for log scales.
    """
    beta_grid = _check_grid(np.geomspace(*DEFAULT_BETA_GRID) if beta_grid is None else beta_grid)
    f = np.asarray(f, dtype=float)

    def solve(beta):
        try:
            result = maxent_solve(operator, f, beta)
        except LqShrinkageError as e:
            raise SweepError(beta, e) from e
        g = result.solution
        residual = f - aslinearoperator(operator).matvec(g)
        value = float(np.sum(g * np.log(g) + ENTROPY_SHIFT))
        residual_sq = float(residual @ residual)
        return g, residual_sq, value, residual_sq + beta * value, maxent_nonzero_count(g)

    results = parallel_map(solve, beta_grid, workers)
    return RegCurve(
        alphas=beta_grid,
        residual_sq=[r[1] for r in results],
        penalty=[r[2] for r in results],
        objective=[r[3] for r in results],
        nonzeros=[r[4] for r in results],
        parameter="beta",
        solutions=np.array([r[0] for r in results]),
    )


def _curve_points(curve: RegCurve, scale: str) -> np.ndarray:
    if scale not in CURVE_SCALES:
        raise DomainError(f"unknown scale {scale}, expected one of {CURVE_SCALES}")
    points = np.column_stack([curve.residual_sq, curve.penalty])
    if scale == "loglog":
        with np.errstate(divide="ignore", invalid="ignore"):
            points = np.log10(points)
    return points


def curvature(curve: RegCurve, scale: str = "loglog") -> np.ndarray:
    """Three-point circumscribed-circle curvature, nan at endpoints and dropped points.

    Points that are not finite in the chosen scale are skipped; neighbours
    are taken among the remaining ones.
    """
    points = _curve_points(curve, scale)
    kappa = np.full(len(curve), np.nan)
    valid = np.flatnonzero(np.all(np.isfinite(points), axis=1))
    for previous, current, following in zip(valid, valid[1:], valid[2:]):
        a, b, c = points[previous], points[current], points[following]
        ab, bc, ca = b - a, c - b, a - c
        lengths = np.linalg.norm(ab) * np.linalg.norm(bc) * np.linalg.norm(ca)
        if lengths == 0:
            continue
        cross = ab[0] * bc[1] - ab[1] * bc[0]
        kappa[current] = 2.0 * abs(cross) / lengths
    return kappa


def max_curvature_alpha(curve: RegCurve, scale: str = "loglog") -> float:
    """Grid parameter of maximal curvature; ties go to the smallest parameter."""
    if len(curve) < MIN_CURVE_POINTS:
        raise CurvatureError(
            f"no curvature maximum: {len(curve)} points, at least {MIN_CURVE_POINTS} needed"
        )
    kappa = curvature(curve, scale)
    finite = np.isfinite(kappa)
    if not finite.any():
        raise CurvatureError("no curvature maximum: no interior point with finite curvature")
    points = _curve_points(curve, scale)
    usable = points[np.all(np.isfinite(points), axis=1)]
    extent = float(np.max(np.ptp(usable, axis=0)))
    best = float(np.max(kappa[finite]))
    if best * extent <= CURVATURE_TIE_RTOL:
        raise CurvatureError("no curvature maximum: the curve is collinear")
    candidates = np.flatnonzero(finite & (kappa >= best * (1.0 - CURVATURE_TIE_RTOL)))
    chosen = float(curve.alphas[candidates[0]])
    logging.info(f"maximal curvature {best:.6g} at {curve.parameter} = {chosen:.6g} ({scale})")
    return chosen


def select_beta(operator, f, beta_grid=None, scale: str = "loglog", workers: int = 1) -> float:
    return max_curvature_alpha(sweep_beta(operator, f, beta_grid, workers), scale)


@dataclass(frozen=True)
class QSweepRow:
    q: float
    alpha: float
    residual_sq: float
    penalty: float
    nonzeros: int

    header = ("q", "alpha", "residual_sq", "penalty", "nonzeros")

    def as_row(self) -> tuple:
        return (self.q, self.alpha, self.residual_sq, self.penalty, self.nonzeros)


def q_sweep(
    problem: VariationalProblem,
    q_grid,
    alpha_grid=None,
    rule_name: str = "hs",
    solver: str = "closed_form",
    scale: str = "loglog",
    workers: int = 1,
    landweber_options: dict | None = None,
) -> list[QSweepRow]:
    """Per q an L-curve run; the row records the corner and its sparsity."""
    rows = []
    for q in q_grid:
        q = float(q)
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"q grid must lie in [0, 1], got {q}")
        curve = sweep_alpha(
            problem,
            q,
            get_rule(rule_name, q=q),
            alpha_grid,
            solver,
            workers,
            landweber_options,
        )
        alpha = max_curvature_alpha(curve, scale)
        i = int(np.flatnonzero(curve.alphas == alpha)[0])
        row = QSweepRow(
            q, alpha, float(curve.residual_sq[i]), float(curve.penalty[i]), int(curve.nonzeros[i])
        )
        rows.append(row)
    ordered = sorted(rows, key=lambda row: row.q)
    if any(a.nonzeros > b.nonzeros for a, b in zip(ordered, ordered[1:])):
        logging.warning("nonzero count is not nondecreasing in q at the selected alphas")
    return rows
