"""Shrinked Landweber iteration and the maximum-entropy baseline.

The iteration minimizes |f - T g|^2 + alpha sum_n |g_n|^q by

    g^(j+1) = S(g^j + T* (f - T g^j)),   S(x)_n = rule(x_n, alpha |x_n|^(q-1))

on an operator scaled to spectral norm below one.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, nnls
from scipy.sparse.linalg import LinearOperator, aslinearoperator, eigsh

from lq_shrinkage.config import (
    LANDWEBER_MAX_ITERS,
    LANDWEBER_REL_TOL,
    LANDWEBER_TARGET_NORM,
    MAXENT_FLOOR,
    MAXENT_MAX_ITERS,
    MAXENT_NONZERO_RTOL,
    MAXENT_TOL,
    MONOTONE_TOL,
    PEAK_COUNT,
    POLISH_FTOL,
    POLISH_GTOL,
    POLISH_MAX_ITERS,
    REFINE_MAX_ROUNDS,
    REFINE_RTOL,
    SNAPSHOT_EVERY,
    SPECTRAL_NORM_TOL,
)
from lq_shrinkage.errors import DimensionError, DivergenceError, DomainError
from lq_shrinkage.lib.matrixio import write_csv
from lq_shrinkage.lib.prox import lq_terms, oracle_scalar, zero_threshold
from lq_shrinkage.lib.shrinkage import ShrinkageRule, rho_hs, wrap_q


@dataclass
class LandweberConfig:
    q: float
    alpha: float
    rule: ShrinkageRule | None = None
    max_iters: int = LANDWEBER_MAX_ITERS
    rel_tol: float = LANDWEBER_REL_TOL
    nonneg: bool = False
    normalize_operator: bool = True
    snapshot_every: int = SNAPSHOT_EVERY
    refine: bool = True

    def __post_init__(self):
        self.q, self.alpha = float(self.q), float(self.alpha)
        if not 0.0 <= self.q <= 1.0:
            raise DomainError(f"landweber q must lie in [0, 1], got {self.q}")
        if self.alpha < 0:
            raise DomainError(f"alpha must be nonnegative, got {self.alpha}")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol <= 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.rule is None:
            self.rule = rho_hs(self.q)

    def objective(self, residual_norm: float, g: np.ndarray) -> tuple[float, float]:
        penalty = self.alpha * float(np.sum(lq_terms(g, self.q)))
        return penalty, residual_norm**2 + penalty


@dataclass
class TraceRecord:
    iteration: int
    residual_norm: float
    penalty: float
    objective: float
    nonzero_count: int
    snapshot: np.ndarray | None = field(default=None, repr=False)

    header = ("iteration", "residual_norm", "penalty", "objective", "nonzero_count")

    def as_row(self) -> tuple:
        return (self.iteration, self.residual_norm, self.penalty, self.objective, self.nonzero_count)


@dataclass
class SolverTrace:
    """Per-iteration records, iteration 0 being the starting point."""

    records: list[TraceRecord]
    iterate: np.ndarray
    iterations_used: int
    stop_reason: str
    scale: float = 1.0
    refined: TraceRecord | None = None
    refine_moves: int = 0

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def final(self) -> TraceRecord:
        """The refined point when refinement moved, else the last iteration."""
        return self.refined if self.refined is not None else self.records[-1]

    def to_csv(self, path):
        return write_csv(path, TraceRecord.header, (r.as_row() for r in self.records))


def spectral_norm(operator) -> float:
    """|T|_2, exact for dense matrices, Lanczos on T* T for matrix-free ones."""
    if not isinstance(operator, LinearOperator):
        return float(np.linalg.norm(np.atleast_2d(np.asarray(operator, dtype=float)), 2))
    linear = aslinearoperator(operator)
    if min(linear.shape) < 2:
        dense = linear.matmat(np.eye(linear.shape[1]))
        return float(np.linalg.norm(dense, 2))
    gram = linear.H * linear
    eigenvalue = eigsh(gram, k=1, which="LM", tol=SPECTRAL_NORM_TOL, return_eigenvectors=False)
    return float(math.sqrt(max(float(eigenvalue[0]), 0.0)))


def dense_matrix(operator) -> np.ndarray:
    if isinstance(operator, LinearOperator):
        return operator.matmat(np.eye(operator.shape[1]))
    return np.atleast_2d(np.asarray(operator, dtype=float))


class SupportRefiner:
    """Local search over supports, started from the last iterate.

    Every visited support is polished to its exact minimizer: least squares
    (nonnegative least squares in nonneg mode) for q = 0, bound-constrained
    L-BFGS on the magnitudes with fixed signs otherwise. A local minimizer for
    q in (0, 1) has |g_n|^(2-q) >= alpha q (1-q) / (2 |T_n|^2), which bounds
    the magnitudes from below. Moves drop an entry, shift it to a free
    neighbouring column or add the single best entry for the current residual;
    the best improving move is taken until none is left. Drops are tried from
    the smallest entry up.
    """

    def __init__(self, matrix: np.ndarray, f: np.ndarray, cfg: LandweberConfig):
        self.matrix, self.f, self.cfg = matrix, f, cfg
        self.column_sq = np.einsum("ij,ij->j", matrix, matrix)
        if 0 < cfg.q < 1:
            with np.errstate(divide="ignore"):
                scale = cfg.alpha * cfg.q * (1.0 - cfg.q) / (2.0 * self.column_sq)
            self.lower = scale ** (1.0 / (2.0 - cfg.q))
        else:
            self.lower = np.zeros(matrix.shape[1])

    def value(self, g: np.ndarray) -> float:
        residual = self.f - self.matrix @ g
        return self.cfg.objective(float(np.linalg.norm(residual)), g)[1]

    def polish(self, support, start: np.ndarray) -> np.ndarray:
        support = np.array(sorted(j for j in support if self.column_sq[j] > 0), dtype=int)
        g = np.zeros(self.matrix.shape[1])
        if support.size == 0:
            return g
        cfg, columns = self.cfg, self.matrix[:, support]
        if cfg.q == 0:
            if cfg.nonneg:
                g[support] = nnls(columns, self.f)[0]
            else:
                g[support] = np.linalg.lstsq(columns, self.f, rcond=None)[0]
            return g
        signs = np.ones(support.size) if cfg.nonneg else np.where(start[support] < 0, -1.0, 1.0)
        lower = self.lower[support]

        def fun(u):
            residual = columns @ (signs * u) - self.f
            value = residual @ residual + cfg.alpha * np.sum(u**cfg.q)
            gradient = 2.0 * signs * (columns.T @ residual) + cfg.alpha * cfg.q * u ** (cfg.q - 1.0)
            return float(value), gradient

        result = minimize(
            fun,
            np.maximum(np.abs(start[support]), lower),
            jac=True,
            method="L-BFGS-B",
            bounds=[(low, None) for low in lower],
            options={"maxiter": POLISH_MAX_ITERS, "ftol": POLISH_FTOL, "gtol": POLISH_GTOL},
        )
        g[support] = signs * result.x
        return g

    def best_addition(self, g: np.ndarray, support: set) -> tuple[int, np.ndarray] | None:
        """The new entry that lowers the objective most, with g extended by it."""
        cfg = self.cfg
        correlations = self.matrix.T @ (self.f - self.matrix @ g)
        best, best_gain = None, 0.0
        for j in np.flatnonzero(self.column_sq > 0):
            if j in support:
                continue
            v = correlations[j] / self.column_sq[j]
            if v == 0 or (cfg.nonneg and v < 0):
                continue
            weight = cfg.alpha / self.column_sq[j]
            if cfg.q == 1:
                t = math.copysign(max(abs(v) - weight / 2.0, 0.0), v)
            elif abs(v) <= zero_threshold(weight, cfg.q):
                continue
            else:
                t = oracle_scalar(v, weight, cfg.q)
            if t == 0:
                continue
            gain = self.column_sq[j] * ((v - t) ** 2 + weight * float(lq_terms(t, cfg.q)) - v**2)
            if gain < best_gain:
                best, best_gain = (j, t), gain
        if best is None:
            return None
        start = g.copy()
        start[best[0]] = best[1]
        return int(best[0]), start

    def candidates(self, g: np.ndarray):
        support = set(int(j) for j in np.flatnonzero(g))
        yield self.polish(support, g)
        for j in sorted(support, key=lambda j: (abs(g[j]), j)):
            rest = support - {j}
            yield self.polish(rest, g)
            for k in (j - 1, j + 1):
                if 0 <= k < g.size and k not in support:
                    moved = g.copy()
                    moved[k], moved[j] = g[j], 0.0
                    yield self.polish(rest | {k}, moved)
        added = self.best_addition(g, support)
        if added is not None:
            j, start = added
            yield self.polish(support | {j}, start)

    def run(self, g: np.ndarray) -> tuple[np.ndarray, int]:
        """Improving moves until none is left; ties go to the earlier candidate."""
        current, value = g.copy(), self.value(g)
        for moves in range(REFINE_MAX_ROUNDS):
            margin = REFINE_RTOL * max(abs(value), 1.0)
            best, best_value = None, value
            for candidate in self.candidates(current):
                candidate_value = self.value(candidate)
                if candidate_value < best_value - margin:
                    best, best_value = candidate, candidate_value
            if best is None:
                return current, moves
            current, value = best, best_value
        logging.warning(f"support refinement stopped after {REFINE_MAX_ROUNDS} moves")
        return current, REFINE_MAX_ROUNDS


def landweber_shrink(operator, f, cfg: LandweberConfig, g0=None) -> SolverTrace:
    """Shrinked Landweber iteration started at g0 (default 0).

    With `normalize_operator` the iteration runs on T / tau and f / tau with
    alpha / tau^2, tau = |T| / 0.99; iterates are unchanged by the scaling and
    every recorded objective refers to the unscaled functional. In nonneg
    mode negative arguments of the shrinkage are set to zero. With `refine`
    and alpha > 0 the last iterate goes through a support refinement, whose
    result becomes `iterate` and `final`; the records keep the iteration.
    """
    linear = aslinearoperator(operator)
    f = np.asarray(f, dtype=float)
    rows, cols = linear.shape
    if f.shape != (rows,):
        raise DimensionError(f"data of shape {f.shape} does not match operator {linear.shape}")
    norm = spectral_norm(operator)
    if cfg.normalize_operator and norm > 0:
        tau = norm / LANDWEBER_TARGET_NORM
    else:
        tau = 1.0
        if norm > 1:
            logging.warning(f"|T| = {norm:.6g} > 1 without normalization, iteration may diverge")
    alpha_scaled = cfg.alpha / tau**2
    shrink = wrap_q(cfg.rule, cfg.q)
    g = np.zeros(cols) if g0 is None else np.array(g0, dtype=float)
    if g.shape != (cols,):
        raise DimensionError(f"start vector of shape {g.shape} does not match operator {linear.shape}")

    def record(iteration, g, residual):
        residual_norm = float(np.linalg.norm(residual))
        penalty, objective = cfg.objective(residual_norm, g)
        snapshot = g.copy() if iteration % cfg.snapshot_every == 0 else None
        return TraceRecord(iteration, residual_norm, penalty, objective, nonzero_count(g), snapshot)

    residual = f - linear.matvec(g)
    records = [record(0, g, residual)]
    stop_reason = "max_iters"
    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):
        argument = g + linear.rmatvec(residual) / tau**2
        updated = shrink.evaluate(argument, alpha_scaled)
        if cfg.nonneg:
            updated = np.where(argument < 0, 0.0, updated)
        if not np.all(np.isfinite(updated)):
            raise DivergenceError(iteration)
        change = float(np.linalg.norm(updated - g))
        threshold = cfg.rel_tol * max(float(np.linalg.norm(g)), 1.0)
        g = updated
        residual = f - linear.matvec(g)
        records.append(record(iteration, g, residual))
        if not math.isfinite(records[-1].objective):
            raise DivergenceError(iteration)
        if iteration % cfg.snapshot_every == 0:
            logging.debug(f"iteration {iteration}: objective {records[-1].objective:.12g}")
        if change <= threshold:
            stop_reason = "converged"
            break
    if stop_reason == "max_iters":
        logging.warning(f"landweber reached max_iters = {cfg.max_iters} before converging")
    else:
        logging.info(f"landweber converged after {iteration} iterations")
    records[-1].snapshot = g.copy()
    refined, moves = None, 0
    if cfg.refine and cfg.alpha > 0:
        polished, moves = SupportRefiner(dense_matrix(operator), f, cfg).run(g)
        if moves:
            refined = record(iteration, polished, f - linear.matvec(polished))
            refined.snapshot = polished.copy()
            logging.info(
                f"support refinement: {moves} moves, objective "
                f"{records[-1].objective:.12g} -> {refined.objective:.12g}"
            )
            g = polished
    return SolverTrace(records, g, iteration, stop_reason, tau, refined, moves)


@dataclass
class MaxEntResult:
    solution: np.ndarray
    objective: float
    iterations: int
    converged: bool


def maxent_objective(operator, f, beta: float, g) -> float:
    """|f - T g|^2 + beta sum_n g_n ln g_n"""
    g = np.asarray(g, dtype=float)
    residual = np.asarray(f, dtype=float) - aslinearoperator(operator).matvec(g)
    return float(residual @ residual + beta * np.sum(g * np.log(g)))


def maxent_solve(
    operator,
    f,
    beta: float,
    iters: int = MAXENT_MAX_ITERS,
    tol: float = MAXENT_TOL,
    floor: float = MAXENT_FLOOR,
) -> MaxEntResult:
    """Maximum-entropy regularization by bound-constrained L-BFGS on g >= floor."""
    if beta <= 0:
        raise DomainError(f"beta must be positive, got {beta}")
    linear = aslinearoperator(operator)
    f = np.asarray(f, dtype=float)
    if f.shape != (linear.shape[0],):
        raise DimensionError(f"data of shape {f.shape} does not match operator {linear.shape}")

    def fun(g):
        residual = linear.matvec(g) - f
        value = residual @ residual + beta * np.sum(g * np.log(g))
        gradient = 2.0 * linear.rmatvec(residual) + beta * (np.log(g) + 1.0)
        return float(value), gradient

    start = np.ones(linear.shape[1])
    result = minimize(
        fun,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=[(floor, None)] * linear.shape[1],
        options={"maxiter": iters, "maxfun": 10 * iters, "ftol": tol, "gtol": tol},
    )
    if not np.all(np.isfinite(result.x)) or not math.isfinite(result.fun):
        raise DivergenceError(int(result.nit), method="maxent")
    solution = np.maximum(result.x, floor)
    logging.info(f"maxent beta={beta:g}: {result.nit} iterations, {result.message}")
    return MaxEntResult(solution, float(result.fun), int(result.nit), bool(result.success))


def objective_monotone_check(trace: SolverTrace, tol: float = MONOTONE_TOL) -> bool:
    """True iff the objective never increases after the first iteration."""
    objectives = trace.objectives[1:]
    if objectives.size < 2:
        return True
    increase = np.diff(objectives) > tol * np.maximum(np.abs(objectives[:-1]), 1.0)
    if increase.any():
        first = int(np.argmax(increase)) + 1
        logging.warning(f"objective increased at iteration {trace.records[first + 1].iteration}")
        return False
    return True


def nonzero_count(g, rtol: float | None = None) -> int:
    """Exact nonzeros, or entries above rtol * max|g| when rtol is given."""
    magnitude = np.abs(np.asarray(g, dtype=float))
    if rtol is None:
        return int(np.count_nonzero(magnitude))
    if magnitude.size == 0 or magnitude.max() == 0:
        return 0
    return int(np.count_nonzero(magnitude > rtol * magnitude.max()))


def maxent_nonzero_count(g) -> int:
    return nonzero_count(g, MAXENT_NONZERO_RTOL)


def peak_positions(g, count: int = PEAK_COUNT) -> list[int]:
    """Indices of the `count` heaviest local maxima, sorted by index.

    Each local maximum owns the descending slopes on both sides; peaks are
    ranked by the mass |g| collected over that basin.
    """
    magnitude = np.abs(np.asarray(g, dtype=float))
    size = magnitude.size
    peaks = []
    for i in range(size):
        left = magnitude[i - 1] if i > 0 else -np.inf
        right = magnitude[i + 1] if i < size - 1 else -np.inf
        if magnitude[i] > 0 and magnitude[i] > left and magnitude[i] >= right:
            low = i
            while low > 0 and 0 < magnitude[low - 1] <= magnitude[low]:
                low -= 1
            high = i
            while high < size - 1 and 0 < magnitude[high + 1] <= magnitude[high]:
                high += 1
            peaks.append((float(magnitude[low : high + 1].sum()), i))
    peaks.sort(key=lambda item: (-item[0], item[1]))
    return sorted(i for _, i in peaks[:count])
