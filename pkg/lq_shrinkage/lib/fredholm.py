"""Discretized Fredholm equations of the first kind, f(y) = int g(x) K(x, y) dx.

The sedimentation kernel is replaced by analytic surrogates; the matrix
entries are K(x_j, y_i) times trapezoid weights on the x grid.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from lq_shrinkage.config import (
    BENCHMARK_KERNEL,
    BENCHMARK_KERNEL_PARAMS,
    BENCHMARK_NOISE_RATIO,
    BENCHMARK_POINTS,
    BENCHMARK_SEED,
    BENCHMARK_SPIKES,
    KERNEL_KINDS,
    PROBLEM_FORMAT,
    PROBLEM_VERSION,
    QUADRATURE,
)
from lq_shrinkage.errors import DimensionError, DomainError, ProblemFileError
from lq_shrinkage.lib.frames import BiFrame, ForwardProblem, canonical_basis
from lq_shrinkage.lib.matrixio import read_json, write_json
from lq_shrinkage.lib.variational import VariationalProblem

KERNEL_PARAMS = {"gaussian_blur": {"s"}, "sigmoid_front": {"t", "w"}}


def trapezoid_weights(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise DomainError("quadrature needs at least two grid points")
    steps = np.diff(grid)
    weights = np.zeros(grid.size)
    weights[:-1] += steps / 2
    weights[1:] += steps / 2
    return weights


def _check_grid(name: str, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise DomainError(f"{name} must be a strictly increasing 1-d grid")
    return grid


def make_synthetic_kernel(kind: str, params: dict, x_grid, y_grid) -> np.ndarray:
    """P x M matrix of quadrature-weighted kernel values K(x_j, y_i).

    gaussian_blur:  exp(-(x - y)^2 / (2 s^2))
    sigmoid_front:  1 / (1 + exp(-(y - x t) / w)), a front moving with speed x
    """
    x_grid, y_grid = _check_grid("x_grid", x_grid), _check_grid("y_grid", y_grid)
    if kind not in KERNEL_PARAMS:
        raise DomainError(f"unknown kernel kind {kind}, expected one of {sorted(KERNEL_PARAMS)}")
    missing = KERNEL_PARAMS[kind] - set(params)
    if missing:
        raise DomainError(f"kernel {kind} needs parameters {sorted(missing)}")
    x, y = np.meshgrid(x_grid, y_grid)
    if kind == "gaussian_blur":
        s = float(params["s"])
        if s <= 0:
            raise DomainError(f"gaussian_blur needs s > 0, got {s}")
        values = np.exp(-((x - y) ** 2) / (2 * s * s))
    else:
        t, w = float(params["t"]), float(params["w"])
        if w <= 0:
            raise DomainError(f"sigmoid_front needs w > 0, got {w}")
        if t < 0:
            raise DomainError(f"sigmoid_front needs t >= 0, got {t}")
        values = expit((y - x * t) / w)
    return values * trapezoid_weights(x_grid)


def make_sparse_truth(size: int, spikes) -> np.ndarray:
    truth = np.zeros(size)
    seen = set()
    for position, amplitude in spikes:
        position = int(position)
        if not 0 <= position < size:
            raise DomainError(f"spike position {position} outside [0, {size})")
        if amplitude <= 0:
            raise DomainError(f"spike amplitude must be positive, got {amplitude}")
        if position in seen:
            raise DomainError(f"duplicate spike position {position}")
        seen.add(position)
        truth[position] = float(amplitude)
    return truth


@dataclass
class FredholmProblem:
    x_grid: np.ndarray
    y_grid: np.ndarray
    kernel_matrix: np.ndarray
    ground_truth: np.ndarray | None = None
    noise_sigma: float = 0.0
    seed: int = BENCHMARK_SEED
    kernel_kind: str = "inline"
    kernel_params: dict = field(default_factory=dict)
    data: np.ndarray | None = None

    def __post_init__(self):
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        self.y_grid = np.asarray(self.y_grid, dtype=float)
        self.kernel_matrix = np.atleast_2d(np.asarray(self.kernel_matrix, dtype=float))
        if self.kernel_matrix.shape != (self.y_grid.size, self.x_grid.size):
            raise DimensionError(
                f"kernel matrix {self.kernel_matrix.shape} does not match grids "
                f"({self.y_grid.size}, {self.x_grid.size})"
            )
        if not np.all(np.isfinite(self.kernel_matrix)):
            raise DomainError("kernel matrix has non-finite entries")
        if np.any(np.linalg.norm(self.kernel_matrix, axis=0) == 0):
            raise DomainError("kernel matrix has a zero column")
        if self.noise_sigma < 0:
            raise DomainError(f"noise sigma must be nonnegative, got {self.noise_sigma}")
        if self.ground_truth is not None:
            self.ground_truth = np.asarray(self.ground_truth, dtype=float)
            if self.ground_truth.shape != self.x_grid.shape:
                raise DimensionError("ground truth does not match the x grid")
            if np.any(self.ground_truth < 0):
                raise DomainError("ground truth must be nonnegative")
        if self.data is not None:
            self.data = np.asarray(self.data, dtype=float)
            if self.data.shape != self.y_grid.shape:
                raise DimensionError("data does not match the y grid")

    @property
    def shape(self) -> tuple[int, int]:
        return self.kernel_matrix.shape

    def forward(self) -> ForwardProblem:
        if self.data is None:
            raise DomainError("problem has no data, call observe() first")
        return ForwardProblem(self.kernel_matrix, self.data)

    def to_variational(self, q: float, weights=1.0) -> VariationalProblem:
        """Penalty on the grid values of g themselves (canonical basis)."""
        basis = canonical_basis(self.x_grid.size)
        return VariationalProblem(self.forward(), BiFrame(basis, basis), weights, q)

    def to_dict(self) -> dict:
        kernel = {"kind": self.kernel_kind}
        if self.kernel_kind == "inline":
            kernel["matrix"] = self.kernel_matrix
        else:
            kernel["params"] = dict(sorted(self.kernel_params.items()))
        return {
            "format": PROBLEM_FORMAT,
            "version": PROBLEM_VERSION,
            "quadrature": QUADRATURE,
            "x_grid": self.x_grid,
            "y_grid": self.y_grid,
            "kernel": kernel,
            "ground_truth": self.ground_truth,
            "noise_sigma": float(self.noise_sigma),
            "seed": int(self.seed),
            "data": self.data,
            "metadata": {"snr": snr(self) if self.ground_truth is not None else None},
        }

    @classmethod
    def from_dict(cls, content: dict) -> "FredholmProblem":
        if content.get("format") != PROBLEM_FORMAT:
            raise ProblemFileError(f"not a {PROBLEM_FORMAT} document")
        if content.get("version") != PROBLEM_VERSION:
            raise ProblemFileError(f"unsupported problem version {content.get('version')}")
        try:
            kernel = content["kernel"]
            kind = kernel["kind"]
            if kind not in KERNEL_KINDS:
                raise ProblemFileError(f"unknown kernel kind {kind}")
            if kind == "inline":
                matrix, params = kernel["matrix"], {}
            else:
                params = dict(kernel["params"])
                matrix = make_synthetic_kernel(kind, params, content["x_grid"], content["y_grid"])
            problem = cls(
                x_grid=content["x_grid"],
                y_grid=content["y_grid"],
                kernel_matrix=matrix,
                ground_truth=content.get("ground_truth"),
                noise_sigma=content.get("noise_sigma") or 0.0,
                seed=content.get("seed", BENCHMARK_SEED),
                kernel_kind=kind,
                kernel_params=params,
                data=content.get("data"),
            )
        except (KeyError, TypeError) as e:
            raise ProblemFileError(f"problem document is missing {e}") from e
        if problem.data is None and problem.ground_truth is not None:
            problem.data = observe(problem)
        return problem


def observe(problem: FredholmProblem) -> np.ndarray:
    """f = K g* + sigma xi, xi standard Gaussian drawn from the problem seed."""
    if problem.ground_truth is None:
        raise DomainError("cannot observe a problem without ground truth")
    clean = problem.kernel_matrix @ problem.ground_truth
    if problem.noise_sigma == 0:
        return clean
    rng = np.random.default_rng(problem.seed)
    return clean + problem.noise_sigma * rng.standard_normal(clean.size)


def snr(problem: FredholmProblem) -> float:
    """|K g*| / (sigma sqrt(P)), infinite without noise."""
    if problem.ground_truth is None:
        raise DomainError("snr needs a ground truth")
    signal = float(np.linalg.norm(problem.kernel_matrix @ problem.ground_truth))
    if problem.noise_sigma == 0:
        return float("inf")
    return signal / (problem.noise_sigma * np.sqrt(problem.y_grid.size))


def benchmark_grid(points: int) -> np.ndarray:
    """`points` equidistant samples of [1, 100]."""
    return np.linspace(1.0, 100.0, points)


def default_benchmark(
    points: int = BENCHMARK_POINTS,
    seed: int = BENCHMARK_SEED,
    noise_ratio: float = BENCHMARK_NOISE_RATIO,
    kind: str = BENCHMARK_KERNEL,
    params: dict | None = None,
    spikes=BENCHMARK_SPIKES,
) -> FredholmProblem:
    """The four-spike sedimentation surrogate, spike indices scaled by points / 100.

    sigma = noise_ratio * max |K g*|.
    """
    if points < 2:
        raise DomainError(f"benchmark needs at least 2 points, got {points}")
    params = dict(BENCHMARK_KERNEL_PARAMS if params is None else params)
    grid = benchmark_grid(points)
    kernel = make_synthetic_kernel(kind, params, grid, grid)
    scale = points / BENCHMARK_POINTS
    truth = make_sparse_truth(points, [(round(i * scale), a) for i, a in spikes])
    sigma = noise_ratio * float(np.max(np.abs(kernel @ truth)))
    problem = FredholmProblem(
        x_grid=grid,
        y_grid=grid.copy(),
        kernel_matrix=kernel,
        ground_truth=truth,
        noise_sigma=sigma,
        seed=seed,
        kernel_kind=kind,
        kernel_params=params,
    )
    problem.data = observe(problem)
    logging.debug(f"benchmark with {points} points, sigma = {sigma:.6g}, snr = {snr(problem):.6g}")
    return problem


def save_problem(problem: FredholmProblem, path):
    return write_json(path, problem.to_dict())


def load_problem(path) -> FredholmProblem:
    content = read_json(path)
    if not isinstance(content, dict):
        raise ProblemFileError(f"{path} does not hold a problem document")
    return FredholmProblem.from_dict(content)
