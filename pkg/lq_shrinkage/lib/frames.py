"""Finite frames, bi-frames and forward operators with pseudo-inverses.

Spaces are real Euclidean, the index set is {0, ..., N-1}. A frame is held as
its synthesis matrix F of shape (dim H) x N whose columns are the frame
vectors; analysis is the transpose.
"""

import logging
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from lq_shrinkage.config import (
    BIFRAME_ATOL,
    BOUNDEDNESS_SAMPLES,
    PSEUDO_INVERSE_ATOL,
    RANGE_RTOL,
    RANK_RTOL,
)
from lq_shrinkage.errors import (
    DimensionError,
    DomainError,
    NotABiFrameError,
    NotAFrameError,
    RangeError,
)
from lq_shrinkage.lib.prox import lq_terms


class Frame:
    def __init__(self, synthesis) -> None:
        synthesis = np.asarray(synthesis, dtype=float)
        if synthesis.ndim != 2 or 0 in synthesis.shape:
            raise DimensionError(f"synthesis must be a nonempty matrix, got shape {synthesis.shape}")
        if not np.all(np.isfinite(synthesis)):
            raise DomainError("synthesis matrix has non-finite entries")
        self.synthesis = synthesis

    @property
    def dim(self) -> int:
        return self.synthesis.shape[0]

    def __len__(self) -> int:
        return self.synthesis.shape[1]

    def synthesize(self, coefficients) -> np.ndarray:
        """(c_n) -> sum_n c_n f_n"""
        return self.synthesis @ np.asarray(coefficients, dtype=float)

    def analyze(self, g) -> np.ndarray:
        """g -> (<g, f_n>)_n"""
        return self.synthesis.T @ np.asarray(g, dtype=float)

    @cached_property
    def frame_operator(self) -> np.ndarray:
        return self.synthesis @ self.synthesis.T

    def bounds(self) -> tuple[float, float]:
        return frame_bounds(self)


def frame_bounds(f: Frame) -> tuple[float, float]:
    """Extreme eigenvalues (A, B) of the frame operator S = F F*."""
    eigenvalues = np.linalg.eigvalsh(f.frame_operator)
    lower, upper = float(eigenvalues[0]), float(eigenvalues[-1])
    if upper <= 0 or lower <= RANK_RTOL * upper:
        raise NotAFrameError(
            f"not a frame: frame operator has eigenvalues in [{lower:.3e}, {upper:.3e}]"
        )
    return lower, upper


def canonical_dual(f: Frame) -> Frame:
    """S^-1 F"""
    frame_bounds(f)
    try:
        dual = scipy.linalg.solve(f.frame_operator, f.synthesis, assume_a="pos")
    except np.linalg.LinAlgError as e:
        raise NotAFrameError(f"frame operator is singular: {e}") from e
    return Frame(dual)


class BiFrame:
    """A pair of frames with F F~* = Id, so g = sum_n <g, f~_n> f_n."""

    def __init__(self, primal: Frame, dual: Frame) -> None:
        if primal.synthesis.shape != dual.synthesis.shape:
            raise DimensionError(
                f"primal {primal.synthesis.shape} and dual {dual.synthesis.shape} shapes differ"
            )
        self.primal = primal
        self.dual = dual
        defect = np.max(np.abs(primal.synthesis @ dual.synthesis.T - np.eye(primal.dim)))
        if defect > BIFRAME_ATOL:
            raise NotABiFrameError(f"|F F~* - Id| = {defect:.3e} exceeds {BIFRAME_ATOL:g}")

    @classmethod
    def canonical(cls, primal: Frame) -> "BiFrame":
        return cls(primal, canonical_dual(primal))

    @property
    def dim(self) -> int:
        return self.primal.dim

    def __len__(self) -> int:
        return len(self.primal)

    def analyze(self, g) -> np.ndarray:
        """F~* g, the coefficients the penalty acts on."""
        return self.dual.analyze(g)

    def synthesize(self, coefficients) -> np.ndarray:
        return self.primal.synthesize(coefficients)

    def reconstruct(self, g) -> np.ndarray:
        return self.synthesize(self.analyze(g))

    @cached_property
    def cross_gram(self) -> np.ndarray:
        """F~* F, the identity on sequences for biorthogonal pairs."""
        return self.dual.synthesis.T @ self.primal.synthesis


def canonical_basis(n: int) -> Frame:
    return Frame(np.eye(n))


def mercedes_benz() -> Frame:
    """Three unit vectors at 120 degrees in R^2, a tight frame with A = B = 3/2."""
    angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    return Frame(np.vstack([np.cos(angles), np.sin(angles)]))


def random_frame(dim: int, size: int, seed: int) -> Frame:
    if size < dim:
        raise DomainError(f"a frame of R^{dim} needs at least {dim} vectors, got {size}")
    rng = np.random.default_rng(seed)
    return Frame(rng.standard_normal((dim, size)))


def make_pseudo_inverse(op_L) -> np.ndarray:
    """Moore-Penrose inverse by SVD, singular values below RANK_RTOL * s_max dropped."""
    op_L = np.atleast_2d(np.asarray(op_L, dtype=float))
    return scipy.linalg.pinv(op_L, rtol=RANK_RTOL)


def _is_matrix_free(operator) -> bool:
    return isinstance(operator, LinearOperator)


class ForwardProblem:
    """Operator L: H -> H', observed data h and a pseudo-inverse L# with L L# L = L.

    Dense operators get the Moore-Penrose inverse on demand. Matrix-free
    operators (scipy LinearOperator) must be given their pseudo-inverse
    explicitly if anything needs it; iterative solvers do not.
    """

    def __init__(self, operator, data=None, pseudo_inverse=None) -> None:
        if _is_matrix_free(operator):
            self.operator = operator
        else:
            operator = np.atleast_2d(np.asarray(operator, dtype=float))
            if operator.ndim != 2:
                raise DimensionError(f"operator must be a matrix, got shape {operator.shape}")
            self.operator = operator
        self.data = None if data is None else np.asarray(data, dtype=float)
        if self.data is not None and self.data.shape != (self.shape[0],):
            raise DimensionError(
                f"data of shape {self.data.shape} does not match operator range dim {self.shape[0]}"
            )
        self._pseudo_inverse = pseudo_inverse
        if pseudo_inverse is not None:
            self._check_pseudo_inverse(pseudo_inverse)

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.operator.shape)

    @property
    def is_matrix_free(self) -> bool:
        return _is_matrix_free(self.operator)

    @cached_property
    def linear_operator(self) -> LinearOperator:
        return aslinearoperator(self.operator)

    def apply(self, g) -> np.ndarray:
        return self.linear_operator.matvec(np.asarray(g, dtype=float))

    def adjoint(self, r) -> np.ndarray:
        return self.linear_operator.rmatvec(np.asarray(r, dtype=float))

    @property
    def pseudo_inverse(self):
        if self._pseudo_inverse is None:
            if self.is_matrix_free:
                raise DomainError("a matrix-free operator needs an explicit pseudo-inverse")
            self._pseudo_inverse = make_pseudo_inverse(self.operator)
            self._check_pseudo_inverse(self._pseudo_inverse)
        return self._pseudo_inverse

    def pinv_apply(self, h) -> np.ndarray:
        return aslinearoperator(self.pseudo_inverse).matvec(np.asarray(h, dtype=float))

    def _check_pseudo_inverse(self, pseudo_inverse) -> None:
        if tuple(pseudo_inverse.shape) != self.shape[::-1]:
            raise DimensionError(
                f"pseudo-inverse of shape {pseudo_inverse.shape} does not fit operator {self.shape}"
            )
        if self.is_matrix_free or _is_matrix_free(pseudo_inverse):
            pinv = aslinearoperator(pseudo_inverse)
            probes = np.random.default_rng(0).standard_normal((3, self.shape[1]))
            rhs = np.column_stack([self.apply(p) for p in probes])
            lhs = np.column_stack([self.apply(pinv.matvec(r)) for r in rhs.T])
        else:
            lhs = self.operator @ pseudo_inverse @ self.operator
            rhs = self.operator
        scale = max(1.0, float(np.max(np.abs(rhs))))
        defect = float(np.max(np.abs(lhs - rhs)))
        if defect > PSEUDO_INVERSE_ATOL * scale:
            raise DomainError(f"L L# L != L: defect {defect:.3e}")

    def range_residual(self, h=None) -> float:
        h = self.data if h is None else np.asarray(h, dtype=float)
        return float(np.linalg.norm(self.apply(self.pinv_apply(h)) - h))

    def check_in_range(self, h=None) -> None:
        h = self.data if h is None else np.asarray(h, dtype=float)
        norm = float(np.linalg.norm(h))
        residual = self.range_residual(h)
        if residual > RANGE_RTOL * norm:
            raise RangeError(residual, norm)


def boundedness_audit(
    operator, q: float, weights=None, samples: int = BOUNDEDNESS_SAMPLES, seed: int = 0
) -> float:
    """Empirical weighted l_q -> l_q quasi-norm of a sequence-space operator.

    Probes every unit sequence plus `samples` Gaussian sequences. For q = 0 the
    weighted support size replaces the quasi-norm.
    """
    operator = np.atleast_2d(np.asarray(operator, dtype=float))
    size = operator.shape[0]
    if operator.shape != (size, size):
        raise DimensionError(f"operator on sequences must be square, got {operator.shape}")
    if not 0.0 <= q <= 2.0:
        raise DomainError(f"q must lie in [0, 2], got {q}")
    weights = np.ones(size) if weights is None else np.broadcast_to(np.asarray(weights, float), size)
    rng = np.random.default_rng(seed)
    probes = np.hstack([np.eye(size), rng.standard_normal((size, samples))])
    images = operator @ probes

    def quasi_norm(columns):
        mass = weights @ lq_terms(columns, q)
        return mass if q == 0 else mass ** (1.0 / q)

    ratios = quasi_norm(images) / quasi_norm(probes)
    estimate = float(np.max(ratios))
    logging.debug(f"boundedness estimate for q={q:g}: {estimate:.6g}")
    return estimate
