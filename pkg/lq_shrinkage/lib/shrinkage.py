"""Shrinkage rules, their q-dependent expressions and empirical axiom checks.

A shrinkage rule is a scalar map (x, alpha) -> rho(x, alpha) with constants
c1, c2, rho, d such that

    |x - rho(x, alpha)| <= c1 * min(|x|, alpha)                for alpha >= 0
    |rho(x, alpha)|     <= c2 * |x| * |x / alpha| ** rho       for |x| <= d * alpha

and a thresholding rule additionally maps |x| <= c3 * alpha to exactly 0.
Rules are vectorized over numpy arrays and broadcast x against alpha.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from lq_shrinkage.config import (
    AXIOM_ALPHA_RANGE,
    AXIOM_ATOL,
    AXIOM_RTOL,
    AXIOM_X_RANGE,
    DIFFUSION2_CONSTANT,
    FIRM_ALPHA_SPAN,
)
from lq_shrinkage.errors import DomainError

RuleFunc = Callable[[np.ndarray, np.ndarray], np.ndarray]

_LARGEST = np.finfo(float).max


def _broadcast(x, alpha) -> tuple[np.ndarray, np.ndarray]:
    return np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(alpha, dtype=float))


def _unwrap(result: np.ndarray):
    return result.item() if result.ndim == 0 else result


@dataclass(frozen=True)
class ShrinkageRule:
    """Named shrinkage rule with its declared axiom constants.

    `alpha_range` restricts the weights on which the constants are claimed;
    None means all alpha >= 0.
    """

    name: str
    func: RuleFunc = field(repr=False, compare=False)
    c1: float
    c2: float
    rho: float
    d: float
    c3: float | None = None
    alpha_range: tuple[float, float] | None = None

    @property
    def is_thresholding(self) -> bool:
        return self.c3 is not None

    @property
    def min_q(self) -> float:
        """Smallest q covered by the constant-factor bound, 1/rho with 1/inf = 0."""
        return 0.0 if math.isinf(self.rho) else 1.0 / self.rho

    def evaluate(self, x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        x, alpha = _broadcast(x, alpha)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            result = np.asarray(self.func(x, alpha), dtype=float)
        return np.where(x == 0, 0.0, result)

    def apply(self, x, alpha):
        return _unwrap(self.evaluate(x, alpha))

    __call__ = apply


@dataclass(frozen=True)
class QDependentRule:
    """The substitution (x, alpha) -> base(x, alpha * |x| ** (q - 1)), 0 at x = 0."""

    base: ShrinkageRule
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 2.0:
            raise DomainError(f"q must lie in [0, 2], got {self.q}")

    @property
    def name(self) -> str:
        return f"{self.base.name}@q={self.q:g}"

    def evaluate(self, x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        x, alpha = _broadcast(x, alpha)
        magnitude = np.abs(x)
        nonzero = magnitude > 0
        safe = np.where(nonzero, magnitude, 1.0)
        with np.errstate(over="ignore", divide="ignore"):
            scaled = np.where(alpha > 0, alpha * safe ** (self.q - 1.0), 0.0)
        scaled = np.minimum(scaled, _LARGEST)
        return np.where(nonzero, self.base.evaluate(x, scaled), 0.0)

    def apply(self, x, alpha):
        return _unwrap(self.evaluate(x, alpha))

    __call__ = apply


def wrap_q(base: ShrinkageRule, q: float) -> QDependentRule:
    return QDependentRule(base=base, q=float(q))


def cq(q: float) -> float:
    """c_q = 2^(q-2) (2-q)^(2-q) / (1-q)^(1-q), continuous on [0, 1] with 0^0 = 1."""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"c_q is defined for q in [0, 1], got {q}")
    q = float(q)
    return 2.0 ** (q - 2.0) * (2.0 - q) ** (2.0 - q) / (1.0 - q) ** (1.0 - q)


def jump_size(q: float, alpha: float, wrapped: bool = False) -> float:
    """Jump of rho_hs(q) at its threshold, or of its q-dependent expression."""
    c = cq(q)
    if wrapped:
        return (1.0 - q) * (c * alpha) ** (1.0 / (2.0 - q))
    return (1.0 - q) * c * alpha


def _soft(x, a):
    return np.where(np.abs(x) > a, x - np.sign(x) * a, 0.0)


def _hard(x, a):
    return np.where(np.abs(x) > a, x, 0.0)


def _garotte(x, a):
    return np.where(np.abs(x) > a, x - a * a / x, 0.0)


def _hyperbolic(x, a):
    root = np.sqrt(np.maximum(x * x - a * a, 0.0))
    return np.where(np.abs(x) > a, np.sign(x) * root, 0.0)


def _diffusion1(x, a):
    # 1 - a / sqrt(a^2 + 2x^2) without cancellation for small |x| / a
    u = 2.0 * (x / a) ** 2
    s = np.sqrt(1.0 + u)
    factor = np.where(a > 0, u / (s * (1.0 + s)), 1.0)
    return x * factor


def _diffusion2(x, a):
    return x * np.exp(-DIFFUSION2_CONSTANT * (a / x) ** 8)


def _ratio(x, a):
    magnitude = np.abs(x)
    return x * magnitude / (magnitude + a)


def soft() -> ShrinkageRule:
    return ShrinkageRule("soft", _soft, c1=1.0, c2=1.0, rho=math.inf, d=1.0, c3=1.0)


def hard() -> ShrinkageRule:
    return ShrinkageRule("hard", _hard, c1=1.0, c2=1.0, rho=math.inf, d=1.0, c3=1.0)


def garotte() -> ShrinkageRule:
    return ShrinkageRule("garotte", _garotte, c1=1.0, c2=1.0, rho=math.inf, d=1.0, c3=1.0)


def hyperbolic() -> ShrinkageRule:
    return ShrinkageRule(
        "hyperbolic", _hyperbolic, c1=1.0, c2=1.0, rho=math.inf, d=1.0, c3=1.0
    )


def n_degree_garotte(n: int) -> ShrinkageRule:
    if n < 1:
        raise DomainError(f"n-degree garotte needs n >= 1, got {n}")

    def func(x, a):
        return x / (1.0 + (a / x) ** (2 * n))

    return ShrinkageRule(f"ndeg:{n}", func, c1=1.0, c2=1.0, rho=2.0 * n, d=1.0)


def twice_differentiable(k: int) -> ShrinkageRule:
    """Cubic-spline-like rule, polynomial below alpha and shifted identity above."""
    if k < 1:
        raise DomainError(f"rule k needs k >= 1, got {k}")
    degree = 2 * k + 1

    def func(x, a):
        inner = x * (x / a) ** (2 * k) / degree
        outer = x - np.sign(x) * (a - a / degree)
        return np.where(np.abs(x) <= a, inner, outer)

    return ShrinkageRule(f"k:{k}", func, c1=1.0, c2=1.0, rho=2.0 * k, d=1.0)


def diffusion1() -> ShrinkageRule:
    return ShrinkageRule("diff1", _diffusion1, c1=1.0, c2=1.0, rho=1.0, d=1.0)


def diffusion2() -> ShrinkageRule:
    return ShrinkageRule("diff2", _diffusion2, c1=1.0, c2=1.0, rho=1.0, d=1.0)


def firm(alpha1: float) -> ShrinkageRule:
    """Firm shrinkage with fixed lower threshold alpha1; alpha is the upper one."""
    if alpha1 <= 0:
        raise DomainError(f"firm shrinkage needs alpha1 > 0, got {alpha1}")

    def func(x, a):
        magnitude = np.abs(x)
        middle = (alpha1 <= magnitude) & (magnitude <= a) & (a > alpha1)
        ramp = np.sign(x) * (magnitude - alpha1) / (1.0 - alpha1 / a)
        return np.where(magnitude > a, x, np.where(middle, ramp, 0.0))

    span = 1.0 / FIRM_ALPHA_SPAN
    return ShrinkageRule(
        f"firm:{alpha1:g}",
        func,
        c1=1.0,
        c2=1.0,
        rho=math.inf,
        d=span,
        c3=span,
        alpha_range=(0.0, FIRM_ALPHA_SPAN * alpha1),
    )


def ratio() -> ShrinkageRule:
    """x / (1 + alpha / |x|); its q = 2 expression is v / (1 + alpha)."""
    return ShrinkageRule("ratio", _ratio, c1=1.0, c2=1.0, rho=1.0, d=1.0)


def rho_hs(q: float) -> ShrinkageRule:
    """Rule between hard (q = 0) and soft with alpha/2 (q = 1)."""
    c = cq(q)
    q = float(q)

    def func(x, a):
        return np.where(np.abs(x) > a * c, x - np.sign(x) * q * c * a, 0.0)

    return ShrinkageRule(f"hs:{q:g}", func, c1=1.0, c2=1.0, rho=math.inf, d=c, c3=c)


def catalog() -> list[ShrinkageRule]:
    return [
        soft(),
        hard(),
        garotte(),
        hyperbolic(),
        n_degree_garotte(1),
        n_degree_garotte(2),
        twice_differentiable(1),
        twice_differentiable(2),
        diffusion1(),
        diffusion2(),
        firm(1.0),
        firm(2.0),
        ratio(),
    ]


_FIXED_RULES = {
    "soft": soft,
    "hard": hard,
    "garotte": garotte,
    "hyperbolic": hyperbolic,
    "diff1": diffusion1,
    "diff2": diffusion2,
    "ratio": ratio,
}


def get_rule(name: str, q: float | None = None) -> ShrinkageRule:
    """Resolve a rule from its CLI name, e.g. `soft`, `ndeg:2`, `firm:1`, `hs:0.3`.

    A bare `hs` takes its parameter from `q`.
    """
    key, _, argument = name.strip().partition(":")
    try:
        if key in _FIXED_RULES and not argument:
            return _FIXED_RULES[key]()
        if key == "ndeg":
            return n_degree_garotte(int(argument or 1))
        if key == "k":
            return twice_differentiable(int(argument or 1))
        if key == "firm":
            return firm(float(argument or 1.0))
        if key == "hs":
            if argument:
                return rho_hs(float(argument))
            if q is None:
                raise DomainError("rule hs needs a q, use hs:<q> or pass --q")
            return rho_hs(float(q))
    except ValueError as e:
        if isinstance(e, DomainError):
            raise
        raise DomainError(f"malformed shrinkage rule name: {name}") from e
    raise DomainError(f"unknown shrinkage rule: {name}")


@dataclass(frozen=True)
class AxiomGrid:
    x: np.ndarray
    alpha: np.ndarray


def default_grid() -> AxiomGrid:
    positive = np.geomspace(*AXIOM_X_RANGE)
    x = np.concatenate([-positive[::-1], [0.0], positive])
    alpha = np.concatenate([[0.0], np.geomspace(*AXIOM_ALPHA_RANGE)])
    return AxiomGrid(x=x, alpha=alpha)


@dataclass(frozen=True)
class AxiomViolation:
    axiom: str
    x: float
    alpha: float
    lhs: float
    rhs: float


@dataclass
class AxiomReport:
    rule: str
    checked: int
    skipped: int
    violations: list[AxiomViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _collect(axiom, mask, X, A, lhs, rhs) -> list[AxiomViolation]:
    return [
        AxiomViolation(axiom, float(X[i]), float(A[i]), float(lhs[i]), float(rhs[i]))
        for i in zip(*np.nonzero(mask))
    ]


def check_axioms(rule: ShrinkageRule, grid: AxiomGrid | None = None) -> AxiomReport:
    """Report every grid point violating the declared constants of `rule`.

    Checks the closeness estimate, the decay estimate, the c3 threshold
    property, sign preservation and odd symmetry. The x grid must be
    symmetric for the odd-symmetry check to be meaningful.
    """
    grid = grid or default_grid()
    X, A = np.meshgrid(np.asarray(grid.x, float), np.asarray(grid.alpha, float), indexing="ij")
    in_range = np.ones_like(X, dtype=bool)
    if rule.alpha_range is not None:
        low, high = rule.alpha_range
        in_range = (A >= low) & (A <= high)

    values = rule.evaluate(X, A)
    magnitude = np.abs(X)
    tolerance = AXIOM_ATOL * (magnitude + A)
    violations = []

    lhs = np.abs(X - values)
    rhs = rule.c1 * np.minimum(magnitude, A)
    violations += _collect("closeness", in_range & (lhs > rhs + tolerance), X, A, lhs, rhs)

    positive = A > 0
    near_zero = positive & (magnitude <= rule.d * A)
    if not (near_zero.any() and (positive & ~near_zero).any()):
        logging.warning(f"axiom grid covers only one branch of |x| <= d*alpha for {rule.name}")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio_ = np.where(positive, magnitude / np.where(positive, A, 1.0), 0.0)
        rhs = rule.c2 * magnitude * ratio_**rule.rho
    lhs = np.abs(values)
    mask = in_range & near_zero & (lhs > rhs * (1.0 + AXIOM_RTOL))
    violations += _collect("decay", mask, X, A, lhs, rhs)

    if rule.c3 is not None:
        mask = in_range & (magnitude <= rule.c3 * A) & (values != 0)
        violations += _collect("threshold", mask, X, A, lhs, np.zeros_like(lhs))

    mask = in_range & (values != 0) & (np.sign(values) != np.sign(X))
    violations += _collect("sign", mask, X, A, values, X)

    mirrored = values[::-1, :]
    lhs = np.abs(values + mirrored)
    mask = in_range & (lhs > tolerance)
    violations += _collect("odd", mask, X, A, lhs, tolerance)

    checked = int(in_range.sum())
    report = AxiomReport(rule.name, checked, X.size - checked, violations)
    logging.debug(f"{rule.name}: {len(violations)} axiom violations on {checked} points")
    return report
