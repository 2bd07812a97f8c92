"""Exact-rational multi-product formula coefficients and the kappa/gamma machinery.

Coefficients are kept as :class:`fractions.Fraction` throughout; the generalized
Vandermonde systems involved lose all precision in doubles beyond k ~ 5.
Floating point only enters where a formula is turned into a matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateFormulaError, DomainError, InvalidInputError

__all__ = [
    "KAPPA_INF",
    "KappaInfinity",
    "MpfSpec",
    "build_mpf_spec",
    "choose_gamma",
    "coefficients_general",
    "cq_upper_bound",
    "critical_gamma",
    "eta_constant",
    "eta_integrand",
    "eta_maximizer",
    "kappa",
    "kappa_lower_bound",
    "order_condition_matrix",
    "verify_order_conditions",
]


class KappaInfinity:
    """Sentinel for kappa when no coefficient is negative.

    Kept out of rational arithmetic on purpose: it compares greater than every
    number and converts to ``float('inf')`` only on request.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "KAPPA_INF"

    def __str__(self):
        return "inf"

    def __float__(self):
        return math.inf

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("KAPPA_INF")

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self


KAPPA_INF = KappaInfinity()


@dataclass(frozen=True)
class MpfSpec:
    """A multi-product formula sum_q C_q S_chi(t/l_q)^{l_q}.

    ``gamma`` is the realized growth parameter log(l_{k+1})/(k+1), or ``None``
    for hand-specified repetition numbers that do not follow the l_q = q pattern.
    """

    k: int
    chi: int
    gamma: float | None
    ells: tuple[int, ...]
    coeffs: tuple[Fraction, ...]

    def __post_init__(self):
        if self.k < 0 or self.chi < 1:
            raise InvalidInputError(f"need k >= 0 and chi >= 1, got k={self.k}, chi={self.chi}")
        if len(self.ells) != self.k + 1 or len(self.coeffs) != self.k + 1:
            raise InvalidInputError("ells and coeffs must both have k+1 entries")
        if len(set(self.ells)) != len(self.ells) or min(self.ells) < 1:
            raise InvalidInputError(f"repetition numbers must be distinct positive integers: {self.ells}")
        if sum(self.coeffs, Fraction(0)) != 1:
            raise InvalidInputError("coefficients must sum to exactly 1")

    @classmethod
    def from_ells(cls, ells: Sequence[int], chi: int = 1, coeffs: Sequence[Fraction] | None = None) -> "MpfSpec":
        ells = tuple(int(l) for l in ells)
        if coeffs is None:
            coeffs = coefficients_general(ells, chi)
        gamma = None
        k = len(ells) - 1
        if ells[:k] == tuple(range(1, k + 1)):
            gamma = math.log(ells[-1]) / (k + 1)
        return cls(k=k, chi=chi, gamma=gamma, ells=ells, coeffs=tuple(Fraction(c) for c in coeffs))

    @property
    def follows_definition(self) -> bool:
        """True when l_q = q for q <= k and l_{k+1} > k."""
        return self.ells[:self.k] == tuple(range(1, self.k + 1)) and self.ells[-1] > self.k

    @property
    def positive_mass(self) -> Fraction:
        return sum((c for c in self.coeffs if c > 0), Fraction(0))

    @property
    def negative_mass(self) -> Fraction:
        return -sum((c for c in self.coeffs if c < 0), Fraction(0))

    @property
    def abs_sum(self) -> Fraction:
        return self.positive_mass + self.negative_mass

    @property
    def kappa(self):
        return kappa(self.coeffs)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "chi": self.chi,
            "gamma": self.gamma,
            "ells": list(self.ells),
            "coeffs": [f"{c.numerator}/{c.denominator}" for c in self.coeffs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MpfSpec":
        coeffs = tuple(Fraction(c) for c in d["coeffs"])
        return cls(k=int(d["k"]), chi=int(d["chi"]), gamma=d.get("gamma"),
                   ells=tuple(int(l) for l in d["ells"]), coeffs=coeffs)


def coefficients_general(ells: Sequence[int], chi: int = 1) -> list[Fraction]:
    """Exact coefficients extrapolating an order-2*chi symmetric formula.

    For ``chi == 1`` this is the closed product
    ``C_q = prod_{j != q} l_q^2 / (l_q^2 - l_j^2)``.  For ``chi > 1`` that
    product no longer satisfies the order conditions (the rows with exponents
    beyond -2k fail), so the generalized Vandermonde system is solved in
    closed form instead: with x_q = l_q^-2 the vector C_q x_q^chi must be
    orthogonal to all polynomials of degree < k, which forces
    ``C_q ~ x_q^-chi / prod_{j != q} (x_q - x_j)``.
    """
    ells = [int(l) for l in ells]
    if not ells:
        raise InvalidInputError("ells must be non-empty")
    if len(set(ells)) != len(ells):
        raise InvalidInputError(f"repetition numbers must be distinct: {ells}")
    if min(ells) < 1:
        raise InvalidInputError(f"repetition numbers must be >= 1: {ells}")
    if chi < 1:
        raise InvalidInputError(f"chi must be >= 1, got {chi}")

    if chi == 1:
        out = []
        for q, lq in enumerate(ells):
            c = Fraction(1)
            for j, lj in enumerate(ells):
                if j != q:
                    c *= Fraction(lq * lq, lq * lq - lj * lj)
            out.append(c)
        return out

    xs = [Fraction(1, l * l) for l in ells]
    weights = []
    for q, xq in enumerate(xs):
        denom = Fraction(1)
        for j, xj in enumerate(xs):
            if j != q:
                denom *= xq - xj
        weights.append(1 / (xq ** chi * denom))
    total = sum(weights, Fraction(0))
    return [w / total for w in weights]


def _realize_last_ell(k: int, gamma_target: float, snap_tol: float) -> int:
    x = math.exp(gamma_target * (k + 1))
    nearest = round(x)
    if abs(x - nearest) <= snap_tol * max(1.0, nearest):
        return int(nearest)
    return int(math.ceil(x))


def build_mpf_spec(k: int, chi: int, gamma_target: float, snap_tol: float = 1e-9) -> MpfSpec:
    """Multi-product formula with l_q = q (q <= k) and l_{k+1} = ceil(e^{gamma (k+1)}).

    ``snap_tol`` is a relative tolerance under which e^{gamma (k+1)} is taken to
    already be the nearest integer, so that gamma = log(4)/2 yields 4 and not 5
    after rounding noise.  The stored gamma is the realized log(l_{k+1})/(k+1).
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if chi < 1:
        raise InvalidInputError(f"chi must be >= 1, got {chi}")
    if not gamma_target > 0:
        raise InvalidInputError(f"gamma must be positive, got {gamma_target}")
    last = _realize_last_ell(k, gamma_target, snap_tol)
    if last <= k:
        raise DegenerateFormulaError(
            f"e^(gamma (k+1)) rounds to {last} <= k={k}; repetition numbers would collide")
    ells = tuple(range(1, k + 1)) + (last,)
    coeffs = tuple(coefficients_general(ells, chi))
    return MpfSpec(k=k, chi=chi, gamma=math.log(last) / (k + 1), ells=ells, coeffs=coeffs)


def order_condition_matrix(ells: Sequence[int], chi: int) -> list[list[Fraction]]:
    """Rows 1, l^-2chi, l^-2chi-2, ..., l^-2(k+chi-1) as exact rationals."""
    k = len(ells) - 1
    rows = [[Fraction(1)] * len(ells)]
    for i in range(k):
        p = 2 * chi + 2 * i
        rows.append([Fraction(1, l ** p) for l in ells])
    return rows


def verify_order_conditions(spec: MpfSpec) -> bool:
    matrix = order_condition_matrix(spec.ells, spec.chi)
    target = [Fraction(1)] + [Fraction(0)] * spec.k
    for row, rhs in zip(matrix, target):
        if sum((a * c for a, c in zip(row, spec.coeffs)), Fraction(0)) != rhs:
            return False
    return True


def kappa(coeffs: Sequence[Fraction]):
    """Positive mass over negative mass, exactly.  ``KAPPA_INF`` if nothing is negative."""
    coeffs = [Fraction(c) for c in coeffs]
    if not coeffs or all(c == 0 for c in coeffs):
        raise InvalidInputError("kappa needs at least one non-zero coefficient")
    pos = sum((c for c in coeffs if c > 0), Fraction(0))
    neg = -sum((c for c in coeffs if c < 0), Fraction(0))
    if neg == 0:
        return KAPPA_INF
    return pos / neg


def eta_integrand(lam):
    """lam^2 / ((1+lam)^(1+lam) (1-lam)^(1-lam)) on [0, 1)."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    inside = (lam > 0) & (lam < 1)
    x = lam[inside]
    out[inside] = np.exp(2 * np.log(x) - (1 + x) * np.log1p(x) - (1 - x) * np.log1p(-x))
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def _eta_search() -> tuple[float, float]:
    def neg_log(lam):
        return -(2 * math.log(lam) - (1 + lam) * math.log1p(lam) - (1 - lam) * math.log1p(-lam))

    res = minimize_scalar(neg_log, bracket=(0.5, 0.8, 0.99), method="golden", tol=1e-13)
    return float(res.x), float(eta_integrand(res.x))


def eta_maximizer() -> float:
    return _eta_search()[0]


def eta_constant() -> float:
    """max over [0,1) of :func:`eta_integrand`, about 0.3081."""
    return _eta_search()[1]


def critical_gamma() -> float:
    """gamma_c = 1 + log(eta)/2, the threshold between growth and decay of kappa."""
    return 1 + math.log(eta_constant()) / 2


def choose_gamma(k: int, delta: float) -> float:
    """Smallest gamma guaranteeing a subtraction failure probability of at most ``delta``."""
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if not 0 < delta <= 1:
        raise InvalidInputError(f"delta must lie in (0, 1], got {delta}")
    return critical_gamma() + math.log((2 * k) ** 2.5 / delta) / (2 * k)


def _check_growth(k: int, gamma: float) -> None:
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if math.exp(2 * gamma * (k + 1)) < 2 * k * k:
        raise DomainError(f"need e^(2 gamma (k+1)) >= 2k^2; fails for k={k}, gamma={gamma}")


def cq_upper_bound(k: int, gamma: float) -> float:
    """Upper bound on max_{q<=k} |C_q|: sqrt(2) k^1.5 e^{2k(gamma_c - gamma)}."""
    _check_growth(k, gamma)
    return math.sqrt(2) * k ** 1.5 * math.exp(2 * k * (critical_gamma() - gamma))


def kappa_lower_bound(k: int, gamma: float) -> float:
    _check_growth(k, gamma)
    return 2 ** -0.5 * math.exp(-2 * k * (critical_gamma() - gamma) - 2.5 * math.log(k))
