"""Closed-form error bounds, parameter selection and exponential-count estimates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError, InvalidInputError
from .exactcoeff import MpfSpec, build_mpf_spec, choose_gamma, critical_gamma

LOG_25_3 = math.log(25 / 3)
# per-k exponents quoted for two earlier product-formula schemes
PRIOR_EXPONENTS = {"BACS07": 3.22, "WBHS10": 2.13}


def _suzuki_growth(k: int) -> float:
    return (5 / 3) ** (k - 1)


def taylor_remainder_bound(abs_coeff_sum: float, order: int) -> float:
    """s^(l+1)/(l+1)! * e^s: bounds the order-l Taylor remainder of a product of exponentials."""
    s = float(abs_coeff_sum)
    if s < 0:
        raise InvalidInputError(f"abs_coeff_sum must be >= 0, got {s}")
    if order < 0:
        raise InvalidInputError(f"order must be >= 0, got {order}")
    return s ** (order + 1) / math.factorial(order + 1) * math.exp(s)


def mpf_error_bound(k: int, m: int, h: float, lam: float) -> float:
    """(2m(5/3)^(k-1) h lam)^(4k+1), valid for h lam <= 3 log2 / (4mk(5/3)^(k-1))."""
    if k < 1 or m < 1 or h < 0 or lam < 0:
        raise InvalidInputError("need k, m >= 1 and h, lambda >= 0")
    g = _suzuki_growth(k)
    if h * lam > 3 * math.log(2) / (4 * m * k * g):
        raise DomainError(f"h*lambda={h * lam:g} exceeds {3 * math.log(2) / (4 * m * k * g):g}")
    return (2 * m * g * h * lam) ** (4 * k + 1)


def mpf_error_bound_valid(k: int, m: int, h: float, lam: float) -> bool:
    return h * lam <= 3 * math.log(2) / (4 * m * k * _suzuki_growth(k))


def inversion_error_bound(k: int, m: int, h: float, lam: float) -> float:
    """(2mk(5/3)^(k-1) h lam)^(4k+2), valid while the base is at most 1/2."""
    if k < 1 or m < 1 or h < 0 or lam < 0:
        raise InvalidInputError("need k, m >= 1 and h, lambda >= 0")
    base = 2 * m * k * _suzuki_growth(k) * h * lam
    if base > 0.5:
        raise DomainError(f"2mk(5/3)^(k-1) h lambda = {base:g} exceeds 1/2")
    return base ** (4 * k + 2)


def inversion_error_bound_valid(k: int, m: int, h: float, lam: float) -> bool:
    return 2 * m * k * _suzuki_growth(k) * h * lam <= 0.5


def choose_r(k: int, m: int, h: float, t: float, eps_tilde: float, beta: float) -> int:
    """ceil(max{(4m(5/3)^(k-1)ht)^(1+1/4k) / (eps/5)^(1/4k), 13 log(2/beta)})."""
    if k < 1 or m < 1 or not (h > 0 and t > 0 and eps_tilde > 0 and beta > 0):
        raise InvalidInputError("need k, m >= 1 and positive h, t, eps_tilde, beta")
    cap = m * h * t * k ** (-4 * k)
    if eps_tilde > cap * (1 + 1e-12):
        raise DomainError(f"eps_tilde={eps_tilde:g} exceeds m h t k^-4k = {cap:g}")
    x = 4 * m * _suzuki_growth(k) * h * t
    accuracy = x ** (1 + 1 / (4 * k)) / (eps_tilde / 5) ** (1 / (4 * k))
    confidence = 13 * math.log(2 / beta)
    return max(1, math.ceil(max(accuracy, confidence)))


def lemma11_error(k: int, m: int, h: float, t: float, r: int) -> float:
    """Worst-case error of r steps with the full 5r attempt budget spent."""
    return 5 * r * (2 * m * _suzuki_growth(k) * h * t / r) ** (4 * k + 1)


def dominant_rate() -> float:
    """Per-k exponent of the leading cost factor: gamma_c + log(25/3), about 2.53."""
    return critical_gamma() + LOG_25_3


def k_opt_coefficient() -> float:
    """k_opt ~ coefficient * sqrt(log(mht/eps)); about 0.3142."""
    return 0.5 / math.sqrt(dominant_rate())


def choose_k_opt(m: int, h: float, t: float, eps_tilde: float) -> int:
    ratio = m * h * t / eps_tilde
    if ratio <= 1:
        return 1
    return max(1, math.ceil(k_opt_coefficient() * math.sqrt(math.log(ratio))))


def dominant_factor_log(k: int, log_ratio: float) -> float:
    """log of e^{(gamma_c + log(25/3)) k + log(mht/eps)/(4k)}."""
    return dominant_rate() * k + log_ratio / (4 * k)


def prior_factor_log(name: str, k: int, log_ratio: float) -> float:
    """Same dominant factor for an earlier scheme, which pays (mht/eps)^(1/2k)."""
    return PRIOR_EXPONENTS[name] * k + log_ratio / (2 * k)


def nexp_bound(k: int, m: int, r: int) -> int:
    """ceil(1000 m 5^(k-1) k^(9/4) e^{gamma_c k} r)."""
    if k < 1 or m < 1 or r < 0:
        raise InvalidInputError("need k, m >= 1 and r >= 0")
    return math.ceil(1000 * m * 5 ** (k - 1) * k ** 2.25 * math.exp(critical_gamma() * k) * r)


def delta_remainder_bound(k: int, m: int, h: float, t: float, r: int) -> float:
    """Remainder-based bound on integrator differences: 4 x^(2k+1)/(2k+1)!, x = (4/3)mk(5/3)^(k-1)ht/r.

    This is the bound used inside the exponential-count analysis; the
    simulator itself uses the exact max pairwise distance.
    """
    x = 4 / 3 * m * k * _suzuki_growth(k) * h * t / r
    return 4 * x ** (2 * k + 1) / math.factorial(2 * k + 1)


def eps_tilde_for(k: int, m: int, h: float, t: float, eps: float, beta: float) -> float:
    return min(1.0, eps, beta, m * h * t * k ** (-4 * k))


@dataclass
class CostPlan:
    k: int
    gamma: float
    spec: MpfSpec
    r: int
    eps_tilde: float
    nexp_bound: int
    beta: float
    m: int
    h: float
    t: float
    eps: float

    @property
    def budget(self) -> int:
        return 5 * self.r

    def check(self) -> list[str]:
        """Violated plan invariants (empty when the plan is consistent)."""
        bad = []
        if self.r < 13 * math.log(2 / self.beta):
            bad.append(f"r={self.r} < 13 log(2/beta)")
        et = eps_tilde_for(self.k, self.m, self.h, self.t, self.eps, self.beta)
        if self.eps_tilde != et:
            bad.append(f"eps_tilde={self.eps_tilde} != {et}")
        if any(abs(c) > 2 for c in self.spec.coeffs):
            bad.append("some |C_q| > 2")
        if sum((abs(c) for c in self.spec.coeffs[:-1]), Fraction(0)) > 1:
            bad.append("sum_{q<=k} |C_q| > 1")
        err = lemma11_error(self.k, self.m, self.h, self.t, self.r)
        if err > self.eps_tilde:
            bad.append(f"step-error bound {err:g} > eps_tilde {self.eps_tilde:g}")
        return bad

    def to_dict(self) -> dict:
        return {
            "m": self.m, "h": self.h, "t": self.t, "eps": self.eps, "beta": self.beta,
            "k": self.k, "chi": self.spec.chi, "gamma": self.gamma, "eps_tilde": self.eps_tilde,
            "r": self.r, "budget": self.budget, "nexp_bound": self.nexp_bound,
            "spec": self.spec.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_plan(m: int, h: float, t: float, eps: float, beta: float) -> CostPlan:
    """Pick k, gamma, r for target error eps and failure probability beta.

    eps_tilde depends on k through m h t k^-4k and k depends on eps_tilde, so k
    is first chosen from min(1, eps, beta), then refined until it stops moving.
    """
    if not (0 < eps <= 1 and 0 < beta <= 1):
        raise InvalidInputError("eps and beta must lie in (0, 1]")
    if m < 1 or not (h > 0 and t > 0):
        raise InvalidInputError("need m >= 1 and positive h, t")
    k = choose_k_opt(m, h, t, min(1.0, eps, beta))
    for _ in range(5):
        et = eps_tilde_for(k, m, h, t, eps, beta)
        k_next = choose_k_opt(m, h, t, et)
        if k_next == k:
            break
        k = k_next
    et = eps_tilde_for(k, m, h, t, eps, beta)
    spec = build_mpf_spec(k, k, choose_gamma(k, 0.5))
    if any(abs(c) > 2 for c in spec.coeffs):
        raise DomainError(f"coefficient magnitude above 2 in {spec.coeffs}")
    if sum((abs(c) for c in spec.coeffs[:-1]), Fraction(0)) > 1:
        raise DomainError("sum of |C_q| over q <= k exceeds 1")
    r = choose_r(k, m, h, t, et, beta)
    return CostPlan(k=k, gamma=spec.gamma, spec=spec, r=r, eps_tilde=et,
                    nexp_bound=nexp_bound(k, m, r), beta=beta, m=m, h=h, t=t, eps=eps)
