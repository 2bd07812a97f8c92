"""Lie-Trotter-Suzuki product formulas as explicit exponential schedules."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class ExpStep:
    """One factor exp(-i H_j * duration); ``term_index`` is 1-based."""

    term_index: int
    duration: float


@dataclass(frozen=True)
class ProductFormula:
    steps: tuple[ExpStep, ...]
    chi: int
    base_time: float
    m: int

    def __len__(self):
        return len(self.steps)

    def is_palindromic(self, atol: float = 1e-14) -> bool:
        n = len(self.steps)
        for a, b in zip(self.steps, reversed(self.steps)):
            if a.term_index != b.term_index or abs(a.duration - b.duration) > atol * max(1.0, abs(self.base_time)):
                return False
        return n > 0 or self.base_time == 0

    def duration_sums(self) -> np.ndarray:
        """Signed total duration spent on each term (length m)."""
        sums = np.zeros(self.m)
        for s in self.steps:
            sums[s.term_index - 1] += s.duration
        return sums

    def to_dict(self) -> dict:
        return {
            "chi": self.chi,
            "base_time": self.base_time,
            "m": self.m,
            "steps": [{"term_index": s.term_index, "duration": s.duration} for s in self.steps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ProductFormula":
        steps = tuple(ExpStep(int(s["term_index"]), float(s["duration"])) for s in d["steps"])
        m = int(d.get("m", max((s.term_index for s in steps), default=0)))
        return cls(steps=steps, chi=int(d["chi"]), base_time=float(d["base_time"]), m=m)

    @classmethod
    def from_json(cls, text: str) -> "ProductFormula":
        return cls.from_dict(json.loads(text))


def suzuki_fraction(p: int) -> float:
    """s_p = 1 / (4 - 4^(1/(2p+1)))."""
    if p < 1:
        raise InvalidInputError(f"p must be a positive integer, got {p}")
    return 1.0 / (4.0 - 4.0 ** (1.0 / (2 * p + 1)))


def _s1_steps(m: int, t: float) -> list[ExpStep]:
    half = t / 2
    return [ExpStep(j, half) for j in range(1, m + 1)] + [ExpStep(j, half) for j in range(m, 0, -1)]


def _schi_steps(m: int, chi: int, t: float) -> list[ExpStep]:
    if chi == 1:
        return _s1_steps(m, t)
    s = suzuki_fraction(chi - 1)
    outer = _schi_steps(m, chi - 1, s * t)
    middle = _schi_steps(m, chi - 1, (1 - 4 * s) * t)
    return outer + outer + middle + outer + outer


def build_s1(m: int, t: float) -> ProductFormula:
    """Symmetric second-order formula: forward sweep then backward sweep, each with t/2.

    Adjacent exponentials of the same term are deliberately left unmerged.
    """
    return build_schi(m, 1, t)


def build_schi(m: int, chi: int, t: float) -> ProductFormula:
    if m < 1:
        raise InvalidInputError(f"need at least one term, got m={m}")
    if chi < 1:
        raise InvalidInputError(f"chi must be >= 1, got {chi}")
    return ProductFormula(steps=tuple(_schi_steps(m, chi, float(t))), chi=chi, base_time=float(t), m=m)


def power(formula: ProductFormula, p: int) -> ProductFormula:
    """The schedule repeated p times; base_time becomes p times the original."""
    if p < 1:
        raise InvalidInputError(f"p must be >= 1, got {p}")
    return ProductFormula(steps=formula.steps * p, chi=formula.chi,
                          base_time=formula.base_time * p, m=formula.m)


def merge_adjacent(formula: ProductFormula) -> ProductFormula:
    """Fuse neighbouring exponentials of the same term.

    Not applied anywhere by default: exponential counts are reported unmerged.
    """
    merged: list[ExpStep] = []
    for s in formula.steps:
        if merged and merged[-1].term_index == s.term_index:
            merged[-1] = ExpStep(s.term_index, merged[-1].duration + s.duration)
        else:
            merged.append(s)
    return ProductFormula(steps=tuple(merged), chi=formula.chi, base_time=formula.base_time, m=formula.m)


def max_rescale_ratio(formula: ProductFormula, p: int = 1) -> float:
    """Largest |duration| relative to the per-repetition time base_time/p."""
    if formula.base_time == 0:
        raise InvalidInputError("ratio undefined for zero base time")
    unit = abs(formula.base_time) / p
    return max(abs(s.duration) for s in formula.steps) / unit


def evaluate(formula: ProductFormula | Iterable[ExpStep], terms) -> np.ndarray:
    """Ordered product of the schedule's exponentials (first step leftmost)."""
    steps = formula.steps if isinstance(formula, ProductFormula) else tuple(formula)
    dim = terms.dim
    out = np.eye(dim, dtype=complex)
    cache: dict[tuple[int, float], np.ndarray] = {}
    for s in steps:
        if not 1 <= s.term_index <= terms.m:
            raise InvalidInputError(f"term index {s.term_index} outside 1..{terms.m}")
        key = (s.term_index, s.duration)
        mat = cache.get(key)
        if mat is None:
            mat = cache[key] = terms.term_exp(s.term_index - 1, s.duration)
        out = out @ mat
    return out
