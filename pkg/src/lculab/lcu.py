"""Non-deterministic linear combinations of unitaries, simulated at the statevector level.

Ancilla qubits are never materialized.  A combination gadget is represented by
its Kraus branches: a mapping from the outcome string of its ancillas to the
system operator applied when that string is observed.  Combining two gadgets
with a fresh ancilla (prepare with V_kappa, control, un-prepare, measure) maps

    K[(a, b, 0)] = kappa/(kappa+1) [b=0] G[a] + s/(kappa+1)        [a=0] H[b]
    K[(a, b, 1)] = -sqrt(kappa)/(kappa+1) [b=0] G[a] + s sqrt(kappa)/(kappa+1) [a=0] H[b]

where s = -1 turns the addition into a subtraction.  Outcome strings list the
ancillas of the positive fold, then the negative fold, then the subtraction
ancilla; this is the same ordering the explicit circuit reference uses.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, UnsupportedError
from .exactcoeff import MpfSpec
from .numerics import TermList, exact_evolution, fidelity_error, mpf_integrators, spectral_norm
from .suzuki import build_schi

Kraus = dict  # tuple[int, ...] -> np.ndarray

UNITARY_TOL = 1e-10
CSV_COLUMNS = ["seed", "succeeded", "subtraction_attempts", "corrections", "addition_failures",
               "exponentials", "fidelity_error"]


def _check_unitary(U: np.ndarray, name: str) -> None:
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix")
    if spectral_norm(U.conj().T @ U - np.eye(U.shape[0])) > UNITARY_TOL:
        raise InvalidInputError(f"{name} is not unitary within {UNITARY_TOL:g}")


def _normalized(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


# --- single weighted pair ----------------------------------------------------


@dataclass
class PairOutcome:
    success: bool
    conditional_probability: float
    post_state: np.ndarray


def apply_weighted_pair(Ua, Ub, kappa: float, state, rng: np.random.Generator) -> PairOutcome:
    """One ancilla, one measurement: outcome 0 applies (kappa Ua + Ub)/(kappa+1).

    Pass ``-Ub`` to subtract.
    """
    _check_unitary(Ua, "Ua")
    _check_unitary(Ub, "Ub")
    if kappa < 0:
        raise InvalidInputError(f"kappa must be >= 0, got {kappa}")
    a = Ua @ state
    b = Ub @ state
    good = (kappa * a + b) / (kappa + 1)
    bad = math.sqrt(kappa) / (kappa + 1) * (b - a)
    p_good = float(np.vdot(good, good).real)
    if rng.random() < p_good:
        return PairOutcome(True, p_good, _normalized(good))
    return PairOutcome(False, 1 - p_good, _normalized(bad))


# --- gadget algebra -----------------------------------------------------------


def _leaf(U: np.ndarray) -> Kraus:
    return {(): np.asarray(U, dtype=complex)}


def _combine(G: Kraus, H: Kraus, kappa: float, sign: float = 1.0) -> Kraus:
    g_zero = (0,) * len(next(iter(G)))
    h_zero = (0,) * len(next(iter(H)))
    norm = kappa + 1
    root = math.sqrt(kappa)
    alpha = {0: (kappa / norm, sign / norm), 1: (-root / norm, sign * root / norm)}
    out: Kraus = {}
    for c in (0, 1):
        ag, ah = alpha[c]
        for a, Ka in G.items():
            key = a + h_zero + (c,)
            out[key] = out.get(key, 0) + ag * Ka
        for b, Kb in H.items():
            key = g_zero + b + (c,)
            out[key] = out.get(key, 0) + ah * Kb
    return out


def fold_kappas(weights: Sequence[float]) -> list[float]:
    """kappa_i = (w_1 + ... + w_i) / w_{i+1} for the left fold ((U1+U2)+U3)+..."""
    w = [float(x) for x in weights]
    return [sum(w[: i + 1]) / w[i + 1] for i in range(len(w) - 1)]


def fold_gadget(unitaries: Sequence[np.ndarray], weights: Sequence[float]) -> Kraus:
    if len(unitaries) == 0 or len(unitaries) != len(weights):
        raise InvalidInputError("need matching, non-empty unitaries and weights")
    if any(float(w) <= 0 for w in weights):
        raise InvalidInputError("positive combinations need strictly positive weights")
    gadget = _leaf(unitaries[0])
    for U, kap in zip(unitaries[1:], fold_kappas(weights)):
        gadget = _combine(gadget, _leaf(U), kap)
    return gadget


def split_signs(coeffs: Sequence[Fraction]) -> tuple[list[int], list[int]]:
    pos = [i for i, c in enumerate(coeffs) if c > 0]
    neg = [i for i, c in enumerate(coeffs) if c < 0]
    return pos, neg


def combination_gadget(unitaries: Sequence[np.ndarray], coeffs: Sequence[Fraction]) -> Kraus:
    """Full tree for sum_q C_q U_q: fold the positive and negative parts, then subtract."""
    pos, neg = split_signs(coeffs)
    if not pos:
        raise InvalidInputError("at least one coefficient must be positive")
    A = fold_gadget([unitaries[i] for i in pos], [coeffs[i] for i in pos])
    if not neg:
        return A
    B = fold_gadget([unitaries[i] for i in neg], [-coeffs[i] for i in neg])
    sigma_p = sum(Fraction(coeffs[i]) for i in pos)
    sigma_m = -sum(Fraction(coeffs[i]) for i in neg)
    return _combine(A, B, float(sigma_p / sigma_m), sign=-1.0)


def tree_kappas(coeffs: Sequence[Fraction]) -> list[float]:
    """kappa of every combination step, in outcome-string order."""
    pos, neg = split_signs(coeffs)
    out = fold_kappas([coeffs[i] for i in pos])
    if neg:
        out += fold_kappas([-coeffs[i] for i in neg])
        sp = sum(Fraction(coeffs[i]) for i in pos)
        sm = -sum(Fraction(coeffs[i]) for i in neg)
        out.append(float(sp / sm))
    return out


@dataclass
class Sample:
    key: tuple
    probability: float
    state: np.ndarray | None


def sample_gadget(gadget: Kraus, state: np.ndarray, rng: np.random.Generator) -> Sample:
    """Born-rule sample of all ancilla outcomes of a gadget (one uniform draw)."""
    keys = sorted(gadget)
    vecs = [gadget[key] @ state for key in keys]
    probs = np.array([np.vdot(v, v).real for v in vecs])
    u = rng.random() * probs.sum()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    idx = min(idx, len(keys) - 1)
    return Sample(keys[idx], float(probs[idx]), _normalized(vecs[idx]) if probs[idx] > 0 else None)


# --- positive combinations ----------------------------------------------------


@dataclass
class CombinationOutcome:
    success: bool
    state: np.ndarray | None
    path_probability: float
    steps_used: int
    failed_step: int | None = None


def apply_positive_combination(unitaries, weights, state, rng: np.random.Generator) -> CombinationOutcome:
    """Left-fold of weighted pairs; on success the state is prop. to sum_q w_q U_q |psi>."""
    for i, U in enumerate(unitaries):
        _check_unitary(U, f"unitary {i + 1}")
    gadget = fold_gadget(unitaries, weights)
    return _run_fold(gadget, state, rng)


def _run_fold(gadget: Kraus, state, rng) -> CombinationOutcome:
    s = sample_gadget(gadget, state, rng)
    steps = len(s.key)
    if any(s.key):
        return CombinationOutcome(False, s.state, s.probability, steps, failed_step=s.key.index(1))
    return CombinationOutcome(True, s.state, s.probability, steps)


# --- one multi-product step with correction -------------------------------------


@dataclass
class Budget:
    remaining: int


@dataclass
class StepOperators:
    """Everything a multi-product step needs that does not depend on the state."""

    spec: MpfSpec
    lam: float
    integrators: list
    inverse_integrators: list
    gadget: Kraus
    correction_weights: list
    correction_gadget: Kraus
    success_key: tuple
    subtraction_fail_key: tuple | None
    exps_per_attempt: int


def failure_weights(spec: MpfSpec) -> list[Fraction]:
    """Weights of the operator left behind by a failed subtraction.

    The failure branch is prop. to A + B (each part normalized by its own mass),
    i.e. weight C_q / Sigma_+ on positive terms and |C_q| / Sigma_- on negative
    ones.  This equals the |C_q| weighting only when kappa = 1.
    """
    sp, sm = spec.positive_mass, spec.negative_mass
    return [c / sp if c > 0 else -c / sm for c in spec.coeffs]


def exponentials_per_application(spec: MpfSpec, m: int) -> int:
    per_formula = 2 * m * 5 ** (spec.chi - 1)
    return per_formula * sum(spec.ells)


def step_operators(spec: MpfSpec, terms: TermList, lam: float) -> StepOperators:
    ints = mpf_integrators(spec, terms, lam)
    inv = mpf_integrators(spec, terms, -lam)
    gadget = combination_gadget(ints, spec.coeffs)
    n_bits = len(next(iter(gadget)))
    has_sub = spec.negative_mass > 0
    cw = failure_weights(spec) if has_sub else []
    return StepOperators(
        spec=spec,
        lam=lam,
        integrators=ints,
        inverse_integrators=inv,
        gadget=gadget,
        correction_weights=cw,
        correction_gadget=fold_gadget(inv, cw) if has_sub else {},
        success_key=(0,) * n_bits,
        subtraction_fail_key=(0,) * (n_bits - 1) + (1,) if has_sub else None,
        exps_per_attempt=exponentials_per_application(spec, terms.m),
    )


@dataclass
class StepOutcome:
    success: bool
    state: np.ndarray | None
    subtraction_attempts: int = 0
    corrections: int = 0
    addition_failures: int = 0
    exponentials: int = 0
    exhausted: bool = False
    aborted: bool = False


def apply_mpf_step(spec: MpfSpec, terms: TermList, lam: float, state, rng, budget: Budget,
                   ops: StepOperators | None = None, abort_on_addition_failure: bool = True) -> StepOutcome:
    """Attempt sum_q C_q S(lam/l_q)^{l_q} until it succeeds or the budget runs out.

    A failed subtraction leaves the state prop. to the failure operator F(lam);
    F(-lam), an all-positive combination, is applied to undo it and the step is
    retried.  Each subtraction attempt and each correction costs one budget unit.
    """
    if ops is None:
        ops = step_operators(spec, terms, lam)
    out = StepOutcome(success=False, state=state)
    psi = state
    while True:
        if budget.remaining <= 0:
            out.exhausted = True
            out.state = psi
            return out
        budget.remaining -= 1
        out.subtraction_attempts += 1
        out.exponentials += ops.exps_per_attempt

        good = ops.gadget[ops.success_key] @ psi
        p_good = float(np.vdot(good, good).real)
        if ops.subtraction_fail_key is not None:
            bad = ops.gadget[ops.subtraction_fail_key] @ psi
            p_bad = float(np.vdot(bad, bad).real)
        else:
            bad, p_bad = None, 0.0
        u = rng.random()
        if u < p_good:
            out.success = True
            out.state = _normalized(good)
            return out
        if u < p_good + p_bad:
            psi = _normalized(bad)
            if budget.remaining <= 0:
                out.exhausted = True
                out.state = psi
                return out
            budget.remaining -= 1
            out.corrections += 1
            out.exponentials += ops.exps_per_attempt
            fix = _run_fold(ops.correction_gadget, psi, rng)
            if not fix.success:
                out.addition_failures += 1
                if abort_on_addition_failure:
                    out.aborted = True
                    out.state = fix.state
                    return out
            psi = fix.state
            continue
        # some addition ancilla read 1
        out.addition_failures += 1
        rest = {k: K for k, K in ops.gadget.items() if k[:-1] != ops.success_key[:-1]}
        s = sample_gadget(rest, psi, rng)
        psi = s.state
        if abort_on_addition_failure:
            out.aborted = True
            out.state = psi
            return out


def branch_distribution(spec: MpfSpec, terms: TermList, lam: float, state) -> dict[tuple, float]:
    """Exact probability of every ancilla outcome string of one step (k <= 3)."""
    if spec.k > 3:
        raise UnsupportedError(f"exhaustive enumeration supports k <= 3, got k={spec.k}")
    gadget = combination_gadget(mpf_integrators(spec, terms, lam), spec.coeffs)
    return outcome_probabilities(gadget, state)


def outcome_probabilities(gadget: Kraus, state) -> dict[tuple, float]:
    out = {}
    for key in sorted(gadget):
        v = gadget[key] @ state
        out[key] = float(np.vdot(v, v).real)
    return out


# --- full evolution -------------------------------------------------------------


@dataclass
class ProtocolConfig:
    spec: MpfSpec
    r: int
    budget: int | None = None
    abort_on_addition_failure: bool = True

    def __post_init__(self):
        if self.r < 1:
            raise InvalidInputError(f"r must be >= 1, got {self.r}")
        if self.budget is None:
            self.budget = 5 * self.r
        if self.budget < self.r:
            raise InvalidInputError(f"budget {self.budget} is smaller than r={self.r}")


@dataclass
class TrialRecord:
    succeeded: bool
    subtraction_attempts: int
    corrections_applied: int
    addition_failures: int
    exponentials_consumed: int
    final_state: np.ndarray | None
    rng_seed: int
    fidelity_error: float | None = None
    steps_completed: int = 0
    failure_reason: str = ""

    def csv_row(self) -> list:
        fe = "" if self.fidelity_error is None else format(self.fidelity_error, ".17g")
        return [self.rng_seed, int(self.succeeded), self.subtraction_attempts, self.corrections_applied,
                self.addition_failures, self.exponentials_consumed, fe]


def simulate_evolution(terms: TermList, t: float, config: ProtocolConfig, seed: int,
                       psi0: np.ndarray | None = None, ops: StepOperators | None = None,
                       target: np.ndarray | None = None) -> TrialRecord:
    """r sequential multi-product steps of length t/r sharing one attempt budget."""
    rng = np.random.default_rng(seed)
    if psi0 is None:
        psi0 = np.zeros(terms.dim, dtype=complex)
        psi0[0] = 1.0
    lam = t / config.r
    if ops is None:
        ops = step_operators(config.spec, terms, lam)
    budget = Budget(config.budget)
    rec = TrialRecord(False, 0, 0, 0, 0, None, seed)
    psi = psi0
    for step in range(config.r):
        res = apply_mpf_step(config.spec, terms, lam, psi, rng, budget, ops=ops,
                             abort_on_addition_failure=config.abort_on_addition_failure)
        rec.subtraction_attempts += res.subtraction_attempts
        rec.corrections_applied += res.corrections
        rec.addition_failures += res.addition_failures
        rec.exponentials_consumed += res.exponentials
        if not res.success:
            rec.failure_reason = "budget" if res.exhausted else "addition"
            return rec
        psi = res.state
        rec.steps_completed = step + 1
    rec.succeeded = True
    rec.final_state = psi
    if target is None:
        target = exact_evolution(terms, t) @ psi0
    rec.fidelity_error = fidelity_error(target, psi)
    return rec


def campaign_threads() -> int:
    try:
        return max(1, int(os.environ.get("LCULAB_THREADS", "1")))
    except ValueError:
        return 1


def run_campaign(terms: TermList, t: float, config: ProtocolConfig, n_trials: int, base_seed: int,
                 psi0: np.ndarray | None = None, threads: int | None = None) -> list[TrialRecord]:
    """Independent trials with seeds base_seed + i, returned sorted by seed."""
    lam = t / config.r
    ops = step_operators(config.spec, terms, lam)
    if psi0 is None:
        psi0 = np.zeros(terms.dim, dtype=complex)
        psi0[0] = 1.0
    target = exact_evolution(terms, t) @ psi0

    def one(i):
        return simulate_evolution(terms, t, config, base_seed + i, psi0=psi0, ops=ops, target=target)

    threads = threads or campaign_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, range(n_trials)))
    else:
        records = [one(i) for i in range(n_trials)]
    return sorted(records, key=lambda r: r.rng_seed)


def write_trials_csv(records: Sequence[TrialRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow(rec.csv_row())


def max_pairwise_distance(unitaries: Sequence[np.ndarray]) -> float:
    """Exact Delta = max_{q != q'} ||U_q - U_q'||."""
    best = 0.0
    for i in range(len(unitaries)):
        for j in range(i + 1, len(unitaries)):
            best = max(best, spectral_norm(unitaries[i] - unitaries[j]))
    return best
