"""General prepare/measure LCU circuits and the ((kappa-1)/(kappa+1))^2 success ceiling.

Only the first column of the ancilla preparation A and the first row of the
measurement B matter for the designated outcome, so only those vectors are kept.
Any normalized vector can be completed to a unitary (Gram-Schmidt), so nothing
is lost by not materializing the rest.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, UnsupportedError
from .exactcoeff import KAPPA_INF, kappa

MAX_ANCILLAS = 3


def _pad_length(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@dataclass
class GeneralProtocol:
    """Ancilla prep column ``prep`` (A_{m,0}), measurement row ``measure`` (B_{0,m})."""

    prep: np.ndarray
    measure: np.ndarray
    unitaries: list

    def __post_init__(self):
        a = np.asarray(self.prep, dtype=complex)
        b = np.asarray(self.measure, dtype=complex)
        if a.shape != b.shape or a.ndim != 1:
            raise InvalidInputError("prep and measure must be vectors of equal length")
        if len(self.unitaries) > len(a):
            raise InvalidInputError("more unitaries than ancilla slots")
        for name, v in (("prep", a), ("measure", b)):
            if abs(np.linalg.norm(v) - 1) > 1e-12:
                raise InvalidInputError(f"{name} vector is not normalized")
        # zero-pad to a power of two; padded slots carry identity and zero weight
        n = _pad_length(len(a))
        dim = np.asarray(self.unitaries[0]).shape[0]
        self.prep = np.concatenate([a, np.zeros(n - len(a), dtype=complex)])
        self.measure = np.concatenate([b, np.zeros(n - len(b), dtype=complex)])
        self.unitaries = list(self.unitaries) + [np.eye(dim, dtype=complex)] * (n - len(self.unitaries))

    @property
    def n_ancilla_qubits(self) -> int:
        return int(math.log2(len(self.prep)))


@dataclass(frozen=True)
class OptimalAmplitudes:
    prep: np.ndarray
    measure: np.ndarray
    K: float


def optimal_amplitudes(coeffs: Sequence) -> OptimalAmplitudes:
    """a_m = b_m = sqrt(C_m) (principal branch), normalized; then b_m a_m = K C_m."""
    c = [float(x) for x in coeffs]
    total = sum(abs(x) for x in c)
    if total == 0:
        raise InvalidInputError("coefficients are all zero")
    a = np.array([cmath.sqrt(x) for x in c], dtype=complex) / math.sqrt(total)
    return OptimalAmplitudes(prep=a, measure=a.copy(), K=1 / total)


def optimal_protocol(coeffs: Sequence, unitaries: Sequence[np.ndarray]) -> GeneralProtocol:
    amps = optimal_amplitudes(coeffs)
    return GeneralProtocol(amps.prep, amps.measure, list(unitaries))


def random_feasible_protocol(coeffs: Sequence, unitaries: Sequence[np.ndarray],
                             rng: np.random.Generator) -> GeneralProtocol:
    """Random prep column, with the measure row forced to satisfy b_m a_m = K C_m."""
    c = np.array([float(x) for x in coeffs])
    if not np.any(c):
        raise InvalidInputError("coefficients are all zero")
    a = rng.normal(size=len(c)) + 1j * rng.normal(size=len(c))
    a /= np.linalg.norm(a)
    b = c / a
    b /= np.linalg.norm(b)
    return GeneralProtocol(a, b, list(unitaries))


def general_circuit_success(protocol: GeneralProtocol, state) -> float:
    """||sum_m B_{0,m} A_{m,0} U_m |psi>||^2."""
    out = sum(bm * am * (U @ state) for am, bm, U in zip(protocol.prep, protocol.measure, protocol.unitaries))
    return float(np.vdot(out, out).real)


def success_upper_bound(coeffs: Sequence) -> float:
    kap = kappa([Fraction(c) for c in coeffs])
    if kap is KAPPA_INF:
        return 1.0
    kap = Fraction(kap)
    return float(((kap - 1) / (kap + 1)) ** 2)


# --- explicit ancilla register -----------------------------------------------------


def _v_kappa(kap: float) -> np.ndarray:
    c = 1 / math.sqrt(kap + 1)
    s = math.sqrt(kap) * c
    return np.array([[s, -c], [c, s]], dtype=complex)


def explicit_circuit_reference(weights: Sequence, unitaries: Sequence[np.ndarray], state,
                               kappas: Sequence[float] | None = None) -> dict[tuple, float]:
    """Joint ancilla outcome distribution of the fold/subtraction tree, by brute force.

    The whole (ancilla x system) statevector is evolved through V, controlled
    unitaries and V^dagger for every combination step.  Ancilla order (most
    significant first): positive fold steps, negative fold steps, subtraction.
    """
    w = [Fraction(x) for x in weights]
    if len(w) != len(unitaries) or not w:
        raise InvalidInputError("need matching, non-empty weights and unitaries")
    pos = [i for i, x in enumerate(w) if x > 0]
    neg = [i for i, x in enumerate(w) if x < 0]
    if not pos or len(pos) + len(neg) != len(w):
        raise InvalidInputError("weights must be non-zero with at least one positive")
    n_anc = (len(pos) - 1) + (len(neg) - 1 + 1 if neg else 0)
    if n_anc > MAX_ANCILLAS:
        raise UnsupportedError(f"{n_anc} ancillas requested; the reference handles at most {MAX_ANCILLAS}")

    if kappas is None:
        def ratios(ws):
            return [float(sum(ws[: i + 1]) / ws[i + 1]) for i in range(len(ws) - 1)]
        kappas = ratios([w[i] for i in pos])
        if neg:
            kappas += ratios([-w[i] for i in neg])
            kappas.append(float(sum(w[i] for i in pos) / -sum(w[i] for i in neg)))
    kappas = list(kappas)
    if len(kappas) != n_anc:
        raise InvalidInputError(f"expected {n_anc} kappas, got {len(kappas)}")

    dim = np.asarray(unitaries[0]).shape[0]
    A = 2 ** n_anc
    eye_sys = np.eye(dim)

    def on_anc(op2, j):
        return np.kron(np.kron(np.kron(np.eye(2 ** j), op2), np.eye(2 ** (n_anc - j - 1))), eye_sys)

    def on_sys(U):
        return np.kron(np.eye(A), np.asarray(U, dtype=complex))

    P0 = np.diag([1.0, 0.0])
    P1 = np.diag([0.0, 1.0])
    slots = iter(range(n_anc))
    ks = iter(kappas)

    def pair(L, R, sign):
        j, kap = next(slots), next(ks)
        V = on_anc(_v_kappa(kap), j)
        return V.conj().T @ (on_anc(P0, j) @ L + sign * on_anc(P1, j) @ R) @ V

    def fold(idx):
        circ = on_sys(unitaries[idx[0]])
        for i in idx[1:]:
            circ = pair(circ, on_sys(unitaries[i]), 1.0)
        return circ

    circ = fold(pos)
    if neg:
        circ = pair(circ, fold(neg), -1.0)

    full = np.zeros(A * dim, dtype=complex)
    full[:dim] = np.asarray(state, dtype=complex)
    out_vec = (circ @ full).reshape(A, dim)
    probs = np.sum(np.abs(out_vec) ** 2, axis=1)
    return {tuple(int(bit) for bit in format(i, f"0{n_anc}b")) if n_anc else (): float(p)
            for i, p in enumerate(probs)}


def fold_success_probability(coeffs: Sequence, unitaries: Sequence[np.ndarray], state) -> float:
    """Probability that every ancilla of the fold/subtraction tree reads 0."""
    dist = explicit_circuit_reference(coeffs, unitaries, state)
    return dist[(0,) * len(next(iter(dist)))]


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
