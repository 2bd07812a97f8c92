"""Dense complex linear algebra for desk-scale instances (at most 5 qubits)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InvalidInputError


def _herm_defect(H: np.ndarray) -> float:
    return float(np.max(np.abs(H - H.conj().T))) if H.size else 0.0


@dataclass(frozen=True, eq=False)
class TermList:
    """H = sum_j H_j with each term Hermitian and ||H_j|| <= h."""

    matrices: tuple[np.ndarray, ...]
    h: float
    n_qubits: int

    def __post_init__(self):
        dim = 2 ** self.n_qubits
        mats = []
        for j, H in enumerate(self.matrices):
            H = np.array(H, dtype=complex)
            if H.shape != (dim, dim):
                raise InvalidInputError(f"term {j + 1} has shape {H.shape}, expected {(dim, dim)}")
            if _herm_defect(H) > 1e-13 * max(1.0, self.h):
                raise InvalidInputError(f"term {j + 1} is not Hermitian")
            if spectral_norm(H) > self.h * (1 + 1e-12):
                raise InvalidInputError(f"term {j + 1} exceeds the norm bound h={self.h}")
            H.setflags(write=False)
            mats.append(H)
        if not mats:
            raise InvalidInputError("a TermList needs at least one term")
        object.__setattr__(self, "matrices", tuple(mats))

    @property
    def m(self) -> int:
        return len(self.matrices)

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    def hamiltonian(self) -> np.ndarray:
        return sum(self.matrices, np.zeros((self.dim, self.dim), dtype=complex))

    @cached_property
    def _eigs(self):
        return [np.linalg.eigh(H) for H in self.matrices]

    def term_exp(self, j: int, t: float) -> np.ndarray:
        """exp(-i H_j t) for the 0-based term index j."""
        w, v = self._eigs[j]
        return (v * np.exp(-1j * w * t)) @ v.conj().T

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "h": self.h,
            "terms": [[[[z.real, z.imag] for z in row] for row in H] for H in self.matrices],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TermList":
        mats = tuple(np.array([[complex(re, im) for re, im in row] for row in H]) for H in d["terms"])
        return cls(matrices=mats, h=float(d["h"]), n_qubits=int(d["n_qubits"]))

    @classmethod
    def from_json(cls, text: str) -> "TermList":
        return cls.from_dict(json.loads(text))


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value, by full SVD."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def herm_exp(H: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) through the eigendecomposition of a Hermitian H."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {H.shape}")
    if _herm_defect(H) > 1e-12 * max(1.0, spectral_norm(H)):
        raise InvalidInputError("herm_exp needs a Hermitian matrix")
    w, v = np.linalg.eigh((H + H.conj().T) / 2)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def unitarity_defect(U: np.ndarray) -> float:
    U = np.asarray(U)
    return spectral_norm(U.conj().T @ U - np.eye(U.shape[0]))


def random_term_list(n_qubits: int, m: int, h: float, seed: int) -> TermList:
    """Gaussian Hermitian terms, each rescaled to spectral norm exactly h."""
    if not 1 <= n_qubits <= 5:
        raise InvalidInputError(f"n_qubits must be in [1, 5], got {n_qubits}")
    if m < 1 or not h > 0:
        raise InvalidInputError("need m >= 1 and h > 0")
    rng = np.random.default_rng(seed)
    dim = 2 ** n_qubits
    mats = []
    for _ in range(m):
        X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        H = (X + X.conj().T) / 2
        H *= h / spectral_norm(H)
        mats.append((H + H.conj().T) / 2)
    return TermList(matrices=tuple(mats), h=float(h), n_qubits=n_qubits)


def exact_evolution(terms: TermList, t: float) -> np.ndarray:
    """U(t) = exp(-i H t) for the full Hamiltonian; the ground truth for every error."""
    return herm_exp(terms.hamiltonian(), t)


def mpf_integrators(spec, terms: TermList, t: float) -> list[np.ndarray]:
    """S_chi(t/l_q)^{l_q} for every repetition number of ``spec``."""
    from .suzuki import build_schi, evaluate

    out = []
    for ell in spec.ells:
        S = evaluate(build_schi(terms.m, spec.chi, t / ell), terms)
        out.append(np.linalg.matrix_power(S, ell))
    return out


def assemble_mpf_matrix(spec, terms: TermList, t: float) -> np.ndarray:
    """sum_q C_q S_chi(t/l_q)^{l_q} as an explicit (non-unitary) matrix."""
    ints = mpf_integrators(spec, terms, t)
    return sum(float(c) * S for c, S in zip(spec.coeffs, ints))


def basis_state(dim: int, index: int = 0) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def normalize(psi: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(psi)
    if n == 0:
        raise InvalidInputError("cannot normalize the zero vector")
    return psi / n


def fidelity_error(a: np.ndarray, b: np.ndarray) -> float:
    """1 - |<a|b>|^2 for normalized states (insensitive to global phase)."""
    overlap = abs(np.vdot(a, b)) ** 2
    return max(0.0, 1.0 - float(overlap))


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float], lo: float = 1e-10,
                     hi: float = 1e-3, min_points: int = 6) -> tuple[float, int]:
    """Least-squares slope of log y against log x, using only points with lo <= y <= hi.

    Returns (slope, number of points used).  Raises if fewer than ``min_points``
    fall inside the window.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = (ys >= lo) & (ys <= hi) & (xs > 0)
    n = int(keep.sum())
    if n < min_points:
        raise InvalidInputError(f"only {n} points inside [{lo:g}, {hi:g}], need {min_points}")
    slope = np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)[0]
    return float(slope), n
