"""Multi-product formula Hamiltonian simulation via non-deterministic linear combinations of unitaries."""

from .exactcoeff import KAPPA_INF, MpfSpec, build_mpf_spec, choose_gamma, coefficients_general, critical_gamma
from .numerics import TermList, random_term_list

__version__ = "0.1.0"

__all__ = [
    "KAPPA_INF",
    "MpfSpec",
    "TermList",
    "build_mpf_spec",
    "choose_gamma",
    "coefficients_general",
    "critical_gamma",
    "random_term_list",
]
