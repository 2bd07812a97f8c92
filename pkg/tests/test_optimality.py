import math
from fractions import Fraction

import numpy as np
import pytest

from lculab.errors import InvalidInputError, UnsupportedError
from lculab.exactcoeff import MpfSpec, build_mpf_spec, choose_gamma
from lculab.lcu import branch_distribution
from lculab.numerics import mpf_integrators, random_state, random_term_list
from lculab.optimality import (GeneralProtocol, explicit_circuit_reference, fold_success_probability,
                               general_circuit_success, optimal_amplitudes, optimal_protocol,
                               random_feasible_protocol, success_upper_bound, total_variation)

RICH = [Fraction(-1, 3), Fraction(4, 3)]


def haar(dim, rng):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / abs(np.diag(r)))


def test_optimal_amplitudes_examples():
    amps = optimal_amplitudes([1])
    assert np.allclose(amps.prep, [1]) and amps.K == 1
    amps = optimal_amplitudes(RICH)
    np.testing.assert_allclose(abs(amps.prep) ** 2, [0.2, 0.8], atol=1e-15)
    for a, b, c in zip(amps.prep, amps.measure, RICH):
        assert abs(a * b - amps.K * float(c)) < 1e-14
    with pytest.raises(InvalidInputError):
        optimal_amplitudes([0, 0])


def test_success_upper_bound():
    # kappa = 3
    assert success_upper_bound([Fraction(1, 2), Fraction(-1, 2), Fraction(1)]) == pytest.approx(1 / 4)
    # kappa = 2
    assert success_upper_bound([1, -1, 1]) == pytest.approx(1 / 9)
    assert success_upper_bound(RICH) == pytest.approx(9 / 25, abs=1e-16)
    assert success_upper_bound([0.3, 0.7]) == 1.0


def test_kappa_one_means_no_success():
    assert success_upper_bound([Fraction(1), Fraction(-1, 2), Fraction(-1, 2)]) == 0.0


def test_general_success_identity():
    I = np.eye(2)
    psi = np.array([1, 0], dtype=complex)
    assert abs(general_circuit_success(optimal_protocol([0.2, 0.8], [I, I]), psi) - 1) < 1e-14
    assert abs(general_circuit_success(optimal_protocol(RICH, [I, I]), psi) - 0.36) < 1e-14


def test_padding_to_power_of_two():
    p = optimal_protocol([0.2, 0.3, 0.5], [np.eye(2)] * 3)
    assert len(p.prep) == 4 and p.n_ancilla_qubits == 2
    assert p.prep[3] == 0 and p.measure[3] == 0
    with pytest.raises(InvalidInputError):
        GeneralProtocol(np.array([1, 1]), np.array([1, 0]), [np.eye(2)] * 2)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bound_never_exceeded_by_random_protocols(k):
    rng = np.random.default_rng(k)
    coeffs = build_mpf_spec(k, 1, choose_gamma(k, 0.5)).coeffs
    bound = success_upper_bound(coeffs)
    U = haar(4, rng)
    for _ in range(100):
        psi = random_state(4, rng)
        s = general_circuit_success(random_feasible_protocol(coeffs, [U] * len(coeffs), rng), psi)
        assert s <= bound + 1e-12
        opt = general_circuit_success(optimal_protocol(coeffs, [U] * len(coeffs)), psi)
        assert abs(opt - bound) < 1e-12


def test_explicit_reference_examples():
    Z = np.diag([1.0, -1.0])
    plus = np.array([1, 1]) / math.sqrt(2)
    dist = explicit_circuit_reference([1, 1], [Z, Z], plus)
    assert abs(dist[(0,)] - 1) < 1e-14
    dist = explicit_circuit_reference([1, 1], [np.eye(2), Z], plus)
    assert abs(dist[(0,)] - 0.5) < 1e-14
    assert explicit_circuit_reference([1], [Z], plus) == pytest.approx({(): 1.0})


def test_explicit_reference_limits():
    U = [np.eye(2)] * 5
    with pytest.raises(UnsupportedError):
        explicit_circuit_reference([1] * 5, U, np.array([1, 0]))
    with pytest.raises(InvalidInputError):
        explicit_circuit_reference([1, 1], U[:2], np.array([1, 0]), kappas=[1.0, 2.0])


@pytest.mark.parametrize("k,chi", [(1, 1), (2, 1), (2, 2), (3, 1), (3, 3)])
def test_cross_module_agreement(k, chi):
    terms = random_term_list(2, 2, 1.0, seed=13)
    spec = build_mpf_spec(k, chi, math.log(k + 1) / (k + 1))
    psi = random_state(4, np.random.default_rng(k))
    for lam in (0.1, 0.8):
        a = branch_distribution(spec, terms, lam, psi)
        b = explicit_circuit_reference(spec.coeffs, mpf_integrators(spec, terms, lam), psi)
        assert abs(sum(b.values()) - 1) < 1e-12
        assert total_variation(a, b) < 1e-10


def test_fold_saturates_bound_for_identical_unitaries():
    rng = np.random.default_rng(3)
    for k in (1, 2, 3):
        coeffs = build_mpf_spec(k, 1, choose_gamma(k, 0.5)).coeffs
        U = haar(4, rng)
        psi = random_state(4, rng)
        p = fold_success_probability(coeffs, [U] * (k + 1), psi)
        assert abs(p - success_upper_bound(coeffs)) < 1e-12
