# tests/test_fock_oracle.py
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import itertools
import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import DomainError, TruncationError
from app.fock_oracle import (
    FockSpace,
    FockState,
    bose_cap_for,
    fourth_moment_exact,
    mode_projection,
    one_body_density,
    onepdm_hamiltonian,
    pair_count_exact,
    quasifree_gibbs,
    quasifree_state,
    random_even_state,
    rel_entropy_exact,
    restrict_state,
    second_quantize,
    trace_distance,
)
from app.quasifree import OnePdm, gibbs_onepdm, number_distribution, pair_count_quasifree, random_onepdm, rel_entropy_quasifree
from app.statmech_core import Statistics
from app.suites.quasifree_checks import random_bose_hamiltonian

FERMI, BOSE = Statistics.FERMI, Statistics.BOSE
TIGHT_TAIL = 1e-12


@pytest.fixture
def rng():
    return np.random.default_rng(99)


def test_fock_space_limits():
    print("\n🧪 Testing FockSpace size limits")
    assert FockSpace(stats=FERMI, M=3).dimension == 8
    assert FockSpace(stats=BOSE, M=2, n_max=3).dimension == math.comb(5, 2)
    with pytest.raises(ValidationError):
        FockSpace(stats=FERMI, M=13)
    with pytest.raises(ValidationError):
        FockSpace(stats=BOSE, M=2)
    with pytest.raises(ValidationError):
        FockSpace(stats=BOSE, M=6, n_max=10)
    with pytest.raises(ValidationError):
        FockSpace(stats=FERMI, M=2, n_max=1)
    space = FockSpace(stats=BOSE, M=2, n_max=2)
    assert [n for n, _ in space.sector_slices()] == [0, 1, 2]
    assert space.index_of((0, 0)) == 0
    print("✅ FockSpace limits test passed!")


def test_second_quantized_spectrum_is_sum_of_subsets(rng):
    print("\n🧪 Testing Jordan-Wigner signs through the dΓ(h) spectrum")
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    h = 0.5 * (a + a.conj().T)
    eps = np.linalg.eigvalsh(h)
    expected = sorted(sum(subset) for r in range(4) for subset in itertools.combinations(eps, r))
    spectrum = np.linalg.eigvalsh(second_quantize(h, FockSpace(stats=FERMI, M=3)).toarray())
    assert np.allclose(spectrum, expected, atol=1e-12)
    with pytest.raises(DomainError):
        second_quantize(np.eye(2), FockSpace(stats=FERMI, M=3))
    print("✅ dΓ(h) spectrum test passed!")


def test_single_mode_gibbs_states():
    print("\n🧪 Testing single-mode Gibbs occupations")
    fermi = quasifree_gibbs(np.zeros((1, 1)), FockSpace(stats=FERMI, M=1))
    assert one_body_density(fermi).matrix[0, 0].real == pytest.approx(0.5, abs=1e-14)
    bose = quasifree_gibbs(np.array([[math.log(2.0)]]), FockSpace(stats=BOSE, M=1, n_max=40))
    assert one_body_density(bose).matrix[0, 0].real == pytest.approx(1.0, abs=1e-9)
    assert bose.tail_mass < 1e-11
    with pytest.raises(DomainError):
        quasifree_gibbs(np.array([[-0.1]]), FockSpace(stats=BOSE, M=1, n_max=5))
    with pytest.raises(TruncationError):
        quasifree_gibbs(np.array([[0.1]]), FockSpace(stats=BOSE, M=1, n_max=5))
    print("✅ single-mode Gibbs test passed!")


@pytest.mark.parametrize("M", [1, 3, 5])
def test_fermi_oracle_matches_quasifree_formulas(M, rng):
    print(f"\n🧪 Testing the Fermi Fock oracle on {M} modes")
    gamma = random_onepdm(M, FERMI, rng)
    state = quasifree_state(gamma)
    assert np.max(np.abs(one_body_density(state).matrix - gamma.matrix)) < 1e-10
    modes = list(range(0, M, 2))
    X = mode_projection(M, modes)
    assert pair_count_exact(state, modes) == pytest.approx(pair_count_quasifree(gamma, X), abs=1e-10)
    assert fourth_moment_exact(state, modes) == pytest.approx(number_distribution(gamma, X).pair_fourth_moment, abs=1e-9)
    print("✅ Fermi oracle test passed!")


@pytest.mark.parametrize("M", [1, 2, 3])
def test_bose_oracle_matches_quasifree_formulas(M, rng):
    print(f"\n🧪 Testing the Bose Fock oracle on {M} modes")
    h = random_bose_hamiltonian(M, rng)
    gamma = gibbs_onepdm(h, 1.0, BOSE)
    state = quasifree_state(gamma, tail_tolerance=TIGHT_TAIL)
    assert state.tail_mass <= TIGHT_TAIL
    assert np.max(np.abs(one_body_density(state).matrix - gamma.matrix)) < 1e-9
    modes = [0] if M == 1 else [0, M - 1]
    assert pair_count_exact(state, modes) == pytest.approx(pair_count_quasifree(gamma, mode_projection(M, modes)), abs=1e-9)
    print("✅ Bose oracle test passed!")


def test_bose_cap_for():
    print("\n🧪 Testing the Bose cap search")
    h = np.diag([2.0, 3.0])
    cap = bose_cap_for(h, 1e-10)
    state = quasifree_gibbs(h, FockSpace(stats=BOSE, M=2, n_max=cap), tail_tolerance=1e-10)
    assert state.tail_mass <= 1e-10
    with pytest.raises(TruncationError):
        quasifree_gibbs(h, FockSpace(stats=BOSE, M=2, n_max=cap - 1), tail_tolerance=1e-10)
    with pytest.raises(TruncationError):
        bose_cap_for(np.diag([0.01, 0.01, 0.01]), 1e-8)
    with pytest.raises(DomainError):
        bose_cap_for(np.diag([0.0, 1.0]))
    print("✅ Bose cap search test passed!")


def test_restriction_matches_submatrix(rng):
    print("\n🧪 Testing partial traces against one-particle submatrices")
    gamma = random_onepdm(4, FERMI, rng)
    state = quasifree_state(gamma)
    for keep in ([0], [1, 3], [0, 2, 3]):
        reduced = restrict_state(state, keep)
        assert reduced.space.M == len(keep)
        expected = gamma.matrix[np.ix_(keep, keep)]
        assert np.max(np.abs(one_body_density(reduced).matrix - expected)) < 1e-10
    assert restrict_state(state, range(4)) is state

    bose_gamma = gibbs_onepdm(random_bose_hamiltonian(2, rng), 1.0, BOSE)
    bose_state = quasifree_state(bose_gamma, tail_tolerance=TIGHT_TAIL)
    reduced = restrict_state(bose_state, [1])
    assert one_body_density(reduced).matrix[0, 0] == pytest.approx(bose_gamma.matrix[1, 1], abs=1e-9)
    print("✅ restriction test passed!")


def test_restriction_rejects_odd_fermion_states():
    print("\n🧪 Testing the parity guard of fermionic restriction")
    space = FockSpace(stats=FERMI, M=2)
    psi = np.zeros(4)
    psi[[space.index_of((0, 0)), space.index_of((1, 0))]] = 1.0 / math.sqrt(2.0)
    with pytest.raises(DomainError):
        restrict_state(FockState(space=space, rho=np.outer(psi, psi)), [0])
    with pytest.raises(DomainError):
        restrict_state(FockState(space=space, rho=np.eye(4) / 4), [])
    print("✅ parity guard test passed!")


def test_random_even_states_restrict_to_states(rng):
    print("\n🧪 Testing restriction of random even states")
    for stats, n_max in ((FERMI, None), (BOSE, 3)):
        space = FockSpace(stats=stats, M=3, n_max=n_max)
        state = random_even_state(space, rng)
        reduced = restrict_state(state, [0, 2])
        assert np.trace(reduced.rho).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(reduced.rho).min() >= -1e-12
        assert trace_distance(state, state) == 0.0
    print("✅ random even state test passed!")


def test_relative_entropy_exact_examples(caplog):
    print("\n🧪 Testing exact relative entropies")
    omega = quasifree_state(OnePdm(matrix=[0.5], stats=FERMI))
    gamma = quasifree_state(OnePdm(matrix=[0.25], stats=FERMI))
    assert rel_entropy_exact(omega, gamma) == pytest.approx(0.143841, abs=1e-6)

    space = FockSpace(stats=FERMI, M=1)
    mixed = FockState(space=space, rho=np.eye(2) / 2)
    pure = FockState(space=space, rho=np.diag([1.0, 0.0]))
    with caplog.at_level(logging.WARNING):
        assert rel_entropy_exact(mixed, pure) == math.inf
    assert "infinite" in caplog.text
    assert rel_entropy_exact(pure, mixed) == pytest.approx(math.log(2.0))
    with pytest.raises(DomainError):
        rel_entropy_exact(mixed, quasifree_state(OnePdm(matrix=[0.3, 0.4], stats=FERMI)))
    print("✅ exact relative entropy test passed!")


@pytest.mark.parametrize("stats", [FERMI, BOSE])
def test_relative_entropy_exact_matches_quasifree(stats, rng):
    print(f"\n🧪 Testing the quasi-free relative entropy formula against Fock space ({stats.value})")
    if stats is FERMI:
        omega, gamma = random_onepdm(3, stats, rng), random_onepdm(3, stats, rng)
        tail = None
    else:
        omega = gibbs_onepdm(random_bose_hamiltonian(2, rng), 1.0, stats)
        gamma = gibbs_onepdm(random_bose_hamiltonian(2, rng), 1.0, stats)
        tail = TIGHT_TAIL
    kwargs = {} if tail is None else {"tail_tolerance": tail}
    exact_omega = quasifree_state(omega, **kwargs)
    exact_gamma = quasifree_state(gamma, **kwargs)
    if stats is BOSE:
        # both states must live on the same truncated space
        space = FockSpace(stats=stats, M=2, n_max=max(exact_omega.space.n_max, exact_gamma.space.n_max))
        exact_omega = quasifree_gibbs(onepdm_hamiltonian(omega), space, tail)
        exact_gamma = quasifree_gibbs(onepdm_hamiltonian(gamma), space, tail)
    assert rel_entropy_exact(exact_omega, exact_gamma) == pytest.approx(rel_entropy_quasifree(omega, gamma), abs=1e-8)
    print("✅ relative entropy cross-check passed!")
