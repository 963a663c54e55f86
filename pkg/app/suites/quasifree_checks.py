import logging

import numpy as np
from scipy.stats import unitary_group

from app.fock_oracle import (
    fourth_moment_exact,
    gibbs_space,
    mode_projection,
    one_body_density,
    pair_count_exact,
    quasifree_gibbs,
    quasifree_state,
)
from app.parallel import ordered_map
from app.quasifree import (
    apply_eta_cutoff,
    build_eta,
    fourth_moment_bound,
    gibbs_onepdm,
    number_distribution,
    pair_count_quasifree,
    periodic_gamma0,
    random_onepdm,
)
from app.reports import SweepReport, report_from_records
from app.statmech_core import Statistics, density_from_fugacity, solve_fugacity

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-9
BOSE_ORACLE_TAIL = 1e-12


def random_bose_hamiltonian(M: int, rng: np.random.Generator) -> np.ndarray:
    """Positive one-particle Hamiltonian with spectrum in (2, 4), keeping the Fock cap small."""
    eps = rng.uniform(2.0, 4.0, size=M)
    if M == 1:
        return np.diag(eps).astype(complex)
    v = unitary_group.rvs(M, random_state=rng)
    h = (v * eps) @ v.conj().T
    return 0.5 * (h + h.conj().T)


def _random_modes(M: int, rng: np.random.Generator) -> list[int]:
    size = int(rng.integers(1, M + 1))
    return sorted(int(i) for i in rng.choice(M, size=size, replace=False))


def _oracle_record(gamma, state, modes) -> dict:
    X = mode_projection(gamma.dim, modes)
    quasifree = pair_count_quasifree(gamma, X)
    exact = pair_count_exact(state, modes)
    law = number_distribution(gamma, X)
    fourth = fourth_moment_exact(state, modes)
    bound = fourth_moment_bound(float(np.trace(X @ gamma.matrix).real), gamma.stats)
    extracted = one_body_density(state)
    gaps = {
        "pair_count": abs(quasifree - exact),
        "count_law": abs(law.factorial_moment(2) - exact),
        "one_body": float(np.max(np.abs(extracted.matrix - gamma.matrix))),
    }
    tolerance = ORACLE_TOLERANCE * (1.0 + abs(exact)) + state.tail_mass
    # the capped Bose state misses weight at counts above n_max, which n^4 amplifies
    cap = state.space.n_max or 0
    fourth_gap = abs(law.pair_fourth_moment - fourth)
    fourth_allowance = ORACLE_TOLERANCE * (1.0 + fourth) + state.tail_mass * (cap + 2) ** 4
    return {
        "stats": gamma.stats.value,
        "M": gamma.dim,
        "modes": modes,
        "pair_count": exact,
        "fourth_moment": fourth,
        "fourth_moment_bound": bound,
        "gaps": gaps,
        "fourth_moment_gap": fourth_gap,
        "margin": min(tolerance - max(gaps.values()), fourth_allowance - fourth_gap, bound - fourth),
    }


def _fermi_instance(rng: np.random.Generator) -> dict:
    M = int(rng.integers(1, 7))
    gamma = random_onepdm(M, Statistics.FERMI, rng)
    return _oracle_record(gamma, quasifree_state(gamma), _random_modes(M, rng))


def _bose_instance(rng: np.random.Generator) -> dict:
    M = int(rng.integers(1, 4))
    h = random_bose_hamiltonian(M, rng)
    state = quasifree_gibbs(h, gibbs_space(h, Statistics.BOSE, BOSE_ORACLE_TAIL), BOSE_ORACLE_TAIL)
    return _oracle_record(gibbs_onepdm(h, 1.0, Statistics.BOSE), state, _random_modes(M, rng))


def _eta_report() -> SweepReport:
    eta = build_eta()
    k = np.linspace(0.0, 60.0, 601)
    transform = eta.fourier(k)
    records = [
        {"check": "origin", "value": float(eta(0.0)), "margin": 1e-14 - abs(float(eta(0.0)) - 1.0)},
        {"check": "support", "value": float(eta(1.0)), "margin": -abs(float(eta(1.0)))},
        {"check": "positivity", "value": float(transform.min()), "margin": float(transform.min() / transform[0]) + 1e-8},
    ]
    coarse, fine = eta.fourth_difference(0.05), eta.fourth_difference(0.025)
    records.append({"check": "fourth_difference", "value": fine, "margin": 0.1 - abs(coarse / fine - 1.0)})
    return report_from_records("eta_construction", records, details={"remainder_constant": eta.remainder_constant})


def _periodic_report() -> SweepReport:
    records = []
    state = solve_fugacity(1.0, density_from_fugacity(1.0, 0.5, 1, Statistics.BOSE), 1, Statistics.BOSE)
    gamma0 = periodic_gamma0(20.0, None, state)
    gap = abs(gamma0.mean_density / state.rho - 1.0)
    records.append({"check": "riemann_density", "L": 20.0, "relative_gap": gap, "margin": 0.01 - gap})

    fermi = solve_fugacity(1.0, 0.1, 1, Statistics.FERMI)
    small = periodic_gamma0(8.0, None, fermi)
    cut = apply_eta_cutoff(small, build_eta(), 3.0)
    records.append({"check": "cutoff_positivity", "value": float(cut.eigenvalues().min()), "margin": float(cut.eigenvalues().min()) + 1e-10})
    trace_gap = abs(cut.trace - small.trace) / small.trace
    records.append({"check": "cutoff_trace", "value": trace_gap, "margin": 1e-10 - trace_gap})

    size = 2 * cut.cutoff + 1
    offsets = np.array([[a, b, 0] for a in range(0, size // 2 + 1, 3) for b in (0, 2)]) * small.L / size
    before = np.abs(small.kernel(offsets))
    after = np.abs(cut.kernel(offsets))
    records.append({"check": "kernel_domination", "margin": float(np.min(before - after)) + 1e-12})
    far = np.linalg.norm(offsets, axis=1) >= 3.0
    records.append({"check": "kernel_support", "margin": 1e-12 - float(np.max(after[far], initial=0.0))})
    return report_from_records("periodic_cutoff", records)


def run_quasifree_suite(seeds: np.random.SeedSequence, instances: float = 1.0, workers: int | None = None) -> list[SweepReport]:
    fermi_seed, bose_seed = seeds.spawn(2)
    fermi_rngs = [np.random.default_rng(s) for s in fermi_seed.spawn(max(1, round(100 * instances)))]
    bose_rngs = [np.random.default_rng(s) for s in bose_seed.spawn(max(1, round(50 * instances)))]
    reports = [
        report_from_records("fock_oracle_fermi", ordered_map(_fermi_instance, fermi_rngs, workers)),
        report_from_records("fock_oracle_bose", ordered_map(_bose_instance, bose_rngs, workers)),
        _eta_report(),
        _periodic_report(),
    ]
    logger.info(f"✅ Quasi-free suite finished with {sum(r.violations for r in reports)} violations")
    return reports
