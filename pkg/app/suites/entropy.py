import logging
import math

import numpy as np
from scipy import linalg

from app.fock_oracle import (
    FockSpace,
    bose_cap_for,
    one_body_density,
    quasifree_gibbs,
    quasifree_state,
    random_even_state,
    rel_entropy_exact,
    restrict_state,
    trace_distance,
)
from app.parallel import ordered_map
from app.quasifree import (
    OnePdm,
    free_energy_identity_check,
    gibbs_onepdm,
    random_onepdm,
    random_projection,
    rel_entropy_quasifree,
)
from app.reports import SweepReport, report_from_records
from app.statmech_core import Statistics
from app.suites.quasifree_checks import BOSE_ORACLE_TAIL, random_bose_hamiltonian

logger = logging.getLogger(__name__)

AGREEMENT_TOLERANCE = 1e-9


def _pinsker(s: float, distance: float) -> dict:
    best = s / distance**2 if distance > 0 else math.inf
    return {"trace_distance": distance, "measured_constant": best, "pinsker_margin": s - 0.5 * distance**2}


def _fermi_pair(rng: np.random.Generator) -> dict:
    M = int(rng.integers(1, 5))
    omega = random_onepdm(M, Statistics.FERMI, rng)
    gamma = random_onepdm(M, Statistics.FERMI, rng)
    first, second = quasifree_state(omega), quasifree_state(gamma)
    one_body = rel_entropy_quasifree(omega, gamma)
    exact = rel_entropy_exact(first, second)
    pinsker = _pinsker(exact, trace_distance(first, second))
    gap = abs(one_body - exact)
    return {
        "stats": "fermi",
        "M": M,
        "quasifree": one_body,
        "exact": exact,
        **pinsker,
        "margin": min(AGREEMENT_TOLERANCE - gap, pinsker["pinsker_margin"]),
    }


def _bose_pair(rng: np.random.Generator) -> dict:
    M = int(rng.integers(1, 4))
    h1, h2 = random_bose_hamiltonian(M, rng), random_bose_hamiltonian(M, rng)
    space = FockSpace(
        stats=Statistics.BOSE, M=M, n_max=max(bose_cap_for(h, BOSE_ORACLE_TAIL) for h in (h1, h2))
    )
    first = quasifree_gibbs(h1, space, BOSE_ORACLE_TAIL)
    second = quasifree_gibbs(h2, space, BOSE_ORACLE_TAIL)
    one_body = rel_entropy_quasifree(gibbs_onepdm(h1, 1.0, Statistics.BOSE), gibbs_onepdm(h2, 1.0, Statistics.BOSE))
    exact = rel_entropy_exact(first, second)
    pinsker = _pinsker(exact, trace_distance(first, second))
    gap = abs(one_body - exact)
    return {
        "stats": "bose",
        "M": M,
        "quasifree": one_body,
        "exact": exact,
        **pinsker,
        "margin": min(AGREEMENT_TOLERANCE * (1.0 + exact) - gap, pinsker["pinsker_margin"]),
    }


def _monotonicity(rng: np.random.Generator) -> dict:
    stats = Statistics.FERMI if rng.random() < 0.5 else Statistics.BOSE
    M = int(rng.integers(2, 6))
    omega, gamma = random_onepdm(M, stats, rng), random_onepdm(M, stats, rng)
    X = random_projection(M, int(rng.integers(1, M)), rng)
    full = rel_entropy_quasifree(omega, gamma)
    restricted = rel_entropy_quasifree(omega.restrict(X), gamma.restrict(X))
    return {"stats": stats.value, "M": M, "full": full, "restricted": restricted, "margin": full - restricted}


def _midpoint_gap(rng: np.random.Generator, stats: Statistics) -> dict:
    """Midpoint gap of γ -> S(ω||γ), nonnegative for fermions only."""
    M = int(rng.integers(1, 6))
    omega, first, second = (random_onepdm(M, stats, rng) for _ in range(3))
    midpoint = OnePdm(matrix=0.5 * (first.matrix + second.matrix), stats=stats)
    lhs = rel_entropy_quasifree(omega, midpoint)
    rhs = 0.5 * rel_entropy_quasifree(omega, first) + 0.5 * rel_entropy_quasifree(omega, second)
    return {"stats": stats.value, "M": M, "midpoint": lhs, "average": rhs, "margin": rhs - lhs}


def _convexity(rng: np.random.Generator) -> dict:
    return _midpoint_gap(rng, Statistics.FERMI)


def _bose_midpoint(rng: np.random.Generator) -> dict:
    return _midpoint_gap(rng, Statistics.BOSE)


def _superadditivity(rng: np.random.Generator) -> dict:
    blocks = ([0, 1, 2], [3, 4, 5])
    gamma = np.zeros((6, 6), dtype=complex)
    for block in blocks:
        gamma[np.ix_(block, block)] = random_onepdm(3, Statistics.FERMI, rng).matrix
    reference = quasifree_state(OnePdm(matrix=gamma, stats=Statistics.FERMI))
    state = random_even_state(FockSpace(stats=Statistics.FERMI, M=6), rng)
    whole = rel_entropy_exact(state, reference)
    parts = [rel_entropy_exact(restrict_state(state, b), restrict_state(reference, b)) for b in blocks]
    pinsker = _pinsker(whole, trace_distance(state, reference))
    return {
        "whole": whole,
        "parts": parts,
        **pinsker,
        "margin": min(whole - sum(parts), pinsker["pinsker_margin"]),
    }


def _restriction(rng: np.random.Generator) -> dict:
    gamma = random_onepdm(4, Statistics.FERMI, rng)
    keep = sorted(int(i) for i in rng.choice(4, size=2, replace=False))
    reduced = one_body_density(restrict_state(quasifree_state(gamma), keep))
    gap = float(np.max(np.abs(reduced.matrix - gamma.matrix[np.ix_(keep, keep)])))
    return {"keep": keep, "gap": gap, "margin": 1e-10 - gap}


def _free_energy_identity(rng: np.random.Generator) -> dict:
    stats = Statistics.FERMI if rng.random() < 0.5 else Statistics.BOSE
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    h = 0.5 * (g + g.conj().T)
    if stats is Statistics.BOSE:
        h = h + (0.5 - linalg.eigvalsh(h)[0]) * np.eye(4)
    omega = random_onepdm(4, stats, rng)
    residuals = []
    for beta in (1.0, 2.0):
        residuals.append(free_energy_identity_check(omega, gibbs_onepdm(h, beta, stats), beta, h))
    return {"stats": stats.value, "residuals": residuals, "margin": 1e-10 - max(residuals)}


def _spawn(seed: np.random.SeedSequence, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in seed.spawn(max(1, count))]


def run_entropy_suite(seeds: np.random.SeedSequence, instances: float = 1.0, workers: int | None = None) -> list[SweepReport]:
    fermi, bose, mono, convex, superadd, restrict, identity, bose_convex = seeds.spawn(8)
    checks = [
        ("rel_entropy_fermi", _fermi_pair, _spawn(fermi, round(40 * instances))),
        ("rel_entropy_bose", _bose_pair, _spawn(bose, round(10 * instances))),
        ("restriction_monotonicity", _monotonicity, _spawn(mono, round(50 * instances))),
        ("superadditivity", _superadditivity, _spawn(superadd, round(20 * instances))),
        ("quasifree_restriction", _restriction, _spawn(restrict, round(10 * instances))),
        ("free_energy_identity", _free_energy_identity, _spawn(identity, round(10 * instances))),
    ]
    reports = [report_from_records(name, ordered_map(func, rngs, workers), slack=1e-12) for name, func, rngs in checks]
    bose_gaps = ordered_map(_bose_midpoint, _spawn(bose_convex, round(20 * instances)), workers)
    reports.insert(
        3,
        report_from_records(
            "convexity_midpoint",
            ordered_map(_convexity, _spawn(convex, round(50 * instances)), workers),
            slack=1e-12,
            details={
                "bose_midpoint_gaps": [record["margin"] for record in bose_gaps],
                "bose_nonconvex": sum(record["margin"] < 0 for record in bose_gaps),
            },
        ),
    )
    logger.info(f"✅ Entropy suite finished with {sum(r.violations for r in reports)} violations")
    return reports
