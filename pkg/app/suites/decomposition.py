import logging

import numpy as np

from app.coulomb_decomp import (
    bose_background_bound,
    certify_positive_type,
    certify_transform,
    electrostatic_bound_margin,
    reconstruct_coulomb,
    v_long,
    v_long_quadrature,
    v_short,
    weighted_v_short,
)
from app.exchange import build_gamma_tilde_profile
from app.parallel import ordered_map
from app.quasifree import short_range_energy, short_range_energy_by_radii
from app.reports import SweepReport, report_from_records
from app.statmech_core import Statistics, density_from_fugacity, solve_fugacity

logger = logging.getLogger(__name__)

RECONSTRUCTION_TOLERANCE = 1e-8
SPLIT_TOLERANCE = 1e-10


def _reconstruction_report() -> SweepReport:
    records = []
    for s in (0.1, 1.0, 10.0):
        residual = abs(reconstruct_coulomb(s) * s - 1.0)
        records.append({"s": s, "residual": residual, "margin": RECONSTRUCTION_TOLERANCE - residual})
    return report_from_records("coulomb_reconstruction", records)


def _split_report(rng: np.random.Generator, count: int) -> SweepReport:
    records = []
    for _ in range(count):
        R = float(rng.uniform(0.2, 3.0))
        s = float(rng.uniform(0.01, 3.0) * R)
        identity = abs((v_short(s, R) + v_long(s, R)) * s - 1.0)
        quadrature = abs(v_long_quadrature(s, R) - v_long(s, R)) / v_long(s, R)
        gap = max(identity, quadrature)
        records.append({"s": s, "R": R, "identity": identity, "quadrature": quadrature, "margin": SPLIT_TOLERANCE - gap})
    return report_from_records("split_identity", records)


def _counterexample_report(R: float = 1.0, delta: float = 1e-3) -> SweepReport:
    """V_{<R} - δ/s must fail certification; a rejected counterexample has positive margin."""
    grid = np.geomspace(0.01, 50.0, 512)
    report = certify_transform("counterexample", lambda s: weighted_v_short(s, R), -delta, 2.0 * R, grid)
    return report_from_records(
        "counterexample_rejected",
        [{"R": R, "delta": delta, "violations": report.violations, "margin": -report.worst_margin - 1e-8}],
    )


def _electrostatic_record(rng: np.random.Generator) -> dict:
    R = float(rng.uniform(0.3, 1.0))
    particles = rng.uniform(0.0, 2.0, size=(4, 3))
    axis = (np.arange(3) + 0.5) * 2.0 / 3.0
    background = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    charges = np.full(background.shape[0], particles.shape[0] / background.shape[0])
    margin = electrostatic_bound_margin(particles, background, charges, R)
    return {"R": R, "slack": margin, "margin": margin + 1e-10}


def _background_report() -> SweepReport:
    records = []
    for z, R in ((0.3, 1.0), (0.7, 0.5), (0.9, 2.0)):
        state = solve_fugacity(1.0, density_from_fugacity(1.0, z, 1, Statistics.BOSE), 1, Statistics.BOSE)
        left, middle, right = bose_background_bound(state, R)
        records.append(
            {"z": state.z, "R": R, "left": left, "middle": middle, "right": right, "margin": min(middle - left, right - middle)}
        )
    return report_from_records("bose_background_bound", records, slack=1e-10)


def _energy_report() -> SweepReport:
    records = []
    for stats, rho in ((Statistics.FERMI, 0.05), (Statistics.BOSE, 0.02)):
        state = solve_fugacity(1.0, rho, 1, stats)
        profile = build_gamma_tilde_profile(state)
        direct = short_range_energy(state, 1.0, profile)
        by_radii = short_range_energy_by_radii(state, 1.0, profile)
        gap = abs(direct - by_radii) / abs(direct)
        records.append({"stats": stats.value, "rho": rho, "direct": direct, "by_radii": by_radii, "margin": 1e-6 - gap})
    return report_from_records("short_range_energy", records)


def run_decomposition_suite(
    seeds: np.random.SeedSequence, instances: float = 1.0, workers: int | None = None
) -> list[SweepReport]:
    split_seed, electro_seed = seeds.spawn(2)
    count = max(1, round(100 * instances))
    reports = [
        _reconstruction_report(),
        _split_report(np.random.default_rng(split_seed), max(1, round(20 * instances))),
        certify_positive_type(1.0),
        _counterexample_report(),
    ]
    rngs = [np.random.default_rng(s) for s in electro_seed.spawn(count)]
    reports.append(report_from_records("electrostatic_bound", ordered_map(_electrostatic_record, rngs, workers)))
    reports += [_background_report(), _energy_report()]
    logger.info(f"✅ Decomposition suite finished with {sum(r.violations for r in reports)} violations")
    return reports
