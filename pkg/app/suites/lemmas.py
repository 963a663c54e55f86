import logging
import math

import numpy as np

from app.bounds_lab import (
    HqPoint,
    d_z_constant,
    f_first_derivative,
    f_second_derivative,
    h_q,
    lemma_constants,
    sweep_lemma1,
    sweep_lemma2,
    taylor_identity_check,
)
from app.parallel import ordered_map
from app.reports import SweepReport, report_from_records
from app.statmech_core import Statistics

logger = logging.getLogger(__name__)

TAYLOR_TOLERANCE = 1e-8
FINITE_DIFFERENCE_TOLERANCE = 1e-5
FINITE_DIFFERENCE_STEP = 1e-4


def _unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def random_hq_point(stats: Statistics, rng: np.random.Generator) -> HqPoint:
    beta = float(rng.choice([0.5, 1.0, 2.0]))
    if stats is Statistics.FERMI:
        z = float(np.exp(rng.uniform(math.log(0.1), math.log(10.0))))
    else:
        z = float(rng.uniform(0.05, 0.95))
    p = rng.uniform(0.2, 2.0) / math.sqrt(beta) * _unit_vector(rng)
    q = rng.uniform(0.2, 2.0) / math.sqrt(beta) * _unit_vector(rng)
    return HqPoint(p=tuple(p), q=tuple(q), beta=beta, z=z, stats=stats)


def _scaled(point: HqPoint, lam: float) -> HqPoint:
    return point.model_copy(update={"q": tuple(lam * x for x in point.q)})


def second_difference(point: HqPoint, lam: float, step: float = FINITE_DIFFERENCE_STEP) -> float:
    """Centered second difference of λ ↦ h_{λq}(p)."""
    values = [h_q(_scaled(point, lam + k * step)) for k in (-1, 0, 1)]
    return (values[0] - 2.0 * values[1] + values[2]) / step**2


def _describe(point: HqPoint) -> dict:
    return {"stats": point.stats.value, "beta": point.beta, "z": point.z, "p": list(point.p), "q": list(point.q)}


def _taylor_record(point: HqPoint) -> dict:
    residual = taylor_identity_check(point)
    return {**_describe(point), "residual": residual, "margin": TAYLOR_TOLERANCE - residual}


def _derivative_record(args) -> dict:
    point, lam = args
    exact = f_second_derivative(point, lam)
    scale = max(abs(exact), point.beta * point.q2)
    gap = abs(second_difference(point, lam) - exact) / scale
    slope = abs(f_first_derivative(point, 0.0)) / (point.beta * math.sqrt(point.q2 * max(point.p2, 1e-300)))
    return {
        **_describe(point),
        "lambda": lam,
        "relative_gap": gap,
        "first_derivative_at_zero": slope,
        "margin": min(FINITE_DIFFERENCE_TOLERANCE - gap, 1e-12 - slope),
    }


def _d_z_report(stats: Statistics) -> SweepReport:
    zs = np.geomspace(0.01, 20.0, 20) if stats is Statistics.FERMI else np.linspace(0.05, 0.95, 20)
    values = np.array([d_z_constant(float(z), stats) for z in zs])
    records = [{"z": float(zs[0]), "D_z": float(values[0]), "margin": float(values[0])}]
    for i in range(1, zs.size):
        records.append({"z": float(zs[i]), "D_z": float(values[i]), "margin": float(values[i] - values[i - 1])})
    constants = {f"{z:.4g}": lemma_constants(float(z), stats) for z in zs[::5]}
    return report_from_records(f"d_z_{stats.value}", records, slack=1e-12, details={"constants": constants})


def run_lemma_suite(seeds: np.random.SeedSequence, instances: float = 1.0, workers: int | None = None) -> list[SweepReport]:
    count = max(1, round(20 * instances))
    reports = [sweep_lemma1(workers=workers), sweep_lemma2(workers=workers)]
    reports += [_d_z_report(Statistics.FERMI), _d_z_report(Statistics.BOSE)]

    for stats in (Statistics.FERMI, Statistics.BOSE):
        rngs = [np.random.default_rng(s) for s in seeds.spawn(count)]
        points = [random_hq_point(stats, rng) for rng in rngs]
        records = ordered_map(_taylor_record, points, workers)
        reports.append(report_from_records(f"taylor_identity_{stats.value}", records))

        lams = [float(rng.uniform(0.05, 0.95)) for rng in rngs]
        records = ordered_map(_derivative_record, list(zip(points, lams)), workers)
        reports.append(report_from_records(f"second_derivative_{stats.value}", records))

    logger.info(f"✅ Lemma suite finished with {sum(r.violations for r in reports)} violations")
    return reports
