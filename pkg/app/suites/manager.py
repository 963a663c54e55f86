import logging

import numpy as np

from .decomposition import run_decomposition_suite
from .entropy import run_entropy_suite
from .lemmas import run_lemma_suite
from .quasifree_checks import run_quasifree_suite

logger = logging.getLogger(__name__)

# Positions are part of the seeding scheme; append new suites at the end.
SUITES = {
    "lemmas": run_lemma_suite,
    "decomposition": run_decomposition_suite,
    "quasifree": run_quasifree_suite,
    "entropy": run_entropy_suite,
}


def run_suites(name: str, seed: int = 0, instances: float = 1.0, workers: int | None = None) -> dict:
    """Run one suite (or "all") and merge the reports into a JSON-ready payload."""
    if name != "all" and name not in SUITES:
        raise KeyError(f"unknown suite {name!r}")
    names = list(SUITES) if name == "all" else [name]
    results = {}
    violations = 0
    for suite in names:
        seeds = np.random.SeedSequence([seed, list(SUITES).index(suite)])
        reports = SUITES[suite](seeds, instances, workers)
        violations += sum(report.violations for report in reports)
        results[suite] = [report.model_dump() for report in reports]
    if violations:
        logger.error(f"❌ Verification found {violations} violations")
    else:
        logger.info(f"✅ Verification passed: {', '.join(names)}")
    return {
        "meta": {"suite": name, "seed": seed, "instances": instances},
        "report": {"suites": results, "violations": violations},
    }
