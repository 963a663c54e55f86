import logging
import math
import warnings
from functools import reduce

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, optimize

from app.config import SWEEP_SLACK
from app.errors import DomainError
from app.parallel import ordered_map
from app.reports import SweepReport, summarize_margins
from app.statmech_core import Statistics, check_fugacity, log_occupation, occupation_from_exponent

logger = logging.getLogger(__name__)


class HqPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: tuple[float, float, float]
    q: tuple[float, float, float]
    beta: float = Field(gt=0)
    z: float = Field(gt=0)
    stats: Statistics

    @model_validator(mode="after")
    def _check_fugacity(self):
        if self.stats is Statistics.BOSE and self.z >= 1.0:
            raise ValueError("Bose points need z < 1")
        return self

    @property
    def log_z(self) -> float:
        return math.log(self.z)

    @property
    def p2(self) -> float:
        return float(np.dot(self.p, self.p))

    @property
    def q2(self) -> float:
        return float(np.dot(self.q, self.q))

    @property
    def pq(self) -> float:
        return float(np.dot(self.p, self.q))


def _h_from_exponents(a_plus, a_minus, stats: Statistics):
    # ln[(1∓γ₊) + (1∓γ₋)] - ln[γ₊ + γ₋] through log-sum-exp
    log_g_plus, log_rest_plus = log_occupation(a_plus, stats)
    log_g_minus, log_rest_minus = log_occupation(a_minus, stats)
    return np.logaddexp(log_rest_plus, log_rest_minus) - np.logaddexp(log_g_plus, log_g_minus)


def _h_delta(beta, log_z, p2, q2, pq, stats: Statistics):
    """h_q(p) - h_0(p) on arrays of |p|², |q|², p·q."""
    a_plus = beta * (p2 + q2 + 2.0 * pq) - log_z
    a_minus = beta * (p2 + q2 - 2.0 * pq) - log_z
    return _h_from_exponents(a_plus, a_minus, stats) - (beta * p2 - log_z)


def h_q(point: HqPoint) -> float:
    """ln[(2 ∓ γ₀(p+q) ∓ γ₀(p-q)) / (γ₀(p+q) + γ₀(p-q))], evaluated in log-stable form."""
    a_plus = point.beta * (point.p2 + point.q2 + 2.0 * point.pq) - point.log_z
    a_minus = point.beta * (point.p2 + point.q2 - 2.0 * point.pq) - point.log_z
    return float(_h_from_exponents(a_plus, a_minus, point.stats))


def h_q_naive(point: HqPoint) -> float:
    sign = point.stats.sign
    g_plus = float(occupation_from_exponent(point.beta * (point.p2 + point.q2 + 2.0 * point.pq) - point.log_z, point.stats))
    g_minus = float(occupation_from_exponent(point.beta * (point.p2 + point.q2 - 2.0 * point.pq) - point.log_z, point.stats))
    return math.log((2.0 - sign * (g_plus + g_minus)) / (g_plus + g_minus))


def h_zero(point: HqPoint) -> float:
    return point.beta * point.p2 - point.log_z


def _log_objective(u, z: float, stats: Statistics):
    log_z = math.log(z)
    if stats is Statistics.FERMI:
        # zu / (e^u + z)
        return log_z + np.log(u) - np.logaddexp(u, log_z)
    # z² u e^u / (e^u - z)²
    return 2.0 * log_z + np.log(u) - u - 2.0 * np.log1p(-z * np.exp(-u))


def d_z_constant(z: float, stats: Statistics) -> float:
    """sup_{u>0} of zu/(e^u+z) (Fermi) or z²ue^u/(e^u-z)² (Bose).

    Grid search on (0, U] with U doubled until the objective has decayed, then a
    bounded scalar refinement around the best grid point.
    """
    check_fugacity(1.0, z, stats)
    upper = 10.0 + max(math.log(z), 0.0)
    while True:
        grid = np.geomspace(1e-9, upper, 4000)
        values = _log_objective(grid, z, stats)
        best = int(np.argmax(values))
        if values[-1] < values[best] - 40.0:
            break
        upper *= 2.0
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    result = optimize.minimize_scalar(
        lambda u: -float(_log_objective(u, z, stats)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    log_sup = max(-float(result.fun), float(values[best]))
    return math.exp(log_sup)


def lemma_constants(z: float, stats: Statistics) -> dict[str, float]:
    """D_z together with the derived constants C_z and C_z' (reported, not asserted)."""
    d = d_z_constant(z, stats)
    if stats is Statistics.FERMI:
        return {"D_z": d, "C_z": 1.0, "C_z_prime": 1.0 + 2.0 * d}
    return {"D_z": d, "C_z": 1.0 / (1.0 - z), "C_z_prime": -1.0 / math.log(z)}


def _lemma_bounds(beta, p2, q2, pq, d: float, stats: Statistics) -> dict[str, tuple]:
    """Named (lower, upper) pairs; None marks a missing side."""
    cross = 2.0 * np.abs(pq)
    quadratic_lower = -2.0 * beta * q2 * (3.0 * d + 2.0 * beta * p2)
    if stats is Statistics.FERMI:
        return {
            "quadratic": (quadratic_lower, 2.0 * beta * q2 * (1.0 + 2.0 * d)),
            "linear": (beta * (q2 - cross), beta * (q2 + cross)),
        }
    return {
        "quadratic": (quadratic_lower, beta * q2),
        "linear": (beta * (q2 - cross), None),
    }


def lemma_margins(point: HqPoint) -> dict[str, float]:
    """Margins (bound minus quantity, >= 0 when the inequality holds) at one point."""
    delta = float(_h_delta(point.beta, point.log_z, point.p2, point.q2, point.pq, point.stats))
    d = d_z_constant(point.z, point.stats)
    margins = {}
    for name, (lower, upper) in _lemma_bounds(point.beta, point.p2, point.q2, point.pq, d, point.stats).items():
        margins[f"{name}_lower"] = float(delta - lower)
        if upper is not None:
            margins[f"{name}_upper"] = float(upper - delta)
    return margins


class SweepGrid(BaseModel):
    """Sweep over |p|, |q| (in units of β^{-1/2}), cos(p, q), β and z."""

    model_config = ConfigDict(frozen=True)

    magnitudes: list[float]
    cosines: list[float]
    betas: list[float]
    zs: list[float]

    @property
    def size(self) -> int:
        return len(self.magnitudes) ** 2 * len(self.cosines) * len(self.betas) * len(self.zs)


def default_grid(stats: Statistics) -> SweepGrid:
    zs = [0.1, 1.0, 10.0] if stats is Statistics.FERMI else [0.3, 0.7, 0.95]
    return SweepGrid(
        magnitudes=np.geomspace(1e-2, 10.0, 10).tolist(),
        cosines=[-1.0, -0.5, 0.0, 0.5, 1.0],
        betas=[0.5, 1.0, 2.0],
        zs=zs,
    )


def _sweep_block(stats: Statistics, grid: SweepGrid, beta: float, z: float) -> SweepReport:
    check_fugacity(beta, z, stats)
    scale = np.asarray(grid.magnitudes) / math.sqrt(beta)
    p, q, c = np.meshgrid(scale, scale, np.asarray(grid.cosines), indexing="ij")
    p, q, c = p.ravel(), q.ravel(), c.ravel()
    p2, q2, pq = p * p, q * q, p * q * c
    delta = _h_delta(beta, math.log(z), p2, q2, pq, stats)
    d = d_z_constant(z, stats)

    margins = []
    worst = {}
    for name, (lower, upper) in _lemma_bounds(beta, p2, q2, pq, d, stats).items():
        for side, bound, margin in (("lower", lower, delta - lower), ("upper", upper, None if upper is None else upper - delta)):
            if bound is None:
                continue
            margins.append(margin)
            worst[f"{name}_{side}"] = float(np.min(margin))
    margins = np.min(np.vstack(margins), axis=0)

    return summarize_margins(
        "lemma_sweep",
        {},
        margins,
        lambda i: {"beta": beta, "z": z, "p": float(p[i]), "q": float(q[i]), "cos": float(c[i])},
        slack=SWEEP_SLACK,
        details={f"beta={beta:g},z={z:g}": {"D_z": d, "worst_margins": worst}},
    )


def _sweep(name: str, stats: Statistics, grid: SweepGrid | None, workers: int | None) -> SweepReport:
    grid = grid or default_grid(stats)
    blocks = [(beta, z) for beta in grid.betas for z in grid.zs]
    reports = ordered_map(lambda bz: _sweep_block(stats, grid, *bz), blocks, workers)
    report = reduce(SweepReport.merge, reports)
    report = report.model_copy(update={"name": name, "grid": grid.model_dump()})
    marker = "✅" if report.passed else "❌"
    logger.info(f"{marker} {name}: {report.points} points, worst margin {report.worst_margin:.3e}")
    return report


def sweep_lemma1(grid: SweepGrid | None = None, workers: int | None = None) -> SweepReport:
    """Fermionic bounds on h_q - h_0: quadratic two-sided and linear two-sided."""
    return _sweep("lemma1_fermi", Statistics.FERMI, grid, workers)


def sweep_lemma2(grid: SweepGrid | None = None, workers: int | None = None) -> SweepReport:
    """Bosonic bounds on h_q - h_0: quadratic two-sided and linear lower."""
    grid = grid or default_grid(Statistics.BOSE)
    if any(z >= 1.0 for z in grid.zs):
        raise DomainError("bosonic sweeps need z < 1")
    return _sweep("lemma2_bose", Statistics.BOSE, grid, workers)


def _interpolated(point: HqPoint, lam: float):
    # β-scaled variables: h_{λq}(p) only depends on √β p and √β q
    root = math.sqrt(point.beta)
    p = root * np.asarray(point.p)
    q = root * np.asarray(point.q)
    plus, minus = p + lam * q, p - lam * q
    a = float(occupation_from_exponent(plus @ plus - point.log_z, point.stats))
    b = float(occupation_from_exponent(minus @ minus - point.log_z, point.stats))
    return a, b, float(plus @ q), float(minus @ q), float(q @ q)


def f_first_derivative(point: HqPoint, lam: float) -> float:
    """d/dλ h_{λq}(p)."""
    sign = point.stats.sign
    a, b, u, v, _ = _interpolated(point, lam)
    s_prime = -2.0 * u * a * (1.0 - sign * a) + 2.0 * v * b * (1.0 - sign * b)
    return -sign * s_prime / (2.0 - sign * (a + b)) - s_prime / (a + b)


def f_second_derivative_terms(point: HqPoint, lam: float) -> tuple[float, float, float]:
    """The three groups of d²/dλ² h_{λq}(p): the 1/S group, the 1/T group and the positive q² line."""
    sign = point.stats.sign
    a, b, u, v, q2 = _interpolated(point, lam)
    a_bar, b_bar = 1.0 - sign * a, 1.0 - sign * b
    s = a + b
    t = 2.0 - sign * s
    first = sign * 4.0 / s * (
        u * u * a * a * a_bar + v * v * b * b * b_bar - sign * a * b / s * (u * a_bar + v * b_bar) ** 2
    )
    second = -sign * 4.0 / t * (
        u * u * a * a_bar**2 + v * v * b * b_bar**2 - sign * a_bar * b_bar / t * (u * a + v * b) ** 2
    )
    last = (sign / t + 1.0 / s) * 2.0 * q2 * (a * a_bar + b * b_bar)
    return first, second, last


def f_second_derivative(point: HqPoint, lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"interpolation parameter must lie in [0, 1], got {lam!r}")
    return float(sum(f_second_derivative_terms(point, lam)))


def taylor_identity_check(point: HqPoint) -> float:
    """Relative gap between h_q - h_0 and ∫₀¹(1-λ) f''(λ) dλ (f'(0) = 0)."""
    lhs = h_q(point) - h_zero(point)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        rhs = integrate.quad(
            lambda lam: (1.0 - lam) * f_second_derivative(point, lam), 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200
        )[0]
    scale = max(abs(lhs), abs(rhs))
    return 0.0 if scale == 0.0 else abs(lhs - rhs) / scale
