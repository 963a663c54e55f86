import logging
import math
import warnings

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate
from scipy.spatial.distance import cdist

from app.errors import DomainError
from app.exchange import RadialProfile, build_gamma_tilde_profile
from app.reports import SweepReport, summarize_margins
from app.statmech_core import FOUR_PI, TWO_PI_SQUARED, Statistics, ThermoState, _occupation, momentum_cutoff, radial_integral

logger = logging.getLogger(__name__)

POSITIVITY_TOLERANCE = 1e-8


def _scalar_or_array(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def ball_overlap(r: float, s):
    """Volume of the lens shared by two radius-r balls whose centers are s apart."""
    if not r > 0:
        raise DomainError(f"ball radius must be positive, got {r!r}")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("center distance must be nonnegative")
    lens = math.pi / 12.0 * (2.0 * r - s) ** 2 * (4.0 * r + s)
    return _scalar_or_array(np.where(s < 2.0 * r, lens, 0.0))


def v_long(s, R: float):
    """Long-range part (1/π)∫_R^∞ r^{-5} J_r(s) dr, equal to 1/s for s >= 2R."""
    if not R > 0:
        raise DomainError(f"split radius must be positive, got {R!r}")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("distance must be nonnegative")
    inside = 4.0 / (3.0 * R) - s / (2.0 * R**2) + s**3 / (48.0 * R**4)
    outside = np.divide(1.0, s, out=np.zeros_like(s), where=s > 0)
    return _scalar_or_array(np.where(s < 2.0 * R, inside, outside))


def weighted_v_short(s, R: float):
    """s · v_short(s, R) = (2 - s/R)^3 (6 + s/R) / 48, finite at s = 0 where it equals 1."""
    if not R > 0:
        raise DomainError(f"split radius must be positive, got {R!r}")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("distance must be nonnegative")
    t = s / R
    return _scalar_or_array(np.where(t < 2.0, (2.0 - t) ** 3 * (6.0 + t) / 48.0, 0.0))


def v_short(s, R: float):
    """Short-range part 1/s - v_long(s, R); vanishes for s >= 2R."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("the short-range potential is singular at s = 0")
    return _scalar_or_array(weighted_v_short(s, R) / s)


class BallOverlap(BaseModel):
    model_config = ConfigDict(frozen=True)

    r: float = Field(gt=0)

    def __call__(self, s):
        return ball_overlap(self.r, s)

    @property
    def volume(self) -> float:
        return FOUR_PI / 3.0 * self.r**3


class SplitPotential(BaseModel):
    """1/s = short(s) + long(s) with the split at radius R."""

    model_config = ConfigDict(frozen=True)

    R: float = Field(gt=0)

    def short(self, s):
        return v_short(s, self.R)

    def long(self, s):
        return v_long(s, self.R)

    def table(self, s_max: float, points: int = 512) -> tuple[RadialProfile, RadialProfile]:
        """Tabulates (short, long) on (0, s_max] for plotting and downstream quadrature."""
        s = np.linspace(s_max / points, s_max, points)
        return RadialProfile(s, self.short(s)), RadialProfile(s, self.long(s))


def _ball_integral(s: float, lower: float, upper: float) -> float:
    if upper <= lower:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value = integrate.quad(lambda r: r**-5 * ball_overlap(r, s), lower, upper, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    return value / math.pi


def reconstruct_coulomb(s: float) -> float:
    """Quadrature of (1/π)∫₀^∞ r^{-5} J_r(s) dr, which reproduces 1/s."""
    if not s > 0:
        raise DomainError("distance must be positive")
    return _ball_integral(s, s / 2.0, np.inf)


def v_long_quadrature(s: float, R: float) -> float:
    return _ball_integral(s, max(R, s / 2.0), np.inf)


def v_short_quadrature(s: float, R: float) -> float:
    return _ball_integral(s, s / 2.0, R)


def radial_fourier_transform(weighted_short, coulomb_coefficient: float, support: float, k: float) -> float:
    """Fourier transform of V(s) = u(s)/s + c/s, where weighted_short(s) = u(s) is supported on [0, support].

    weighted_short is s·V_short(s), finite at the origin. The Coulomb tail is transformed analytically to 4πc/k².
    """
    if not k > 0:
        raise DomainError("wave number must be positive")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value = integrate.quad(weighted_short, 0.0, support, weight="sin", wvar=k, limit=400)[0]
    return FOUR_PI / k * value + FOUR_PI * coulomb_coefficient / k**2


def certify_transform(name: str, weighted_short, coulomb_coefficient: float, support: float, grid) -> SweepReport:
    """Checks k² V̂(k) / 4π >= -tol on the grid (scale-free as k -> 0)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 512 or np.any(grid <= 0):
        raise DomainError("positivity certification needs at least 512 positive wave numbers")
    transform = np.array([radial_fourier_transform(weighted_short, coulomb_coefficient, support, k) for k in grid])
    normalized = grid**2 * transform / FOUR_PI
    return summarize_margins(
        name,
        {"k_min": float(grid[0]), "k_max": float(grid[-1]), "points": int(grid.size)},
        normalized,
        lambda i: {"k": float(grid[i]), "k2_transform_over_4pi": float(normalized[i])},
        slack=POSITIVITY_TOLERANCE,
        details={"small_k_limit": float(normalized[0]), "min_transform": float(transform.min())},
    )


def certify_positive_type(R: float, grid=None) -> SweepReport:
    """Numerically certifies that V_{>R} has a nonnegative Fourier transform."""
    grid = np.geomspace(0.01, 50.0, 512) if grid is None else grid
    report = certify_transform(
        "long_range_positive_type", lambda s: -weighted_v_short(s, R), 1.0, 2.0 * R, grid
    )
    logger.info(f"✅ Positive-type certification R={R:g}: worst margin {report.worst_margin:.3e}")
    return report


def long_range_gram(points, R: float) -> np.ndarray:
    """Matrix V_{>R}(x_i - x_j), with 4/(3R) on the diagonal."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return v_long(cdist(points, points), R)


def electrostatic_bound_margin(particles, background_points, background_charges, R: float) -> float:
    """Slack in the lower bound on Σ_{i<j} V_{>R}(x_i - x_j) against a neutralizing background.

    The bound subtracts the particle-background attraction, adds the background
    self-energy and the N/2 self terms V_{>R}(0). Positive type makes the slack >= 0.
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    background_points = np.atleast_2d(np.asarray(background_points, dtype=float))
    q = np.asarray(background_charges, dtype=float)
    pair = long_range_gram(particles, R)
    count = particles.shape[0]
    lhs = 0.5 * (pair.sum() - np.trace(pair))
    attraction = float(np.sum(v_long(cdist(particles, background_points), R) @ q))
    background_energy = 0.5 * float(q @ long_range_gram(background_points, R) @ q)
    rhs = attraction - background_energy - 0.5 * count * v_long(0.0, R)
    return float(lhs - rhs)


def bose_background_bound(state: ThermoState, R: float, profile: RadialProfile | None = None) -> tuple[float, float, float]:
    """Returns the chain (n/2)∫V_{>R}|γ̃₀|² ≤ (2n/3R)(2π)^{-3}∫γ₀² ≤ (2ρ/3R) z/(1-z)."""
    if state.stats is not Statistics.BOSE:
        raise DomainError("the background bound is stated for bosons")
    profile = profile or build_gamma_tilde_profile(state)
    s, g = profile.grid, profile.values
    interaction = 0.5 * state.n * FOUR_PI * float(integrate.simpson(s * s * v_long(s, R) * g * g, x=s))
    beta, log_z = state.beta, state.log_z
    square = radial_integral(
        lambda p: p * p * _occupation(beta * p * p - log_z, -1) ** 2, momentum_cutoff(beta, state.z), "squared occupation"
    )
    middle = 2.0 * state.n / (3.0 * R) * square / TWO_PI_SQUARED
    right = 2.0 * state.rho / (3.0 * R) * state.z / (1.0 - state.z)
    return interaction, middle, right
