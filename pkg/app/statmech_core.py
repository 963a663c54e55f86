import logging
import math
import warnings
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, optimize, special

from app.config import FUGACITY_RESIDUAL, QUAD_EPSREL
from app.errors import CondensationError, DomainError, NumericError

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
TWO_PI_SQUARED = 2.0 * math.pi**2


class Statistics(str, Enum):
    FERMI = "fermi"
    BOSE = "bose"

    @property
    def sign(self) -> int:
        """+1 for fermions and -1 for bosons, so the occupation reads 1/(e^a + sign)."""
        return 1 if self is Statistics.FERMI else -1


class ThermoState(BaseModel):
    """One equilibrium point (beta, rho, n, mu, z) of the ideal gas."""

    model_config = ConfigDict(frozen=True)

    beta: float = Field(gt=0)
    rho: float = Field(gt=0)
    n: int = Field(ge=1)
    mu: float
    z: float = Field(gt=0)
    stats: Statistics

    @model_validator(mode="after")
    def _check_fugacity(self):
        if not math.isclose(self.z, math.exp(self.beta * self.mu), rel_tol=1e-12):
            raise ValueError(f"fugacity {self.z!r} does not match exp(beta*mu)")
        if self.stats is Statistics.BOSE and self.z >= 1.0:
            raise ValueError("Bose fugacity must lie in (0, 1)")
        return self

    @property
    def log_z(self) -> float:
        return self.beta * self.mu


def check_fugacity(beta: float, z: float, stats: Statistics, allow_boundary: bool = False) -> None:
    if not beta > 0:
        raise DomainError(f"inverse temperature must be positive, got {beta!r}")
    if not z > 0:
        raise DomainError(f"fugacity must be positive, got {z!r}")
    if stats is Statistics.BOSE and (z > 1.0 or (z == 1.0 and not allow_boundary)):
        raise DomainError(f"Bose fugacity {z!r} is at or beyond the condensation boundary z = 1")


def occupation_from_exponent(a, stats: Statistics):
    """Occupation 1/(e^a ± 1) for the exponent a = beta p^2 - ln z (vectorized)."""
    a = np.asarray(a, dtype=float)
    if stats is Statistics.FERMI:
        return special.expit(-a)
    return 1.0 / np.expm1(a)


def log_occupation(a, stats: Statistics):
    """Returns (ln γ, ln(1 ∓ γ)) without forming γ, stable for large |a|."""
    a = np.asarray(a, dtype=float)
    if stats is Statistics.FERMI:
        return -np.logaddexp(0.0, a), -np.logaddexp(0.0, -a)
    log_one_plus = -np.log1p(-np.exp(-a))
    return -a + log_one_plus, log_one_plus


def _occupation(a: float, sign: int) -> float:
    # scalar fast path for quadrature integrands
    if sign > 0:
        if a >= 0.0:
            e = math.exp(-a)
            return e / (1.0 + e)
        return 1.0 / (1.0 + math.exp(a))
    return 1.0 / math.expm1(a)


def momentum_occupation(p, beta: float, z: float, stats: Statistics):
    """Mean occupation of a plane wave with momentum magnitude p.

    Args:
        p: Momentum magnitude (scalar or array), nonnegative.
        beta: Inverse temperature.
        z: Fugacity; Bose requires z < 1.
        stats: Particle statistics.

    Returns:
        1/(z^{-1} e^{beta p^2} ± 1), + for fermions and - for bosons.
    """
    check_fugacity(beta, z, stats)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise DomainError("momentum magnitude must be nonnegative")
    value = occupation_from_exponent(beta * p * p - math.log(z), stats)
    return float(value) if value.ndim == 0 else value


def momentum_cutoff(beta: float, z: float) -> float:
    """Upper quadrature limit beyond which every occupation integrand is negligible."""
    return math.sqrt((45.0 + max(math.log(z), 0.0)) / beta)


def fermi_momentum_hint(beta: float, z: float, stats: Statistics) -> list[float]:
    if stats is Statistics.FERMI and math.log(z) > 1.0:
        return [math.sqrt(math.log(z) / beta)]
    return []


def radial_integral(integrand, upper: float, what: str, points=None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(
            integrand, 0.0, upper, epsabs=0.0, epsrel=QUAD_EPSREL, limit=400, points=points or None
        )
    if not math.isfinite(value) or abserr > 1e-9 * abs(value) + 1e-300:
        raise NumericError(f"quadrature for {what} did not converge", achieved_tolerance=abserr)
    return value


def critical_density(beta: float, n: int = 1) -> float:
    """Bose critical density n (4πβ)^{-3/2} ζ(3/2)."""
    if not beta > 0:
        raise DomainError(f"inverse temperature must be positive, got {beta!r}")
    return n * (FOUR_PI * beta) ** -1.5 * float(special.zeta(1.5))


def _density(beta: float, z: float, n: int, stats: Statistics) -> float:
    if stats is Statistics.BOSE and z >= 1.0:
        return critical_density(beta, n)
    sign = stats.sign
    log_z = math.log(z)
    value = radial_integral(
        lambda p: p * p * _occupation(beta * p * p - log_z, sign),
        momentum_cutoff(beta, z),
        "density",
        fermi_momentum_hint(beta, z, stats),
    )
    return n * value / TWO_PI_SQUARED


def density_from_fugacity(beta: float, z: float, n: int = 1, stats: Statistics = Statistics.FERMI) -> float:
    """Particle density n (2π)^{-3} ∫γ₀(p) dp at fugacity z.

    The Bose boundary z = 1 is accepted and returns the critical density.
    """
    check_fugacity(beta, z, stats, allow_boundary=True)
    if stats is Statistics.BOSE and z == 1.0:
        logger.warning("⚠️ Bose fugacity at the condensation boundary z = 1, returning rho_c")
    return _density(beta, z, n, stats)


def solve_fugacity(beta: float, rho: float, n: int = 1, stats: Statistics = Statistics.FERMI) -> ThermoState:
    """Finds the fugacity whose ideal-gas density equals rho.

    Args:
        beta: Inverse temperature.
        rho: Target density.
        n: Internal degrees of freedom.
        stats: Particle statistics.

    Returns:
        The matching ThermoState.

    Raises:
        CondensationError: Bose density at or above rho_c(beta).
        NumericError: the root could not be bracketed or the residual is too large.
    """
    if not beta > 0 or not rho > 0 or n < 1:
        raise DomainError(f"invalid thermodynamic point beta={beta!r}, rho={rho!r}, n={n!r}")
    if stats is Statistics.BOSE:
        rho_c = critical_density(beta, n)
        if rho >= rho_c:
            raise CondensationError(rho, rho_c)

    def residual(log_z: float) -> float:
        return _density(beta, math.exp(min(log_z, 700.0)), n, stats) / rho - 1.0

    # Maxwell-Boltzmann guess: the Fermi density lies below it, the Bose density above
    guess = math.log(rho * (FOUR_PI * beta) ** 1.5 / n)
    if stats is Statistics.FERMI:
        lower, upper = guess - 1.0, max(guess, 0.0) + 1.0
        for _ in range(80):
            if residual(upper) >= 0.0:
                break
            upper = 2.0 * upper + 1.0
        else:
            raise NumericError("could not bracket the Fermi fugacity from above")
    else:
        lower, upper = min(guess, 0.0) - 1.0, 0.0
    for _ in range(200):
        if residual(lower) <= 0.0:
            break
        lower -= 2.0
    else:
        raise NumericError("could not bracket the fugacity from below")

    try:
        log_z = optimize.brentq(residual, lower, upper, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=300)
    except (ValueError, RuntimeError) as e:
        raise NumericError(f"fugacity root solve failed: {e}") from e

    achieved = abs(residual(log_z))
    if achieved > FUGACITY_RESIDUAL:
        raise NumericError("fugacity residual above tolerance", achieved_tolerance=achieved)

    state = ThermoState(beta=beta, rho=rho, n=n, mu=log_z / beta, z=math.exp(log_z), stats=stats)
    logger.info(f"✅ Solved {stats.value} fugacity z={state.z:.6g} at beta={beta:.6g}, rho={rho:.6g}")
    return state


def pressure(beta: float, z: float, n: int, stats: Statistics) -> float:
    """Ideal-gas pressure ±n/((2π)³β) ∫ln(1 ± z e^{-βp²}) dp."""
    sign = stats.sign
    value = radial_integral(
        lambda p: p * p * math.log1p(sign * z * math.exp(-beta * p * p)),
        momentum_cutoff(beta, z),
        "pressure",
        fermi_momentum_hint(beta, z, stats),
    )
    return sign * n * value / (TWO_PI_SQUARED * beta)


def grand_potential_objective(mu: float, beta: float, rho: float, n: int, stats: Statistics) -> float:
    """The function mu*rho - pressure(mu) whose supremum over mu is the free energy."""
    if stats is Statistics.BOSE and mu >= 0.0:
        return -math.inf
    return mu * rho - pressure(beta, math.exp(beta * mu), n, stats)


def ideal_free_energy(state: ThermoState) -> float:
    """Free energy density f₀ of the ideal gas at the solved chemical potential."""
    return state.mu * state.rho - pressure(state.beta, state.z, state.n, state.stats)


def kinetic_energy_density(state: ThermoState) -> float:
    sign = state.stats.sign
    beta, log_z = state.beta, state.log_z
    value = radial_integral(
        lambda p: p**4 * _occupation(beta * p * p - log_z, sign),
        momentum_cutoff(beta, state.z),
        "kinetic energy",
        fermi_momentum_hint(beta, state.z, state.stats),
    )
    return state.n * value / TWO_PI_SQUARED


def occupation_entropy(a, stats: Statistics):
    """s(γ) = -γ ln γ ∓ (1∓γ) ln(1∓γ), written in terms of the exponent a."""
    log_g, log_one_minus = log_occupation(a, stats)
    g = np.exp(log_g)
    one_minus = np.exp(log_one_minus)
    return -g * log_g - stats.sign * one_minus * log_one_minus


def entropy_density(state: ThermoState) -> float:
    beta, log_z = state.beta, state.log_z
    value = radial_integral(
        lambda p: p * p * float(occupation_entropy(beta * p * p - log_z, state.stats)),
        momentum_cutoff(beta, state.z),
        "entropy",
        fermi_momentum_hint(beta, state.z, state.stats),
    )
    return state.n * value / TWO_PI_SQUARED


def maxwell_boltzmann_free_energy(beta: float, rho: float, n: int = 1) -> float:
    return rho / beta * (math.log(rho * (FOUR_PI * beta) ** 1.5 / n) - 1.0)
