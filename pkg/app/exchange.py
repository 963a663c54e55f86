import logging
import math
import warnings

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import integrate
from scipy.interpolate import CubicSpline

from app.config import PROFILE_POINTS, ROUTE_AGREEMENT, ROUTE_FAILURE
from app.errors import ConsistencyError, DomainError, NumericError
from app.statmech_core import (
    FOUR_PI,
    TWO_PI_SQUARED,
    Statistics,
    ThermoState,
    _occupation,
    density_from_fugacity,
    fermi_momentum_hint,
    ideal_free_energy,
    momentum_cutoff,
    occupation_from_exponent,
    solve_fugacity,
)

logger = logging.getLogger(__name__)


class RadialProfile:
    """Tabulated radially symmetric function of s >= 0.

    Cubic interpolation between abscissae, stored values returned exactly at the
    abscissae, zero beyond the last abscissa.
    """

    def __init__(self, grid, values):
        grid = np.array(grid, dtype=float)
        values = np.array(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise DomainError("profile grid and values must be 1-D arrays of equal length >= 2")
        if grid[0] < 0 or np.any(np.diff(grid) <= 0):
            raise DomainError("profile grid must be nonnegative and strictly increasing")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(values))):
            raise DomainError("profile contains non-finite entries")
        grid.setflags(write=False)
        values.setflags(write=False)
        self._grid = grid
        self._values = values
        self._spline = CubicSpline(grid, values)

    @property
    def grid(self) -> np.ndarray:
        return self._grid

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def support(self) -> float:
        return float(self._grid[-1])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise DomainError("radial profiles are only defined for s >= 0")
        out = np.asarray(self._spline(s), dtype=float)
        out = np.where(s > self._grid[-1], 0.0, out)
        idx = np.clip(np.searchsorted(self._grid, s), 0, self._grid.size - 1)
        on_grid = self._grid[idx] == s
        out = np.where(on_grid, self._values[idx], out)
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"RadialProfile(points={self._grid.size}, support={self.support:.6g})"


def gamma_tilde(state: ThermoState, s: float) -> float:
    """Real-space one-particle kernel γ̃₀(s) of the ideal gas (per internal state)."""
    if s < 0:
        raise DomainError("radius must be nonnegative")
    if s == 0:
        return density_from_fugacity(state.beta, state.z, state.n, state.stats) / state.n
    sign, beta, log_z = state.stats.sign, state.beta, state.log_z
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(
            lambda p: p * _occupation(beta * p * p - log_z, sign),
            0.0,
            momentum_cutoff(beta, state.z),
            weight="sin",
            wvar=s,
            limit=400,
            limlst=100,
        )
    scale = state.rho / state.n
    if not math.isfinite(value) or abserr / (TWO_PI_SQUARED * s) > 1e-9 * scale:
        raise NumericError(f"oscillatory quadrature failed at s={s:.6g}", achieved_tolerance=abserr)
    return value / (TWO_PI_SQUARED * s)


def decay_rate(state: ThermoState) -> float:
    """Exponential decay rate of γ̃₀, set by the nearest complex pole of γ₀(p)."""
    if state.stats is Statistics.FERMI:
        return complex(np.sqrt(complex(state.log_z, math.pi) / state.beta)).imag
    return math.sqrt(-state.log_z / state.beta)


def truncation_radius(state: ThermoState) -> float:
    return max(20.0 / decay_rate(state), 13.0 * math.sqrt(state.beta))


def build_gamma_tilde_profile(state: ThermoState, points: int = PROFILE_POINTS) -> RadialProfile:
    """Tabulates γ̃₀ on a geometric grid out to the decay-estimated radius.

    All radii share one vector-valued adaptive Gauss-Kronrod pass over p.
    """
    radius = truncation_radius(state)
    radii = np.geomspace(1e-3 * math.sqrt(state.beta), radius, points - 1)
    beta, log_z = state.beta, state.log_z

    def integrand(p):
        return p * np.sin(p * radii) * occupation_from_exponent(beta * p * p - log_z, state.stats)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        transform, error = integrate.quad_vec(
            integrand,
            0.0,
            momentum_cutoff(beta, state.z),
            epsrel=1e-11,
            norm="max",
            limit=20000,
            points=fermi_momentum_hint(beta, state.z, state.stats) or None,
        )
    if error > 1e-9 * np.max(np.abs(transform)):
        raise NumericError("gamma-tilde profile quadrature did not converge", achieved_tolerance=error)

    at_origin = density_from_fugacity(state.beta, state.z, state.n, state.stats) / state.n
    values = np.concatenate(([at_origin], transform / (TWO_PI_SQUARED * radii)))
    return RadialProfile(np.concatenate(([0.0], radii)), values)


def profile_exchange_integral(profile: RadialProfile) -> float:
    """4π ∫ s |f(s)|² ds over the tabulated support."""
    s, f = profile.grid, profile.values
    return FOUR_PI * float(integrate.simpson(s * f * f, x=s))


def exchange_integral_momentum(state: ThermoState) -> float:
    """Momentum-space route (2π³)^{-1} ∫∫ p p' γ₀(p) γ₀(p') ln((p+p')/|p-p'|)."""
    sign, beta, log_z = state.stats.sign, state.beta, state.log_z
    upper = momentum_cutoff(beta, state.z)

    def occ(p):
        return _occupation(beta * p * p - log_z, sign)

    def inner(p):
        if p <= 0.0:
            return 0.0

        def kernel(k):
            return k * occ(k) * (math.log(p + k) - math.log(abs(p - k)))

        left = integrate.quad(kernel, 0.0, p, epsabs=0.0, epsrel=1e-11, limit=200)[0]
        right = integrate.quad(kernel, p, upper, epsabs=0.0, epsrel=1e-11, limit=200)[0]
        return p * occ(p) * (left + right)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(
            inner, 0.0, upper, epsabs=0.0, epsrel=1e-10, limit=200,
            points=fermi_momentum_hint(beta, state.z, state.stats) or None,
        )
    if abserr > 1e-7 * abs(value):
        raise NumericError("momentum-space exchange quadrature did not converge", achieved_tolerance=abserr)
    return value / (2.0 * math.pi**3)


def exchange_integral(state: ThermoState, profile: RadialProfile | None = None, cross_check: bool = True) -> float:
    """Exchange integral I = ∫ |γ̃₀(x)|²/|x| dx via the tabulated real-space profile.

    Args:
        state: Ideal-gas equilibrium point.
        profile: Prebuilt γ̃₀ profile; built on demand when omitted.
        cross_check: Also evaluate the momentum-space route and compare.

    Returns:
        The real-space value of I (always >= 0).
    """
    profile = profile or build_gamma_tilde_profile(state)
    value = profile_exchange_integral(profile)
    if cross_check:
        oracle = exchange_integral_momentum(state)
        gap = abs(value - oracle) / abs(oracle)
        if gap > ROUTE_FAILURE:
            raise ConsistencyError(f"exchange routes disagree: {value:.12g} vs {oracle:.12g}", achieved_tolerance=gap)
        if gap > ROUTE_AGREEMENT:
            logger.warning(f"⚠️ Exchange routes differ by {gap:.2e} relative")
    return value


def profile_tail_bound(state: ThermoState, radius: float) -> float:
    """Bound on 4π ∫_radius^∞ s γ̃₀(s)² ds from the Gaussian-series majorant.

    Only available for z < 1, where |γ̃₀(s)| ≤ Σ z^ℓ (4πβℓ)^{-3/2} e^{-s²/(4βℓ)}.
    """
    if state.z >= 1.0:
        raise DomainError("the Gaussian-series majorant requires z < 1")
    terms = math.ceil(-70.0 / state.log_z)
    ell = np.arange(1, terms + 1, dtype=float)
    weights = np.exp(ell * state.log_z) * (FOUR_PI * state.beta * ell) ** -1.5

    def integrand(s):
        majorant = np.sum(weights * np.exp(-s * s / (4.0 * state.beta * ell)))
        return s * majorant * majorant

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value = integrate.quad(integrand, radius, np.inf, limit=400)[0]
    return FOUR_PI * value


class FreeEnergyExpansion(BaseModel):
    model_config = ConfigDict(frozen=True)

    state: ThermoState
    alpha: float
    exchange_integral: float
    f0: float
    exchange_term: float
    total: float


def two_term_free_energy(
    beta: float,
    rho: float,
    alpha: float,
    n: int = 1,
    stats: Statistics = Statistics.FERMI,
    cross_check: bool = True,
) -> FreeEnergyExpansion:
    """f₀ ∓ (αn/2) I: fermions take the minus sign, bosons the plus sign."""
    if alpha < 0:
        raise DomainError(f"coupling must be nonnegative, got {alpha!r}")
    state = solve_fugacity(beta, rho, n, stats)
    f0 = ideal_free_energy(state)
    integral = exchange_integral(state, cross_check=cross_check)
    exchange_term = -stats.sign * 0.5 * alpha * n * integral
    return FreeEnergyExpansion(
        state=state,
        alpha=alpha,
        exchange_integral=integral,
        f0=f0,
        exchange_term=exchange_term,
        total=f0 + exchange_term,
    )
