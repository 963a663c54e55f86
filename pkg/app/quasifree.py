import logging
import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import integrate, linalg, special
from scipy.stats import unitary_group

from app.config import ETA_POINTS, OCCUPATION_CUTOFF
from app.coulomb_decomp import ball_overlap, v_short
from app.errors import ConstructionError, DomainError, TruncationError
from app.exchange import RadialProfile, build_gamma_tilde_profile
from app.statmech_core import FOUR_PI, Statistics, ThermoState, momentum_occupation

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-12
SPECTRUM_TOLERANCE = 1e-10
ENTROPY_FLOOR = 1e-300


class OnePdm(BaseModel):
    """One-particle density matrix on a finite mode set."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: np.ndarray
    stats: Statistics

    @field_validator("matrix", mode="before")
    @classmethod
    def _as_square_matrix(cls, value):
        matrix = np.array(value, dtype=complex)
        if matrix.ndim == 1:
            matrix = np.diag(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"one-particle density matrix must be square, got shape {matrix.shape}")
        matrix.setflags(write=False)
        return matrix

    @model_validator(mode="after")
    def _check_spectrum(self):
        m = self.matrix
        if m.size == 0:
            return self
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOLERANCE * scale:
            raise ValueError("one-particle density matrix is not Hermitian")
        eigenvalues = linalg.eigvalsh(m)
        if eigenvalues[0] < -SPECTRUM_TOLERANCE:
            raise ValueError(f"negative eigenvalue {eigenvalues[0]:.3e}")
        if self.stats is Statistics.FERMI and eigenvalues[-1] > 1.0 + SPECTRUM_TOLERANCE:
            raise ValueError(f"Fermi eigenvalue {eigenvalues[-1]:.6g} exceeds 1")
        return self

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def eigenvalues(self) -> np.ndarray:
        upper = 1.0 if self.stats is Statistics.FERMI else np.inf
        return np.clip(linalg.eigvalsh(self.matrix), 0.0, upper)

    def restrict(self, projection) -> "OnePdm":
        """XγX expressed on the range of the projection X."""
        basis = projection_range(projection, self.dim)
        return OnePdm(matrix=basis.conj().T @ self.matrix @ basis, stats=self.stats)


def _check_projection(projection, dim: int) -> np.ndarray:
    x = np.asarray(projection, dtype=complex)
    if x.shape != (dim, dim):
        raise DomainError(f"projection must have shape {(dim, dim)}, got {x.shape}")
    tolerance = HERMITIAN_TOLERANCE * max(1, dim)
    if np.max(np.abs(x - x.conj().T)) > tolerance or np.max(np.abs(x @ x - x)) > tolerance:
        raise DomainError("matrix is not an orthogonal projection")
    return x


def projection_range(projection, dim: int) -> np.ndarray:
    """Orthonormal basis (as columns) of the range of an orthogonal projection."""
    x = _check_projection(projection, dim)
    eigenvalues, vectors = linalg.eigh(x)
    return vectors[:, eigenvalues > 0.5]


def random_onepdm(M: int, stats: Statistics, rng: np.random.Generator) -> OnePdm:
    """γ = V diag(u) V* with Haar-random V and eigenvalues kept clear of entropy singularities."""
    high = 0.95 if stats is Statistics.FERMI else 3.0
    u = rng.uniform(0.05, high, size=M)
    if M == 1:
        return OnePdm(matrix=np.diag(u), stats=stats)
    v = unitary_group.rvs(M, random_state=rng)
    matrix = (v * u) @ v.conj().T
    return OnePdm(matrix=0.5 * (matrix + matrix.conj().T), stats=stats)


def random_projection(M: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Rank-k orthogonal projection with Haar-distributed range."""
    if not 0 <= k <= M:
        raise DomainError(f"rank {k} out of range for dimension {M}")
    gaussian = rng.standard_normal((M, k)) + 1j * rng.standard_normal((M, k))
    q, _ = linalg.qr(gaussian, mode="economic")
    x = q @ q.conj().T
    return 0.5 * (x + x.conj().T)


def gibbs_onepdm(h, beta: float, stats: Statistics) -> OnePdm:
    """(e^{βh} ± 1)^{-1}; bosons need a positive one-particle Hamiltonian."""
    eps, u = linalg.eigh(np.asarray(h, dtype=complex))
    if stats is Statistics.BOSE and eps[0] <= 0:
        raise DomainError("Bose Gibbs states need h > 0")
    if stats is Statistics.FERMI:
        occ = special.expit(-beta * eps)
    else:
        occ = 1.0 / np.expm1(beta * eps)
    matrix = (u * occ) @ u.conj().T
    return OnePdm(matrix=0.5 * (matrix + matrix.conj().T), stats=stats)


def pair_count_quasifree(gamma: OnePdm, X) -> float:
    """(tr Xγ)² ∓ tr(XγXγ): the expected number of ordered pairs inside X."""
    x = _check_projection(X, gamma.dim)
    xg = x @ gamma.matrix
    t = np.trace(xg).real
    return float(t * t - gamma.stats.sign * np.trace(xg @ xg).real)


class CountDistribution(BaseModel):
    """Law of the particle number n_X in a quasi-free state."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pmf: np.ndarray
    tail_mass: float = 0.0

    def expectation(self, func) -> float:
        n = np.arange(self.pmf.size, dtype=float)
        return float(np.dot(self.pmf, func(n)))

    def factorial_moment(self, order: int) -> float:
        """E[n(n-1)...(n-order+1)]."""
        return self.expectation(lambda n: np.prod([n - j for j in range(order)], axis=0))

    @property
    def mean(self) -> float:
        return self.expectation(lambda n: n)

    @property
    def pair_fourth_moment(self) -> float:
        """E[n²(n-1)²]."""
        return self.expectation(lambda n: (n * (n - 1.0)) ** 2)


def number_distribution(gamma: OnePdm, X=None, cap: int | None = None) -> CountDistribution:
    """Exact law of n_X: a convolution of Bernoulli (Fermi) or geometric (Bose) laws.

    The laws sit on the eigenvalues of γ restricted to the range of X. Bose laws are
    truncated at `cap` total particles, with the discarded weight in tail_mass.
    """
    restricted = gamma if X is None else gamma.restrict(X)
    occupations = restricted.eigenvalues()
    if gamma.stats is Statistics.FERMI:
        pmf = np.ones(1)
        for lam in occupations:
            pmf = np.convolve(pmf, [1.0 - lam, lam])
        return CountDistribution(pmf=pmf)

    if cap is None:
        ratio = max((lam / (1.0 + lam) for lam in occupations), default=0.0)
        cap = 0 if ratio == 0 else int(math.ceil(math.log(1e-18 / max(1, occupations.size)) / math.log(ratio)))
    n = np.arange(cap + 1, dtype=float)
    pmf = np.zeros(cap + 1)
    pmf[0] = 1.0
    for lam in occupations:
        law = (lam / (1.0 + lam)) ** n / (1.0 + lam)
        pmf = np.convolve(pmf, law)[: cap + 1]
    return CountDistribution(pmf=pmf, tail_mass=max(0.0, 1.0 - float(pmf.sum())))


def fourth_moment_bound(trace: float, stats: Statistics) -> float:
    """Upper bound on E[n_X²(n_X-1)²] for a quasi-free state with tr Xγ = trace."""
    if stats is Statistics.FERMI:
        return trace**2 * (trace + 2.0) ** 2
    return 24.0 * trace**2 * (trace + 0.5) ** 2


def quasifree_entropy(omega: OnePdm) -> float:
    """tr s(ω) = -tr ω ln ω ∓ tr (1∓ω) ln(1∓ω)."""
    mu = omega.eigenvalues()
    sign = omega.stats.sign
    return float(-np.sum(special.xlogy(mu, mu)) - sign * np.sum(special.xlogy(1.0 - sign * mu, 1.0 - sign * mu)))


def rel_entropy_quasifree(omega: OnePdm, gamma: OnePdm) -> float:
    """Relative entropy of the quasi-free state of ω with respect to that of γ.

    S = tr[ω(ln ω - ln γ)] ± tr[(1∓ω)(ln(1∓ω) - ln(1∓γ))], evaluated in the eigenbasis of γ.
    Returns math.inf when ω has weight where γ is 0 (or 1 for fermions).
    """
    if omega.dim != gamma.dim or omega.stats is not gamma.stats:
        raise DomainError("relative entropy needs matching dimension and statistics")
    sign = gamma.stats.sign
    lam, vectors = linalg.eigh(gamma.matrix)
    w = np.einsum("ik,ij,jk->k", vectors.conj(), omega.matrix, vectors).real
    upper = 1.0 if sign > 0 else np.inf
    lam = np.clip(lam, 0.0, upper)
    w = np.clip(w, 0.0, upper)

    if np.any((lam <= ENTROPY_FLOOR) & (w > 1e-12)):
        logger.warning("⚠️ Reference occupation vanishes where the state has weight, relative entropy is infinite")
        return math.inf
    if sign > 0 and np.any((1.0 - lam <= ENTROPY_FLOOR) & (1.0 - w > 1e-12)):
        logger.warning("⚠️ Reference occupation is 1 where the state has holes, relative entropy is infinite")
        return math.inf

    cross = np.sum(special.xlogy(w, np.maximum(lam, ENTROPY_FLOOR)))
    hole = 1.0 - sign * w
    cross += sign * np.sum(special.xlogy(hole, np.maximum(1.0 - sign * lam, ENTROPY_FLOOR)))
    return float(-quasifree_entropy(omega) - cross)


def free_energy_identity_check(omega: OnePdm, gamma: OnePdm, beta: float, h) -> float:
    """|S/β - (tr hω - s(ω)/β - F)| for the Gibbs one-particle matrix γ of h at β."""
    h = np.asarray(h, dtype=complex)
    eps = linalg.eigvalsh(h)
    expected = gibbs_onepdm(h, beta, gamma.stats)
    if np.max(np.abs(expected.matrix - gamma.matrix)) > 1e-8:
        raise DomainError("gamma is not the Gibbs one-particle density matrix of h at beta")
    sign = gamma.stats.sign
    free_energy = -sign / beta * float(np.sum(np.log1p(sign * np.exp(-beta * eps))))
    lhs = rel_entropy_quasifree(omega, gamma) / beta
    energy = float(np.trace(h @ omega.matrix).real)
    rhs = energy - quasifree_entropy(omega) / beta - free_energy
    return abs(lhs - rhs)


# Smooth bump ψ(r) = (1 - 4r²)^4 on r <= 1/2; its self-convolution gives η.
_BUMP = Polynomial([1.0, 0.0, -4.0]) ** 4
_BUMP_MOMENT = (Polynomial([0.0, 1.0]) * _BUMP).integ()
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(16)
_CONV_AT_ORIGIN = FOUR_PI * (Polynomial([0.0, 0.0, 1.0]) * _BUMP * _BUMP).integ()(0.5)


def _bump_autoconvolution(s: float) -> float:
    if s <= 0.0:
        return _CONV_AT_ORIGIN
    if s >= 1.0:
        return 0.0
    breaks = sorted({0.0, 0.5, *(b for b in (s, 0.5 - s, s - 0.5) if 0.0 < b < 0.5)})
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        r = 0.5 * (hi - lo) * _GAUSS_NODES + 0.5 * (hi + lo)
        shell = _BUMP_MOMENT(np.minimum(s + r, 0.5)) - _BUMP_MOMENT(np.minimum(np.abs(s - r), 0.5))
        total += 0.5 * (hi - lo) * np.dot(_GAUSS_WEIGHTS, r * _BUMP(r) * shell)
    return 2.0 * math.pi / s * total


def eta_exact(s):
    """η(s) = (ψ*ψ)(s)/(ψ*ψ)(0), from piecewise-exact Gauss-Legendre panels."""
    s = np.abs(np.asarray(s, dtype=float))
    values = np.vectorize(_bump_autoconvolution, otypes=[float])(s) / _CONV_AT_ORIGIN
    return float(values) if values.ndim == 0 else values


_FOURIER_GRID = np.linspace(0.0, 1.0, 8001)


class EtaCutoff(BaseModel):
    """Radial cutoff η with η(0) = 1, support in the unit ball and η̂ >= 0, used at scale d."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    profile: RadialProfile
    d: float = Field(default=1.0, gt=0)
    L: float | None = Field(default=None, gt=0)
    remainder_constant: float = math.inf

    def __call__(self, s):
        """η_d(s) = η(s/d)."""
        return self.profile(np.abs(np.asarray(s, dtype=float)) / self.d)

    def exact(self, s):
        return eta_exact(np.asarray(s, dtype=float) / self.d)

    def fourier(self, k):
        """Unscaled radial transform η̂(k) = (4π/k)∫₀¹ s η(s) sin(ks) ds."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        s = _FOURIER_GRID
        eta = _fourier_samples()
        kernel = np.where(
            k[:, None] > 0,
            s * np.sin(np.outer(k, s)) / np.where(k[:, None] > 0, k[:, None], 1.0),
            s * s,
        )
        values = FOUR_PI * integrate.simpson(kernel * eta, x=s, axis=1)
        return float(values[0]) if values.size == 1 else values

    def fourth_difference(self, h: float) -> float:
        """Central fourth difference of the even function η at 0."""
        return (2.0 * eta_exact(2.0 * h) - 8.0 * eta_exact(h) + 6.0) / h**4

    def periodic(self, x):
        """η_d^per(x) = η(|x|/d) with |x| the minimal-image distance in the box of side L."""
        if self.L is None:
            raise DomainError("periodic cutoff needs a box side L")
        x = np.asarray(x, dtype=float)
        wrapped = x - self.L * np.round(x / self.L)
        return self(np.linalg.norm(wrapped, axis=-1))

    def at_scale(self, d: float, L: float | None = None) -> "EtaCutoff":
        if not d > 0:
            raise DomainError(f"cutoff scale must be positive, got {d!r}")
        if L is not None and 2.0 * d > L:
            raise DomainError(f"cutoff scale {d!r} exceeds half the box side {L!r}")
        return self.model_copy(update={"d": d, "L": L})


@lru_cache(maxsize=1)
def _fourier_samples() -> np.ndarray:
    return eta_exact(_FOURIER_GRID)


@lru_cache(maxsize=1)
def build_eta(points: int = ETA_POINTS) -> EtaCutoff:
    """Constructs η and checks positivity, normalization and fourth-order smoothness.

    Raises:
        ConstructionError: any of the defining checks fails.
    """
    grid = np.linspace(0.0, 1.0, points)
    values = eta_exact(grid)
    profile = RadialProfile(grid, values)

    if not math.isclose(values[0], 1.0, rel_tol=1e-14) or values[-1] != 0.0 or np.max(np.abs(values)) > 1.0 + 1e-14:
        raise ConstructionError("eta fails normalization or support")

    body = grid > 0
    remainder = float(np.max((1.0 - values[body] ** 2) / grid[body] ** 0.25))
    eta = EtaCutoff(profile=profile, remainder_constant=remainder)

    k = np.linspace(0.0, 60.0, 601)
    transform = eta.fourier(k)
    if np.min(transform) < -1e-8 * transform[0]:
        raise ConstructionError(f"eta transform is negative: min {np.min(transform):.3e}")

    coarse, fine = eta.fourth_difference(0.05), eta.fourth_difference(0.025)
    if not abs(coarse / fine - 1.0) <= 0.1:
        raise ConstructionError(f"fourth difference not stable under refinement: {coarse:.6g} vs {fine:.6g}")

    logger.info(f"✅ Built eta cutoff: Δ⁴η(0) ≈ {fine:.6g}, remainder constant {remainder:.4g}")
    return eta


class PlaneWaveOnePdm(BaseModel):
    """Translation-invariant one-particle density matrix on a periodic box.

    Stored by its plane-wave eigenvalues (per internal state) at momenta (2π/L)m,
    m in {-K..K}³, identical across the n internal states.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    L: float = Field(gt=0)
    occupations: np.ndarray
    n: int = Field(default=1, ge=1)
    stats: Statistics

    @field_validator("occupations", mode="before")
    @classmethod
    def _as_cube(cls, value):
        occ = np.array(value, dtype=float)
        if occ.ndim != 3 or len(set(occ.shape)) != 1 or occ.shape[0] % 2 != 1:
            raise ValueError("occupations must be a (2K+1)^3 array")
        occ.setflags(write=False)
        return occ

    @property
    def cutoff(self) -> int:
        return (self.occupations.shape[0] - 1) // 2

    @property
    def volume(self) -> float:
        return self.L**3

    @property
    def trace(self) -> float:
        return self.n * float(self.occupations.sum())

    @property
    def mean_density(self) -> float:
        return self.trace / self.volume

    def eigenvalues(self) -> np.ndarray:
        return self.occupations.ravel()

    def kernel(self, r):
        """Position kernel γ(x, σ; x + r, σ) per internal state."""
        r = np.atleast_2d(np.asarray(r, dtype=float))
        m = np.arange(-self.cutoff, self.cutoff + 1)
        phase = np.exp(1j * 2.0 * math.pi / self.L * r[..., None] * m)
        value = np.einsum("abc,pa,pb,pc->p", self.occupations, phase[:, 0], phase[:, 1], phase[:, 2])
        value = value.real / self.volume
        return float(value[0]) if value.size == 1 else value

    def to_onepdm(self, max_modes: int = 4096) -> OnePdm:
        size = self.occupations.size
        if size > max_modes:
            raise DomainError(f"{size} plane-wave modes exceed the dense limit {max_modes}")
        return OnePdm(matrix=np.diag(self.eigenvalues()), stats=self.stats)


def periodic_gamma0(L: float, M: int | None, state: ThermoState) -> PlaneWaveOnePdm:
    """Ideal-gas one-particle density matrix on the torus of side L.

    Keeps modes (2π/L)m with |m_i| <= M. M is chosen automatically when None.

    Raises:
        TruncationError: a discarded mode has occupation above the cutoff.
    """
    if not L > 0:
        raise DomainError(f"box side must be positive, got {L!r}")
    unit = 2.0 * math.pi / L

    def edge(m: int) -> float:
        return float(momentum_occupation(unit * (m + 1), state.beta, state.z, state.stats))

    if M is None:
        needed = math.sqrt((-math.log(OCCUPATION_CUTOFF) + max(state.log_z, 0.0)) / state.beta)
        M = max(1, int(math.ceil(needed / unit)) - 1)
        while edge(M) > OCCUPATION_CUTOFF:
            M += 1
    elif edge(M) > OCCUPATION_CUTOFF:
        raise TruncationError(
            f"mode cutoff M={M} discards occupation {edge(M):.3e}", achieved_tolerance=edge(M)
        )

    k = unit * np.arange(-M, M + 1)
    p = np.sqrt(k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2)
    occupations = momentum_occupation(p, state.beta, state.z, state.stats)
    gamma0 = PlaneWaveOnePdm(L=L, occupations=occupations, n=state.n, stats=state.stats)
    logger.info(f"✅ Periodic gamma0 at L={L:g}: {occupations.size} modes, mean density {gamma0.mean_density:.6g}")
    return gamma0


def apply_eta_cutoff(gamma0: PlaneWaveOnePdm, eta: EtaCutoff, d: float) -> PlaneWaveOnePdm:
    """γ_d(x; y) = γ₀(x; y) η_d^per(x - y), returned in plane-wave form.

    The product kernel is sampled on an N³ grid and transformed back, so the new
    eigenvalues are the discrete convolution of γ₀(p) with the aliased η̂_d.
    """
    if not 0 < d <= gamma0.L / 2.0:
        raise DomainError(f"cutoff scale d={d!r} must lie in (0, L/2] with L={gamma0.L!r}")
    eta = eta.at_scale(d, gamma0.L)
    k_in = gamma0.cutoff
    k_out = 2 * k_in + 1
    size = 2 * k_out + 1

    padded = np.zeros((size,) * 3)
    lo = k_out - k_in
    padded[lo : lo + 2 * k_in + 1, lo : lo + 2 * k_in + 1, lo : lo + 2 * k_in + 1] = gamma0.occupations
    kernel = np.fft.ifftn(np.fft.ifftshift(padded)).real * size**3 / gamma0.volume

    axis = np.fft.fftfreq(size, d=1.0 / size) * gamma0.L / size
    displacement = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    product = kernel * eta.periodic(displacement)
    occupations = np.fft.fftshift(np.fft.fftn(product).real) * (gamma0.L / size) ** 3
    return PlaneWaveOnePdm(L=gamma0.L, occupations=occupations, n=gamma0.n, stats=gamma0.stats)


def _correlation_integral(state: ThermoState, weight, upper: float, profile: RadialProfile) -> float:
    sign, n, rho = state.stats.sign, state.n, state.rho

    def integrand(s):
        g = profile(s)
        return s * s * weight(s) * (rho * rho - sign * n * g * g)

    hint = [x for x in (1.0, 5.0) if x < upper]
    value = integrate.quad(integrand, 0.0, upper, epsabs=0.0, epsrel=1e-10, limit=400, points=hint or None)[0]
    return FOUR_PI * value


def integrated_pair_count(state: ThermoState, r: float, profile: RadialProfile | None = None) -> float:
    """Per-volume ∫dξ Tr[n_{r,ξ}(n_{r,ξ}-1)Γ₀] = 4π∫ s² J_r(s)[ρ² ∓ n γ̃₀(s)²] ds."""
    if not r > 0:
        raise DomainError(f"ball radius must be positive, got {r!r}")
    profile = profile or build_gamma_tilde_profile(state)
    return _correlation_integral(state, lambda s: ball_overlap(r, s), 2.0 * r, profile)


def short_range_energy(state: ThermoState, R: float, profile: RadialProfile | None = None) -> float:
    """Per-volume V_{<R} interaction energy ½·4π∫ s²[ρ² ∓ n γ̃₀²] v_short(s) ds of the ideal state."""
    if not R > 0:
        raise DomainError(f"split radius must be positive, got {R!r}")
    profile = profile or build_gamma_tilde_profile(state)
    return 0.5 * _correlation_integral(state, lambda s: v_short(s, R), 2.0 * R, profile)


def short_range_energy_by_radii(state: ThermoState, R: float, profile: RadialProfile | None = None) -> float:
    """Same energy assembled ball by ball: (1/2π)∫₀^R r^{-5} integrated_pair_count(r) dr."""
    profile = profile or build_gamma_tilde_profile(state)
    value = integrate.quad(
        lambda r: r**-5 * integrated_pair_count(state, r, profile), 0.0, R, epsabs=0.0, epsrel=1e-9, limit=100
    )[0]
    return value / (2.0 * math.pi)
