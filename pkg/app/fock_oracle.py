import itertools
import logging
import math
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import linalg, sparse, special

from app.config import BOSE_TAIL_MASS
from app.errors import DomainError, TruncationError
from app.quasifree import OnePdm
from app.statmech_core import Statistics

logger = logging.getLogger(__name__)

MAX_FERMI_MODES = 12
MAX_BOSE_MODES = 6
MAX_BOSE_DIMENSION = 3003
STATE_TOLERANCE = 1e-12
NULL_EIGENVALUE = 1e-14


class FockSpace(BaseModel):
    """Occupation-number basis on M modes.

    Bose spaces cap the total particle number at n_max, giving dimension
    C(n_max + M, M) rather than the (n_max + 1)^M of a per-mode cap; every
    particle-number conserving operator leaves the truncated space invariant.
    """

    model_config = ConfigDict(frozen=True)

    stats: Statistics
    M: int = Field(ge=1)
    n_max: int | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_size(self):
        if self.stats is Statistics.FERMI:
            if self.M > MAX_FERMI_MODES:
                raise ValueError(f"at most {MAX_FERMI_MODES} fermionic modes, got {self.M}")
            if self.n_max is not None:
                raise ValueError("fermionic spaces take no occupation cap")
        else:
            if self.n_max is None:
                raise ValueError("bosonic spaces need a total occupation cap n_max")
            if self.M > MAX_BOSE_MODES:
                raise ValueError(f"at most {MAX_BOSE_MODES} bosonic modes, got {self.M}")
            if math.comb(self.n_max + self.M, self.M) > MAX_BOSE_DIMENSION:
                raise ValueError(f"bosonic dimension C({self.n_max + self.M}, {self.M}) exceeds {MAX_BOSE_DIMENSION}")
        return self

    @property
    def basis(self) -> np.ndarray:
        return _basis(self.stats, self.M, self.n_max)

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def index_of(self, occupation) -> int:
        return _basis_index(self.stats, self.M, self.n_max)[tuple(int(x) for x in occupation)]

    def sector_slices(self) -> list[tuple[int, slice]]:
        """Contiguous basis ranges of fixed particle number N."""
        totals = self.basis.sum(axis=1)
        edges = np.flatnonzero(np.diff(totals)) + 1
        starts = np.concatenate(([0], edges))
        stops = np.concatenate((edges, [totals.size]))
        return [(int(totals[a]), slice(int(a), int(b))) for a, b in zip(starts, stops)]

    def number_operator(self, modes=None) -> np.ndarray:
        """Diagonal of n_X = Σ_{i∈X} a_i†a_i."""
        modes = list(range(self.M)) if modes is None else _check_modes(modes, self.M)
        return self.basis[:, modes].sum(axis=1).astype(float)


def _check_modes(modes, M: int) -> list[int]:
    modes = sorted({int(i) for i in modes})
    if any(i < 0 or i >= M for i in modes):
        raise DomainError(f"mode subset {modes} is not contained in range({M})")
    return modes


@lru_cache(maxsize=64)
def _basis(stats: Statistics, M: int, n_max: int | None) -> np.ndarray:
    if stats is Statistics.FERMI:
        states = itertools.product((0, 1), repeat=M)
    else:
        states = (s for s in itertools.product(range(n_max + 1), repeat=M) if sum(s) <= n_max)
    basis = np.array(sorted(states, key=lambda s: (sum(s), s)), dtype=int).reshape(-1, M)
    basis.setflags(write=False)
    return basis


@lru_cache(maxsize=64)
def _basis_index(stats: Statistics, M: int, n_max: int | None) -> dict:
    return {tuple(row): i for i, row in enumerate(_basis(stats, M, n_max).tolist())}


@lru_cache(maxsize=4096)
def hopping(space: FockSpace, i: int, j: int) -> sparse.csr_matrix:
    """Sparse a_i† a_j in the occupation basis, with Jordan-Wigner signs for fermions."""
    basis = space.basis
    index = _basis_index(space.stats, space.M, space.n_max)
    rows, cols, data = [], [], []
    for col, occupation in enumerate(basis.tolist()):
        if occupation[j] == 0:
            continue
        if i == j:
            rows.append(col)
            cols.append(col)
            data.append(float(occupation[j]))
            continue
        amplitude = math.sqrt(occupation[j])
        sign = (-1) ** sum(occupation[:j])
        occupation = list(occupation)
        occupation[j] -= 1
        if space.stats is Statistics.FERMI:
            if occupation[i] == 1:
                continue
            sign *= (-1) ** sum(occupation[:i])
        else:
            amplitude *= math.sqrt(occupation[i] + 1)
            sign = 1
        occupation[i] += 1
        rows.append(index[tuple(occupation)])
        cols.append(col)
        data.append(sign * amplitude)
    size = space.dimension
    return sparse.csr_matrix((data, (rows, cols)), shape=(size, size))


def second_quantize(h, space: FockSpace) -> sparse.csr_matrix:
    """dΓ(h) = Σ_ij h_ij a_i† a_j."""
    h = np.asarray(h, dtype=complex)
    if h.shape != (space.M, space.M):
        raise DomainError(f"one-particle operator must have shape {(space.M, space.M)}, got {h.shape}")
    total = sparse.csr_matrix((space.dimension, space.dimension), dtype=complex)
    for i, j in zip(*np.nonzero(h)):
        total = total + h[i, j] * hopping(space, int(i), int(j))
    return total


def _bose_log_partition(eps: np.ndarray) -> float:
    return float(-np.sum(np.log1p(-np.exp(-eps))))


def bose_cap_for(h, tolerance: float = BOSE_TAIL_MASS) -> int:
    """Smallest total cap whose discarded Gibbs weight 1 - Z_K/Z is below tolerance.

    Z_K sums the complete homogeneous polynomials of e^{-ε_i} up to degree K.
    """
    eps = linalg.eigvalsh(np.asarray(h, dtype=complex))
    if eps[0] <= 0:
        raise DomainError("Bose Gibbs states need h > 0")
    weights = np.exp(-eps)
    log_z = _bose_log_partition(eps)
    limit = 1
    while math.comb(limit + eps.size, eps.size) <= MAX_BOSE_DIMENSION:
        limit += 1
    coefficients = np.zeros(limit + 1)
    coefficients[0] = 1.0
    powers = np.arange(limit + 1)
    for w in weights:
        coefficients = np.convolve(coefficients, w**powers)[: limit + 1]
    kept = np.cumsum(coefficients)
    tails = -np.expm1(np.log(kept) - log_z)
    good = np.flatnonzero(tails <= tolerance)
    if good.size == 0 or math.comb(int(good[0]) + eps.size, eps.size) > MAX_BOSE_DIMENSION:
        raise TruncationError(
            f"no total cap within the dimension limit reaches tail mass {tolerance:.1e}",
            achieved_tolerance=float(tails[-2]),
        )
    return int(good[0])


def gibbs_space(h, stats: Statistics, tail_tolerance: float = BOSE_TAIL_MASS) -> FockSpace:
    M = np.asarray(h).shape[0]
    if stats is Statistics.FERMI:
        return FockSpace(stats=stats, M=M)
    return FockSpace(stats=stats, M=M, n_max=bose_cap_for(h, tail_tolerance))


class FockState(BaseModel):
    """Density matrix on a FockSpace; Gibbs states also carry their exact logarithm."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    space: FockSpace
    rho: np.ndarray
    log_rho: np.ndarray | None = None
    tail_mass: float = 0.0

    @field_validator("rho", "log_rho", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        if value is None:
            return None
        matrix = np.array(value, dtype=complex)
        matrix.setflags(write=False)
        return matrix

    @model_validator(mode="after")
    def _check_density_matrix(self):
        size = self.space.dimension
        if self.rho.shape != (size, size):
            raise ValueError(f"density matrix must have shape {(size, size)}, got {self.rho.shape}")
        if abs(np.trace(self.rho).real - 1.0) > STATE_TOLERANCE:
            raise ValueError("density matrix must have unit trace")
        if np.max(np.abs(self.rho - self.rho.conj().T)) > STATE_TOLERANCE:
            raise ValueError("density matrix is not Hermitian")
        try:
            linalg.cholesky(self.rho + STATE_TOLERANCE * np.eye(size), lower=True)
        except linalg.LinAlgError as e:
            raise ValueError("density matrix is not positive semidefinite") from e
        return self


def quasifree_gibbs(h, space: FockSpace, tail_tolerance: float = BOSE_TAIL_MASS) -> FockState:
    """e^{-dΓ(h)}/Z, diagonalized sector by sector in particle number.

    Raises:
        DomainError: bosonic h is not positive.
        TruncationError: the Bose cap discards more weight than tail_tolerance.
    """
    h = np.asarray(h, dtype=complex)
    eps = linalg.eigvalsh(h)
    if space.stats is Statistics.BOSE and eps[0] <= 0:
        raise DomainError("Bose Gibbs states need h > 0")
    hamiltonian = second_quantize(h, space).toarray()

    blocks = []
    for _, sector in space.sector_slices():
        energies, vectors = linalg.eigh(hamiltonian[sector, sector])
        blocks.append((sector, energies, vectors))
    log_z_kept = float(special.logsumexp(np.concatenate([energies for _, energies, _ in blocks]) * -1.0))

    tail = 0.0
    if space.stats is Statistics.BOSE:
        tail = float(-np.expm1(log_z_kept - _bose_log_partition(eps)))
        if tail > tail_tolerance:
            raise TruncationError(f"Bose cap n_max={space.n_max} discards weight {tail:.3e}", achieved_tolerance=tail)

    size = space.dimension
    rho = np.zeros((size, size), dtype=complex)
    log_rho = np.zeros((size, size), dtype=complex)
    for sector, energies, vectors in blocks:
        log_p = -energies - log_z_kept
        rho[sector, sector] = (vectors * np.exp(log_p)) @ vectors.conj().T
        log_rho[sector, sector] = (vectors * log_p) @ vectors.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return FockState(space=space, rho=rho, log_rho=log_rho, tail_mass=tail)


def onepdm_hamiltonian(gamma: OnePdm) -> np.ndarray:
    """ln((1∓γ)/γ), the one-particle Hamiltonian whose Gibbs state has density matrix γ."""
    lam, vectors = linalg.eigh(gamma.matrix)
    if lam[0] <= 0 or (gamma.stats is Statistics.FERMI and lam[-1] >= 1):
        raise DomainError("one-particle density matrix must have spectrum inside the open domain")
    eps = np.log1p(-gamma.stats.sign * lam) - np.log(lam)
    return (vectors * eps) @ vectors.conj().T


def quasifree_state(gamma: OnePdm, tail_tolerance: float = BOSE_TAIL_MASS) -> FockState:
    h = onepdm_hamiltonian(gamma)
    return quasifree_gibbs(h, gibbs_space(h, gamma.stats, tail_tolerance), tail_tolerance)


def _expectation(operator, rho: np.ndarray) -> complex:
    return complex(operator.multiply(rho.T).sum())


def one_body_density(state: FockState) -> OnePdm:
    """γ_ij = Tr[a_j† a_i ρ]."""
    space = state.space
    matrix = np.empty((space.M, space.M), dtype=complex)
    for i in range(space.M):
        for j in range(space.M):
            matrix[i, j] = _expectation(hopping(space, j, i), state.rho)
    return OnePdm(matrix=0.5 * (matrix + matrix.conj().T), stats=space.stats)


def pair_count_exact(state: FockState, X_modes) -> float:
    """Tr[n_X(n_X - 1)ρ]."""
    n_x = state.space.number_operator(X_modes)
    return float(np.dot(n_x * (n_x - 1.0), np.diag(state.rho).real))


def fourth_moment_exact(state: FockState, X_modes) -> float:
    """Tr[n_X²(n_X - 1)²ρ]."""
    n_x = state.space.number_operator(X_modes)
    return float(np.dot((n_x * (n_x - 1.0)) ** 2, np.diag(state.rho).real))


def rel_entropy_exact(rho1: FockState, rho2: FockState) -> float:
    """Tr ρ₁(ln ρ₁ - ln ρ₂); math.inf when ρ₁ has weight outside the support of ρ₂."""
    if rho1.space != rho2.space:
        raise DomainError("relative entropy needs states on the same Fock space")
    p = np.clip(linalg.eigvalsh(rho1.rho), 0.0, None)
    entropy_term = float(np.sum(special.xlogy(p, p)))

    if rho2.log_rho is not None:
        cross = float(np.trace(rho1.rho @ rho2.log_rho).real)
        return entropy_term - cross

    q, vectors = linalg.eigh(rho2.rho)
    weights = np.einsum("ik,ij,jk->k", vectors.conj(), rho1.rho, vectors).real
    null = q <= NULL_EIGENVALUE
    if np.any(null & (weights > 1e-12)):
        logger.warning("⚠️ State has weight outside the reference support, relative entropy is infinite")
        return math.inf
    cross = float(np.sum(weights[~null] * np.log(q[~null])))
    return entropy_term - cross


def restrict_state(state: FockState, keep) -> FockState:
    """Partial trace over the modes not in keep.

    Fermionic states must be parity-even; each basis vector is reordered to
    (kept modes) ⊗ (discarded modes), which costs the Jordan-Wigner sign
    (-1)^{Σ_{k kept} a_k · #{discarded j < k occupied}}.
    """
    space = state.space
    keep = _check_modes(keep, space.M)
    if keep == list(range(space.M)):
        return state
    if not keep:
        raise DomainError("restriction needs at least one kept mode")
    discard = [j for j in range(space.M) if j not in keep]
    reduced = FockSpace(stats=space.stats, M=len(keep), n_max=space.n_max)

    basis = space.basis
    kept, traced = basis[:, keep], basis[:, discard]
    exponent = np.zeros(basis.shape[0], dtype=int)
    if space.stats is Statistics.FERMI:
        parity = (-1.0) ** basis.sum(axis=1)
        if np.max(np.abs(state.rho * (1.0 - np.outer(parity, parity)))) > 1e-10:
            raise DomainError("fermionic restriction needs a parity-even state")
        for column, k in enumerate(keep):
            before = [position for position, j in enumerate(discard) if j < k]
            exponent += kept[:, column] * traced[:, before].sum(axis=1)
    signs = np.where(exponent % 2 == 0, 1.0, -1.0)
    targets = np.array([reduced.index_of(row) for row in kept.tolist()])

    groups: dict[tuple, list[int]] = {}
    for row, occupation in enumerate(traced.tolist()):
        groups.setdefault(tuple(occupation), []).append(row)

    rho = np.zeros((reduced.dimension, reduced.dimension), dtype=complex)
    for rows in groups.values():
        rows = np.array(rows)
        t = targets[rows]
        s = signs[rows]
        rho[np.ix_(t, t)] += np.outer(s, s) * state.rho[np.ix_(rows, rows)]
    return FockState(space=reduced, rho=0.5 * (rho + rho.conj().T), tail_mass=state.tail_mass)


def trace_distance(rho1, rho2) -> float:
    """‖ρ₁ - ρ₂‖₁ (sum of absolute eigenvalues, no factor ½)."""
    a = rho1.rho if isinstance(rho1, FockState) else np.asarray(rho1, dtype=complex)
    b = rho2.rho if isinstance(rho2, FockState) else np.asarray(rho2, dtype=complex)
    return float(np.sum(np.abs(linalg.eigvalsh(a - b))))


def random_even_state(space: FockSpace, rng: np.random.Generator) -> FockState:
    """Wishart-random density matrix; fermionic ones are projected to even parity."""
    size = space.dimension
    g = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    rho = g @ g.conj().T
    if space.stats is Statistics.FERMI:
        parity = (-1.0) ** space.basis.sum(axis=1)
        rho = 0.5 * (rho + parity[:, None] * rho * parity[None, :])
    rho = rho / np.trace(rho).real
    return FockState(space=space, rho=0.5 * (rho + rho.conj().T))


def mode_projection(M: int, modes) -> np.ndarray:
    """Diagonal projection onto the listed modes, for comparison with one-particle formulas."""
    x = np.zeros((M, M))
    for i in _check_modes(modes, M):
        x[i, i] = 1.0
    return x
