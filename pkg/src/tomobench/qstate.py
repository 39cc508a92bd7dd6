"""Density-operator parametrization and the distance functions used as losses.

A ``d``-dimensional density operator is written as

    rho(s) = I/d + (1/2) sum_a s_a sigma_a

where the ``sigma_a`` are ``d^2 - 1`` traceless Hermitian generators with
Tr[sigma_a sigma_b] = 2 delta_ab.  For d = 2 the generators are the Pauli
matrices in the order (x, y, z); for d > 2 the generalized Gell-Mann
construction is used (symmetric, then antisymmetric, then diagonal).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvariantViolation

HERMITIAN_TOL = 1e-12
PSD_EIG_TOL = -1e-10
INTERIOR_EIG_MIN = 1e-8


@lru_cache(maxsize=None)
def generator_basis(dim: int) -> tuple[np.ndarray, ...]:
    """The d^2 - 1 traceless Hermitian generators, Tr[sigma_a sigma_b] = 2 delta_ab."""
    if dim < 2:
        raise InvariantViolation("dim_min", f"dim must be >= 2, got {dim}")
    sym = []
    antisym = []
    for j in range(dim):
        for k in range(j + 1, dim):
            m = np.zeros((dim, dim), dtype=complex)
            m[j, k] = 1.0
            m[k, j] = 1.0
            sym.append(m)
            m = np.zeros((dim, dim), dtype=complex)
            m[j, k] = -1.0j
            m[k, j] = 1.0j
            antisym.append(m)
    diag = []
    for level in range(1, dim):
        m = np.zeros((dim, dim), dtype=complex)
        for j in range(level):
            m[j, j] = 1.0
        m[level, level] = -level
        diag.append(m * np.sqrt(2.0 / (level * (level + 1))))
    basis = tuple(m.copy() for m in sym + antisym + diag)
    for m in basis:
        m.setflags(write=False)
    return basis


def bloch_dim(dim: int) -> int:
    return dim * dim - 1


@dataclass(frozen=True)
class BlochState:
    """A valid density operator, stored by its real parameter vector.

    Construction validates positive semidefiniteness of rho(s); use raw
    numpy vectors for points that may lie outside the state set (e.g.
    unconstrained linear inversion results).
    """

    dim: int
    s: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).copy()
        s.setflags(write=False)
        object.__setattr__(self, "s", s)
        k = bloch_dim(self.dim)
        if s.shape != (k,):
            raise InvariantViolation(
                "bloch_length", f"expected length {k} for dim {self.dim}, got {s.shape}"
            )
        eigs = np.linalg.eigvalsh(density_from_vector(self.dim, s))
        if eigs.min() < PSD_EIG_TOL:
            raise InvariantViolation(
                "state_psd", f"rho(s) has eigenvalue {eigs.min():.3e} < {PSD_EIG_TOL}"
            )

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.s))

    def is_interior(self, eig_min: float = INTERIOR_EIG_MIN) -> bool:
        eigs = np.linalg.eigvalsh(density_from_vector(self.dim, self.s))
        return bool(eigs.min() > eig_min)


def density_from_vector(dim: int, s: np.ndarray) -> np.ndarray:
    """rho(s) = I/d + (1/2) s . sigma, without any validity check."""
    rho = np.eye(dim, dtype=complex) / dim
    for coeff, sigma in zip(np.asarray(s, dtype=float), generator_basis(dim)):
        rho = rho + 0.5 * coeff * sigma
    return rho


def to_density(state: BlochState) -> np.ndarray:
    """Density matrix of a valid state (Hermitian, trace one, PSD)."""
    return density_from_vector(state.dim, state.s)


def vector_from_density(rho: np.ndarray) -> np.ndarray:
    """s_a = Tr[rho sigma_a]; inverse of ``density_from_vector``."""
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    if rho.shape != (dim, dim):
        raise InvariantViolation("matrix_square", f"got shape {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > 1e-10:
        raise InvariantViolation("hermitian", "matrix is not Hermitian to 1e-10")
    if abs(rho.trace() - 1.0) > 1e-10:
        raise InvariantViolation("unit_trace", f"trace is {rho.trace():.12g}")
    return np.array(
        [np.einsum("ij,ji->", rho, sigma).real for sigma in generator_basis(dim)]
    )


def from_density(rho: np.ndarray) -> BlochState:
    """Parameter vector of a density matrix (validates trace, hermiticity, PSD)."""
    rho = np.asarray(rho, dtype=complex)
    return BlochState(rho.shape[0], vector_from_density(rho))


def _check_pair(a: BlochState, b: BlochState) -> None:
    if a.dim != b.dim:
        raise InvariantViolation("dim_match", f"{a.dim} != {b.dim}")


def hs_distance_sq(a: BlochState, b: BlochState) -> float:
    """Squared Hilbert-Schmidt loss, (1/4)||s - s'||^2.

    Note this is half the raw squared HS norm Tr[(rho - rho')^2]; the raw
    value is exposed as ``hs_norm_sq``.  This normalization makes the HS and
    trace losses coincide for qubits.
    """
    _check_pair(a, b)
    d = a.s - b.s
    return 0.25 * float(d @ d)


def hs_norm_sq(a: BlochState, b: BlochState) -> float:
    """Raw squared Hilbert-Schmidt norm Tr[(rho - rho')^2]."""
    _check_pair(a, b)
    diff = to_density(a) - to_density(b)
    return float(np.einsum("ij,ji->", diff, diff).real)


def trace_distance_sq(a: BlochState, b: BlochState) -> float:
    """Squared trace loss, (1/4) (sum of |eigenvalues of rho - rho'|)^2."""
    _check_pair(a, b)
    eigs = np.linalg.eigvalsh(to_density(a) - to_density(b))
    return 0.25 * float(np.abs(eigs).sum()) ** 2


def fidelity_sq(a: BlochState, b: BlochState) -> float:
    """Squared fidelity between rho(s) and rho(s'), in [0, 1].

    Qubits use the closed form
        f^2 = (1 + s.s' + sqrt((1 - |s|^2)(1 - |s'|^2))) / 2;
    higher dimensions use Tr[sqrt(sqrt(rho) rho' sqrt(rho))]^2 by
    eigendecomposition.
    """
    _check_pair(a, b)
    if a.dim == 2:
        return _qubit_fidelity_sq(a.s, b.s)
    rho, other = to_density(a), to_density(b)
    vals, vecs = np.linalg.eigh(rho)
    sqrt_rho = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    mid = sqrt_rho @ other @ sqrt_rho
    mid_vals = np.linalg.eigvalsh(0.5 * (mid + mid.conj().T))
    root = np.sqrt(np.clip(mid_vals, 0.0, None)).sum()
    return float(np.clip(root * root, 0.0, 1.0))


def _qubit_fidelity_sq(s: np.ndarray, t: np.ndarray) -> float:
    ss = max(0.0, 1.0 - float(s @ s))
    tt = max(0.0, 1.0 - float(t @ t))
    val = 0.5 * (1.0 + float(s @ t) + np.sqrt(ss * tt))
    return float(np.clip(val, 0.0, 1.0))


def fidelity_loss(a: BlochState, b: BlochState) -> float:
    """Squared fidelity loss 1 - f(s, s')^2."""
    return 1.0 - fidelity_sq(a, b)


def random_interior_state(
    dim: int, rng: np.random.Generator, max_radius: float = 0.95
) -> BlochState:
    """Draw a random full-rank state.

    For qubits the vector is uniform on the ball of the given radius; for
    d > 2 a Ginibre-random density matrix is mixed toward I/d until safely
    full rank.
    """
    if dim == 2:
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        r = max_radius * rng.uniform() ** (1.0 / 3.0)
        return BlochState(2, r * u)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    rho /= rho.trace()
    rho = 0.9 * rho + 0.1 * np.eye(dim) / dim
    return from_density(rho)
