"""Linear and maximum-likelihood reconstruction from observed frequencies.

The linear estimator solves the affine system v + W s = f in least squares
(minimum-norm when the tester is not informationally complete); the result
may lie outside the state set and is flagged accordingly.  The maximum
likelihood estimator minimizes K(f || p_s) over valid states by projected
gradient descent with backtracking; when the linear solution reproduces f
exactly and is physical, the two coincide.

``linear_solve_batch`` / ``mle_solve_batch`` operate on whole batches of
frequency vectors at once; the Monte Carlo harness relies on them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation
from .qstate import PSD_EIG_TOL, density_from_vector, generator_basis
from .tester import Tester, informational_completeness

MLE_MAX_ITERS = 5000
MLE_TOL = 1e-12


@dataclass(frozen=True)
class Frequencies:
    """Observed outcome counts from n measurement trials."""

    counts: np.ndarray = field(repr=False)
    n: int

    @classmethod
    def from_counts(cls, counts) -> "Frequencies":
        arr = np.asarray(counts, dtype=np.int64).copy()
        if arr.ndim != 1 or arr.size == 0:
            raise InvariantViolation("counts_shape", f"got shape {arr.shape}")
        if arr.min() < 0:
            raise InvariantViolation("counts_nonnegative", f"min count {arr.min()}")
        total = int(arr.sum())
        if total < 1:
            raise InvariantViolation("counts_total", "need at least one trial")
        arr.setflags(write=False)
        return cls(counts=arr, n=total)

    @property
    def relative(self) -> np.ndarray:
        return self.counts / self.n


@dataclass
class Estimate:
    """A reconstructed parameter vector with diagnostics.

    ``physical`` records whether rho(s_hat) is PSD; maximum-likelihood
    estimates are physical by construction.  ``residual`` is the linear
    system's least-squares residual norm (zero iff v + W s = f exactly).
    """

    s_hat: np.ndarray
    physical: bool
    method: str
    iterations: int = 0
    kl_value: float = 0.0
    converged: bool = True
    residual: float = 0.0
    non_unique: bool = False


def _check_freqs(tester: Tester, freqs: Frequencies) -> None:
    if freqs.counts.shape != (tester.n_outcomes,):
        raise InvariantViolation(
            "dim_match",
            f"{freqs.counts.size} counts for a {tester.n_outcomes}-outcome tester",
        )


def is_physical(dim: int, s: np.ndarray) -> bool:
    if dim == 2:
        return float(s @ s) <= (1.0 - PSD_EIG_TOL) ** 2
    eigs = np.linalg.eigvalsh(density_from_vector(dim, s))
    return bool(eigs.min() >= PSD_EIG_TOL)


def linear_solve_batch(tester: Tester, rel: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solutions of v + W s = f, one per row."""
    pinv_w = np.linalg.pinv(tester.w)
    return (np.atleast_2d(rel) - tester.v[None, :]) @ pinv_w.T


def linear_estimate(tester: Tester, freqs: Frequencies) -> Estimate:
    """Linear inversion of the observed frequencies.

    The result is flagged unphysical when rho(s_hat) is not PSD, and
    non-unique when the tester is not informationally complete.
    """
    _check_freqs(tester, freqs)
    rel = freqs.relative
    s_hat = linear_solve_batch(tester, rel[None, :])[0]
    residual = float(np.linalg.norm(tester.w @ s_hat - (rel - tester.v)))
    complete, _ = informational_completeness(tester)
    return Estimate(
        s_hat=s_hat,
        physical=is_physical(tester.dim, s_hat),
        method="linear",
        residual=residual,
        non_unique=not complete,
    )


def _project_rows(dim: int, states: np.ndarray) -> np.ndarray:
    """Map each row to the nearest point of the state set.

    Qubits shrink radially onto the Bloch ball; higher dimensions clip
    negative eigenvalues, renormalize the trace, and re-extract the vector.
    """
    if dim == 2:
        norms = np.linalg.norm(states, axis=1)
        scale = np.minimum(1.0, 1.0 / np.maximum(norms, 1e-300))
        return states * scale[:, None]
    basis = generator_basis(dim)
    out = np.array(states, dtype=float)
    for i, s in enumerate(states):
        rho = density_from_vector(dim, s)
        vals, vecs = np.linalg.eigh(rho)
        if vals.min() >= 0.0:
            continue
        vals = np.clip(vals, 0.0, None)
        vals /= vals.sum()
        rho = (vecs * vals) @ vecs.conj().T
        out[i] = [np.einsum("ij,ji->", rho, sig).real for sig in basis]
    return out


def _kl_rows(rel: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """K(f || p) per row, with 0 log 0 = 0 and +inf on vanishing support."""
    observed = rel > 0.0
    bad = observed & (probs <= 0.0)
    safe_rel = np.where(observed, rel, 1.0)
    safe_p = np.where(probs > 0.0, probs, 1.0)
    terms = np.where(observed, rel * (np.log(safe_rel) - np.log(safe_p)), 0.0)
    out = terms.sum(axis=1)
    out[bad.any(axis=1)] = np.inf
    return out


def mle_solve_batch(
    tester: Tester,
    rel: np.ndarray,
    max_iters: int = MLE_MAX_ITERS,
    tol: float = MLE_TOL,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Projected gradient descent on K(f || p_s) for a batch of frequency rows.

    Returns (estimates, iterations, kl_values, converged).  Iterates stay in
    the state set; steps are backtracked until the objective decreases, and a
    run stops once its improvement falls below ``tol``.
    """
    rel = np.atleast_2d(np.asarray(rel, dtype=float))
    v, w = tester.v, tester.w
    n_runs = rel.shape[0]

    # shrink the start strictly inside so every observed outcome has p > 0
    states = _project_rows(tester.dim, linear_solve_batch(tester, rel)) * (1.0 - 1e-9)
    probs = v[None, :] + states @ w.T
    kl = _kl_rows(rel, probs)
    step = np.full(n_runs, 0.5)
    done = np.zeros(n_runs, dtype=bool)
    iters = np.zeros(n_runs, dtype=np.int64)

    for _ in range(max_iters):
        active = ~done
        if not active.any():
            break
        iters[active] += 1
        ratio = np.where(rel > 0.0, rel / np.maximum(probs, 1e-300), 0.0)
        grad = -(ratio @ w)

        accepted = np.zeros(n_runs, dtype=bool)
        trying = active.copy()
        for _ in range(60):
            idx = np.where(trying)[0]
            if idx.size == 0:
                break
            cand = _project_rows(tester.dim, states[idx] - step[idx, None] * grad[idx])
            cand_probs = v[None, :] + cand @ w.T
            cand_kl = _kl_rows(rel[idx], cand_probs)
            ok = cand_kl < kl[idx]
            good = idx[ok]
            improvement = kl[good] - cand_kl[ok]
            states[good] = cand[ok]
            probs[good] = cand_probs[ok]
            kl[good] = cand_kl[ok]
            accepted[good] = True
            done[good] |= improvement < tol
            step[good] = np.minimum(step[good] * 2.0, 10.0)
            bad = idx[~ok]
            step[bad] *= 0.5
            trying[:] = False
            trying[bad] = True
            collapsed = trying & (step < 1e-18)
            done[collapsed] = True
            trying &= ~collapsed
        done |= active & ~accepted & ~trying

    converged = done.copy()
    complete, _ = informational_completeness(tester)
    if not complete:
        row_space = np.linalg.pinv(tester.w) @ tester.w
        projected = states @ row_space.T
        if tester.dim == 2:
            states = projected
        else:
            for i, s in enumerate(projected):
                if is_physical(tester.dim, s):
                    states[i] = s
    return states, iters, kl, converged


def mle_estimate(tester: Tester, freqs: Frequencies) -> Estimate:
    """Maximum-likelihood reconstruction: argmin over valid states of K(f || p_s)."""
    _check_freqs(tester, freqs)
    complete, _ = informational_completeness(tester)
    states, iters, kl, converged = mle_solve_batch(tester, freqs.relative[None, :])
    return Estimate(
        s_hat=states[0],
        physical=True,
        method="mle",
        iterations=int(iters[0]),
        kl_value=float(kl[0]),
        converged=bool(converged[0]),
        non_unique=not complete,
    )
