"""Loss functions on parameter space and their same-point Hessians.

The same-point Hessian H_s is the second derivative of Delta(s', s) with
respect to the first argument, evaluated at s' = s.  Closed forms are used
where available; everything else falls back to central finite differences.

Available kinds and their Hessians:

    hs          (1/4)||s - s'||^2                    H = I/2
    trace       (1/4) Tr[|rho - rho'|]^2             H = I/2 for qubits, FD otherwise
    fidelity    1 - f(s, s')^2                       H = (I + s s^T/(1-|s|^2))/2 for qubits
    kl          K(p_s || p_s') for an attached POVM  H = F_s
    euclidean   ||s - s'||^2                         H = 2I
    functional  |g(s) - g(s')|^2                     H = 2 (grad g)(grad g)^T
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BoundaryStateError, InvariantViolation
from .qstate import BlochState, bloch_dim, density_from_vector
from .tester import Tester, fisher_matrix, probabilities, probability_matrix

LOSS_KINDS = ("hs", "trace", "fidelity", "kl", "euclidean", "functional")

FD_STEP_SCALE = 1e-4
SQRT_EIG_TOL = -1e-8


@dataclass(frozen=True)
class LossSpec:
    """A loss function Delta(s, s') on parameter space.

    ``tester`` is required for the "kl" kind; ``g``/``grad_g`` for
    "functional".  ``name`` is the external selector string ("hs", "kl",
    "functional:purity", ...).
    """

    kind: str
    dim: int
    tester: Tester | None = None
    g: Callable[[np.ndarray], float] | None = None
    grad_g: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvariantViolation("loss_kind", f"unknown loss kind {self.kind!r}")
        if self.kind == "kl" and self.tester is None:
            raise InvariantViolation("loss_tester", "kl loss needs a tester")
        if self.kind == "functional" and (self.g is None or self.grad_g is None):
            raise InvariantViolation(
                "loss_functional", "functional loss needs g and grad_g"
            )
        if not self.name:
            object.__setattr__(self, "name", self.kind)


def named_functionals(dim: int) -> dict[str, tuple[Callable, Callable]]:
    """Registered scalar functionals g(s) with their gradients.

    "norm_sq" is the squared Bloch radius; "purity" is Tr[rho(s)^2]
    = 1/d + |s|^2/2.
    """
    return {
        "norm_sq": (
            lambda s: float(np.asarray(s, dtype=float) @ np.asarray(s, dtype=float)),
            lambda s: 2.0 * np.asarray(s, dtype=float),
        ),
        "purity": (
            lambda s: 1.0 / dim
            + 0.5 * float(np.asarray(s, dtype=float) @ np.asarray(s, dtype=float)),
            lambda s: np.asarray(s, dtype=float),
        ),
    }


def make_loss(name: str, dim: int, tester: Tester | None = None) -> LossSpec:
    """Build a LossSpec from its external selector string."""
    if name in ("hs", "trace", "fidelity", "euclidean"):
        return LossSpec(kind=name, dim=dim, name=name)
    if name == "kl":
        return LossSpec(kind="kl", dim=dim, tester=tester, name="kl")
    if name.startswith("functional:"):
        key = name.split(":", 1)[1]
        registry = named_functionals(dim)
        if key not in registry:
            raise InvariantViolation("loss_name", f"unknown functional {key!r}")
        g, grad = registry[key]
        return LossSpec(kind="functional", dim=dim, g=g, grad_g=grad, name=name)
    raise InvariantViolation("loss_name", f"unknown loss {name!r}")


def _as_vec(state) -> np.ndarray:
    return state.s if isinstance(state, BlochState) else np.asarray(state, dtype=float)


def _kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """K(p || q) with 0 log 0 = 0; +inf when q vanishes where p does not."""
    support = p > 0.0
    if np.any(q[support] <= 0.0):
        return math.inf
    ps = p[support]
    return float(ps @ (np.log(ps) - np.log(q[support])))


def evaluate(loss: LossSpec, a, b) -> float:
    """Delta(a, b).  For "kl" this is K(p_a || p_b) (first slot varies)."""
    sa, sb = _as_vec(a), _as_vec(b)
    k = bloch_dim(loss.dim)
    if sa.shape != (k,) or sb.shape != (k,):
        raise InvariantViolation("dim_match", "state length does not match loss dim")
    kind = loss.kind
    if kind == "hs" or (kind == "trace" and loss.dim == 2):
        d = sa - sb
        return 0.25 * float(d @ d)
    if kind == "euclidean":
        d = sa - sb
        return float(d @ d)
    if kind == "trace":
        eigs = np.linalg.eigvalsh(
            density_from_vector(loss.dim, sa) - density_from_vector(loss.dim, sb)
        )
        return 0.25 * float(np.abs(eigs).sum()) ** 2
    if kind == "fidelity":
        return 1.0 - _fidelity_sq_vec(loss.dim, sa, sb)
    if kind == "kl":
        return _kl_divergence(
            probabilities(loss.tester, sa), probabilities(loss.tester, sb)
        )
    diff = loss.g(sa) - loss.g(sb)
    return float(diff * diff)


def _fidelity_sq_vec(dim: int, sa: np.ndarray, sb: np.ndarray) -> float:
    if dim == 2:
        ua = max(0.0, 1.0 - float(sa @ sa))
        ub = max(0.0, 1.0 - float(sb @ sb))
        return float(np.clip(0.5 * (1.0 + sa @ sb + math.sqrt(ua * ub)), 0.0, 1.0))
    rho = density_from_vector(dim, sa)
    other = density_from_vector(dim, sb)
    vals, vecs = np.linalg.eigh(rho)
    sqrt_rho = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    mid = sqrt_rho @ other @ sqrt_rho
    mid_vals = np.linalg.eigvalsh(0.5 * (mid + mid.conj().T))
    root = np.sqrt(np.clip(mid_vals, 0.0, None)).sum()
    return float(np.clip(root * root, 0.0, 1.0))


def evaluate_many(loss: LossSpec, candidates: np.ndarray, b) -> np.ndarray:
    """Delta(candidates[i], b) for a batch of first-slot vectors."""
    cands = np.atleast_2d(np.asarray(candidates, dtype=float))
    sb = _as_vec(b)
    kind = loss.kind
    if kind == "hs" or (kind == "trace" and loss.dim == 2):
        d = cands - sb[None, :]
        return 0.25 * np.einsum("ij,ij->i", d, d)
    if kind == "euclidean":
        d = cands - sb[None, :]
        return np.einsum("ij,ij->i", d, d)
    if kind == "fidelity" and loss.dim == 2:
        ua = np.clip(1.0 - np.einsum("ij,ij->i", cands, cands), 0.0, None)
        ub = max(0.0, 1.0 - float(sb @ sb))
        f2 = np.clip(0.5 * (1.0 + cands @ sb + np.sqrt(ua * ub)), 0.0, 1.0)
        return 1.0 - f2
    if kind == "kl":
        p = probability_matrix(loss.tester, cands)
        q = probabilities(loss.tester, sb)
        out = np.empty(len(cands))
        for i in range(len(cands)):
            out[i] = _kl_divergence(p[i], q)
        return out
    return np.array([evaluate(loss, c, sb) for c in cands])


def kl_divergence_rows(loss: LossSpec, candidates: np.ndarray, b) -> np.ndarray:
    """K(p_{candidates[i]} || p_b) for the tester attached to a "kl" loss."""
    if loss.kind != "kl":
        raise InvariantViolation("loss_kind", "kl_divergence_rows needs a kl loss")
    return evaluate_many(loss, candidates, b)


def _interior_margin(loss: LossSpec, s: np.ndarray, h: float) -> None:
    eigs = np.linalg.eigvalsh(density_from_vector(loss.dim, s))
    if eigs.min() <= 2.0 * h:
        raise BoundaryStateError(
            f"state eigenvalue {eigs.min():.3e} too close to the boundary for step {h:.1e}"
        )


def finite_difference_hessian(loss: LossSpec, state, h: float | None = None) -> np.ndarray:
    """Central-difference same-point Hessian of Delta(., s) at s."""
    s = _as_vec(state)
    k = s.size
    if h is None:
        h = FD_STEP_SCALE * max(1.0, float(np.linalg.norm(s)))
    _interior_margin(loss, s, h)

    def f(vec: np.ndarray) -> float:
        return evaluate(loss, vec, s)

    hess = np.empty((k, k))
    f0 = f(s)
    eye = np.eye(k)
    for i in range(k):
        hi = h * eye[i]
        hess[i, i] = (f(s + hi) - 2.0 * f0 + f(s - hi)) / (h * h)
        for j in range(i + 1, k):
            hj = h * eye[j]
            hess[i, j] = hess[j, i] = (
                f(s + hi + hj) - f(s + hi - hj) - f(s - hi + hj) + f(s - hi - hj)
            ) / (4.0 * h * h)
    return 0.5 * (hess + hess.T)


def same_point_hessian(loss: LossSpec, state) -> np.ndarray:
    """H_s, analytic where a closed form exists, finite differences otherwise."""
    s = _as_vec(state)
    k = bloch_dim(loss.dim)
    if s.shape != (k,):
        raise InvariantViolation("dim_match", "state length does not match loss dim")
    kind = loss.kind
    if kind == "hs" or (kind == "trace" and loss.dim == 2):
        return 0.5 * np.eye(k)
    if kind == "euclidean":
        return 2.0 * np.eye(k)
    if kind == "fidelity" and loss.dim == 2:
        u = 1.0 - float(s @ s)
        if u <= 1e-10:
            raise BoundaryStateError("fidelity Hessian is singular at pure states")
        return 0.5 * (np.eye(k) + np.outer(s, s) / u)
    if kind == "kl":
        return fisher_matrix(loss.tester, s)
    if kind == "functional":
        grad = np.asarray(loss.grad_g(s), dtype=float)
        return 2.0 * np.outer(grad, grad)
    return finite_difference_hessian(loss, s)


def hessian_sqrt(hesse: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root by eigendecomposition.

    Eigenvalues in [-1e-8, 0) are clamped to zero; anything lower is an error.
    """
    h = np.asarray(hesse, dtype=float)
    h = 0.5 * (h + h.T)
    vals, vecs = np.linalg.eigh(h)
    if vals.min() < SQRT_EIG_TOL:
        raise InvariantViolation("psd", f"eigenvalue {vals.min():.3e} below {SQRT_EIG_TOL}")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return 0.5 * (root + root.T)
