"""Decay-rate analysis of a measurement setup.

The central object is the modified information matrix

    G_s = sqrt(H_s) F_s^+ sqrt(H_s)

built from the per-trial Fisher matrix F_s and the same-point Hessian H_s
of the chosen loss.  Its largest eigenvalue sigma_1(G) bounds the
exponential decay of the error probability (rate 1/sigma_1 per unit
eps^2 N), and half its trace gives the asymptotic risk decay rate
tr[H F^+]/2 per unit 1/N.

Two numeric oracles are included: a sampled Rayleigh-quotient minimizer
that checks the identity inf (a.Aa)/(a.Ba) = 1/sigma_1(sqrt(B) A^+ sqrt(B)),
and a constrained KL minimizer that evaluates the large-deviation rate

    R_eps = inf { K(p_s' || p_s) : Delta(s', s) > eps^2 }

directly from its variational definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _norm_dist
from scipy.stats import qmc

from .errors import (
    BoundaryStateError,
    DegenerateExperimentError,
    InvariantViolation,
    SupportViolationError,
)
from .loss import LossSpec, evaluate, evaluate_many, hessian_sqrt, same_point_hessian
from .qstate import BlochState, bloch_dim, density_from_vector
from .tester import Tester, fisher_matrix, is_interior

PINV_REL_CUTOFF = 1e-10
SUPPORT_REL_TOL = 1e-8


def pseudo_inverse(a: np.ndarray, rel_cutoff: float = PINV_REL_CUTOFF) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric PSD matrix by eigendecomposition.

    Eigenvalues below ``rel_cutoff`` times the largest are treated as zero.
    """
    m = np.asarray(a, dtype=float)
    m = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(m)
    top = max(float(vals.max()), 0.0)
    keep = vals > rel_cutoff * top
    inv_vals = np.zeros_like(vals)
    inv_vals[keep] = 1.0 / vals[keep]
    out = (vecs * inv_vals) @ vecs.T
    return 0.5 * (out + out.T)


def _support_projector(a: np.ndarray, rel_cutoff: float = PINV_REL_CUTOFF) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    top = max(vals.max(), 0.0)
    keep = vals > rel_cutoff * top
    return (vecs[:, keep]) @ (vecs[:, keep]).T


def g_matrix(fisher: np.ndarray, hesse: np.ndarray) -> np.ndarray:
    """sqrt(H) F^+ sqrt(H), symmetrized.

    Requires supp(F) to contain supp(H): otherwise the loss penalizes a
    direction the tester cannot identify and the rate bound is infinite.
    """
    f = np.asarray(fisher, dtype=float)
    h = np.asarray(hesse, dtype=float)
    if f.shape != h.shape:
        raise InvariantViolation("shape_match", f"{f.shape} vs {h.shape}")
    root_h = hessian_sqrt(h)
    proj = _support_projector(f)
    residual = root_h - proj @ root_h
    scale = max(1.0, float(np.linalg.norm(root_h)))
    if np.linalg.norm(residual) > SUPPORT_REL_TOL * scale:
        raise SupportViolationError(
            "loss Hessian support exceeds Fisher support; "
            "the tester cannot identify a penalized direction"
        )
    g = root_h @ pseudo_inverse(f) @ root_h
    return 0.5 * (g + g.T)


@dataclass(frozen=True)
class RateReport:
    """Rate summary for one (tester, state, loss) triple.

    ``error_rate_bound`` = 1/sigma_1(G) is the decay rate of the error
    probability per unit eps^2 N; ``risk_rate`` = tr[H F^+]/2 is the
    constant in the asymptotic risk tr[H F^+]/(2N).
    """

    dim: int
    loss_name: str
    fisher: np.ndarray = field(repr=False)
    hesse: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    sigma1: float
    trace_g: float
    error_rate_bound: float
    risk_rate: float

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "loss": self.loss_name,
            "fisher": self.fisher.tolist(),
            "hesse": self.hesse.tolist(),
            "g_matrix": self.g.tolist(),
            "sigma1": self.sigma1,
            "trace_g": self.trace_g,
            "error_rate_bound": self.error_rate_bound,
            "risk_rate": self.risk_rate,
        }


def rate_report(tester: Tester, state, loss: LossSpec) -> RateReport:
    """Fisher, Hessian, G matrix and both decay rates at an interior state."""
    if not is_interior(tester, state):
        raise BoundaryStateError("rate analysis requires an interior state")
    f = fisher_matrix(tester, state)
    h = same_point_hessian(loss, state)
    g = g_matrix(f, h)
    eigs = np.linalg.eigvalsh(g)
    sigma1 = float(eigs[-1])
    trace_g = float(np.trace(g))
    bound = (1.0 / sigma1) if sigma1 > 0.0 else math.inf
    return RateReport(
        dim=tester.dim,
        loss_name=loss.name,
        fisher=f,
        hesse=h,
        g=g,
        sigma1=sigma1,
        trace_g=trace_g,
        error_rate_bound=bound,
        risk_rate=0.5 * trace_g,
    )


def scalar_functional_rate(tester: Tester, state, grad_g) -> float:
    """Error-probability rate 1/(2 grad_g . F^+ grad_g) for a scalar functional.

    Specializes the general bound to the rank-one Hessian 2 (grad g)(grad g)^T.
    """
    grad = np.asarray(grad_g, dtype=float)
    if grad.shape != (bloch_dim(tester.dim),):
        raise InvariantViolation("dim_match", "gradient length does not match tester dim")
    if np.linalg.norm(grad) == 0.0:
        raise InvariantViolation("gradient_nonzero", "scalar functional gradient is zero")
    f = fisher_matrix(tester, state)
    proj = _support_projector(f)
    if np.linalg.norm(grad - proj @ grad) > SUPPORT_REL_TOL * np.linalg.norm(grad):
        raise SupportViolationError(
            "functional gradient has a component the tester cannot identify"
        )
    quad = float(grad @ pseudo_inverse(f) @ grad)
    return 1.0 / (2.0 * quad)


def rayleigh_identity_check(
    a: np.ndarray,
    b: np.ndarray,
    samples: int = 100_000,
    seed: int = 0,
    refine_starts: int = 8,
    refine_iters: int = 400,
) -> tuple[float, float]:
    """Check inf_{x not in ker B} (x.Ax)/(x.Bx) against 1/sigma_1(sqrt(B) A^+ sqrt(B)).

    The left side is found independently of the closed form, by random
    sampling of directions followed by normalized gradient descent on the
    quotient.  Returns (sampled_minimum, closed_form).
    """
    a = 0.5 * (np.asarray(a, dtype=float) + np.asarray(a, dtype=float).T)
    b = 0.5 * (np.asarray(b, dtype=float) + np.asarray(b, dtype=float).T)
    k = a.shape[0]
    if a.shape != (k, k) or b.shape != (k, k):
        raise InvariantViolation("shape_match", "matrices must be square and equal size")
    for name, m in (("a_psd", a), ("b_psd", b)):
        if np.linalg.eigvalsh(m).min() < -1e-8:
            raise InvariantViolation(name, "matrix is not PSD")
    proj = _support_projector(a)
    root_b = hessian_sqrt(b)
    if np.linalg.norm(root_b - proj @ root_b) > SUPPORT_REL_TOL * max(
        1.0, float(np.linalg.norm(root_b))
    ):
        raise SupportViolationError("supp(A) does not contain supp(B)")

    core = root_b @ pseudo_inverse(a) @ root_b
    top = float(np.linalg.eigvalsh(core)[-1])
    rhs = (1.0 / top) if top > 0.0 else math.inf

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    x = rng.normal(size=(samples, k))
    denom = np.einsum("ij,jk,ik->i", x, b, x)
    numer = np.einsum("ij,jk,ik->i", x, a, x)
    ok = denom > 1e-12 * max(denom.max(), 1.0)
    if not np.any(ok):
        raise InvariantViolation("b_psd", "no sampled direction is outside ker B")
    quotients = numer[ok] / denom[ok]
    candidates = x[ok][np.argsort(quotients)[:refine_starts]]
    best = float(quotients.min())

    for start in candidates:
        val = _refine_quotient(start, a, b, refine_iters)
        best = min(best, val)
    return best, rhs


def _refine_quotient(x0: np.ndarray, a: np.ndarray, b: np.ndarray, iters: int) -> float:
    x = x0 / np.linalg.norm(x0)
    denom = float(x @ b @ x)
    f = float(x @ a @ x) / denom
    step = 0.1
    for _ in range(iters):
        grad = 2.0 * (a @ x - f * (b @ x)) / denom
        trial = x - step * grad
        nrm = np.linalg.norm(trial)
        if nrm == 0.0:
            step *= 0.5
            continue
        trial /= nrm
        d_t = float(trial @ b @ trial)
        if d_t <= 1e-300:
            step *= 0.5
            continue
        f_t = float(trial @ a @ trial) / d_t
        if f_t < f:
            x, f, denom = trial, f_t, d_t
            step = min(step * 1.5, 1.0)
        else:
            step *= 0.5
            if step < 1e-14:
                break
    return f


def _max_step_in_state_set(dim: int, s: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Largest t per direction keeping s + t u a valid state."""
    if dim == 2:
        su = directions @ s
        disc = su * su + (1.0 - float(s @ s))
        return -su + np.sqrt(np.clip(disc, 0.0, None))
    out = np.empty(len(directions))
    for i, u in enumerate(directions):
        lo, hi = 0.0, 1.0
        while _valid_vec(dim, s + hi * u) and hi < 64.0:
            hi *= 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _valid_vec(dim, s + mid * u):
                lo = mid
            else:
                hi = mid
        out[i] = lo
    return out


def _valid_vec(dim: int, s: np.ndarray) -> bool:
    return float(np.linalg.eigvalsh(density_from_vector(dim, s)).min()) >= -1e-12


def kl_infimum_oracle(
    tester: Tester,
    state,
    loss: LossSpec,
    eps_sq: float,
    n_directions: int = 10_000,
    seed: int = 0,
    descent_iters: int = 50,
    shell_margin: float = 0.01,
) -> float:
    """Numerical infimum of K(p_s' || p_s) over {s' valid : Delta(s', s) > eps_sq}.

    Quasi-random directions are pushed onto the inflated shell
    Delta = eps_sq (1 + shell_margin); the best candidates are then refined
    by coordinate descent constrained to Delta >= eps_sq (1 + 1e-9).
    """
    if eps_sq <= 0.0:
        raise InvariantViolation("eps_sq_positive", f"eps_sq = {eps_sq}")
    s = state.s if isinstance(state, BlochState) else np.asarray(state, dtype=float)
    if not is_interior(tester, s):
        raise BoundaryStateError("the oracle requires an interior true state")
    kl = LossSpec(kind="kl", dim=tester.dim, tester=tester)
    k = bloch_dim(tester.dim)

    sampler = qmc.Halton(d=k, scramble=True, seed=seed)
    raw = sampler.random(n_directions)
    gauss = _norm_dist.ppf(np.clip(raw, 1e-12, 1.0 - 1e-12))
    norms = np.linalg.norm(gauss, axis=1)
    directions = gauss[norms > 0.0] / norms[norms > 0.0, None]

    t_max = _max_step_in_state_set(tester.dim, s, directions)
    shell_target = eps_sq * (1.0 + shell_margin)
    floor_target = eps_sq * (1.0 + 1e-9)

    at_max = s[None, :] + t_max[:, None] * directions
    reachable = evaluate_many(loss, at_max, s) >= shell_target
    if not np.any(reachable):
        raise DegenerateExperimentError(
            "empty constraint set: eps_sq exceeds the reachable loss range"
        )
    directions = directions[reachable]
    t_hi = t_max[reachable]
    t_lo = np.zeros_like(t_hi)
    for _ in range(50):
        t_mid = 0.5 * (t_lo + t_hi)
        vals = evaluate_many(loss, s[None, :] + t_mid[:, None] * directions, s)
        below = vals < shell_target
        t_lo = np.where(below, t_mid, t_lo)
        t_hi = np.where(below, t_hi, t_mid)
    shell = s[None, :] + t_hi[:, None] * directions

    kl_vals = evaluate_many(kl, shell, s)
    order = np.argsort(kl_vals)
    best_val = float(kl_vals[order[0]])
    n_starts = min(5, len(order))
    for idx in order[:n_starts]:
        val = _constrained_descent(
            tester.dim, kl, loss, shell[idx], s, floor_target, descent_iters
        )
        best_val = min(best_val, val)
    return best_val


def _repair_candidate(
    dim: int, loss: LossSpec, cand: np.ndarray, truth: np.ndarray, floor_target: float
) -> np.ndarray | None:
    if dim == 2:
        nrm = float(np.linalg.norm(cand))
        if nrm > 1.0:
            cand = cand / nrm
    elif not _valid_vec(dim, cand):
        return None
    if evaluate(loss, cand, truth) >= floor_target:
        return cand
    u = cand - truth
    nrm = float(np.linalg.norm(u))
    if nrm == 0.0:
        return None
    u /= nrm
    t_hi = float(_max_step_in_state_set(dim, truth, u[None, :])[0])
    if evaluate(loss, truth + t_hi * u, truth) < floor_target:
        return None
    t_lo = nrm
    for _ in range(50):
        t_mid = 0.5 * (t_lo + t_hi)
        if evaluate(loss, truth + t_mid * u, truth) < floor_target:
            t_lo = t_mid
        else:
            t_hi = t_mid
    return truth + t_hi * u


def _constrained_descent(
    dim: int,
    kl: LossSpec,
    loss: LossSpec,
    start: np.ndarray,
    truth: np.ndarray,
    floor_target: float,
    iters: int,
) -> float:
    best = np.array(start, dtype=float)
    best_val = evaluate(kl, best, truth)
    step = 0.5 * float(np.linalg.norm(start - truth))
    k = best.size
    for _ in range(iters):
        improved = False
        for i in range(k):
            for sign in (1.0, -1.0):
                cand = best.copy()
                cand[i] += sign * step
                cand = _repair_candidate(dim, loss, cand, truth, floor_target)
                if cand is None:
                    continue
                val = evaluate(kl, cand, truth)
                if val < best_val:
                    best, best_val = cand, val
                    improved = True
        if not improved:
            step *= 0.5
            if step < 1e-10:
                break
    return float(best_val)
