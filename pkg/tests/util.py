"""Shared helpers for the test suite: tester generators and brute-force oracles."""

from __future__ import annotations

import numpy as np

from tomobench.qstate import generator_basis
from tomobench.tester import Tester


def random_qubit_tester(
    rng: np.random.Generator, n_outcomes: int = 6, rank: int = 3
) -> Tester:
    """A random qubit POVM whose affine vectors span a subspace of given rank.

    Elements are built directly in affine form, Pi = v I + w . sigma with
    ||w|| < v, which guarantees positivity; the w vectors are drawn inside a
    random rank-dimensional subspace and recentered so they sum to zero.
    """
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    subspace = q[:, :rank] if rank > 0 else np.zeros((3, 0))
    w = rng.normal(size=(n_outcomes, rank)) @ subspace.T if rank > 0 else np.zeros((n_outcomes, 3))
    w -= w.mean(axis=0, keepdims=True)
    v = rng.dirichlet(np.full(n_outcomes, 5.0))
    norms = np.linalg.norm(w, axis=1)
    if norms.max() > 0.0:
        w *= 0.8 * (v / np.maximum(norms, 1e-300)).min()
    basis = generator_basis(2)
    eye = np.eye(2, dtype=complex)
    elements = [
        v[x] * eye + sum(w[x, a] * basis[a] for a in range(3)) for x in range(n_outcomes)
    ]
    return Tester.from_elements(elements)


def random_povm(rng: np.random.Generator, dim: int, n_outcomes: int) -> Tester:
    """A random POVM in any dimension: normalize random PSD matrices by T^{-1/2}."""
    raw = []
    for _ in range(n_outcomes):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        raw.append(g @ g.conj().T)
    total = sum(raw)
    vals, vecs = np.linalg.eigh(total)
    inv_root = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return Tester.from_elements([inv_root @ a @ inv_root for a in raw])


def tetrahedral_povm() -> Tester:
    """The symmetric 4-outcome qubit POVM (1 + u_x . sigma)/4.

    Its affine map is onto the probability simplex's tangent space, so the
    linear system v + W s = f is consistent for every frequency vector.
    """
    units = np.array(
        [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
    ) / np.sqrt(3.0)
    basis = generator_basis(2)
    eye = np.eye(2, dtype=complex)
    elements = [
        0.25 * (eye + sum(u[a] * basis[a] for a in range(3))) for u in units
    ]
    return Tester.from_elements(elements)


def grid_kl_minimum(
    tester: Tester, rel: np.ndarray, final_resolution: float = 1e-3, n: int = 21
) -> tuple[np.ndarray, float]:
    """Brute-force KL minimizer over the Bloch ball by nested grid refinement.

    Independent of the package's optimizer: evaluates K(f || p_s) on a dense
    cubic grid (points outside the ball are projected onto the sphere) and
    zooms around the best cell until the spacing is below the target
    resolution.  Valid because K(f || p_s) is convex in s.
    """
    rel = np.asarray(rel, dtype=float)
    obs = rel > 0.0
    base = float((rel[obs] * np.log(rel[obs])).sum())

    def kl_of(points: np.ndarray) -> np.ndarray:
        probs = tester.v[None, :] + points @ tester.w.T
        sub = probs[:, obs]
        bad = (sub <= 0.0).any(axis=1)
        safe = np.where(sub > 0.0, sub, 1.0)
        vals = base - (np.log(safe) * rel[obs]).sum(axis=1)
        vals[bad] = np.inf
        return vals

    center = np.zeros(3)
    half = 1.0
    while True:
        axes = [np.linspace(center[i] - half, center[i] + half, n) for i in range(3)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        norms = np.linalg.norm(grid, axis=1)
        outside = norms > 1.0
        grid[outside] /= norms[outside, None]
        vals = kl_of(grid)
        idx = int(np.argmin(vals))
        center, best = grid[idx], float(vals[idx])
        spacing = 2.0 * half / (n - 1)
        if spacing <= final_resolution:
            return center, best
        half = 2.5 * spacing


def random_psd(rng: np.random.Generator, k: int, min_eig: float = 0.0) -> np.ndarray:
    x = rng.normal(size=(k, k))
    return x @ x.T + min_eig * np.eye(k)


def sampled_top_eigenvalue(
    g: np.ndarray, samples: int, seed: int, refine_iters: int = 500
) -> float:
    """sup of a.Ga over unit vectors, by sampling plus power-iteration refinement."""
    rng = np.random.default_rng(seed)
    k = g.shape[0]
    x = rng.normal(size=(samples, k))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    vals = np.einsum("ij,jk,ik->i", x, g, x)
    a = x[int(np.argmax(vals))]
    for _ in range(refine_iters):
        a = g @ a
        nrm = np.linalg.norm(a)
        if nrm == 0.0:
            return float(vals.max())
        a /= nrm
    return float(a @ g @ a)
