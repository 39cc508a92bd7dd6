"""POVM model of a measurement setup and its Fisher information.

Every POVM element is decomposed in affine form

    Pi_x = v(x) I + w(x) . sigma,    v(x) = Tr[Pi_x]/d,  w_a(x) = Tr[Pi_x sigma_a]/2,

so that outcome probabilities are linear in the Bloch vector,
p_s(x) = v(x) + s . w(x), and the per-trial Fisher matrix is

    F_s = sum_x w(x) w(x)^T / p_s(x).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BoundaryStateError, InvariantViolation
from .qstate import (
    HERMITIAN_TOL,
    INTERIOR_EIG_MIN,
    PSD_EIG_TOL,
    BlochState,
    bloch_dim,
    density_from_vector,
    generator_basis,
)

RANK_REL_TOL = 1e-9
PROB_FLOOR = 1e-12

_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
_PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class Tester:
    """An M-outcome POVM together with its affine decomposition.

    Immutable after construction; build instances with ``from_elements`` so
    all invariants are checked and the affine form is derived consistently.
    """

    dim: int
    elements: tuple[np.ndarray, ...] = field(repr=False)
    v: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)

    @property
    def n_outcomes(self) -> int:
        return len(self.elements)

    @classmethod
    def from_elements(cls, elements) -> "Tester":
        mats = [np.asarray(e, dtype=complex) for e in elements]
        if not mats:
            raise InvariantViolation("nonempty", "POVM needs at least one element")
        dim = mats[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for i, m in enumerate(mats):
            if m.shape != (dim, dim):
                raise InvariantViolation(
                    "element_shape", f"element {i} has shape {m.shape}, expected ({dim},{dim})"
                )
            if np.abs(m - m.conj().T).max() > HERMITIAN_TOL:
                raise InvariantViolation("hermitian", f"element {i} is not Hermitian")
            low = np.linalg.eigvalsh(m).min()
            if low < PSD_EIG_TOL:
                raise InvariantViolation(
                    "element_psd", f"element {i} has eigenvalue {low:.3e}"
                )
            total += m
        if np.abs(total - np.eye(dim)).max() > 1e-10:
            raise InvariantViolation(
                "resolution_of_identity",
                f"POVM elements sum to I + O({np.abs(total - np.eye(dim)).max():.3e})",
            )
        basis = generator_basis(dim)
        v = np.array([m.trace().real / dim for m in mats])
        w = np.array(
            [[0.5 * np.einsum("ij,ji->", m, sig).real for sig in basis] for m in mats]
        )
        if abs(v.sum() - 1.0) > 1e-10:
            raise InvariantViolation("affine_v_sum", f"sum v = {v.sum():.12g}")
        if np.abs(w.sum(axis=0)).max() > 1e-10:
            raise InvariantViolation("affine_w_sum", "sum of w vectors is not zero")
        mats = tuple(m.copy() for m in mats)
        for m in mats:
            m.setflags(write=False)
        v.setflags(write=False)
        w.setflags(write=False)
        return cls(dim=dim, elements=mats, v=v, w=w)

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "elements": [
                {"re": m.real.tolist(), "im": m.imag.tolist()} for m in self.elements
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Tester":
        try:
            dim = int(data["dim"])
            raw = data["elements"]
        except (KeyError, TypeError) as exc:
            raise InvariantViolation("schema", f"missing field {exc}") from exc
        mats = []
        for i, entry in enumerate(raw):
            try:
                re = np.asarray(entry["re"], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise InvariantViolation("schema", f"element {i}: bad 're' field") from exc
            im_raw = entry.get("im")
            im = np.zeros_like(re) if im_raw is None else np.asarray(im_raw, dtype=float)
            if re.shape != (dim, dim) or im.shape != (dim, dim):
                raise InvariantViolation(
                    "element_shape", f"element {i} is not {dim}x{dim}"
                )
            mats.append(re + 1j * im)
        return cls.from_elements(mats)


def save_tester(tester: Tester, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tester.to_json_dict(), indent=2))


def load_tester(path: str | Path) -> Tester:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvariantViolation("schema", f"invalid JSON: {exc}") from exc
    return Tester.from_json_dict(data)


def six_state_povm() -> Tester:
    """Uniform mixture of the x-, y-, and z-projective qubit measurements.

    Outcome order: (up_x, down_x, up_y, down_y, up_z, down_z).
    """
    eye = np.eye(2, dtype=complex)
    elements = []
    for pauli in (_PAULI_X, _PAULI_Y, _PAULI_Z):
        elements.append((eye + pauli) / 6.0)
        elements.append((eye - pauli) / 6.0)
    return Tester.from_elements(elements)


def z_projective_povm() -> Tester:
    """The bare z-projective qubit measurement {(I + sigma_z)/2, (I - sigma_z)/2}."""
    eye = np.eye(2, dtype=complex)
    return Tester.from_elements([(eye + _PAULI_Z) / 2.0, (eye - _PAULI_Z) / 2.0])


BUILTIN_TESTERS = {
    "six-state": six_state_povm,
    "z-projective": z_projective_povm,
}


def _as_vector(state) -> np.ndarray:
    return state.s if isinstance(state, BlochState) else np.asarray(state, dtype=float)


def probabilities(tester: Tester, state) -> np.ndarray:
    """Outcome distribution p_s(x) = v(x) + s . w(x)."""
    s = _as_vector(state)
    if s.shape != (bloch_dim(tester.dim),):
        raise InvariantViolation(
            "dim_match", f"state length {s.shape} vs tester dim {tester.dim}"
        )
    p = tester.v + tester.w @ s
    if p.min() < -PROB_FLOOR:
        raise InvariantViolation(
            "probability_nonnegative", f"p_min = {p.min():.3e}"
        )
    return p


def probability_matrix(tester: Tester, states: np.ndarray) -> np.ndarray:
    """Row-wise outcome distributions for a batch of parameter vectors."""
    return tester.v[None, :] + np.asarray(states, dtype=float) @ tester.w.T


def fisher_matrix(tester: Tester, state) -> np.ndarray:
    """Per-trial Fisher matrix sum_x w(x) w(x)^T / p_s(x).

    Outcomes with w(x) = 0 carry no information and are skipped; a vanishing
    probability on an informative outcome means the model is singular at
    this state.
    """
    p = probabilities(tester, state)
    informative = np.linalg.norm(tester.w, axis=1) > 1e-14
    if np.any(p[informative] <= PROB_FLOOR):
        raise BoundaryStateError(
            "vanishing probability on an informative outcome; state is not interior"
        )
    w = tester.w[informative]
    f = (w / p[informative, None]).T @ w
    return 0.5 * (f + f.T)


def informational_completeness(tester: Tester) -> tuple[bool, int]:
    """Whether the affine vectors {w(x)} span the full parameter space.

    Returns (complete, rank); the rank equals rank(F_s) at every interior
    state, and completeness is equivalent to identifiability.
    """
    svals = np.linalg.svd(tester.w, compute_uv=False)
    if svals.size == 0 or svals[0] <= 0.0:
        return False, 0
    rank = int(np.sum(svals > RANK_REL_TOL * svals[0]))
    return rank == bloch_dim(tester.dim), rank


def parameter_count(kind: str, dim: int, n_outcomes: int | None = None) -> int:
    """Parameter-space dimension for the four tomography flavors."""
    if dim < 2:
        raise InvariantViolation("dim_min", f"dim must be >= 2, got {dim}")
    d2 = dim * dim
    if kind == "state":
        return d2 - 1
    if kind == "process":
        return d2 * d2 - d2
    if kind in ("povm", "instrument"):
        if n_outcomes is None or n_outcomes < 1:
            raise InvariantViolation(
                "outcomes_required", f"kind {kind!r} needs n_outcomes >= 1"
            )
        if kind == "povm":
            return (n_outcomes - 1) * d2
        return n_outcomes * d2 * d2 - d2
    raise InvariantViolation("kind", f"unknown tomography kind {kind!r}")


def is_interior(tester: Tester, state) -> bool:
    """All rho(s) eigenvalues above 1e-8 and all outcome probabilities above 1e-12."""
    s = _as_vector(state)
    eigs = np.linalg.eigvalsh(density_from_vector(tester.dim, s))
    if eigs.min() <= INTERIOR_EIG_MIN:
        return False
    p = tester.v + tester.w @ s
    return bool(p.min() > PROB_FLOOR)
