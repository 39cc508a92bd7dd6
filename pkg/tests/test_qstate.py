"""State parametrization and distance functions."""

import numpy as np
import pytest

from tomobench.errors import InvariantViolation
from tomobench.qstate import (
    BlochState,
    fidelity_loss,
    fidelity_sq,
    from_density,
    generator_basis,
    hs_distance_sq,
    hs_norm_sq,
    random_interior_state,
    to_density,
    trace_distance_sq,
)

from conftest import random_interior_vectors


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_generator_basis_orthonormality(dim):
    basis = generator_basis(dim)
    assert len(basis) == dim * dim - 1
    for a, sig in enumerate(basis):
        assert np.abs(sig - sig.conj().T).max() < 1e-12
        assert abs(sig.trace()) < 1e-12
        for b, tau in enumerate(basis):
            expected = 2.0 if a == b else 0.0
            assert abs(np.trace(sig @ tau) - expected) < 1e-12


def test_pauli_order_for_qubits():
    x, y, z = generator_basis(2)
    assert np.allclose(x, [[0, 1], [1, 0]])
    assert np.allclose(y, [[0, -1j], [1j, 0]])
    assert np.allclose(z, [[1, 0], [0, -1]])


class TestDensityMaps:
    def test_maximally_mixed(self):
        rho = to_density(BlochState(2, [0.0, 0.0, 0.0]))
        assert np.allclose(rho, np.eye(2) / 2, atol=1e-15)

    def test_pure_z_up(self):
        rho = to_density(BlochState(2, [0.0, 0.0, 1.0]))
        assert np.allclose(rho, np.diag([1.0, 0.0]), atol=1e-15)

    def test_x_state_eigenvalues(self):
        rho = to_density(BlochState(2, [0.7, 0.0, 0.0]))
        eigs = np.sort(np.linalg.eigvalsh(rho))
        assert np.allclose(eigs, [0.15, 0.85], atol=1e-12)

    def test_from_density_examples(self):
        assert np.allclose(from_density(np.eye(2) / 2).s, 0.0, atol=1e-12)
        assert np.allclose(
            from_density(np.diag([0.85, 0.15])).s, [0.0, 0.0, 0.7], atol=1e-12
        )

    @pytest.mark.parametrize("dim,count", [(2, 1000), (3, 100)])
    def test_round_trip(self, dim, count):
        rng = np.random.default_rng(11)
        for _ in range(count):
            state = random_interior_state(dim, rng)
            back = from_density(to_density(state))
            assert np.abs(back.s - state.s).max() < 1e-10

    def test_from_density_rejects_bad_inputs(self):
        with pytest.raises(InvariantViolation) as err:
            from_density(np.diag([0.9, 0.9]))
        assert err.value.invariant == "unit_trace"
        with pytest.raises(InvariantViolation) as err:
            from_density(np.array([[0.5, 0.3], [0.1, 0.5]]))
        assert err.value.invariant == "hermitian"

    def test_state_validation(self):
        with pytest.raises(InvariantViolation) as err:
            BlochState(2, [0.0, 0.0])
        assert err.value.invariant == "bloch_length"
        with pytest.raises(InvariantViolation) as err:
            BlochState(2, [1.2, 0.0, 0.0])
        assert err.value.invariant == "state_psd"


class TestDistances:
    def test_hs_examples(self):
        a = BlochState(2, [0.0, 0.0, 0.0])
        b = BlochState(2, [0.2, 0.0, 0.0])
        assert hs_distance_sq(a, a) == 0.0
        assert abs(hs_distance_sq(a, b) - 0.01) < 1e-15
        assert hs_distance_sq(a, b) == hs_distance_sq(b, a)

    def test_hs_norm_is_twice_the_loss(self):
        vecs = random_interior_vectors(3, 40)
        for sa, sb in zip(vecs[:20], vecs[20:]):
            a, b = BlochState(2, sa), BlochState(2, sb)
            assert abs(hs_norm_sq(a, b) - 2.0 * hs_distance_sq(a, b)) < 1e-12

    def test_trace_equals_hs_for_qubits(self):
        vecs = random_interior_vectors(5, 200)
        for sa, sb in zip(vecs[:100], vecs[100:]):
            a, b = BlochState(2, sa), BlochState(2, sb)
            assert abs(trace_distance_sq(a, b) - hs_distance_sq(a, b)) < 1e-10

    def test_trace_antipodal_pure(self):
        a = BlochState(2, [0.0, 0.0, 1.0])
        b = BlochState(2, [0.0, 0.0, -1.0])
        assert abs(trace_distance_sq(a, b) - 1.0) < 1e-12

    def test_fidelity_examples(self):
        up = BlochState(2, [0.0, 0.0, 1.0])
        down = BlochState(2, [0.0, 0.0, -1.0])
        assert abs(fidelity_sq(up, up) - 1.0) < 1e-12
        assert abs(fidelity_sq(up, down)) < 1e-12
        mixed = BlochState(2, [0.0, 0.0, 0.0])
        z7 = BlochState(2, [0.0, 0.0, 0.7])
        expected = 0.5 * (1.0 + np.sqrt(0.51))
        assert abs(fidelity_sq(mixed, z7) - expected) < 1e-12
        assert abs(fidelity_loss(mixed, z7) - (1.0 - expected)) < 1e-12

    def test_fidelity_matrix_route_matches_qubit_closed_form(self):
        vecs = random_interior_vectors(7, 60)
        for sa, sb in zip(vecs[:30], vecs[30:]):
            a, b = BlochState(2, sa), BlochState(2, sb)
            closed = fidelity_sq(a, b)
            rho, other = to_density(a), to_density(b)
            vals, vecs_ = np.linalg.eigh(rho)
            root = (vecs_ * np.sqrt(np.clip(vals, 0, None))) @ vecs_.conj().T
            mid_vals = np.linalg.eigvalsh(root @ other @ root)
            matrix_route = float(np.sqrt(np.clip(mid_vals, 0, None)).sum()) ** 2
            assert abs(closed - matrix_route) < 1e-10

    def test_fidelity_dim3(self):
        rng = np.random.default_rng(9)
        a = random_interior_state(3, rng)
        b = random_interior_state(3, rng)
        assert abs(fidelity_sq(a, a) - 1.0) < 1e-10
        assert 0.0 < fidelity_sq(a, b) < 1.0
        assert fidelity_loss(a, b) > 0.0

    @pytest.mark.parametrize(
        "fn", [hs_distance_sq, trace_distance_sq, fidelity_loss]
    )
    def test_pseudo_distance_properties(self, fn):
        vecs = random_interior_vectors(13, 100)
        for sa, sb in zip(vecs[:50], vecs[50:]):
            a, b = BlochState(2, sa), BlochState(2, sb)
            assert fn(a, a) == pytest.approx(0.0, abs=1e-12)
            val = fn(a, b)
            assert val >= 0.0
            assert val == pytest.approx(fn(b, a), abs=1e-12)
            if np.abs(sa - sb).max() > 1e-3:
                assert val > 1e-9

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(1)
        a = BlochState(2, [0.0, 0.0, 0.0])
        b = random_interior_state(3, rng)
        for fn in (hs_distance_sq, trace_distance_sq, fidelity_sq):
            with pytest.raises(InvariantViolation):
                fn(a, b)
