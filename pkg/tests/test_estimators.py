"""Linear and maximum-likelihood reconstruction."""

import numpy as np
import pytest

from tomobench.errors import InvariantViolation
from tomobench.estimators import (
    Frequencies,
    linear_estimate,
    linear_solve_batch,
    mle_estimate,
    mle_solve_batch,
)
from tomobench.qstate import BlochState
from tomobench.tester import Tester, probabilities, z_projective_povm

from conftest import random_interior_vectors
from util import grid_kl_minimum, tetrahedral_povm


def _kl(rel, probs):
    obs = rel > 0
    return float((rel[obs] * (np.log(rel[obs]) - np.log(probs[obs]))).sum())


class TestFrequencies:
    def test_validation(self):
        f = Frequencies.from_counts([1, 2, 3])
        assert f.n == 6
        assert np.allclose(f.relative, [1 / 6, 2 / 6, 3 / 6])
        with pytest.raises(InvariantViolation):
            Frequencies.from_counts([1, -1])
        with pytest.raises(InvariantViolation):
            Frequencies.from_counts([0, 0, 0])


class TestLinearEstimate:
    def test_exact_probabilities_recover_truth(self, six_state):
        for vec in random_interior_vectors(3, 20):
            p = probabilities(six_state, BlochState(2, vec))
            est = linear_solve_batch(six_state, p[None, :])[0]
            assert np.abs(est - vec).max() < 1e-9

    def test_concentrated_counts_unphysical(self, six_state):
        est = linear_estimate(six_state, Frequencies.from_counts([0, 0, 0, 0, 500, 0]))
        assert np.abs(est.s_hat - [0.0, 0.0, 3.0]).max() < 1e-10
        assert not est.physical
        assert np.linalg.norm(est.s_hat) > 1.0

    def test_uniform_counts_give_center(self, six_state):
        est = linear_estimate(six_state, Frequencies.from_counts([7] * 6))
        assert np.abs(est.s_hat).max() < 1e-12
        assert est.physical

    def test_residual_flags_inconsistent_systems(self, six_state):
        # pair sums differ from 1/3, so no state reproduces these frequencies
        est = linear_estimate(six_state, Frequencies.from_counts([4, 2, 6, 6, 6, 6]))
        assert est.residual > 1e-3
        tetra = tetrahedral_povm()
        est = linear_estimate(tetra, Frequencies.from_counts([4, 2, 6, 6]))
        assert est.residual < 1e-12

    def test_min_norm_for_deficient_tester(self):
        t = z_projective_povm()
        est = linear_estimate(t, Frequencies.from_counts([30, 10]))
        assert est.non_unique
        assert np.abs(est.s_hat[:2]).max() < 1e-12
        assert abs(est.s_hat[2] - 0.5) < 1e-12


class TestMleEstimate:
    def test_exact_probabilities_recover_truth(self, six_state):
        for vec in random_interior_vectors(7, 20):
            p = probabilities(six_state, BlochState(2, vec))
            est, _, kl, conv = mle_solve_batch(six_state, p[None, :])
            assert np.abs(est[0] - vec).max() < 1e-6
            assert kl[0] < 1e-12
            assert conv[0]

    def test_concentrated_counts_hit_boundary(self, six_state):
        est = mle_estimate(six_state, Frequencies.from_counts([0, 0, 0, 0, 800, 0]))
        assert np.abs(est.s_hat - [0.0, 0.0, 1.0]).max() < 1e-8
        assert abs(np.linalg.norm(est.s_hat) - 1.0) < 1e-8
        assert est.physical
        assert abs(est.kl_value - np.log(3.0)) < 1e-10

    def test_matches_per_axis_closed_form(self, six_state):
        rng = np.random.default_rng(11)
        for vec in random_interior_vectors(11, 20, max_radius=0.6):
            counts = rng.multinomial(400, probabilities(six_state, BlochState(2, vec)))
            est = mle_estimate(six_state, Frequencies.from_counts(counts))
            rel = counts / counts.sum()
            closed = np.array(
                [
                    (rel[0] - rel[1]) / (rel[0] + rel[1]),
                    (rel[2] - rel[3]) / (rel[2] + rel[3]),
                    (rel[4] - rel[5]) / (rel[4] + rel[5]),
                ]
            )
            if np.linalg.norm(closed) < 0.98:
                assert np.abs(est.s_hat - closed).max() < 1e-5

    def test_matches_grid_oracle(self, six_state):
        rng = np.random.default_rng(13)
        for vec in random_interior_vectors(13, 10, max_radius=0.7):
            counts = rng.multinomial(
                200, probabilities(six_state, BlochState(2, vec))
            )
            rel = counts / counts.sum()
            est, _, kl, _ = mle_solve_batch(six_state, rel[None, :])
            grid_s, grid_kl = grid_kl_minimum(six_state, rel)
            assert np.abs(est[0] - grid_s).max() < 2e-3
            assert kl[0] <= grid_kl + 1e-6

    def test_equals_linear_when_consistent_and_physical(self, six_state):
        tetra = tetrahedral_povm()
        rng = np.random.default_rng(17)
        checked = 0
        for vec in random_interior_vectors(17, 30, max_radius=0.6):
            counts = rng.multinomial(300, probabilities(tetra, BlochState(2, vec)))
            freqs = Frequencies.from_counts(counts)
            lin = linear_estimate(tetra, freqs)
            assert lin.residual < 1e-12
            if not lin.physical:
                continue
            mle = mle_estimate(tetra, freqs)
            assert np.abs(mle.s_hat - lin.s_hat).max() < 1e-6
            checked += 1
        assert checked >= 10
        # six-state frequencies built from exact probabilities are consistent too
        for vec in random_interior_vectors(18, 5):
            p = probabilities(six_state, BlochState(2, vec))
            lin = linear_solve_batch(six_state, p[None, :])[0]
            mle, _, _, _ = mle_solve_batch(six_state, p[None, :])
            assert np.abs(mle[0] - lin).max() < 1e-6

    def test_kl_never_above_physical_linear(self, six_state):
        rng = np.random.default_rng(19)
        for vec in random_interior_vectors(19, 20, max_radius=0.5):
            counts = rng.multinomial(150, probabilities(six_state, BlochState(2, vec)))
            rel = counts / counts.sum()
            lin = linear_estimate(six_state, Frequencies.from_counts(counts))
            est, _, kl, _ = mle_solve_batch(six_state, rel[None, :])
            if lin.physical:
                lin_kl = _kl(rel, probabilities(six_state, lin.s_hat))
                assert kl[0] <= lin_kl + 1e-12

    def test_permutation_equivariance(self, six_state):
        perm = [2, 3, 4, 5, 0, 1]
        relabeled = Tester.from_elements([six_state.elements[i] for i in perm])
        counts = np.array([40, 16, 31, 25, 38, 50])
        est_orig = mle_estimate(six_state, Frequencies.from_counts(counts))
        est_perm = mle_estimate(relabeled, Frequencies.from_counts(counts[perm]))
        assert np.abs(est_orig.s_hat - est_perm.s_hat).max() < 1e-12
        lin_orig = linear_estimate(six_state, Frequencies.from_counts(counts))
        lin_perm = linear_estimate(relabeled, Frequencies.from_counts(counts[perm]))
        assert np.abs(lin_orig.s_hat - lin_perm.s_hat).max() < 1e-12

    def test_deficient_tester_min_norm_and_flag(self):
        t = z_projective_povm()
        est = mle_estimate(t, Frequencies.from_counts([30, 10]))
        assert est.non_unique
        assert np.abs(est.s_hat[:2]).max() < 1e-9
        assert abs(est.s_hat[2] - 0.5) < 1e-6

    def test_mle_always_physical(self, six_state):
        rng = np.random.default_rng(23)
        # tiny samples produce wildly unphysical linear estimates
        for _ in range(20):
            counts = rng.multinomial(6, np.full(6, 1 / 6))
            est = mle_estimate(six_state, Frequencies.from_counts(counts))
            assert est.physical
            assert np.linalg.norm(est.s_hat) <= 1.0 + 1e-9

    def test_count_shape_mismatch(self, six_state):
        with pytest.raises(InvariantViolation):
            mle_estimate(six_state, Frequencies.from_counts([1, 2, 3]))
