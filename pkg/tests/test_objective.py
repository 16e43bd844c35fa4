"""Objective terms: values against scalar loops, gradients against FD."""

import math

import numpy as np
import numpy.testing as npt
import pytest

from assph import objective
from assph.errors import ConfigError, DataError, DivergenceError
from oracles import central_difference, gradient_errors


def scalar_cosine(a, b):
    out = np.zeros((len(a), len(b)))
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            dot = math.fsum(p * q for p, q in zip(x, y))
            nx = math.sqrt(math.fsum(p * p for p in x))
            ny = math.sqrt(math.fsum(q * q for q in y))
            out[i, j] = dot / (nx * ny)
    return out


class TestPairwiseCosine:
    def test_orthonormal_identity(self):
        npt.assert_allclose(objective.pairwise_cosine(np.eye(3), np.eye(3)),
                            np.eye(3), atol=1e-12)

    def test_orthogonal_rows(self):
        out = objective.pairwise_cosine(np.array([[1.0, 0.0]]),
                                        np.array([[0.0, 1.0]]))
        npt.assert_allclose(out, [[0.0]], atol=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((5, 8))
        b = rng.standard_normal((6, 8))
        npt.assert_allclose(objective.pairwise_cosine(a, b),
                            scalar_cosine(a, b), atol=1e-12)

    def test_zero_row_diverges(self):
        a = np.ones((3, 4))
        a[1] = 0.0
        with pytest.raises(DivergenceError, match="row 1"):
            objective.pairwise_cosine(a, np.ones((2, 4)))


class TestLossValues:
    def test_sr_zero_when_cosines_equal_target(self):
        hi = np.eye(3) * 2.0  # orthonormal directions, scaled
        ht = np.eye(3) * 0.5
        s = np.eye(3)
        assert objective.loss_sr(hi, ht, s) == pytest.approx(0.0, abs=1e-20)

    def test_sr_single_pair(self):
        hi = np.array([[1.0, 0.0]])
        ht = np.array([[0.0, 1.0]])
        # C_it = 0, C_ii = C_tt = 1, target 1 -> only the cross term misses
        assert objective.loss_sr(hi, ht, np.array([[1.0]])) == pytest.approx(1.0)

    def test_sa_single_pair(self):
        hi = np.array([[1.0, 0.0]])
        ht = np.array([[0.0, 1.0]])
        # C_ii = C_tt = 1 agree; the two cross-vs-intra gaps are 1 each
        assert objective.loss_sa(hi, ht) == pytest.approx(2.0)

    def test_cp_single_pair(self):
        hi = np.array([[1.0, 0.0]])
        ht = np.array([[0.0, 1.0]])
        out = objective.loss_cp(hi, ht, np.array([[1.0]]), beta=1.5)
        assert out == pytest.approx(2.25)

    def test_cp_mask_is_elementwise(self):
        rng = np.random.default_rng(1)
        hi = rng.standard_normal((4, 6))
        ht = rng.standard_normal((4, 6))
        r = np.zeros((4, 4))
        assert objective.loss_cp(hi, ht, r, 1.5) == 0.0
        r[2, 3] = 1.0
        c = objective.pairwise_cosine(hi, ht)
        assert objective.loss_cp(hi, ht, r, 1.5) == pytest.approx(
            (c[2, 3] - 1.5) ** 2)

    def test_total_worked_example(self):
        hi = np.array([[1.0, 0.0]])
        ht = np.array([[0.0, 1.0]])
        weights = objective.LossWeights(mu1=2.0, mu2=1.0, beta=1.5)
        out = objective.total_loss_and_grads(hi, ht, np.array([[1.0]]),
                                             np.array([[1.0]]), weights)
        assert out.sr == pytest.approx(1.0)
        assert out.sa == pytest.approx(2.0)
        assert out.cp == pytest.approx(2.25)
        assert out.total == pytest.approx(1.0 + 2.0 * 2.25 + 1.0 * 2.0)

    def test_total_matches_component_functions(self):
        rng = np.random.default_rng(2)
        hi = rng.standard_normal((6, 5))
        ht = rng.standard_normal((6, 5))
        s = np.clip(rng.standard_normal((6, 6)), -1, 1)
        s = (s + s.T) / 2
        r = (rng.random((6, 6)) < 0.4).astype(float)
        r = np.maximum(r, r.T)
        np.fill_diagonal(r, 1)
        weights = objective.LossWeights(mu1=1.7, mu2=0.6, beta=1.2)
        out = objective.total_loss_and_grads(hi, ht, s, r, weights)
        assert out.sr == pytest.approx(objective.loss_sr(hi, ht, s))
        assert out.sa == pytest.approx(objective.loss_sa(hi, ht))
        assert out.cp == pytest.approx(objective.loss_cp(hi, ht, r, 1.2))
        assert out.total == pytest.approx(
            out.sr + 1.7 * out.cp + 0.6 * out.sa)

    def test_loss_invariant_to_row_scaling(self):
        rng = np.random.default_rng(3)
        hi = rng.standard_normal((5, 4))
        ht = rng.standard_normal((5, 4))
        s = np.zeros((5, 5))
        r = np.eye(5)
        weights = objective.LossWeights()
        base = objective.total_loss_and_grads(hi, ht, s, r, weights).total
        scale = rng.uniform(0.5, 3.0, size=(5, 1))
        scaled = objective.total_loss_and_grads(hi * scale, ht, s, r,
                                                weights).total
        assert scaled == pytest.approx(base, rel=1e-12)

    def test_loss_invariant_to_joint_permutation(self):
        rng = np.random.default_rng(4)
        hi = rng.standard_normal((6, 4))
        ht = rng.standard_normal((6, 4))
        s = rng.uniform(-1, 1, (6, 6))
        s = (s + s.T) / 2
        r = np.eye(6)
        weights = objective.LossWeights()
        base = objective.total_loss_and_grads(hi, ht, s, r, weights).total
        perm = rng.permutation(6)
        permuted = objective.total_loss_and_grads(
            hi[perm], ht[perm], s[np.ix_(perm, perm)],
            r[np.ix_(perm, perm)], weights).total
        assert permuted == pytest.approx(base, rel=1e-12)


class TestFreezeModes:
    def _setup(self, seed):
        rng = np.random.default_rng(seed)
        hi = rng.standard_normal((4, 5))
        ht = rng.standard_normal((4, 5))
        s = np.clip((rng.random((4, 4)) - 0.5) * 2, -1, 1)
        s = (s + s.T) / 2
        r = np.eye(4)
        r[0, 1] = r[1, 0] = 1
        return hi, ht, s, r, objective.LossWeights(mu1=2.0, mu2=1.0, beta=1.5)

    def test_frozen_side_gradient_is_zero(self):
        hi, ht, s, r, weights = self._setup(5)
        out_t = objective.total_loss_and_grads(hi, ht, s, r, weights, "text")
        npt.assert_array_equal(out_t.grad_text, 0.0)
        out_i = objective.total_loss_and_grads(hi, ht, s, r, weights, "image")
        npt.assert_array_equal(out_i.grad_image, 0.0)

    def test_loss_value_unchanged_by_freeze(self):
        hi, ht, s, r, weights = self._setup(6)
        values = [objective.total_loss_and_grads(hi, ht, s, r, weights, f).total
                  for f in ("none", "image", "text")]
        assert values[0] == pytest.approx(values[1])
        assert values[0] == pytest.approx(values[2])

    def test_unfrozen_gradient_matches_unfrozen_mode(self):
        hi, ht, s, r, weights = self._setup(7)
        out_none = objective.total_loss_and_grads(hi, ht, s, r, weights)
        out_text = objective.total_loss_and_grads(hi, ht, s, r, weights, "text")
        npt.assert_allclose(out_text.grad_image, out_none.grad_image)

    def test_bad_mode(self):
        hi, ht, s, r, weights = self._setup(8)
        with pytest.raises(ConfigError, match="freeze"):
            objective.total_loss_and_grads(hi, ht, s, r, weights, "both")


class TestGradients:
    def test_matches_finite_differences_all_modes(self):
        rng = np.random.default_rng(9)
        for freeze in ("none", "image", "text"):
            hi = rng.standard_normal((3, 4))
            ht = rng.standard_normal((3, 4))
            s = np.clip((rng.random((3, 3)) - 0.5) * 2, -1, 1)
            s = (s + s.T) / 2
            r = np.eye(3)
            r[0, 2] = r[2, 0] = 1
            weights = objective.LossWeights(mu1=2.0, mu2=1.0, beta=1.5)
            out = objective.total_loss_and_grads(hi, ht, s, r, weights, freeze)

            def loss():
                return objective.total_loss_and_grads(hi, ht, s, r, weights,
                                                      freeze).total

            if freeze != "image":
                fd = central_difference(loss, hi, step=1e-4)
                assert gradient_errors(out.grad_image, fd).max() <= 1e-4
            if freeze != "text":
                fd = central_difference(loss, ht, step=1e-4)
                assert gradient_errors(out.grad_text, fd).max() <= 1e-4

    def test_binary_codes_as_frozen_side(self):
        # the asymmetric phase feeds +-1 codes; the gradients must still match
        rng = np.random.default_rng(10)
        hi = rng.standard_normal((4, 6))
        b_t = np.where(rng.standard_normal((4, 6)) >= 0, 1.0, -1.0)
        s = np.zeros((4, 4))
        r = np.eye(4)
        weights = objective.LossWeights()
        out = objective.total_loss_and_grads(hi, b_t, s, r, weights, "text")

        def loss():
            return objective.total_loss_and_grads(hi, b_t, s, r, weights,
                                                  "text").total

        fd = central_difference(loss, hi, step=1e-4)
        assert gradient_errors(out.grad_image, fd).max() <= 1e-4


class TestValidation:
    def test_shape_mismatch(self):
        weights = objective.LossWeights()
        with pytest.raises(DataError, match="shapes"):
            objective.total_loss_and_grads(np.ones((3, 4)), np.ones((2, 4)),
                                           np.zeros((3, 3)), np.eye(3), weights)

    def test_bad_slices(self):
        weights = objective.LossWeights()
        with pytest.raises(DataError, match="slices"):
            objective.total_loss_and_grads(np.ones((3, 4)), np.ones((3, 4)),
                                           np.zeros((2, 2)), np.eye(3), weights)

    def test_bad_weights(self):
        with pytest.raises(ConfigError, match="beta"):
            objective.LossWeights(beta=0.5).validate()
        with pytest.raises(ConfigError, match="mu1"):
            objective.LossWeights(mu1=-1.0).validate()
