import math

import numpy as np
import pytest

from egogest import model as md
from egogest.errors import LabelOutOfRange, ShapeMismatch, StaleCache


def tiny_state(seed=0, d=4, h=8, n=3):
    return md.init_model(np.random.default_rng(seed), d, h, n)


class TestForward:
    def test_zero_input_equal_across_batch(self):
        state = tiny_state()
        x = np.zeros((4, 12, 4))
        logits, _ = md.forward(state, x, mode="eval")
        for m in range(1, 4):
            assert np.array_equal(logits[0], logits[m])
        # zero input never writes to the cell state, so the logits are
        # constant over time
        for t in range(1, 12):
            assert np.array_equal(logits[0, t], logits[0, 0])

    def test_batch_permutation_equivariance(self, rng):
        state = tiny_state(1)
        x = rng.normal(size=(5, 7, 4))
        logits, _ = md.forward(state, x, mode="eval")
        perm = np.array([3, 0, 4, 1, 2])
        logits_p, _ = md.forward(state, x[perm], mode="eval")
        assert np.array_equal(logits_p, logits[perm])

    def test_single_step_hand_evaluation(self):
        # D=2, H=3, N=2, every weight 0.1, biases as initialized
        state = tiny_state(d=2, h=3, n=2)
        state.lstm.w_ih[:] = 0.1
        state.lstm.w_hh[:] = 0.1
        state.fc.w[:] = 0.1
        state.fc.b[:] = 0.0
        x = np.array([[[0.5, -0.25]]])
        logits, _ = md.forward(state, x, mode="eval")

        def sigmoid(v):
            return 1.0 / (1.0 + math.exp(-v))

        # scalar reconstruction of the gate equations: eval-mode BN with
        # stats (0, 1) is x / sqrt(1 + eps)
        xb = [v / math.sqrt(1.0 + state.bn.eps) for v in (0.5, -0.25)]
        pre = 0.1 * sum(xb)  # same for every gate unit
        i = sigmoid(pre)
        f = sigmoid(pre + 1.0)  # forget bias starts at 1
        gche = math.tanh(pre)
        o = sigmoid(pre)
        c = i * gche
        hval = o * math.tanh(c)
        logit = 0.1 * (3 * hval)
        assert np.abs(logits[0, 0] - logit).max() < 1e-12

    def test_shape_mismatch(self):
        state = tiny_state()
        with pytest.raises(ShapeMismatch):
            md.forward(state, np.zeros((2, 5, 7)))


class TestNllLoss:
    def test_uniform_logits_log_n(self):
        logits = np.zeros((2, 3, 5))
        labels = np.zeros((2, 3), dtype=int)
        loss, _ = md.nll_loss(logits, labels)
        assert abs(loss - math.log(5)) < 1e-12

    def test_margin_monotone_to_zero(self):
        labels = np.zeros((1, 1), dtype=int)
        prev = None
        for margin in (1.0, 2.0, 4.0, 8.0, 16.0):
            logits = np.zeros((1, 1, 3))
            logits[0, 0, 0] = margin
            loss, _ = md.nll_loss(logits, labels)
            if prev is not None:
                assert loss < prev
            prev = loss
        assert prev < 1e-6

    def test_gradient_matches_finite_differences(self, rng):
        logits = rng.normal(size=(2, 4, 3))
        labels = rng.integers(0, 3, size=(2, 4))
        _, grad = md.nll_loss(logits, labels)
        step = 1e-6
        for idx in np.ndindex(logits.shape):
            logits[idx] += step
            up, _ = md.nll_loss(logits, labels)
            logits[idx] -= 2 * step
            down, _ = md.nll_loss(logits, labels)
            logits[idx] += step
            num = (up - down) / (2 * step)
            assert abs(num - grad[idx]) <= 1e-6 * max(1.0, abs(num))

    def test_label_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            md.nll_loss(np.zeros((1, 1, 3)), np.array([[3]]))


class TestBackward:
    def test_zero_upstream_zero_grads(self, rng):
        state = tiny_state(2)
        x = rng.normal(size=(2, 5, 4))
        _, cache = md.forward(state, x, mode="train")
        grads, dx = md.backward(state, cache, np.zeros((2, 5, 3)))
        assert all(np.all(v == 0) for v in grads.values())
        assert np.all(dx == 0)

    def test_linear_in_upstream_gradient(self, rng):
        # doubling one element's upstream gradient doubles its contribution
        state = tiny_state(3)
        x = rng.normal(size=(2, 5, 4))
        _, cache = md.forward(state, x, mode="train")
        dl = np.zeros((2, 5, 3))
        dl[0] = rng.normal(size=(5, 3))
        g1, _ = md.backward(state, cache, dl)
        g2, _ = md.backward(state, cache, 2.0 * dl)
        for name in g1:
            assert np.allclose(2.0 * g1[name], g2[name], rtol=0, atol=1e-15)

    def test_stale_cache_detected(self, rng):
        state = tiny_state(4)
        x = rng.normal(size=(2, 5, 4))
        _, cache = md.forward(state, x, mode="train")
        with pytest.raises(StaleCache):
            md.backward(state, cache, np.zeros((2, 6, 3)))
        _, eval_cache = md.forward(state, x, mode="eval")
        with pytest.raises(StaleCache):
            md.backward(state, eval_cache, np.zeros((2, 5, 3)))


class TestGradCheck:
    def test_default_dims_pass(self):
        report = md.grad_check(seed=0)
        assert report.passed, str(report)
        assert report.max_rel_error <= 1e-4

    def test_three_seeds_pass(self):
        for seed in (1, 2, 3):
            assert md.grad_check(seed=seed).passed

    def test_includes_bn_batch_statistics_path(self):
        report = md.grad_check(seed=5)
        assert "input" in report.per_param
        assert report.per_param["input"] <= 1e-4

    def test_corrupted_forget_gradient_fails_named(self):
        report = md.grad_check(seed=0, corrupt_param="lstm.w_hh")
        assert not report.passed
        assert report.worst_param == "lstm.w_hh"


class TestPredict:
    def test_tie_breaks_to_lowest_class(self, rng):
        state = tiny_state(6)
        state.fc.w[:] = 0.0
        state.fc.b[:] = 0.0
        labels, probs = md.predict_framewise(state, rng.normal(size=(9, 4)))
        assert np.all(labels == 0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_eval_mode_deterministic(self, rng):
        state = tiny_state(7)
        feats = rng.normal(size=(20, 4))
        l1, p1 = md.predict_framewise(state, feats)
        l2, p2 = md.predict_framewise(state, feats)
        assert np.array_equal(l1, l2) and np.array_equal(p1, p2)

    def test_argmax_shift_invariance(self, rng):
        state = tiny_state(8)
        feats = rng.normal(size=(15, 4))
        labels, _ = md.predict_framewise(state, feats)
        state.fc.b += 3.7
        shifted, _ = md.predict_framewise(state, feats)
        assert np.array_equal(labels, shifted)

    def test_trained_model_fits_training_sequence(self, trained_small, small_dataset, small_config):
        from egogest import features as ft
        from egogest.kinematics import GestureClass

        seq = next(s for s in small_dataset
                   if s.gesture == GestureClass.SHAKING_HEAD)
        feats = ft.sequence_features(seq)
        x = trained_small.stats.normalize(feats)
        labels, _ = md.predict_framewise(trained_small.state, x)
        remap = {cid: i for i, cid in enumerate(trained_small.class_ids)}
        truth = np.array([remap[int(v)] for v in seq.labels])
        assert (labels == truth).mean() > 0.9


class TestInvariants:
    def test_parameter_count(self):
        d, h, n = 6, 16, 4
        state = md.init_model(np.random.default_rng(0), d, h, n)
        assert md.param_count(state) == 2 * d + 4 * h * (d + h + 1) + n * (h + 1)

    def test_bn_train_eval_consistency_momentum_one(self, rng):
        state = tiny_state(9)
        state.bn.momentum = 1.0
        x = rng.normal(size=(3, 6, 4))
        logits_train, cache = md.forward(state, x, mode="train")
        md.update_running_stats(state, cache)
        logits_eval, _ = md.forward(state, x, mode="eval")
        assert np.abs(logits_train - logits_eval).max() < 1e-10

    def test_softmax_rows_sum_to_one(self, rng):
        p = md.softmax(rng.normal(size=(40, 6)) * 8)
        assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-12
        assert np.all(p > 0) and np.all(p < 1)
