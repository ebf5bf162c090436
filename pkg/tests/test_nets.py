"""Gradient exactness, Adam behaviour, and categorical-head tests."""
import numpy as np
import pytest

from emslice.errors import ContractViolation, NumericsError
from emslice.nets import (AdamState, MlpNet, action_logprobs,
                          categorical_entropy, categorical_sample_and_logprob,
                          categorical_sample_batch, entropy_grad_wrt_logits,
                          log_softmax, logprob_grad_to_logits_grad, softmax)


def finite_diff_grads(net, x, gout, h=1e-5):
    """Central differences of L = sum(forward(x) * gout) per parameter."""
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = float((net.forward(x)[0] * gout).sum())
            flat[j] = orig - h
            down = float((net.forward(x)[0] * gout).sum())
            flat[j] = orig
            gflat[j] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    err = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-6)
        err = max(err, float((np.abs(a - n) / denom).max()))
    return err


class TestForward:
    def test_zero_net_gives_uniform_policy(self):
        net = MlpNet([4, 8, 5], np.random.default_rng(0))
        for p in net.params:
            p.fill(0.0)
        logits, _ = net.forward(np.ones(4))
        assert np.array_equal(logits, np.zeros(5))
        assert np.allclose(softmax(logits), 0.2)

    def test_tiny_identity_net(self):
        net = MlpNet([1, 1, 1], np.random.default_rng(0))
        net.params[0][:] = 1.0
        net.params[1][:] = 0.0
        net.params[2][:] = 1.0
        net.params[3][:] = 0.0
        out, _ = net.forward(np.array([0.0]))
        assert out[0] == 0.0  # tanh(0) == 0 through the hidden layer
        out2, _ = net.forward(np.array([1.0]))
        assert out2[0] == pytest.approx(np.tanh(1.0))

    def test_forward_deterministic(self):
        net = MlpNet([6, 16, 16, 3], np.random.default_rng(1))
        x = np.random.default_rng(2).normal(size=(4, 6))
        a, _ = net.forward(x)
        b, _ = net.forward(x)
        assert np.array_equal(a, b)

    def test_shape_mismatch(self):
        net = MlpNet([6, 4, 2], np.random.default_rng(1))
        with pytest.raises(ContractViolation):
            net.forward(np.zeros(5))


class TestBackward:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            sizes = [int(rng.integers(2, 6)), int(rng.integers(3, 9)),
                     int(rng.integers(2, 5))]
            net = MlpNet(sizes, rng)
            x = rng.normal(size=(3, sizes[0]))
            gout = rng.normal(size=(3, sizes[-1]))
            _, cache = net.forward(x)
            net.zero_grads()
            net.backward(cache, gout)
            numeric = finite_diff_grads(net, x, gout)
            assert max_rel_error(net.grads, numeric) <= 1e-4

    def test_zero_gradient_in_zero_out(self):
        net = MlpNet([4, 8, 3], np.random.default_rng(5))
        _, cache = net.forward(np.ones(4))
        net.backward(cache, np.zeros(3))
        assert all(not g.any() for g in net.grads)

    def test_linearity_on_frozen_cache(self):
        rng = np.random.default_rng(6)
        net = MlpNet([5, 7, 4], rng)
        x = rng.normal(size=(2, 5))
        g1 = rng.normal(size=(2, 4))
        g2 = rng.normal(size=(2, 4))
        _, cache = net.forward(x)
        net.backward(cache, g1)
        net.backward(cache, g2)  # accumulates
        summed = [g.copy() for g in net.grads]
        net.zero_grads()
        net.backward(cache, g1 + g2)
        for a, b in zip(summed, net.grads):
            assert np.allclose(a, b, atol=1e-12)

    def test_missing_cache(self):
        net = MlpNet([4, 3], np.random.default_rng(0))
        with pytest.raises(ContractViolation):
            net.backward([], np.zeros(3))


class TestAdam:
    def test_zero_gradient_is_noop(self):
        net = MlpNet([4, 6, 2], np.random.default_rng(7))
        adam = AdamState(net.params, lr=1e-3, eps=1e-5)
        before = net.copy_params()
        adam.step(net.params, [np.zeros_like(p) for p in net.params])
        for a, b in zip(before, net.params):
            assert np.array_equal(a, b)
        assert adam.t == 1

    def test_moment_shapes_and_counter(self):
        net = MlpNet([3, 5, 2], np.random.default_rng(8))
        adam = AdamState(net.params)
        for m, p in zip(adam.m, net.params):
            assert m.shape == p.shape
        g = [np.ones_like(p) for p in net.params]
        adam.step(net.params, g)
        adam.step(net.params, g)
        assert adam.t == 2

    def test_descends_a_quadratic(self):
        # minimize (p - 3)^2; Adam with default betas must approach 3
        p = [np.array([0.0])]
        adam = AdamState(p, lr=0.05)
        for _ in range(2000):
            adam.step(p, [2 * (p[0] - 3.0)])
        assert abs(p[0][0] - 3.0) < 1e-2

    def test_table_defaults(self):
        adam = AdamState([np.zeros(1)])
        assert adam.lr == 1e-3 and adam.eps == 1e-5
        assert adam.beta1 == 0.9 and adam.beta2 == 0.999


class TestCategorical:
    def test_uniform_logits(self, rng):
        k = 7
        action, logp, entropy = categorical_sample_and_logprob(np.zeros(k), rng)
        assert 0 <= action < k
        assert logp == pytest.approx(-np.log(k))
        assert entropy == pytest.approx(np.log(k))

    def test_dominant_logit_argmax_frequency(self):
        rng = np.random.default_rng(10)
        logits = np.zeros(10)
        logits[4] = 20.0
        hits = sum(categorical_sample_and_logprob(logits, rng)[0] == 4
                   for _ in range(10_000))
        assert hits / 10_000 > 0.999

    def test_softmax_closed_form_frequency(self):
        rng = np.random.default_rng(11)
        logits = np.array([0.0, np.log(3.0)])
        n = 100_000
        actions, _ = categorical_sample_batch(np.tile(logits, (n, 1)), rng)
        assert abs(actions.mean() - 0.75) < 0.01

    def test_nan_logits_hard_failure(self, rng):
        with pytest.raises(NumericsError):
            categorical_sample_and_logprob(np.array([0.0, np.nan]), rng)
        with pytest.raises(NumericsError):
            categorical_sample_batch(np.array([[0.0, np.inf]]), rng)

    def test_entropy_bounded_by_log_k(self, rng):
        for _ in range(1000):
            k = int(rng.integers(2, 12))
            logits = rng.normal(scale=rng.uniform(0, 4), size=k)
            h = float(categorical_entropy(logits[None, :])[0])
            assert h <= np.log(k) + 1e-12
        flat = categorical_entropy(np.full((1, 9), 3.3))[0]
        assert flat == pytest.approx(np.log(9))

    def test_batch_sampler_matches_scalar_logprob(self, rng):
        logits = rng.normal(size=(64, 10))
        actions, logps = categorical_sample_batch(logits, rng)
        assert np.allclose(logps, action_logprobs(logits, actions))

    def test_scalar_and_batch_same_distribution(self):
        # same underlying inverse-CDF construction, so identical draws
        logits = np.array([0.3, -1.0, 2.0, 0.0])
        a1, lp1, _ = categorical_sample_and_logprob(logits,
                                                    np.random.default_rng(21))
        a2, lp2 = categorical_sample_batch(logits[None, :],
                                           np.random.default_rng(21))
        assert a1 == a2[0] and lp1 == pytest.approx(lp2[0])


class TestLogitGradients:
    def test_entropy_grad_matches_finite_diff(self, rng):
        logits = rng.normal(size=(3, 6))
        analytic = entropy_grad_wrt_logits(logits)
        h = 1e-6
        for r in range(3):
            for c in range(6):
                up = logits.copy(); up[r, c] += h
                dn = logits.copy(); dn[r, c] -= h
                num = (categorical_entropy(up)[r]
                       - categorical_entropy(dn)[r]) / (2 * h)
                assert analytic[r, c] == pytest.approx(num, abs=1e-6)

    def test_logprob_chain_rule_matches_finite_diff(self, rng):
        logits = rng.normal(size=(4, 5))
        actions = np.array([0, 3, 2, 4])
        dlogp = rng.normal(size=4)
        analytic = logprob_grad_to_logits_grad(logits, actions, dlogp)
        h = 1e-6
        for r in range(4):
            for c in range(5):
                up = logits.copy(); up[r, c] += h
                dn = logits.copy(); dn[r, c] -= h
                num = dlogp[r] * (log_softmax(up)[r, actions[r]]
                                  - log_softmax(dn)[r, actions[r]]) / (2 * h)
                assert analytic[r, c] == pytest.approx(num, abs=1e-6)
