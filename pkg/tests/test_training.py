import numpy as np
import pytest

from tadkit.nets import NetworkSpec, init_params, network_probs
from tadkit.training import (GradientError, TrainConfig, ace_loss, adam_init,
                             adam_update, apply_dropout, apply_synaptic_noise,
                             backward, clip_gradients, compute_gradients,
                             grad_check, measure_times, sgd_update, train)


def _toy_problem(recurrent, n=400, seed=0, m=20):
    """Linearly separable two-class data, as frames or as sequences."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.standard_normal((n, 8)) * 0.3
    x[:, 0] += np.where(y == 1, 2.0, -2.0)
    if recurrent:
        x = np.repeat(x[:, None, :], m, axis=1)
        x += 0.05 * rng.standard_normal(x.shape)
    return x, y


class TestLoss:
    def test_perfect_prediction(self):
        probs = np.array([[0.0 + 1e-9, 1.0], [1.0, 0.0 + 1e-9]])
        assert ace_loss(probs, [1, 0]) == pytest.approx(0.0, abs=1e-8)

    def test_uniform_prediction(self):
        probs = np.full((10, 2), 0.5)
        assert ace_loss(probs, np.zeros(10, dtype=int)) == \
            pytest.approx(np.log(2.0))

    def test_hand_example(self):
        probs = np.array([[0.8, 0.2], [0.3, 0.7]])
        want = -(np.log(0.8) + np.log(0.7)) / 2.0
        assert ace_loss(probs, [0, 1]) == pytest.approx(want, abs=1e-12)

    def test_guard_against_zero_prob(self):
        probs = np.array([[1.0, 0.0]])
        assert np.isfinite(ace_loss(probs, [1]))


class TestGradCheck:
    """Finite-difference oracle over every parameter tensor."""

    @pytest.mark.parametrize("kind", ["fnn", "rnn", "lstm", "gru"])
    @pytest.mark.parametrize("layers", [1, 2])
    def test_small_nets(self, kind, layers):
        spec = NetworkSpec(kind, layers, 4)
        report = grad_check(spec, seed=layers)
        assert report.passed, \
            f"{kind} L={layers}: {report.worst_tensor} {report.max_rel_error:.2e}"

    def test_covers_every_tensor(self):
        spec = NetworkSpec("lstm", 1, 3)
        report = grad_check(spec, seed=0)
        expected = {"Wx0", "Wh0", "b0", "pi0", "pf0", "po0", "h0_0", "c0_0",
                    "Wy", "by"}
        assert set(report.per_tensor) == expected

    def test_detects_wrong_gradient(self):
        spec = NetworkSpec("rnn", 1, 3)
        rng = np.random.default_rng(0)
        params = init_params(spec, 0)
        for name in params:
            params[name] = params[name] + 0.1 * rng.standard_normal(
                params[name].shape)
        x = rng.standard_normal((4, 5, 8))
        y = rng.integers(0, 2, 4)
        _, grads = compute_gradients(spec, params, x, y)
        grads["Wh0"] = grads["Wh0"] + 0.05  # corrupt one tensor
        report = grad_check(spec, seed=0, grads=grads)
        assert not report.passed
        assert report.worst_tensor == "Wh0"

    def test_nonfinite_gradient_raises(self):
        spec = NetworkSpec("fnn", 1, 3)
        params = init_params(spec, 0)
        x = np.ones((2, 8))
        x[0, 0] = np.nan
        with pytest.raises(GradientError, match="tensor"):
            with np.errstate(invalid="ignore"):
                compute_gradients(spec, params, x, np.array([0, 1]))


class TestOptimizers:
    def test_sgd_step(self):
        params = {"w": np.array([1.0, 2.0])}
        grads = {"w": np.array([0.5, -1.0])}
        cfg = TrainConfig(learning_rate=0.1)
        sgd_update(params, grads, cfg)
        assert params["w"] == pytest.approx([0.95, 2.1])

    def test_adam_first_step_is_signed_lr(self):
        # with bias correction the first update is lr * sign(g) (up to eps)
        params = {"w": np.zeros(3)}
        grads = {"w": np.array([2.0, -0.001, 0.0])}
        cfg = TrainConfig(learning_rate=0.01)
        state = adam_init(params)
        adam_update(params, grads, state, cfg)
        assert params["w"][0] == pytest.approx(-0.01, rel=1e-4)
        assert params["w"][1] == pytest.approx(0.01, rel=1e-3)
        assert params["w"][2] == 0.0

    def test_adam_converges_on_quadratic(self):
        params = {"w": np.array([5.0])}
        cfg = TrainConfig(learning_rate=0.1)
        state = adam_init(params)
        for _ in range(500):
            adam_update(params, {"w": 2.0 * params["w"]}, state, cfg)
        assert abs(params["w"][0]) < 1e-3

    def test_adam_deterministic(self):
        def run():
            params = {"w": np.array([1.0, -1.0])}
            state = adam_init(params)
            cfg = TrainConfig(learning_rate=0.05)
            for k in range(20):
                adam_update(params, {"w": params["w"] + k}, state, cfg)
            return params["w"]
        assert np.array_equal(run(), run())


class TestRegularization:
    def test_dropout_zero_rate_identity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((10, 8))
        assert np.array_equal(apply_dropout(x, 0.0, rng), x)

    def test_dropout_mean_preserved(self):
        rng = np.random.default_rng(1)
        x = np.ones((2000, 100))
        out = apply_dropout(x, 0.2, rng)
        assert out.mean() == pytest.approx(1.0, rel=0.02)
        # survivors are rescaled by 1/keep
        kept = out[out != 0]
        assert kept == pytest.approx(np.full(kept.shape, 1.0 / 0.8))

    def test_synaptic_noise_weights_only(self):
        spec = NetworkSpec("rnn", 1, 4)
        params = init_params(spec, 0)
        rng = np.random.default_rng(2)
        noisy = apply_synaptic_noise(params, 0.05, rng)
        assert not np.array_equal(noisy["Wx0"], params["Wx0"])
        assert not np.array_equal(noisy["Wh0"], params["Wh0"])
        assert not np.array_equal(noisy["Wy"], params["Wy"])
        assert np.array_equal(noisy["b0"], params["b0"])
        assert np.array_equal(noisy["h0_0"], params["h0_0"])
        assert np.array_equal(noisy["by"], params["by"])

    def test_synaptic_noise_keeps_stored_weights_clean(self):
        spec = NetworkSpec("gru", 1, 4)
        params = init_params(spec, 0)
        before = {k: v.copy() for k, v in params.items()}
        apply_synaptic_noise(params, 0.5, np.random.default_rng(3))
        for k in params:
            assert np.array_equal(params[k], before[k])

    def test_zero_std_is_exact_copy(self):
        spec = NetworkSpec("rnn", 1, 3)
        params = init_params(spec, 0)
        noisy = apply_synaptic_noise(params, 0.0, np.random.default_rng(4))
        for k in params:
            assert np.array_equal(noisy[k], params[k])

    def test_clip_reduces_large_norm(self):
        grads = {"a": np.full(4, 10.0), "b": np.full(4, -10.0)}
        clipped = clip_gradients(grads, 5.0)
        total = np.sqrt(sum(np.sum(g * g) for g in clipped.values()))
        assert total == pytest.approx(5.0)
        # direction preserved
        assert np.all(clipped["a"] > 0) and np.all(clipped["b"] < 0)

    def test_clip_leaves_small_norm(self):
        grads = {"a": np.array([0.1, -0.2])}
        clipped = clip_gradients(grads, 5.0)
        assert np.array_equal(clipped["a"], grads["a"])


class TestTrainLoop:
    @pytest.mark.parametrize("kind", ["fnn", "rnn", "lstm", "gru"])
    def test_learns_separable_toy(self, kind):
        spec = NetworkSpec(kind, 1, 8)
        x, y = _toy_problem(spec.recurrent, n=400, seed=1)
        xv, yv = _toy_problem(spec.recurrent, n=200, seed=2)
        cfg = TrainConfig(epochs=20, batch_size=64, learning_rate=3e-3,
                          seed=0, patience=20)
        result = train(spec, x, y, xv, yv, cfg)
        assert result.best_val_mcc > 0.9
        assert not result.diverged

    def test_deterministic(self):
        spec = NetworkSpec("fnn", 1, 4)
        x, y = _toy_problem(False, n=200, seed=3)
        xv, yv = _toy_problem(False, n=100, seed=4)
        cfg = TrainConfig(epochs=3, seed=7)
        a = train(spec, x, y, xv, yv, cfg)
        b = train(spec, x, y, xv, yv, cfg)
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])
        assert [l.train_loss for l in a.log] == [l.train_loss for l in b.log]
        assert [l.val_mcc for l in a.log] == [l.val_mcc for l in b.log]

    def test_seed_changes_outcome(self):
        spec = NetworkSpec("fnn", 1, 4)
        x, y = _toy_problem(False, n=200, seed=3)
        xv, yv = _toy_problem(False, n=100, seed=4)
        a = train(spec, x, y, xv, yv, TrainConfig(epochs=2, seed=0))
        b = train(spec, x, y, xv, yv, TrainConfig(epochs=2, seed=1))
        assert not np.array_equal(a.params["W0"], b.params["W0"])

    def test_early_stopping_bounds_epochs(self):
        spec = NetworkSpec("fnn", 1, 2)
        # labels independent of features: validation MCC cannot improve
        rng = np.random.default_rng(5)
        x = rng.standard_normal((100, 8))
        y = rng.integers(0, 2, 100)
        xv = rng.standard_normal((100, 8))
        yv = rng.integers(0, 2, 100)
        cfg = TrainConfig(epochs=50, patience=3, seed=0)
        result = train(spec, x, y, xv, yv, cfg)
        assert len(result.log) < 50

    def test_best_model_tracked(self):
        spec = NetworkSpec("fnn", 1, 8)
        x, y = _toy_problem(False, n=300, seed=6)
        xv, yv = _toy_problem(False, n=150, seed=7)
        cfg = TrainConfig(epochs=10, seed=0, patience=10)
        result = train(spec, x, y, xv, yv, cfg)
        # stored params reproduce the best logged validation MCC
        probs = network_probs(spec, result.params, xv)
        preds = np.argmax(probs, axis=1)
        from tadkit.metrics import confusion, mcc
        got = mcc(confusion(yv, preds))
        assert got == pytest.approx(result.best_val_mcc, abs=1e-12)
        assert result.best_val_mcc == pytest.approx(
            max(l.val_mcc for l in result.log), abs=1e-12)

    def test_batch_cap(self):
        spec = NetworkSpec("fnn", 1, 2)
        x, y = _toy_problem(False, n=1000, seed=8)
        cfg = TrainConfig(epochs=1, batch_size=10, max_batches_per_epoch=3,
                          seed=0)
        result = train(spec, x, y, x[:50], y[:50], cfg)
        assert len(result.log) == 1

    def test_sgd_optimizer_runs(self):
        spec = NetworkSpec("rnn", 1, 4)
        x, y = _toy_problem(True, n=100, seed=9)
        cfg = TrainConfig(epochs=2, optimizer="sgd", learning_rate=0.05,
                          seed=0)
        result = train(spec, x, y, x[:40], y[:40], cfg)
        assert len(result.log) == 2

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(dropout_rate=1.0)
        with pytest.raises(ValueError):
            TrainConfig(optimizer="rmsprop")


class TestTiming:
    def test_measure_times_positive(self):
        spec = NetworkSpec("fnn", 1, 4)
        params = init_params(spec, 0)
        x, y = _toy_problem(False, n=128, seed=0)
        times = measure_times(spec, params, x, y, x, repeats=2)
        assert times["train_s"] > 0
        assert times["test_s"] > 0
