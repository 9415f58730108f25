"""Trainer tests: parameter counting, losses, per-sample gradients.

The gradient oracle is central finite differences; the forward-pass oracle
is an independent straight-line reimplementation kept inside this file.
"""

import numpy as np
import pytest

from airfedsim import rng as rngmod
from airfedsim.nn import (
    ArchSpec,
    GradientBatch,
    Model,
    apply_update,
    init_model,
    param_count,
    per_sample_gradients,
    per_sample_losses,
)


def straight_line_forward(weights, widths, activation, x):
    """Independent forward pass: explicit loops, no shared kernel code."""
    off = 0
    a = list(x)
    for li in range(len(widths) - 1):
        fan_in, fan_out = widths[li], widths[li + 1]
        out = []
        for j in range(fan_out):
            acc = weights[off + fan_in * fan_out + j]  # bias
            for i in range(fan_in):
                acc += weights[off + j * fan_in + i] * a[i]
            out.append(acc)
        off += fan_in * fan_out + fan_out
        if li < len(widths) - 2:
            if activation == "relu":
                a = [v if v > 0 else 0.0 for v in out]
            else:
                a = [float(np.tanh(v)) for v in out]
        else:
            a = out
    return np.array(a)


def finite_difference_grads(model, X, y, eps=1e-5):
    w = model.weights
    fd = np.empty((X.shape[0], w.size))
    for j in range(w.size):
        wp = w.copy()
        wp[j] += eps
        wm = w.copy()
        wm[j] -= eps
        lp = per_sample_losses(Model(model.arch, wp), (X, y))
        lm = per_sample_losses(Model(model.arch, wm), (X, y))
        fd[:, j] = (lp - lm) / (2 * eps)
    return fd


class TestParamCount:
    def test_two_hidden(self):
        assert param_count(ArchSpec((2, 3, 2))) == 2 * 3 + 3 + 3 * 2 + 2  # 17

    def test_identity_scale(self):
        assert param_count(ArchSpec((1, 1))) == 2

    def test_enumeration_oracle(self):
        # Count parameters by enumerating every weight and bias slot.
        widths = (4, 8, 8, 3)
        slots = 0
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            for _ in range(fan_out):
                slots += fan_in  # one row of W
                slots += 1  # its bias
        assert slots == 139
        assert param_count(ArchSpec(widths)) == slots

    def test_rejects_single_layer(self):
        with pytest.raises(ValueError):
            ArchSpec((5,))

    def test_rejects_nonpositive_width(self):
        with pytest.raises(ValueError):
            ArchSpec((4, 0, 2))


class TestPerSampleLosses:
    def test_zero_weight_squared_error_zero_target(self):
        arch = ArchSpec((3, 1), loss="squared_error")
        model = Model(arch, np.zeros(param_count(arch)))
        X = np.array([[1.0, -2.0, 0.5], [3.0, 0.0, 1.0]])
        y = np.array([0, 0])
        np.testing.assert_array_equal(per_sample_losses(model, (X, y)), [0.0, 0.0])

    @pytest.mark.parametrize("classes", [2, 5, 11])
    def test_uniform_logits_cross_entropy(self, classes):
        arch = ArchSpec((4, classes), loss="cross_entropy")
        model = Model(arch, np.zeros(param_count(arch)))
        X = np.random.default_rng(0).standard_normal((6, 4)) * 0.0
        y = np.arange(6) % classes
        np.testing.assert_allclose(
            per_sample_losses(model, (X, y)), np.log(classes), rtol=1e-12
        )

    def test_against_straight_line_oracle(self, seed42_setup):
        arch, model, X, y = seed42_setup
        losses = per_sample_losses(model, (X, y))
        for i in range(X.shape[0]):
            logits = straight_line_forward(
                model.weights, arch.layer_widths, arch.activation, X[i]
            )
            shifted = logits - logits.max()
            p = np.exp(shifted) / np.exp(shifted).sum()
            expected = -np.log(max(p[y[i]], 1e-12))
            np.testing.assert_allclose(losses[i], expected, rtol=1e-12)

    def test_mean_equals_batch_loss(self, seed42_setup):
        _, model, X, y = seed42_setup
        losses = per_sample_losses(model, (X, y))
        assert np.isfinite(losses.mean())

    def test_dimension_mismatch(self, seed42_setup):
        _, model, X, y = seed42_setup
        with pytest.raises(ValueError):
            per_sample_losses(model, (X[:, :7], y))


class TestPerSampleGradients:
    def test_linear_model_analytic(self):
        # Scalar-output squared error: f = (w.x + b - y)^2.
        arch = ArchSpec((3, 1), loss="squared_error")
        w = np.array([0.5, -1.0, 2.0, 0.25])  # 3 weights + bias
        model = Model(arch, w)
        x = np.array([[1.0, 2.0, -0.5]])
        y = np.array([2])
        pred = w[:3] @ x[0] + w[3]
        expected = np.concatenate([2 * (pred - 2) * x[0], [2 * (pred - 2)]])
        gb = per_sample_gradients(model, (x, y))
        np.testing.assert_allclose(gb.grads[0], expected, rtol=1e-12)

    def test_identical_samples_identical_gradients(self, seed42_setup):
        _, model, X, y = seed42_setup
        X2 = np.stack([X[0], X[0]])
        y2 = np.array([y[0], y[0]])
        gb = per_sample_gradients(model, (X2, y2))
        np.testing.assert_array_equal(gb.grads[0], gb.grads[1])

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    @pytest.mark.parametrize("loss", ["cross_entropy", "squared_error"])
    def test_finite_differences(self, activation, loss):
        arch = ArchSpec((16, 24, 5), activation, loss)
        model = init_model(arch, rngmod.stream(42, "init"))
        probe = rngmod.stream(42, "probe")
        X = probe.standard_normal((8, 16))
        y = np.asarray(probe.integers(0, 5, 8), dtype=np.int64)
        gb = per_sample_gradients(model, (X, y))
        fd = finite_difference_grads(model, X, y)
        err = np.abs(fd - gb.grads) / np.maximum(np.abs(fd), 1e-6)
        assert err.max() < 1e-4

    def test_mean_equals_full_batch_gradient(self, seed42_setup):
        # Gradient of the mean loss via finite differences on the mean.
        _, model, X, y = seed42_setup
        gb = per_sample_gradients(model, (X, y))
        mean_grad = gb.grads.mean(axis=0)
        eps = 1e-6
        fd = np.empty_like(mean_grad)
        for j in range(model.dim):
            wp = model.weights.copy()
            wp[j] += eps
            wm = model.weights.copy()
            wm[j] -= eps
            fd[j] = (
                per_sample_losses(Model(model.arch, wp), (X, y)).mean()
                - per_sample_losses(Model(model.arch, wm), (X, y)).mean()
            ) / (2 * eps)
        np.testing.assert_allclose(mean_grad, fd, rtol=1e-4, atol=1e-8)

    def test_norms_match_gradients(self, seed42_setup):
        _, model, X, y = seed42_setup
        gb = per_sample_gradients(model, (X, y))
        np.testing.assert_allclose(gb.norms, np.linalg.norm(gb.grads, axis=1), rtol=1e-15)
        assert gb.raw_count == 8 and not gb.upsampled
        np.testing.assert_array_equal(gb.weights, np.ones(8))

    def test_determinism_bit_identical(self, seed42_setup):
        _, model, X, y = seed42_setup
        g1 = per_sample_gradients(model, (X, y))
        g2 = per_sample_gradients(model, (X, y))
        assert np.array_equal(g1.grads, g2.grads)
        assert np.array_equal(g1.losses, g2.losses)


class TestBackendParity:
    def test_numpy_matches_selected_backend(self, seed42_setup):
        arch, model, X, y = seed42_setup
        from airfedsim import _gradnumpy

        grads, losses = _gradnumpy.per_sample_grads(
            model.weights, arch.widths_array, arch.act_id, arch.loss_id, X, y
        )
        gb = per_sample_gradients(model, (X, y))
        np.testing.assert_allclose(gb.grads, grads, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(gb.losses, losses, rtol=1e-12)

    def test_compiled_backend_present_unless_forced_off(self):
        import airfedsim

        assert airfedsim.BACKEND in ("cython", "python")


class TestApplyUpdate:
    def test_zero_direction(self, seed42_setup):
        _, model, _, _ = seed42_setup
        out = apply_update(model, np.zeros(model.dim), 0.5)
        np.testing.assert_array_equal(out.weights, model.weights)

    def test_direct_arithmetic(self):
        arch = ArchSpec((1, 1))
        model = Model(arch, np.array([1.0, 1.0]))
        out = apply_update(model, np.array([1.0, -1.0]), 1.0)
        np.testing.assert_array_equal(out.weights, [0.0, 2.0])

    def test_apply_then_revert_bit_exact(self):
        # Exactly representable values so the round trip cannot round.
        arch = ArchSpec((3, 2))
        model = Model(arch, np.arange(param_count(arch), dtype=np.float64))
        direction = np.arange(model.dim, dtype=np.float64) - 4.0
        stepped = apply_update(model, direction, 0.5)
        back = apply_update(stepped, -direction, 0.5)
        assert np.array_equal(back.weights, model.weights)

    def test_input_model_unchanged(self, seed42_setup):
        _, model, _, _ = seed42_setup
        before = model.weights.copy()
        apply_update(model, np.ones(model.dim), 0.1)
        assert np.array_equal(model.weights, before)

    def test_dimension_mismatch(self, seed42_setup):
        _, model, _, _ = seed42_setup
        with pytest.raises(ValueError):
            apply_update(model, np.zeros(model.dim + 1), 0.1)


class TestGradientBatch:
    def test_raw_count_invariant(self):
        grads = np.ones((3, 2))
        with pytest.raises(ValueError):
            GradientBatch(grads, np.ones(3), np.ones(3), raw_count=2, upsampled=False)

    def test_positive_weights_required(self):
        grads = np.ones((2, 2))
        with pytest.raises(ValueError):
            GradientBatch(grads, np.ones(2), np.array([1.0, 0.0]), raw_count=2)
