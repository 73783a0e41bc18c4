"""Numeric kernels: forward examples and finite-difference gradient checks."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from siclop import numcore
from siclop.errors import ShapeMismatch


def central_difference(f, x, h=1e-5):
    """Independent gradient oracle: elementwise central differences."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        hi = f(x)
        x[idx] = orig - h
        lo = f(x)
        x[idx] = orig
        grad[idx] = (hi - lo) / (2 * h)
        it.iternext()
    return grad


def assert_close_grads(analytic, numeric, tol=1e-4):
    denom = np.maximum(np.abs(numeric), 1.0)
    assert np.max(np.abs(analytic - numeric) / denom) < tol


class TestMatmul:
    def test_identity(self):
        m = np.arange(9.0).reshape(3, 3)
        assert np.array_equal(numcore.matmul(np.eye(3), m), m)

    def test_hand_product(self):
        out = numcore.matmul([[1, 2], [3, 4]], [[5], [6]])
        assert np.array_equal(out, [[17], [39]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            numcore.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


class TestSoftmax:
    def test_zeros_row_uniform(self):
        out = numcore.softmax_rows(np.zeros((1, 4)))
        assert np.allclose(out, 0.25)

    def test_large_logits_stable(self):
        out = numcore.softmax_rows(np.array([[1000.0, 0.0]]))
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx([1.0, 0.0], abs=1e-12)

    def test_hand_values(self):
        out = numcore.softmax_rows(np.array([[1.0, 2.0, 3.0]]))
        assert out[0] == pytest.approx([0.09003, 0.24473, 0.66524], abs=1e-5)

    def test_temperature_flattens(self):
        sharp = numcore.softmax_rows(np.array([[1.0, 2.0]]), temperature=0.5)
        flat = numcore.softmax_rows(np.array([[1.0, 2.0]]), temperature=4.0)
        assert sharp[0, 1] > flat[0, 1] > 0.5

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ValueError):
            numcore.softmax_rows(np.zeros((1, 3)), temperature=0.0)

    @given(
        st.lists(
            # spreads beyond ~36 round the small probabilities to exactly 0/1
            # in float64, so strict openness is only representable below that
            st.lists(st.floats(-17, 17), min_size=2, max_size=6),
            min_size=1,
            max_size=4,
        ).filter(lambda rows: len({len(r) for r in rows}) == 1)
    )
    def test_rows_are_distributions(self, rows):
        out = numcore.softmax_rows(np.array(rows, dtype=float))
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(out > 0.0) and np.all(out < 1.0)


class TestRelu:
    def test_forward(self):
        assert np.array_equal(numcore.relu(np.array([[-1.0, 2.0]])), [[0.0, 2.0]])

    def test_subgradients(self):
        grad = numcore.relu_backward(
            np.ones((1, 3)), np.array([[-1.0, 0.0, 2.0]])
        )
        assert np.array_equal(grad, [[0.0, 0.0, 1.0]])


class TestBackwardPasses:
    def test_matmul_gradients_match_finite_differences(self, rng):
        a = rng.uniform(-2, 2, (3, 4))
        b = rng.uniform(-2, 2, (4, 2))
        grad_out = rng.uniform(-2, 2, (3, 2))
        da, db = numcore.matmul_backward(grad_out, a, b)
        assert_close_grads(
            da, central_difference(lambda x: float(np.sum(grad_out * (x @ b))), a)
        )
        assert_close_grads(
            db, central_difference(lambda x: float(np.sum(grad_out * (a @ x))), b)
        )

    def test_relu_gradient_matches_finite_differences(self, rng):
        x = rng.uniform(-2, 2, (3, 5))
        x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
        grad_out = rng.uniform(-2, 2, (3, 5))
        analytic = numcore.relu_backward(grad_out, x)
        numeric = central_difference(
            lambda z: float(np.sum(grad_out * numcore.relu(z))), x
        )
        assert_close_grads(analytic, numeric)

    @pytest.mark.parametrize("temperature", [1.0, 0.7, 2.5])
    def test_cross_entropy_gradient_matches_finite_differences(
        self, rng, temperature
    ):
        logits = rng.uniform(-2, 2, (4, 9))
        targets = rng.uniform(0.01, 1.0, (4, 9))
        targets /= targets.sum(axis=1, keepdims=True)
        _, grad, _ = numcore.softmax_cross_entropy(logits, targets, temperature)
        numeric = central_difference(
            lambda z: numcore.softmax_cross_entropy(z, targets, temperature)[0],
            logits,
        )
        assert_close_grads(grad, numeric)

    def test_cross_entropy_row_weights(self, rng):
        logits = rng.uniform(-2, 2, (3, 9))
        targets = rng.uniform(0.01, 1.0, (3, 9))
        targets /= targets.sum(axis=1, keepdims=True)
        weights = np.array([1.0, 0.0, 2.0])
        value, grad, _ = numcore.softmax_cross_entropy(
            logits, targets, row_weights=weights
        )
        # weight 0 silences a row; other rows scale linearly
        assert np.array_equal(grad[1], np.zeros(9))
        per_row = [
            numcore.softmax_cross_entropy(logits[i : i + 1], targets[i : i + 1])[0]
            for i in range(3)
        ]
        assert value == pytest.approx(per_row[0] + 2.0 * per_row[2])
        numeric = central_difference(
            lambda z: numcore.softmax_cross_entropy(
                z, targets, row_weights=weights
            )[0],
            logits,
        )
        assert_close_grads(grad, numeric)


class TestClipping:
    def test_below_threshold_untouched(self):
        arrays = [np.array([[3.0]]), np.array([[4.0]])]
        clipped, norm = numcore.clip_by_global_norm(arrays, 10.0)
        assert norm == pytest.approx(5.0)
        assert all(np.array_equal(a, b) for a, b in zip(arrays, clipped))

    def test_scaled_to_threshold(self):
        arrays = [np.full((2, 2), 25.0)]
        clipped, norm = numcore.clip_by_global_norm(arrays, 5.0)
        assert norm == pytest.approx(50.0)
        total = np.sqrt(sum(np.sum(a * a) for a in clipped))
        assert total == pytest.approx(5.0)
