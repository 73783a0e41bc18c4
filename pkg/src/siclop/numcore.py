"""Dense float64 numeric kernels with explicit backward passes.

Matrices are plain 2-D numpy float64 arrays; all functions are pure and
treat their inputs as immutable.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


def as_matrix(a):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b):
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def matmul_backward(grad_out, a, b):
    """Gradients of sum(grad_out * (a @ b)) w.r.t. a and b."""
    return grad_out @ b.T, a.T @ grad_out


def relu(m):
    return np.maximum(m, 0.0)


def relu_backward(grad_out, pre_activation):
    # Subgradient 0 at exactly 0.
    return np.where(pre_activation > 0.0, grad_out, 0.0)


def softmax_rows(m, temperature=1.0):
    """Row-wise Boltzmann distribution; max-subtraction keeps it stable."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    z = np.asarray(m, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, targets, temperature=1.0, row_weights=None):
    """Loss sum_rows( w_row * -target . ln softmax(logits/T) ) and
    d(loss)/d(logits).

    Targets are assumed to be valid row distributions. `row_weights`
    (default: all ones) scales each row's loss and gradient, so weight-0
    rows contribute nothing.
    """
    probs = softmax_rows(logits, temperature)
    row_losses = -np.sum(targets * np.log(probs), axis=1)
    grad = (probs - targets) / temperature
    if row_weights is not None:
        weights = np.asarray(row_weights, dtype=np.float64)
        row_losses = row_losses * weights
        grad = grad * weights[:, None]
    return float(np.sum(row_losses)), grad, probs


def clip_by_global_norm(arrays, max_norm):
    """Scale the whole set of arrays so their joint L2 norm is <= max_norm."""
    total = np.sqrt(sum(float(np.sum(a * a)) for a in arrays))
    if total <= max_norm or total == 0.0:
        return list(arrays), total
    scale = max_norm / total
    return [a * scale for a in arrays], total
