"""Dense kernels, activations, and the classification loss.

Matrices are row-major float64 ndarrays of shape (rows, cols); vectors are
1-D float64 ndarrays. Everything here is pure and allocation-light; the
recurrent cells and the trainer are built on top of these primitives.
"""

import numpy as np

from .errors import ShapeError

LOSS_FLOOR = 1e-15


def matvec(m, v):
    """Matrix-vector product with an explicit shape check."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec shapes incompatible: {m.shape} x {v.shape}")
    return m @ v


def sigmoid(v):
    """Element-wise logistic function, stable for large |x|."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def tanh_act(v):
    """Element-wise hyperbolic tangent."""
    return np.tanh(np.asarray(v, dtype=np.float64))


def softmax(v):
    """Probability vector via max-subtracted exponentiation."""
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - np.max(v))
    return e / np.sum(e)


def cross_entropy(p, label):
    """Negative log probability of the true class, floored at LOSS_FLOOR."""
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= label < p.shape[0]:
        raise IndexError(f"label {label} out of range for {p.shape[0]} classes")
    return -np.log(max(p[label], LOSS_FLOOR))


def softmax_xent_with_grad(logits, label):
    """Fused softmax + cross-entropy.

    Returns (loss, probs, dlogits) where dlogits = probs - onehot(label) is
    the exact gradient of the loss with respect to the logits.
    """
    p = softmax(logits)
    loss = cross_entropy(p, label)
    d = p.copy()
    d[label] -= 1.0
    return loss, p, d
