"""Dense float64 helpers shared by the model, the attacks and the tests."""

import numpy as np


class NumericsError(ArithmeticError):
    pass


def _as_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericsError("matrix product overflowed")
    return out


def relu(m) -> np.ndarray:
    return np.maximum(np.asarray(m, dtype=np.float64), 0.0)


def row_softmax(m) -> np.ndarray:
    m = _as_matrix(m)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_row_softmax(m) -> np.ndarray:
    m = _as_matrix(m)
    shifted = m - m.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def sign(x) -> float:
    """Signum with ``sign(0) == 0``."""
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def finite_diff_grad(f, m, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the scalar function ``f`` at matrix ``m``.

    Every entry is perturbed on its own, so for a function of an adjacency
    matrix the result treats ``A_ij`` and ``A_ji`` as independent inputs.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = np.array(m, dtype=np.float64)
    grad = np.zeros_like(m)
    for idx in np.ndindex(m.shape):
        orig = m[idx]
        m[idx] = orig + eps
        hi = float(f(m))
        m[idx] = orig - eps
        lo = float(f(m))
        m[idx] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericsError(f"non-finite function value at entry {idx}")
        grad[idx] = (hi - lo) / (2.0 * eps)
    return grad
