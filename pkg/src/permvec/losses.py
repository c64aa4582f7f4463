"""Reconstruction, triplet and numeric-accuracy measures with their gradients.

Batch functions take ``(n, k)`` arrays and reduce with a mean over the batch;
the returned gradients are those of the reduced (mean) value.
"""

from dataclasses import dataclass

import numpy as np

from permvec.errors import InvalidArgumentError, UndefinedRatioError


@dataclass(frozen=True)
class LossValue:
    mse: float
    triplet: float
    total: float
    numeric_accuracy: float


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse_loss(y_pred, y_true):
    """Mean squared error over all elements and its gradient w.r.t. ``y_pred``.

    For a batch this equals the mean over samples of the per-sample MSE.
    """
    y_pred, y_true = _pair(y_pred, y_true)
    diff = y_pred - y_true
    n = diff.size
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def triplet_terms(f_a, f_p, f_n, alpha):
    """Per-triplet hinge values ``max(|a-p|^2 - |a-n|^2 + alpha, 0)``."""
    f_a, f_p = _pair(f_a, f_p)
    _, f_n = _pair(f_a, f_n)
    if not alpha > 0:
        raise InvalidArgumentError("triplet margin must be positive")
    d_ap = np.sum((f_a - f_p) ** 2, axis=-1)
    d_an = np.sum((f_a - f_n) ** 2, axis=-1)
    return d_ap - d_an + alpha


def triplet_loss(f_a, f_p, f_n, alpha):
    """Triplet hinge loss, averaged over the batch, with gradients.

    Returns ``(value, (g_a, g_p, g_n))``. Triplets whose hinge argument is
    exactly zero or negative contribute no gradient.
    """
    f_a = np.asarray(f_a, dtype=np.float64)
    f_p = np.asarray(f_p, dtype=np.float64)
    f_n = np.asarray(f_n, dtype=np.float64)
    arg = triplet_terms(f_a, f_p, f_n, alpha)
    active = arg > 0
    n = arg.size
    value = float(np.sum(np.where(active, arg, 0.0)) / n)
    w = (active.astype(np.float64) * (2.0 / n))[..., None] if f_a.ndim > 1 else 2.0 * float(active)
    g_a = w * (f_n - f_p)
    g_p = -w * (f_a - f_p)
    g_n = w * (f_a - f_n)
    return value, (g_a, g_p, g_n)


def numeric_accuracy(y_pred, y_true):
    """``max(1 - sum((pred - true)^2) / sum(true^2), 0)`` for one vector."""
    y_pred, y_true = _pair(y_pred, y_true)
    denom = float(np.sum(y_true * y_true))
    if denom == 0.0:
        raise UndefinedRatioError("numeric accuracy is undefined for an all-zero target")
    return max(1.0 - float(np.sum((y_pred - y_true) ** 2)) / denom, 0.0)


def batch_numeric_accuracy(y_pred, y_true):
    """Mean per-sample numeric accuracy; all-zero targets are skipped.

    Returns NaN when every target in the batch is all-zero.
    """
    y_pred, y_true = _pair(y_pred, y_true)
    denom = np.sum(y_true * y_true, axis=-1)
    ok = denom > 0
    if not ok.any():
        return float("nan")
    err = np.sum((y_pred - y_true) ** 2, axis=-1)
    acc = np.maximum(1.0 - err[ok] / denom[ok], 0.0)
    return float(np.mean(acc))
