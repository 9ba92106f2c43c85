"""Reference losses: pixelwise L1/L2, index-aligned feature L1, and Gram."""
from __future__ import annotations

import numpy as np

from .tensor_core import FeatureSet, ImageGrid

__all__ = ["l1_loss", "l2_loss", "feature_l1_loss", "gram_matrix", "gram_loss"]


def _flat(a) -> np.ndarray:
    if isinstance(a, ImageGrid):
        a = a.data
    elif isinstance(a, FeatureSet):
        a = a.features
    return np.asarray(a, dtype=np.float64).reshape(-1)


def _pair(a, b):
    a, b = _flat(a), _flat(b)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def l1_loss(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.abs(a - b).sum())


def l2_loss(a, b) -> float:
    """Euclidean norm of the difference (not squared)."""
    a, b = _pair(a, b)
    return float(np.sqrt(((a - b) ** 2).sum()))


def _matrix(fs) -> np.ndarray:
    if isinstance(fs, FeatureSet):
        return fs.features
    arr = np.asarray(fs, dtype=np.float64)
    return arr[:, None] if arr.ndim == 1 else arr


def feature_l1_loss(x, y) -> float:
    """Elementwise L1 between two index-aligned N x D feature matrices."""
    xm, ym = _matrix(x), _matrix(y)
    if xm.shape != ym.shape:
        raise ValueError(f"shape mismatch: {xm.shape} vs {ym.shape}")
    return float(np.abs(xm - ym).sum())


def gram_matrix(x) -> np.ndarray:
    """F^T F / (N * D) for an N x D feature matrix F."""
    f = _matrix(x)
    n, d = f.shape
    return (f.T @ f) / (n * d)


def gram_loss(x, y) -> float:
    """Squared Frobenius distance between the two Gram matrices."""
    xm, ym = _matrix(x), _matrix(y)
    if xm.shape[1] != ym.shape[1]:
        raise ValueError(f"feature dimension mismatch: {xm.shape[1]} vs {ym.shape[1]}")
    diff = gram_matrix(xm) - gram_matrix(ym)
    return float((diff * diff).sum())
