"""Contextual similarity between two feature sets.

For source features x_i and target features y_j::

    d_ij   pairwise distance
    dn_ij  = d_ij / (min_k d_ik + epsilon)
    w_ij   = exp((1 - dn_ij) / h)
    cx_ij  = w_ij / sum_k w_ik
    CX     = mean_j max_i cx_ij
    loss   = -log CX

The measure is asymmetric: it asks, for every target feature, whether some
source feature picks it out as its distinct nearest match.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .tensor_core import FeatureSet

__all__ = [
    "DISTANCE_KINDS",
    "CxParams",
    "StageMatrices",
    "pairwise_distances",
    "normalize_distances",
    "similarities",
    "row_normalize",
    "stages_from_distances",
    "similarity_from_stages",
    "contextual_similarity",
    "contextual_loss",
    "binarized_similarity",
    "nearest_neighbors",
]

DISTANCE_KINDS = ("cosine_target_centered", "squared_euclidean", "absolute")
_ALIASES = {
    "cosine": "cosine_target_centered",
    "l2": "squared_euclidean",
    "sqeuclidean": "squared_euclidean",
    "l1": "absolute",
}

NORM_GUARD = 1e-12
WEIGHT_FLOOR = 1e-300
# exp() overflows just above 709.78
_LOGIT_CAP = 709.0
# above this many N*M*D multiply-adds, squared distances use the Gram expansion
_DIRECT_LIMIT = 4_000_000


def canonical_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in DISTANCE_KINDS:
        raise ValueError(f"unknown distance kind {kind!r}; expected one of {DISTANCE_KINDS}")
    return kind


@dataclass(frozen=True)
class CxParams:
    h: float = 0.5
    epsilon: float = 1e-5
    distance: str = "cosine_target_centered"

    def __post_init__(self):
        if not (self.h > 0) or not np.isfinite(self.h):
            raise ValueError(f"h must be > 0, got {self.h}")
        if not (self.epsilon >= 0) or not np.isfinite(self.epsilon):
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        object.__setattr__(self, "distance", canonical_kind(self.distance))


class StageMatrices(NamedTuple):
    dist: np.ndarray
    dist_norm: np.ndarray
    sim: np.ndarray
    cx: np.ndarray


def _features(fs) -> np.ndarray:
    if isinstance(fs, FeatureSet):
        return fs.features
    arr = np.asarray(fs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"expected an N x D feature matrix, got shape {arr.shape}")
    return arr


def _check_pair(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"feature dimension mismatch: x has D={x.shape[1]}, y has D={y.shape[1]}")
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("feature sets must be nonempty")


def _sq_euclidean(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    n, m, dim = x.shape[0], y.shape[0], x.shape[1]
    if n * m * dim <= _DIRECT_LIMIT:
        diff = x[:, None, :] - y[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    d = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * (x @ y.T)
    return np.maximum(d, 0.0)


def _absolute(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.empty((x.shape[0], y.shape[0]))
    for i in range(x.shape[0]):
        out[i] = np.abs(y - x[i]).sum(1)
    return out


def cosine_parts(x: np.ndarray, y: np.ndarray):
    """Target-centered cosine distance plus the intermediates its gradient needs.

    Returns (raw distance before clamping, centered x, x norms, unit-normalized
    centered y, centering mean).
    """
    mu = y.mean(axis=0)
    xc = x - mu
    yc = y - mu
    xn = np.maximum(np.linalg.norm(xc, axis=1), NORM_GUARD)
    yn = np.maximum(np.linalg.norm(yc, axis=1), NORM_GUARD)
    yhat = yc / yn[:, None]
    raw = 1.0 - (xc / xn[:, None]) @ yhat.T
    return raw, xc, xn, yhat, mu


def pairwise_distances(x, y, kind: str = "cosine_target_centered") -> np.ndarray:
    """N x M distance matrix between the rows of ``x`` and ``y``.

    ``cosine_target_centered`` centers both sides on the mean of ``y`` and is
    clamped to [0, 2]; vectors with (near-)zero norm after centering are guarded
    by a 1e-12 floor on the norm.
    """
    xf, yf = _features(x), _features(y)
    _check_pair(xf, yf)
    kind = canonical_kind(kind)
    if kind == "squared_euclidean":
        return _sq_euclidean(xf, yf)
    if kind == "absolute":
        return _absolute(xf, yf)
    raw = cosine_parts(xf, yf)[0]
    return np.clip(raw, 0.0, 2.0)


def _row_min(dist: np.ndarray):
    arg = np.argmin(dist, axis=1)
    return dist[np.arange(dist.shape[0]), arg], arg


def normalize_distances(dist: np.ndarray, epsilon: float = 1e-5) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if np.any(dist < 0):
        raise ValueError("distances must be nonnegative")
    mins, _ = _row_min(dist)
    denom = mins + epsilon
    if np.any(denom == 0):
        raise ValueError("degenerate row: all-zero distances with epsilon=0")
    return dist / denom[:, None]


def _logits(dist_norm: np.ndarray, h: float) -> np.ndarray:
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    return (1.0 - dist_norm) / h


def similarities(dist_norm: np.ndarray, h: float = 0.5) -> np.ndarray:
    """exp((1 - dn) / h), floored at 1e-300.

    The exponent is capped at 709 so the stored matrix stays finite when
    h is tiny and a row minimum is zero; :func:`row_normalize` is unaffected
    because :func:`stages_from_distances` normalizes from the logits.
    """
    a = _logits(np.asarray(dist_norm, dtype=np.float64), h)
    return np.maximum(np.exp(np.minimum(a, _LOGIT_CAP)), WEIGHT_FLOOR)


def row_normalize(sim: np.ndarray) -> np.ndarray:
    sim = np.asarray(sim, dtype=np.float64)
    totals = sim.sum(axis=1, keepdims=True)
    assert np.all(totals > 0), "zero row in similarity matrix"
    return sim / totals


def _softmax_rows(a: np.ndarray):
    """Row-normalize exp(a) without overflow.

    Returns the normalized matrix and the mask of entries whose weight hit the
    underflow floor (those carry no gradient).
    """
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    floored = e < WEIGHT_FLOOR
    e[floored] = WEIGHT_FLOOR
    return e / e.sum(axis=1, keepdims=True), floored


def stages_from_distances(dist: np.ndarray, params: CxParams) -> StageMatrices:
    dist = np.asarray(dist, dtype=np.float64)
    dn = normalize_distances(dist, params.epsilon)
    a = _logits(dn, params.h)
    sim = np.maximum(np.exp(np.minimum(a, _LOGIT_CAP)), WEIGHT_FLOOR)
    cx, _ = _softmax_rows(a)
    return StageMatrices(dist, dn, sim, cx)


def similarity_from_stages(stages: StageMatrices) -> float:
    return float(stages.cx.max(axis=0).mean())


def contextual_similarity(x, y, params: CxParams = CxParams()) -> Tuple[float, StageMatrices]:
    """CX(x, y) and the intermediate matrices.

    Cardinalities may differ; the average runs over the M target features.
    """
    dist = pairwise_distances(x, y, params.distance)
    stages = stages_from_distances(dist, params)
    return similarity_from_stages(stages), stages


def contextual_loss(x, y, params: CxParams = CxParams()) -> float:
    value, _ = contextual_similarity(x, y, params)
    return float(-np.log(value))


def nearest_neighbors(x, y, kind: str = "cosine_target_centered") -> np.ndarray:
    """Index of the nearest target for every source feature (lowest index on ties)."""
    return np.argmin(pairwise_distances(x, y, kind), axis=1)


def binarized_similarity(x, y, kind: str = "cosine_target_centered") -> float:
    """Fraction of target features that are the nearest neighbor of at least
    one source feature (the h -> 0 limit of CX)."""
    nn = nearest_neighbors(x, y, kind)
    m = _features(y).shape[0]
    return np.unique(nn).size / m
