"""Analytic gradient of the contextual loss with respect to the source features,
and a central-difference harness to check it.

Only the source side carries gradient. The target set, including the mean used
for cosine centering, is treated as constant. At the max over sources and the
min over targets the lowest index takes the whole subgradient, matching the
tie-breaking used in :mod:`cxloss.cx`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import cx as cxm
from .cx import CxParams, StageMatrices
from .features import PatchSpec, extract_patches, scatter_patches
from .tensor_core import FeatureSet

__all__ = [
    "GradReport",
    "loss_grad_features",
    "loss_and_grad",
    "scatter_patch_gradient",
    "image_loss_and_grad",
    "finite_diff_grad",
    "selection_signature",
    "tie_margin",
    "grad_check",
]

TIE_THRESHOLD = 1e-6


def _grad_wrt_distances(stages: StageMatrices, params: CxParams) -> np.ndarray:
    """dL/dd_ij for L = -log(mean_j max_i cx_ij)."""
    dist, dn, _, cx = stages
    n, m = cx.shape
    rows = np.arange(n)
    cols = np.arange(m)

    # L = -log(V), V = (1/M) sum_j cx[i*(j), j]
    best = np.argmax(cx, axis=0)
    value = cx[best, cols].mean()
    g_cx = np.zeros_like(cx)
    g_cx[best, cols] = -1.0 / (m * value)

    # softmax over each row of the logits; floored weights are constants and
    # every floored entry has cx <= floor because row sums are >= 1
    g_a = cx * (g_cx - (g_cx * cx).sum(axis=1, keepdims=True))
    g_a[cx < cxm.WEIGHT_FLOOR] = 0.0

    g_dn = -g_a / params.h

    # dn_ij = d_ij / (min_k d_ik + eps)
    k_min = np.argmin(dist, axis=1)
    denom = dist[rows, k_min] + params.epsilon
    g_d = g_dn / denom[:, None]
    g_d[rows, k_min] -= (g_dn * dist).sum(axis=1) / denom**2
    return g_d


def _grad_wrt_x(g_d: np.ndarray, x: np.ndarray, y: np.ndarray, kind: str, parts=None) -> np.ndarray:
    if kind == "squared_euclidean":
        # d_ij = |x_i - y_j|^2
        return 2.0 * (g_d.sum(axis=1)[:, None] * x - g_d @ y)
    if kind == "absolute":
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            out[i] = g_d[i] @ np.sign(x[i] - y)
        return out
    raw, xc, xn, yhat, _ = cxm.cosine_parts(x, y) if parts is None else parts
    # clamped entries are flat
    g = np.where((raw >= 0.0) & (raw <= 2.0), g_d, 0.0)
    # d = 1 - c,  c_ij = (xc_i / |xc_i|) . yhat_j
    cos = 1.0 - raw
    live = np.linalg.norm(xc, axis=1) > cxm.NORM_GUARD
    out = -(g @ yhat) / xn[:, None]
    out += ((g * cos).sum(axis=1) / xn**2)[:, None] * xc * live[:, None]
    return out


def loss_and_grad(x, y, params: CxParams = CxParams(), stages: Optional[StageMatrices] = None):
    """Contextual loss and its gradient with respect to ``x`` (N x D)."""
    xf, yf = cxm._features(x), cxm._features(y)
    if xf.shape[1] != yf.shape[1]:
        raise ValueError(f"feature dimension mismatch: x has D={xf.shape[1]}, y has D={yf.shape[1]}")
    parts = None
    if stages is None:
        if params.distance == "cosine_target_centered":
            parts = cxm.cosine_parts(xf, yf)
            dist = np.clip(parts[0], 0.0, 2.0)
        else:
            dist = cxm.pairwise_distances(xf, yf, params.distance)
        stages = cxm.stages_from_distances(dist, params)
    loss = -np.log(cxm.similarity_from_stages(stages))
    g_d = _grad_wrt_distances(stages, params)
    return float(loss), _grad_wrt_x(g_d, xf, yf, params.distance, parts)


def loss_grad_features(x, y, params: CxParams = CxParams(), stages: Optional[StageMatrices] = None) -> np.ndarray:
    return loss_and_grad(x, y, params, stages)[1]


def scatter_patch_gradient(feat_grad: np.ndarray, origins, spec: PatchSpec, image_shape) -> np.ndarray:
    """Pixel-space gradient from a per-patch feature gradient."""
    if origins is None:
        raise ValueError("feature set has no origins; cannot scatter to pixels")
    return scatter_patches(feat_grad, origins, spec, image_shape)


def image_loss_and_grad(image, target_features, params: CxParams, spec: PatchSpec):
    """Contextual loss of an image's patches against fixed target features,
    with the gradient taken all the way back to pixels."""
    arr = image.data if hasattr(image, "data") else np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    fs = extract_patches(arr, spec)
    loss, g = loss_and_grad(fs, target_features, params)
    return loss, scatter_patches(g, fs.origins, spec, arr.shape)


def finite_diff_grad(loss_fn: Callable[[np.ndarray], float], point, step: float = 1e-5) -> np.ndarray:
    """Central differences (f(p + step e_k) - f(p - step e_k)) / (2 step)."""
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    p0 = np.array(point, dtype=np.float64)
    flat = p0.reshape(-1)
    out = np.empty(flat.size)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        f_plus = loss_fn(p0)
        flat[k] = orig - step
        f_minus = loss_fn(p0)
        flat[k] = orig
        out[k] = (f_plus - f_minus) / (2.0 * step)
    return out.reshape(p0.shape)


def selection_signature(stages: StageMatrices) -> bytes:
    """Identity of the argmax/argmin choices the gradient depends on."""
    best = np.argmax(stages.cx, axis=0)
    k_min = np.argmin(stages.dist, axis=1)
    return best.tobytes() + k_min.tobytes()


def _gap(a: np.ndarray, axis: int) -> float:
    if a.shape[axis] < 2:
        return np.inf
    part = -np.partition(-a, 1, axis=axis) if axis == 0 else np.partition(a, 1, axis=axis)
    first = np.take(part, 0, axis=axis)
    second = np.take(part, 1, axis=axis)
    return float(np.min(np.abs(first - second)))


def tie_margin(stages: StageMatrices) -> float:
    """Smallest gap between the winner and runner-up over every column max of
    cx and every row min of the distances."""
    return min(_gap(stages.cx, 0), _gap(stages.dist, 1))


@dataclass(frozen=True)
class GradReport:
    max_abs_err: float
    max_rel_err: float
    checked_coords: int
    tie_margin: float
    trials: int = 0
    skipped: int = 0


def grad_check(
    x,
    y,
    params: CxParams = CxParams(),
    step: float = 1e-5,
    trials: int = 20,
    seed=0,
    perturb_scale: float = 0.1,
    max_attempts: Optional[int] = None,
) -> GradReport:
    """Compare :func:`loss_grad_features` with :func:`finite_diff_grad`.

    Each trial jitters ``x`` with seeded Gaussian noise of relative size
    ``perturb_scale``. A trial counts as a near tie, and is redrawn, when the
    selection margin is below 1e-6 or when any finite-difference probe flips an
    argmax/argmin choice. If no trial survives, the flipped trials are
    reported instead. Relative error is ``max|analytic - fd| / max|fd|`` per
    trial; the report keeps the worst over all trials.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    xf, yf = cxm._features(x), cxm._features(y)
    rng = np.random.default_rng(seed)
    scale = perturb_scale * max(float(np.std(xf)), 1e-3)
    max_attempts = 20 * trials if max_attempts is None else max_attempts

    clean = []  # (abs err, rel err, coords) per accepted trial
    flipped_trials = []
    smallest_margin = np.inf
    skipped = 0
    for _ in range(max_attempts):
        if len(clean) == trials:
            break
        xt = xf + rng.normal(0.0, scale, size=xf.shape)
        _, stages = cxm.contextual_similarity(xt, yf, params)
        margin = tie_margin(stages)
        smallest_margin = min(smallest_margin, margin)
        if margin < TIE_THRESHOLD:
            skipped += 1
            continue
        base_sig = selection_signature(stages)
        flipped = False

        def f(p):
            nonlocal flipped
            value, st = cxm.contextual_similarity(p, yf, params)
            if selection_signature(st) != base_sig:
                flipped = True
            return -np.log(value)

        fd = finite_diff_grad(f, xt, step)
        analytic = loss_grad_features(xt, yf, params, stages)
        err = np.abs(analytic - fd)
        row = (float(err.max()), float(err.max() / max(np.abs(fd).max(), 1e-300)), fd.size)
        if flipped:
            skipped += 1
            flipped_trials.append(row)
        else:
            clean.append(row)
    # with a large step every probe may cross a kink; report those trials
    # rather than nothing
    rows = clean or flipped_trials[:trials]
    if not rows:
        raise RuntimeError(f"no generic instance found in {max_attempts} attempts")
    worst_abs = max(r[0] for r in rows)
    worst_rel = max(r[1] for r in rows)
    checked = sum(r[2] for r in rows)
    done = len(rows)
    return GradReport(worst_abs, worst_rel, checked, smallest_margin, done, skipped)
