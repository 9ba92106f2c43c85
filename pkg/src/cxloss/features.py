"""Image-to-feature-set conversion and cardinality matching.

Random draws use numpy's PCG64 bit generator (``np.random.default_rng``),
whose stream is fixed per seed across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor_core import FeatureSet, ImageGrid

__all__ = [
    "PatchSpec",
    "patch_grid_shape",
    "extract_patches",
    "scatter_patches",
    "subsample_to_match",
    "sample_gaussian_features",
]


@dataclass(frozen=True)
class PatchSpec:
    patch_size: int = 5
    stride: int = 2

    def __post_init__(self):
        if int(self.patch_size) != self.patch_size or self.patch_size < 1:
            raise ValueError(f"patch_size must be an integer >= 1, got {self.patch_size}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError(f"stride must be an integer >= 1, got {self.stride}")


def patch_grid_shape(height: int, width: int, spec: PatchSpec) -> Tuple[int, int]:
    """Number of patch placements along each axis."""
    p = spec.patch_size
    if height < p or width < p:
        raise ValueError(f"image {height}x{width} is smaller than patch size {p}")
    return (height - p) // spec.stride + 1, (width - p) // spec.stride + 1


def _as_array(image) -> np.ndarray:
    if isinstance(image, ImageGrid):
        return image.data
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected an H x W x C image, got shape {arr.shape}")
    return arr


def extract_patches(image, spec: PatchSpec = PatchSpec()) -> FeatureSet:
    """Vectorize every p x p patch on the stride grid.

    Patches are ordered row-major by their top-left corner and flattened in
    (row, col, channel) order. Accepts an ImageGrid or a raw H x W (x C) array;
    raw arrays are not clamped, which keeps the map linear for adjoint tests.
    """
    arr = _as_array(image)
    h, w, c = arr.shape
    nh, nw = patch_grid_shape(h, w, spec)
    p, s = spec.patch_size, spec.stride
    # (H-p+1, W-p+1, C, p, p) -> subsample -> (nh, nw, p, p, C)
    win = sliding_window_view(arr, (p, p), axis=(0, 1))[::s, ::s]
    win = win[:nh, :nw].transpose(0, 1, 3, 4, 2)
    feats = win.reshape(nh * nw, p * p * c)
    rows, cols = np.meshgrid(np.arange(nh) * s, np.arange(nw) * s, indexing="ij")
    origins = np.stack([rows.ravel(), cols.ravel()], axis=1)
    return FeatureSet(feats, origins)


def scatter_patches(feat_grad: np.ndarray, origins: np.ndarray, spec: PatchSpec, image_shape) -> np.ndarray:
    """Adjoint of :func:`extract_patches`: sum each patch row back onto the
    pixels it was read from. Pixels outside every patch receive 0."""
    h, w = int(image_shape[0]), int(image_shape[1])
    c = int(image_shape[2]) if len(image_shape) > 2 else 1
    p = spec.patch_size
    g = np.asarray(feat_grad, dtype=np.float64)
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    if g.shape != (origins.shape[0], p * p * c):
        raise ValueError(
            f"feature gradient shape {g.shape} does not match {origins.shape[0]} patches of dim {p * p * c}"
        )
    if origins.size and (
        origins.min() < 0 or origins[:, 0].max() + p > h or origins[:, 1].max() + p > w
    ):
        raise ValueError(f"patch origin out of bounds for image {h}x{w} with patch size {p}")
    out = np.zeros((h, w, c))
    blocks = g.reshape(-1, p, p, c)
    nh, nw = patch_grid_shape(h, w, spec)
    s = spec.stride
    on_grid = (
        origins.shape[0] == nh * nw
        and np.array_equal(origins[:, 0], np.repeat(np.arange(nh) * s, nw))
        and np.array_equal(origins[:, 1], np.tile(np.arange(nw) * s, nh))
    )
    if on_grid:
        blocks = blocks.reshape(nh, nw, p, p, c)
        for di in range(p):
            for dj in range(p):
                out[di : di + s * (nh - 1) + 1 : s, dj : dj + s * (nw - 1) + 1 : s] += blocks[:, :, di, dj]
    else:
        for (r, q), blk in zip(origins, blocks):
            out[r : r + p, q : q + p] += blk
    return out


def subsample_to_match(x: FeatureSet, y: FeatureSet, seed=None) -> Tuple[FeatureSet, FeatureSet]:
    """Sample the larger set down to the size of the smaller one.

    Sampling is uniform without replacement; the kept features stay in their
    original order. The smaller set (or both, if equal) passes through.
    """
    if x.n == 0 or y.n == 0:
        raise ValueError("cannot match cardinality of an empty feature set")
    if x.n == y.n:
        return x, y
    rng = np.random.default_rng(seed)
    if x.n > y.n:
        idx = np.sort(rng.choice(x.n, size=y.n, replace=False))
        return x.take(idx), y
    idx = np.sort(rng.choice(y.n, size=x.n, replace=False))
    return x, y.take(idx)


def sample_gaussian_features(n: int, dim: int, mean: float = 0.0, std: float = 1.0, seed=None) -> FeatureSet:
    """n i.i.d. Normal(mean, std**2) vectors of length ``dim``."""
    if n < 1 or dim < 1:
        raise ValueError(f"n and dim must be >= 1, got n={n}, dim={dim}")
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    rng = np.random.default_rng(seed)
    if std == 0:
        return FeatureSet(np.full((n, dim), float(mean)))
    return FeatureSet(rng.normal(mean, std, size=(n, dim)))
