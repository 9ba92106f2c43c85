"""Input coercion shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np

from .cx import CxParams
from .features import PatchSpec
from .tensor_core import FeatureSet, ImageGrid


def check_feature_set(X, name: str = "X") -> FeatureSet:
    """Accept a FeatureSet or an (N, D) array-like; reject empty or non-finite input."""
    if isinstance(X, FeatureSet):
        fs = X
    else:
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"{name} must be 2-D (n_features, dim), got shape {arr.shape}")
        fs = FeatureSet(arr)
    if fs.n == 0 or fs.dim == 0:
        raise ValueError(f"{name} is empty (shape {fs.features.shape})")
    if not np.all(np.isfinite(fs.features)):
        raise ValueError(f"{name} contains NaN or infinity")
    return fs


def check_image(image, name: str = "image") -> ImageGrid:
    if isinstance(image, ImageGrid):
        return image
    try:
        return ImageGrid(np.asarray(image, dtype=np.float64))
    except ValueError as exc:
        raise ValueError(f"{name}: {exc}") from None


def check_same_dim(x: FeatureSet, y: FeatureSet, names=("x", "y")) -> None:
    if x.dim != y.dim:
        raise ValueError(
            f"feature dimension mismatch: {names[0]} has D={x.dim}, {names[1]} has D={y.dim}"
        )


def check_cx_params(h, epsilon, distance) -> CxParams:
    return CxParams(h=float(h), epsilon=float(epsilon), distance=distance)


def check_patch_spec(patch_size, stride) -> PatchSpec:
    return PatchSpec(int(patch_size), int(stride))
