"""Contextual similarity (CX) and the contextual loss for comparing feature
sets that are not spatially aligned."""
from .cx import (
    CxParams,
    StageMatrices,
    binarized_similarity,
    contextual_loss,
    contextual_similarity,
    normalize_distances,
    pairwise_distances,
    row_normalize,
    similarities,
)
from .estimators import ContextualReconstructor, ContextualSimilarity, PatchExtractor
from .features import PatchSpec, extract_patches, sample_gaussian_features, subsample_to_match
from .grad import GradReport, finite_diff_grad, grad_check, loss_grad_features, scatter_patch_gradient
from .tensor_core import FeatureSet, ImageGrid, load_png, load_tensor, save_png, save_tensor

__version__ = "0.1.0"

__all__ = [
    "CxParams",
    "StageMatrices",
    "binarized_similarity",
    "contextual_loss",
    "contextual_similarity",
    "normalize_distances",
    "pairwise_distances",
    "row_normalize",
    "similarities",
    "ContextualReconstructor",
    "ContextualSimilarity",
    "PatchExtractor",
    "PatchSpec",
    "extract_patches",
    "sample_gaussian_features",
    "subsample_to_match",
    "GradReport",
    "finite_diff_grad",
    "grad_check",
    "loss_grad_features",
    "scatter_patch_gradient",
    "FeatureSet",
    "ImageGrid",
    "load_png",
    "load_tensor",
    "save_png",
    "save_tensor",
]
