"""scikit-learn style wrappers.

``ContextualSimilarity`` is fitted on a target feature set and then scores
source sets against it. ``PatchExtractor`` turns images into patch features.
``ContextualReconstructor`` is fitted on target images and transforms a source
image by direct pixel descent.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import cx as cxm
from . import grad as gradm
from ._validation import (
    check_cx_params,
    check_feature_set,
    check_image,
    check_patch_spec,
    check_same_dim,
)
from .features import extract_patches, subsample_to_match
from .optimize import OptimizeConfig, reconstruct

__all__ = ["PatchExtractor", "ContextualSimilarity", "ContextualReconstructor"]


class PatchExtractor(TransformerMixin, BaseEstimator):
    """Vectorized p x p patches on a stride grid.

    Parameters
    ----------
    patch_size : int, default=5
    stride : int, default=2
    """

    def __init__(self, patch_size=5, stride=2):
        self.patch_size = patch_size
        self.stride = stride

    def fit(self, X=None, y=None):
        self.spec_ = check_patch_spec(self.patch_size, self.stride)
        return self

    def transform(self, X):
        """Return the (N, p*p*C) patch matrix of image ``X``; the patch
        corners are kept in ``origins_``."""
        check_is_fitted(self, "spec_")
        fs = extract_patches(check_image(X), self.spec_)
        self.origins_ = fs.origins
        return np.array(fs.features)

    def transform_set(self, X):
        check_is_fitted(self, "spec_")
        return extract_patches(check_image(X), self.spec_)


class ContextualSimilarity(BaseEstimator):
    """Contextual similarity against a fixed target feature set.

    Parameters
    ----------
    h : float, default=0.5
        Bandwidth of the exponential; smaller values approach hard
        nearest-neighbor matching.
    epsilon : float, default=1e-5
    distance : {"cosine_target_centered", "squared_euclidean", "absolute"}
        Short names "cosine", "l2" and "l1" are accepted.
    match_cardinality : bool, default=False
        Subsample the larger of source and target to the smaller size before
        every comparison.
    random_state : int or None
        Seed for the subsampling.
    """

    def __init__(self, h=0.5, epsilon=1e-5, distance="cosine_target_centered",
                 match_cardinality=False, random_state=None):
        self.h = h
        self.epsilon = epsilon
        self.distance = distance
        self.match_cardinality = match_cardinality
        self.random_state = random_state

    def fit(self, Y, y=None):
        self.params_ = check_cx_params(self.h, self.epsilon, self.distance)
        self.target_ = check_feature_set(Y, "Y")
        self.n_features_in_ = self.target_.dim
        return self

    def _pair(self, X):
        check_is_fitted(self, "target_")
        xs = check_feature_set(X, "X")
        check_same_dim(xs, self.target_, ("X", "Y"))
        if self.match_cardinality:
            return subsample_to_match(xs, self.target_, self.random_state)
        return xs, self.target_

    def similarity(self, X):
        """CX(X, Y) in (0, 1]."""
        xs, ys = self._pair(X)
        return cxm.contextual_similarity(xs, ys, self.params_)[0]

    def score(self, X, y=None):
        return self.similarity(X)

    def loss(self, X):
        xs, ys = self._pair(X)
        return cxm.contextual_loss(xs, ys, self.params_)

    def transform(self, X):
        """The N x M contextual matrix (rows sum to one)."""
        xs, ys = self._pair(X)
        return cxm.contextual_similarity(xs, ys, self.params_)[1].cx

    def stages(self, X):
        xs, ys = self._pair(X)
        return cxm.contextual_similarity(xs, ys, self.params_)[1]

    def gradient(self, X):
        """d loss / d X. Not available with ``match_cardinality``, which
        would drop rows of X."""
        if self.match_cardinality:
            raise ValueError("gradient is undefined when match_cardinality=True")
        xs, ys = self._pair(X)
        return gradm.loss_grad_features(xs, ys, self.params_)

    def binarized(self, X):
        xs, ys = self._pair(X)
        return cxm.binarized_similarity(xs, ys, self.params_.distance)


class ContextualReconstructor(TransformerMixin, BaseEstimator):
    """Reconstruct an image from misaligned clean targets by pixel descent.

    ``fit`` stores the targets; ``transform`` starts from the given source.
    The per-step losses of the last ``transform`` call are in ``trace_``.
    """

    def __init__(self, loss="cx", h=0.5, epsilon=1e-5, distance="cosine_target_centered",
                 patch_size=5, stride=2, n_iter=400, step_size=None,
                 target_schedule="cycle", random_state=0, log_every=1):
        self.loss = loss
        self.h = h
        self.epsilon = epsilon
        self.distance = distance
        self.patch_size = patch_size
        self.stride = stride
        self.n_iter = n_iter
        self.step_size = step_size
        self.target_schedule = target_schedule
        self.random_state = random_state
        self.log_every = log_every

    def _config(self) -> OptimizeConfig:
        return OptimizeConfig(
            loss_kind=self.loss,
            cx_params=check_cx_params(self.h, self.epsilon, self.distance),
            patch=check_patch_spec(self.patch_size, self.stride),
            iters=int(self.n_iter),
            step_size=self.step_size,
            target_schedule=self.target_schedule,
            seed=self.random_state,
            log_every=int(self.log_every),
        )

    def fit(self, targets, y=None):
        if not isinstance(targets, (list, tuple)):
            targets = [targets]
        self.config_ = self._config()
        self.targets_ = [check_image(t, f"targets[{k}]") for k, t in enumerate(targets)]
        if not self.targets_:
            raise ValueError("need at least one target image")
        return self

    def transform(self, X):
        check_is_fitted(self, "targets_")
        result, self.trace_ = reconstruct(check_image(X, "source"), self.targets_, self.config_)
        return result
