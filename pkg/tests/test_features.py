import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxloss.features import (
    PatchSpec,
    extract_patches,
    sample_gaussian_features,
    scatter_patches,
    subsample_to_match,
)
from cxloss.tensor_core import FeatureSet, ImageGrid


@pytest.mark.parametrize(
    "shape, n, d",
    [((5, 5, 3), 1, 75), ((9, 9, 3), 9, 75), ((6, 6, 1), 1, 25), ((7, 11, 3), 2 * 4, 75)],
)
def test_patch_counts(shape, n, d):
    fs = extract_patches(ImageGrid(np.zeros(shape)), PatchSpec(5, 2))
    assert (fs.n, fs.dim) == (n, d)
    assert fs.origins.shape == (n, 2)


def test_image_smaller_than_patch():
    with pytest.raises(ValueError, match="smaller than patch"):
        extract_patches(ImageGrid(np.zeros((4, 9, 3))), PatchSpec(5, 2))


def test_bad_patch_spec():
    with pytest.raises(ValueError):
        PatchSpec(0, 2)
    with pytest.raises(ValueError):
        PatchSpec(5, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 6), st.integers(0, 6),
       st.sampled_from([1, 3]), st.integers(0, 2**32 - 1))
def test_origins_reproduce_features(p, s, extra_h, extra_w, c, seed):
    img = np.random.default_rng(seed).random((p + extra_h, p + extra_w, c))
    fs = extract_patches(img, PatchSpec(p, s))
    for k, (r, q) in enumerate(fs.origins):
        # (row, col, channel) order
        manual = [img[r + i, q + j, ch] for i in range(p) for j in range(p) for ch in range(c)]
        assert fs.features[k].tolist() == manual


def test_single_patch_scatter_is_reshape(rng):
    g = rng.normal(size=(1, 75))
    out = scatter_patches(g, [(0, 0)], PatchSpec(5, 2), (5, 5, 3))
    assert np.array_equal(out, g.reshape(5, 5, 3))


def test_overlapping_patches_sum():
    spec = PatchSpec(2, 1)
    g = np.ones((2, 4))
    out = scatter_patches(g, [(0, 0), (0, 1)], spec, (2, 3, 1))
    assert out[:, :, 0].tolist() == [[1, 2, 1], [1, 2, 1]]


def test_uncovered_pixels_zero(rng):
    spec = PatchSpec(5, 2)
    fs = extract_patches(rng.random((6, 6, 1)), spec)
    out = scatter_patches(np.ones((fs.n, fs.dim)), fs.origins, spec, (6, 6, 1))
    assert np.all(out[5, :] == 0) and np.all(out[:, 5] == 0)


def test_scatter_off_grid_origins_match_loop(rng):
    spec = PatchSpec(3, 2)
    origins = np.array([[0, 0], [1, 2], [4, 4]])
    g = rng.normal(size=(3, 9))
    out = scatter_patches(g, origins, spec, (7, 7, 1))
    ref = np.zeros((7, 7, 1))
    for (r, q), row in zip(origins, g):
        ref[r : r + 3, q : q + 3, 0] += row.reshape(3, 3)
    assert np.allclose(out, ref, atol=0, rtol=0)


def test_scatter_out_of_bounds():
    with pytest.raises(ValueError, match="out of bounds"):
        scatter_patches(np.zeros((1, 25)), [(3, 0)], PatchSpec(5, 1), (7, 7, 1))


def test_subsample_equal_sizes_pass_through(rng):
    x = FeatureSet(rng.normal(size=(4, 3)))
    y = FeatureSet(rng.normal(size=(4, 3)))
    xs, ys = subsample_to_match(x, y, seed=1)
    assert xs is x and ys is y


def test_subsample_larger_side(rng):
    x = FeatureSet(rng.normal(size=(10, 2)), origins=[(i, 0) for i in range(10)])
    y = FeatureSet(rng.normal(size=(4, 2)))
    xs, ys = subsample_to_match(x, y, seed=7)
    assert xs.n == 4 and ys is y
    rows = {tuple(r) for r in x.features}
    assert all(tuple(r) in rows for r in xs.features)
    # without replacement, and origins follow the features
    assert len(set(xs.origins[:, 0].tolist())) == 4
    for f, (i, _) in zip(xs.features, xs.origins):
        assert np.array_equal(f, x.features[i])
    again = subsample_to_match(x, y, seed=7)
    assert again[0] == xs
    yb, xb = subsample_to_match(y, x, seed=7)
    assert yb is y and xb.n == 4


def test_subsample_empty():
    with pytest.raises(ValueError, match="empty"):
        subsample_to_match(FeatureSet(np.zeros((0, 2))), FeatureSet(np.zeros((3, 2))))


def test_gaussian_degenerate():
    fs = sample_gaussian_features(3, 1, mean=5.0, std=0.0, seed=0)
    assert fs.features.ravel().tolist() == [5.0, 5.0, 5.0]


def test_gaussian_statistics():
    fs = sample_gaussian_features(100, 1, 0.0, 1.0, seed=2024)
    v = fs.features.ravel()
    assert abs(v.mean()) <= 0.5
    assert abs(v.std(ddof=1) - 1.0) <= 0.3


def test_gaussian_statistics_match_reference_bounds():
    # for n=100 the sample mean has sd 0.1 and the sample sd about 0.071,
    # so the bounds above sit at 5 and 4 standard errors
    from scipy import stats

    means, sds = [], []
    for seed in range(200):
        v = sample_gaussian_features(100, 1, 0.0, 1.0, seed=seed).features.ravel()
        means.append(v.mean())
        sds.append(v.std(ddof=1))
    assert stats.kstest(np.array(means) / 0.1, "norm").pvalue > 1e-3
    assert max(np.abs(means)) < 0.5 and max(np.abs(np.array(sds) - 1)) < 0.3


def test_gaussian_deterministic():
    a = sample_gaussian_features(5, 3, 1.0, 2.0, seed=9)
    b = sample_gaussian_features(5, 3, 1.0, 2.0, seed=9)
    assert a == b


def test_gaussian_bad_args():
    with pytest.raises(ValueError):
        sample_gaussian_features(0, 1)
    with pytest.raises(ValueError):
        sample_gaussian_features(3, 1, std=-1.0)
