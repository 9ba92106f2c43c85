import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from cxloss.tensor_core import (
    CxtFormatError,
    FeatureSet,
    ImageGrid,
    load_png,
    load_tensor,
    read_cxt,
    save_png,
    save_tensor,
    write_cxt,
)


def test_load_white_rgb(tmp_path):
    p = tmp_path / "w.png"
    Image.fromarray(np.full((1, 1, 3), 255, np.uint8), "RGB").save(p)
    img = load_png(p)
    assert img.shape == (1, 1, 3)
    assert np.array_equal(img.data, np.ones((1, 1, 3)))


def test_load_black_gray(tmp_path):
    p = tmp_path / "b.png"
    Image.fromarray(np.zeros((1, 1), np.uint8), "L").save(p)
    img = load_png(p)
    assert img.shape == (1, 1, 1)
    assert img.data[0, 0, 0] == 0.0


def test_load_scaling(tmp_path):
    p = tmp_path / "g.png"
    Image.fromarray(np.array([[0, 128], [255, 64]], np.uint8), "L").save(p)
    img = load_png(p)
    assert img.data.ravel().tolist() == [0.0, 128 / 255, 1.0, 64 / 255]


@pytest.mark.parametrize("mode", ["RGBA", "I;16", "P"])
def test_load_rejects_other_modes(tmp_path, mode):
    p = tmp_path / "x.png"
    Image.new(mode, (2, 2)).save(p)
    with pytest.raises(ValueError, match="unsupported PNG mode"):
        load_png(p)


def test_load_missing(tmp_path):
    with pytest.raises(OSError):
        load_png(tmp_path / "nope.png")


def test_save_half_rounds_up(tmp_path):
    p = tmp_path / "h.png"
    save_png(ImageGrid(np.array([[0.5]])), p)
    assert load_png(p).data[0, 0, 0] == 128 / 255


@pytest.mark.parametrize("value", [0.0, 1.0])
def test_save_extremes_exact(tmp_path, value):
    p = tmp_path / "e.png"
    img = ImageGrid(np.full((3, 4, 3), value))
    save_png(img, p)
    assert load_png(p) == img


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 3])),
              elements=st.floats(0, 1)))
def test_png_round_trip_error(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("png") / "r.png"
    img = ImageGrid(data)
    save_png(img, p)
    back = load_png(p)
    assert np.abs(back.data - img.data).max() <= 1 / (2 * 255) + 1e-12


def test_image_clamps_on_construction():
    img = ImageGrid(np.array([[-0.5, 0.3, 1.7]]))
    assert img.data.ravel().tolist() == [0.0, 0.3, 1.0]


def test_image_rejects_bad_channels():
    with pytest.raises(ValueError, match="1 or 3 channels"):
        ImageGrid(np.zeros((2, 2, 2)))


def test_image_is_immutable():
    img = ImageGrid(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0


def test_feature_set_origins_length():
    with pytest.raises(ValueError, match="origins length"):
        FeatureSet(np.zeros((3, 2)), origins=[(0, 0), (0, 1)])


def test_cxt_matrix_round_trip(tmp_path):
    p = tmp_path / "m.cxt"
    write_cxt(np.arange(6, dtype=np.float64).reshape(2, 3), p)
    m = load_tensor(p)
    assert isinstance(m, np.ndarray)
    assert m.shape == (2, 3)
    assert m.ravel().tolist() == [0, 1, 2, 3, 4, 5]


def test_cxt_layout_is_little_endian(tmp_path):
    p = tmp_path / "m.cxt"
    write_cxt(np.array([[1.5, -2.0]]), p)
    raw = p.read_bytes()
    assert raw[:4] == b"CXT1"
    assert struct.unpack("<III", raw[4:16]) == (2, 1, 2)
    assert struct.unpack("<ff", raw[16:]) == (1.5, -2.0)
    assert len(raw) == 24


def test_cxt_image(tmp_path):
    p = tmp_path / "i.cxt"
    data = np.random.default_rng(0).random((4, 4, 3))
    save_tensor(ImageGrid(data), p)
    img = load_tensor(p)
    assert isinstance(img, ImageGrid)
    assert img.shape == (4, 4, 3)
    assert np.array_equal(img.data, data.astype(np.float32).astype(np.float64))


def test_cxt_payload_bits_exact(tmp_path):
    rng = np.random.default_rng(1)
    vals = rng.normal(size=(5, 7)).astype(np.float32)
    vals[0, 0] = np.float32(1e-38)
    vals[0, 1] = np.float32(-0.0)
    p1, p2 = tmp_path / "a.cxt", tmp_path / "b.cxt"
    write_cxt(vals, p1)
    write_cxt(read_cxt(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_cxt_empty_file(tmp_path):
    p = tmp_path / "e.cxt"
    p.write_bytes(b"")
    with pytest.raises(CxtFormatError, match="bad magic"):
        load_tensor(p)


def test_cxt_truncated(tmp_path):
    p = tmp_path / "t.cxt"
    write_cxt(np.zeros((3, 3)), p)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(CxtFormatError, match="truncated payload"):
        read_cxt(p)


def test_cxt_dim_overflow(tmp_path):
    p = tmp_path / "o.cxt"
    p.write_bytes(b"CXT1" + struct.pack("<IIII", 3, 2**31, 2**31, 4))
    with pytest.raises(CxtFormatError, match="dim overflow"):
        read_cxt(p)
    p.write_bytes(b"CXT1" + struct.pack("<I", 1000))
    with pytest.raises(CxtFormatError, match="dim overflow"):
        read_cxt(p)
