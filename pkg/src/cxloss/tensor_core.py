"""Dense containers and file I/O.

Matrices are plain 2-D ``float64`` numpy arrays. Images and feature sets get
small frozen dataclasses because they carry invariants (value range,
provenance) that a bare array does not.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from PIL import Image

__all__ = [
    "ImageGrid",
    "FeatureSet",
    "CxtFormatError",
    "load_png",
    "save_png",
    "read_cxt",
    "write_cxt",
    "load_tensor",
    "save_tensor",
]

CXT_MAGIC = b"CXT1"
_MAX_NDIM = 16
_MAX_ELEMENTS = 1 << 34


class CxtFormatError(ValueError):
    """Raised for malformed CXT tensor files."""


@dataclass(frozen=True)
class ImageGrid:
    """H x W x C image with values in [0, 1], stored as float64.

    Raw input is clamped to [0, 1] on construction; 2-D input is treated as a
    single-channel image.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"image data must be 2-D or 3-D, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ValueError(f"image must have 1 or 3 channels, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be nonempty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data contains non-finite values")
        arr = np.clip(arr, 0.0, 1.0)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class FeatureSet:
    """N feature vectors of dimension D, optionally tagged with the (row, col)
    image coordinate each one was read from."""

    features: np.ndarray
    origins: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.ndim != 2:
            raise ValueError(f"features must be an N x D matrix, got shape {feats.shape}")
        feats = np.array(feats, copy=True)
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        if self.origins is not None:
            orig = np.array(self.origins, dtype=np.int64, copy=True).reshape(-1, 2)
            if orig.shape[0] != feats.shape[0]:
                raise ValueError(
                    f"origins length {orig.shape[0]} does not match feature count {feats.shape[0]}"
                )
            orig.setflags(write=False)
            object.__setattr__(self, "origins", orig)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n

    def take(self, index) -> "FeatureSet":
        index = np.asarray(index, dtype=np.int64)
        origins = None if self.origins is None else self.origins[index]
        return FeatureSet(self.features[index], origins)

    def __eq__(self, other):
        if not isinstance(other, FeatureSet):
            return NotImplemented
        if not np.array_equal(self.features, other.features):
            return False
        if self.origins is None or other.origins is None:
            return self.origins is None and other.origins is None
        return np.array_equal(self.origins, other.origins)

    __hash__ = None


def load_png(path: Union[str, os.PathLike]) -> ImageGrid:
    with Image.open(path) as img:
        img.load()
        mode = img.mode
        if mode not in ("L", "RGB"):
            raise ValueError(
                f"{path}: unsupported PNG mode {mode!r}; expected 8-bit grayscale (L) or RGB"
            )
        arr = np.asarray(img, dtype=np.uint8)
    return ImageGrid(arr.astype(np.float64) / 255.0)


def save_png(image: ImageGrid, path: Union[str, os.PathLike]) -> None:
    # round half up: 0.5 -> 128
    q = np.floor(image.data * 255.0 + 0.5).astype(np.uint8)
    if image.channels == 1:
        Image.fromarray(q[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(q, mode="RGB").save(path, format="PNG")


def write_cxt(array: np.ndarray, path: Union[str, os.PathLike]) -> None:
    """Write an array of any rank as little-endian float32 CXT."""
    arr = np.asarray(array)
    if arr.ndim > _MAX_NDIM:
        raise CxtFormatError(f"rank {arr.ndim} exceeds the maximum of {_MAX_NDIM}")
    header = CXT_MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_cxt(path: Union[str, os.PathLike]) -> np.ndarray:
    """Read a CXT file into a float64 array with the stored dims."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != CXT_MAGIC:
        raise CxtFormatError(f"{path}: bad magic")
    if len(raw) < 8:
        raise CxtFormatError(f"{path}: truncated header")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    if ndim > _MAX_NDIM:
        raise CxtFormatError(f"{path}: dim overflow (ndim={ndim})")
    end = 8 + 4 * ndim
    if len(raw) < end:
        raise CxtFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    count = 1
    for d in dims:
        count *= d
        if count > _MAX_ELEMENTS:
            raise CxtFormatError(f"{path}: dim overflow (dims={list(dims)})")
    expected = end + 4 * count
    if len(raw) < expected:
        raise CxtFormatError(
            f"{path}: truncated payload ({len(raw) - end} bytes, expected {4 * count})"
        )
    if len(raw) > expected:
        raise CxtFormatError(f"{path}: {len(raw) - expected} trailing bytes after payload")
    payload = np.frombuffer(raw, dtype="<f4", count=count, offset=end)
    return payload.astype(np.float64).reshape(dims)


def load_tensor(path: Union[str, os.PathLike]) -> Union[np.ndarray, ImageGrid]:
    """Load a CXT file: rank 2 gives a matrix, rank 3 with 1 or 3 channels an
    ImageGrid, anything else the raw array."""
    arr = read_cxt(path)
    if arr.ndim == 3 and arr.shape[2] in (1, 3):
        return ImageGrid(arr)
    return arr


def save_tensor(obj: Union[np.ndarray, ImageGrid, FeatureSet], path: Union[str, os.PathLike]) -> None:
    if isinstance(obj, ImageGrid):
        write_cxt(obj.data, path)
    elif isinstance(obj, FeatureSet):
        write_cxt(obj.features, path)
    else:
        write_cxt(np.asarray(obj), path)
