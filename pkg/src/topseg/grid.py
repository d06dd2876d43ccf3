"""Core in-memory image model: grayscale volumes, binary masks, label maps.

Axis convention, fixed once for the whole package: arrays are indexed
``[x, y]`` (2D) or ``[x, y, z]`` (3D), and the *linear voxel index* used by
every deterministic tie rule is the Fortran-order index (x varies fastest,
z slowest). This matches NIfTI's native voxel ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ImageError

Coord = Tuple[int, ...]


def linear_index(shape: Sequence[int], coord: Sequence[int]) -> int:
    """Fortran-order linear index of a voxel coordinate."""
    return int(np.ravel_multi_index(tuple(int(c) for c in coord), tuple(shape), order="F"))


def coord_of(shape: Sequence[int], index: int) -> Coord:
    """Inverse of :func:`linear_index`."""
    return tuple(int(c) for c in np.unravel_index(int(index), tuple(shape), order="F"))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _check_rank(data: np.ndarray):
    if data.ndim not in (2, 3):
        raise ImageError(f"rank must be 2 or 3, got {data.ndim}")
    if any(e < 1 for e in data.shape):
        raise ImageError(f"every extent must be >= 1, got {data.shape}")


@dataclass(frozen=True)
class GrayImage:
    """Dense 2D/3D scalar field. ``spacing`` (mm per axis) is informational."""

    data: np.ndarray
    spacing: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        _check_rank(data)
        if not np.all(np.isfinite(data)):
            raise ImageError("image contains non-finite values")
        if self.spacing is not None and len(self.spacing) != data.ndim:
            raise ImageError("spacing length must match rank")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    def value_at(self, coord: Sequence[int]) -> float:
        return float(self.data[tuple(int(c) for c in coord)])


@dataclass(frozen=True)
class BinaryMask:
    """Voxel set over a grid; compared masks must share dims."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=bool)
        _check_rank(data)
        object.__setattr__(self, "data", _freeze(data.copy()))

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    @property
    def count(self) -> int:
        return int(self.data.sum())

    @property
    def empty(self) -> bool:
        return not bool(self.data.any())

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.data | other.data)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.data & other.data)

    def __sub__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.data & ~other.data)

    def complement(self) -> "BinaryMask":
        return BinaryMask(~self.data)


# Task-specific label alphabets; background is always 0, classes are numbered
# 1.. in the order listed here.
BRAIN_CLASSES = ("ET", "TC", "ED")
CARDIAC_CLASSES = ("LV", "RV", "Myo")
FETAL_CLASSES = ("CP",)


@dataclass(frozen=True)
class LabelMap:
    """Multi-class segmentation: small-integer class per voxel, 0 = background."""

    data: np.ndarray
    alphabet: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        data = np.asarray(self.data)
        _check_rank(data)
        if not np.issubdtype(data.dtype, np.integer):
            raise ImageError("label map must hold integers")
        data = data.astype(np.uint8)
        if data.max(initial=0) > len(self.alphabet):
            raise ImageError(
                f"labels exceed alphabet of size {len(self.alphabet)}"
            )
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    def code_of(self, name: str) -> int:
        return self.alphabet.index(name) + 1

    def class_mask(self, name: str) -> BinaryMask:
        return BinaryMask(self.data == self.code_of(name))

    def foreground(self) -> BinaryMask:
        return BinaryMask(self.data != 0)


def normalize01(img: GrayImage) -> GrayImage:
    """Affine rescale to [0, 1]; a constant image maps to all zeros."""
    lo = float(img.data.min())
    hi = float(img.data.max())
    if hi == lo:
        return GrayImage(np.zeros(img.dims), img.spacing)
    return GrayImage((img.data - lo) / (hi - lo), img.spacing)


def extract_slice(img: GrayImage, axis: int, index: int) -> GrayImage:
    """2D slice of a 3D volume at a fixed index along ``axis``."""
    if img.rank != 3:
        raise ImageError("extract_slice requires a rank-3 image")
    if not 0 <= axis < 3:
        raise ImageError(f"axis {axis} out of range for rank 3")
    if not 0 <= index < img.dims[axis]:
        raise ImageError(
            f"index {index} out of range for axis {axis} (extent {img.dims[axis]})"
        )
    spacing = None
    if img.spacing is not None:
        spacing = tuple(s for i, s in enumerate(img.spacing) if i != axis)
    return GrayImage(np.take(img.data, index, axis=axis), spacing)


def pad_black_caps(img: GrayImage, axis: int) -> GrayImage:
    """Append one all-zero slice at each end of ``axis``."""
    if img.rank != 3:
        raise ImageError("pad_black_caps requires a rank-3 image")
    if not 0 <= axis < 3:
        raise ImageError(f"axis {axis} out of range for rank 3")
    pad = [(0, 0)] * 3
    pad[axis] = (1, 1)
    return GrayImage(np.pad(img.data, pad, mode="constant"), img.spacing)
