"""Grayscale/binary morphology and the shape scores used by the pipelines.

Connectivity is face adjacency (4 in 2D, 6 in 3D) everywhere, so component
counts here always agree with degree-0 persistence of the cubical engine.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import MorphologyError
from .grid import BinaryMask, GrayImage

_FACE_STRUCTURE = {r: ndimage.generate_binary_structure(r, 1) for r in (2, 3)}


@dataclass(frozen=True)
class StructuringBall:
    """Digital closed ball: integer offsets with Euclidean norm <= radius."""

    radius: int
    rank: int

    def __post_init__(self):
        if self.radius < 0:
            raise MorphologyError("radius must be nonnegative")
        if self.rank not in (2, 3):
            raise MorphologyError("rank must be 2 or 3")

    def footprint(self) -> np.ndarray:
        r = self.radius
        axes = np.ogrid[tuple(slice(-r, r + 1) for _ in range(self.rank))]
        sq = sum(a.astype(np.int64) ** 2 for a in axes)
        return sq <= r * r

    def offsets(self) -> List[Tuple[int, ...]]:
        r = self.radius
        idx = np.argwhere(self.footprint()) - r
        return [tuple(int(v) for v in row) for row in idx]


@dataclass(frozen=True)
class Disk:
    center: Tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise MorphologyError("disk radius must be nonnegative")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Unit-sum Gaussian, truncated at ceil(3*sigma) taps per side."""
    if sigma < 0:
        raise MorphologyError("sigma must be nonnegative")
    if sigma == 0:
        return np.array([1.0])
    half = int(np.ceil(3.0 * sigma))
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian convolution; border mode is mirror reflection."""
    if sigma < 0:
        raise MorphologyError("sigma must be nonnegative")
    if sigma == 0:
        return img
    kernel = gaussian_kernel(sigma)
    out = img.data
    for axis in range(img.rank):
        out = ndimage.convolve1d(out, kernel, axis=axis, mode="mirror")
    if img.data.min() >= 0.0 and img.data.max() <= 1.0:
        out = np.clip(out, 0.0, 1.0)
    return GrayImage(out, img.spacing)


def grey_dilate(img: GrayImage, ball: StructuringBall) -> GrayImage:
    """out(p) = max of in over the ball around p, ignoring offsets outside."""
    if ball.rank != img.rank:
        raise MorphologyError("structuring ball rank must match image rank")
    if ball.radius == 0:
        return img
    out = ndimage.maximum_filter(
        img.data, footprint=ball.footprint(), mode="constant", cval=-np.inf
    )
    return GrayImage(out, img.spacing)


def binary_dilate(mask: BinaryMask, ball: StructuringBall) -> BinaryMask:
    if ball.rank != mask.rank:
        raise MorphologyError("structuring ball rank must match mask rank")
    if ball.radius == 0:
        return mask
    out = ndimage.binary_dilation(mask.data, structure=ball.footprint())
    return BinaryMask(out)


def _first_fortran_indices(labels: np.ndarray, n_labels: int) -> np.ndarray:
    """First Fortran-order linear index per label 1..n (index 0 unused)."""
    flat = labels.ravel(order="F")
    first = np.full(n_labels + 1, flat.size, dtype=np.int64)
    seen = np.unique(flat, return_index=True)
    for lab, pos in zip(*seen):
        first[lab] = pos
    return first


def connected_components(mask: BinaryMask) -> Tuple[np.ndarray, np.ndarray]:
    """Face-connected components.

    Returns (labels, sizes): labels are 1..k ordered by decreasing size
    (ties: smaller minimal Fortran-linear voxel index); sizes[i] is the voxel
    count of label i+1.
    """
    raw, n = ndimage.label(mask.data, structure=_FACE_STRUCTURE[mask.rank])
    if n == 0:
        return np.zeros(mask.dims, dtype=np.int32), np.zeros(0, dtype=np.int64)
    sizes = np.bincount(raw.ravel(), minlength=n + 1)[1:]
    first = _first_fortran_indices(raw, n)[1:]
    order = np.lexsort((first, -sizes))
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, n + 1, dtype=np.int32)
    return remap[raw], sizes[order].astype(np.int64)


def largest_component(mask: BinaryMask) -> BinaryMask:
    """Largest face-connected component (empty mask passes through)."""
    if mask.empty:
        return mask
    labels, _ = connected_components(mask)
    return BinaryMask(labels == 1)


def fill_holes(mask: BinaryMask) -> BinaryMask:
    """Union of the mask with every enclosed component of its complement.

    A complement component is enclosed iff it touches no domain boundary.
    """
    comp = ~mask.data
    raw, n = ndimage.label(comp, structure=_FACE_STRUCTURE[mask.rank])
    if n == 0:
        return mask
    border = np.zeros(n + 1, dtype=bool)
    for axis in range(mask.rank):
        for idx in (0, mask.dims[axis] - 1):
            border[np.unique(np.take(raw, idx, axis=axis))] = True
    enclosed = ~border
    enclosed[0] = False
    return BinaryMask(mask.data | enclosed[raw])


def _circle_from(points) -> Optional[Disk]:
    if len(points) == 0:
        return None
    if len(points) == 1:
        return Disk(points[0], 0.0)
    if len(points) == 2:
        (ax, ay), (bx, by) = points
        cx, cy = (ax + bx) / 2.0, (ay + by) / 2.0
        r = max(np.hypot(cx - ax, cy - ay), np.hypot(cx - bx, cy - by))
        return Disk((cx, cy), r)
    (ax, ay), (bx, by), (cx, cy) = points
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return None
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
          + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
          + (cx * cx + cy * cy) * (bx - ax)) / d
    r = max(np.hypot(ux - px, uy - py) for px, py in ((ax, ay), (bx, by), (cx, cy)))
    return Disk((ux, uy), r)


def _in_disk(disk: Disk, p, eps=1e-9) -> bool:
    return np.hypot(disk.center[0] - p[0], disk.center[1] - p[1]) <= disk.radius + eps


def _welzl(points: List[Tuple[float, float]]) -> Disk:
    # Move-to-front variant; fixed-seed shuffle keeps it deterministic while
    # preserving the expected linear running time.
    pts = list(points)
    random.Random(0x5EED).shuffle(pts)
    disk: Optional[Disk] = None
    for i, p in enumerate(pts):
        if disk is not None and _in_disk(disk, p):
            continue
        disk = Disk(p, 0.0)
        for j, q in enumerate(pts[:i]):
            if _in_disk(disk, q):
                continue
            disk = _circle_from([p, q])
            for k in pts[:j]:
                if not _in_disk(disk, k):
                    disk = _circle_from([p, q, k])
    return disk


def minimal_enclosing_disk(mask: BinaryMask) -> Disk:
    """Smallest disk containing all set voxel centers of a 2D mask."""
    if mask.rank != 2:
        raise MorphologyError("minimal_enclosing_disk requires a 2D mask")
    if mask.empty:
        raise MorphologyError("minimal_enclosing_disk requires a nonempty mask")
    pts = [(float(x), float(y)) for x, y in np.argwhere(mask.data)]
    return _welzl(pts)


def rasterize_disk(disk: Disk, dims: Sequence[int]) -> BinaryMask:
    """Voxels whose centers lie within the disk (<= radius + 1e-9)."""
    xs, ys = np.ogrid[0:dims[0], 0:dims[1]]
    d2 = (xs - disk.center[0]) ** 2 + (ys - disk.center[1]) ** 2
    return BinaryMask(d2 <= (disk.radius + 1e-9) ** 2)


def disk_shape_score(mask: BinaryMask) -> float:
    """Dice overlap between a 2D mask and its rasterized minimal enclosing disk."""
    disk = minimal_enclosing_disk(mask)
    raster = rasterize_disk(disk, mask.dims)
    inter = int((mask.data & raster.data).sum())
    return 2.0 * inter / (mask.count + raster.count)


def cylindricality(mask: BinaryMask, axis: int) -> float:
    """Mean disk-shape score over the nonempty 2D slices along ``axis``."""
    if mask.rank != 3:
        raise MorphologyError("cylindricality requires a 3D mask")
    if mask.empty:
        raise MorphologyError("cylindricality requires a nonempty mask")
    scores = []
    for idx in range(mask.dims[axis]):
        sl = np.take(mask.data, idx, axis=axis)
        if sl.any():
            scores.append(disk_shape_score(BinaryMask(sl)))
    return float(np.mean(scores))
