"""Morphology primitives and shape scores."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import annulus_image, radial_field
from topseg.errors import MorphologyError
from topseg.grid import BinaryMask, GrayImage
from topseg.morphology import (
    StructuringBall,
    binary_dilate,
    connected_components,
    cylindricality,
    disk_shape_score,
    fill_holes,
    gaussian_blur,
    gaussian_kernel,
    grey_dilate,
    largest_component,
    minimal_enclosing_disk,
)


def masks(max_side=8, rank=2):
    return (
        st.integers(2, max_side)
        .flatmap(
            lambda n: st.lists(
                st.lists(st.booleans(), min_size=n, max_size=n),
                min_size=n,
                max_size=n,
            )
        )
        .map(lambda rows: BinaryMask(np.array(rows, dtype=bool)))
    )


def test_ball_footprint():
    ball = StructuringBall(1, 2)
    np.testing.assert_array_equal(
        ball.footprint(), np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    )
    assert StructuringBall(2, 3).footprint().sum() == 33
    with pytest.raises(MorphologyError):
        StructuringBall(-1, 2)


def test_gaussian_kernel_normalized():
    k = gaussian_kernel(1.5)
    assert k.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(k, k[::-1])


def test_blur_preserves_constant():
    img = GrayImage(np.full((9, 9), 0.4))
    out = gaussian_blur(img, 2.0)
    np.testing.assert_allclose(out.data, 0.4)


def test_grey_dilate_is_local_max():
    data = np.zeros((5, 5))
    data[2, 2] = 1.0
    out = grey_dilate(GrayImage(data), StructuringBall(1, 2))
    assert out.data[2, 1] == 1.0 and out.data[1, 2] == 1.0
    assert out.data[1, 1] == 0.0  # diagonal is outside the radius-1 ball


def test_binary_dilate_radius_zero_identity():
    mask = BinaryMask(np.eye(4, dtype=bool))
    assert binary_dilate(mask, StructuringBall(0, 2)) is mask


def test_components_ordered_by_size_then_index():
    data = np.zeros((6, 6), dtype=bool)
    data[0, 0] = True  # single pixel, first in Fortran order
    data[4:6, 0:2] = True  # biggest
    data[0, 4] = True  # single pixel, later Fortran index
    labels, sizes = connected_components(BinaryMask(data))
    assert list(sizes) == [4, 1, 1]
    assert labels[4, 0] == 1
    assert labels[0, 0] == 2  # tie broken by smaller linear index
    assert labels[0, 4] == 3


def test_largest_component_and_fill_holes():
    img = annulus_image()
    ring = BinaryMask(img.data == 0.0)
    assert largest_component(ring).count == ring.count
    filled = fill_holes(ring)
    assert filled.count > ring.count
    inner = filled - ring
    assert inner.count > 0
    # the filled interior is enclosed: no voxel on the domain border
    assert not inner.data[0, :].any() and not inner.data[:, 0].any()


def test_minimal_enclosing_disk_known_cases():
    data = np.zeros((9, 9), dtype=bool)
    data[1, 1] = data[1, 7] = True
    disk = minimal_enclosing_disk(BinaryMask(data))
    assert disk.center == pytest.approx((1.0, 4.0))
    assert disk.radius == pytest.approx(3.0)

    r = radial_field((11, 11))
    disk = minimal_enclosing_disk(BinaryMask(r <= 4.0))
    assert disk.radius == pytest.approx(4.0, abs=0.3)


def test_disk_shape_score_prefers_disks():
    r = radial_field((15, 15))
    disk = BinaryMask(r <= 5.0)
    bar = np.zeros((15, 15), dtype=bool)
    bar[7, 1:14] = True
    assert disk_shape_score(disk) > 0.9
    assert disk_shape_score(BinaryMask(bar)) < 0.3


def test_cylindricality_prefers_round_columns():
    r = radial_field((15, 15))
    disk = r <= 4.0
    tube = np.repeat(disk[:, :, None], 6, axis=2)
    crescent = disk & (radial_field((15, 15), (7.0, 3.0)) > 5.0)
    crescent_prism = np.repeat(crescent[:, :, None], 6, axis=2)
    assert cylindricality(BinaryMask(tube), 2) > cylindricality(
        BinaryMask(crescent_prism), 2
    )


@settings(max_examples=40, deadline=None)
@given(masks())
def test_dilation_contains_input(mask):
    grown = binary_dilate(mask, StructuringBall(1, 2))
    assert not (mask - grown).data.any()


@settings(max_examples=40, deadline=None)
@given(masks())
def test_fill_holes_idempotent(mask):
    once = fill_holes(mask)
    assert (fill_holes(once).data == once.data).all()
    assert not (mask - once).data.any()


@settings(max_examples=40, deadline=None)
@given(masks())
def test_component_sizes_partition_mask(mask):
    labels, sizes = connected_components(mask)
    assert int(sizes.sum()) == mask.count
    assert (labels > 0).sum() == mask.count
