"""Shared fixture builders: random quantized images and digital geometry."""

import numpy as np
import pytest

from topseg.grid import GrayImage


def random_image(rng, shape, levels=6):
    """Random image quantized to a few levels so value ties are exercised."""
    data = rng.integers(0, levels, size=shape) / (levels - 1)
    return GrayImage(data.astype(np.float64))


def radial_field(shape, center=None):
    if center is None:
        center = tuple((e - 1) / 2.0 for e in shape)
    grids = np.indices(shape, dtype=np.float64)
    return np.sqrt(sum((g - c) ** 2 for g, c in zip(grids, center)))


def annulus_image(shape=(12, 12), r_in=2.0, r_out=5.0):
    """Dark (0) annulus on bright (1) background; sublevel frame at 0 = ring."""
    r = radial_field(shape)
    img = np.ones(shape)
    img[(r > r_in) & (r <= r_out)] = 0.0
    return GrayImage(img)


def shell_image(shape=(14, 14, 14), r_in=2.5, r_out=5.0):
    r = radial_field(shape)
    img = np.ones(shape)
    img[(r > r_in) & (r <= r_out)] = 0.0
    return GrayImage(img)


def ball_image(shape=(12, 12, 12), radius=4.5):
    r = radial_field(shape)
    img = np.ones(shape)
    img[r <= radius] = 0.0
    return GrayImage(img)


def tube_image(shape=(12, 12, 6), r_in=2.0, r_out=5.0):
    """Open-ended dark tube: an annulus cross-section along the last axis."""
    r = radial_field(shape[:2])
    ring = (r > r_in) & (r <= r_out)
    img = np.ones(shape)
    img[ring, :] = 0.0
    return GrayImage(img)


@pytest.fixture(scope="session")
def warm_engine():
    """Compile the numba kernels once so timed tests measure steady state."""
    from topseg.cubical import SUBLEVEL, build_filtration, persistence
    from topseg.pipeline import module1_localized

    img = random_image(np.random.default_rng(0), (6, 6, 6))
    persistence(build_filtration(img, SUBLEVEL))
    module1_localized(img, (0, 0, 0))
    return True
