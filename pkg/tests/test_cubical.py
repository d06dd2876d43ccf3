"""Persistence engine: oracle agreement, Betti numbers, invariances."""

import math

import numpy as np
import pytest

from conftest import annulus_image, ball_image, random_image, shell_image, tube_image
from topseg.cubical import (
    SUBLEVEL,
    SUPERLEVEL,
    PersistenceDiagram,
    PersistencePoint,
    bottleneck_distance,
    build_filtration,
    component_at,
    oracle_persistence,
    persistence,
    persistence_h0,
)
from topseg.errors import PersistenceError
from topseg.grid import GrayImage, pad_black_caps


def diag(img, direction=SUBLEVEL, max_dim=None):
    return persistence(build_filtration(img, direction), max_dim=max_dim)


def test_engine_matches_oracle_small_cases(warm_engine):
    rng = np.random.default_rng(42)
    for _ in range(10):
        shape = tuple(rng.integers(2, 9, size=2))
        img = random_image(rng, shape)
        for direction in (SUBLEVEL, SUPERLEVEL):
            filt = build_filtration(img, direction)
            assert persistence(filt).multiset() == oracle_persistence(filt).multiset()
    for _ in range(5):
        shape = tuple(rng.integers(2, 6, size=3))
        img = random_image(rng, shape)
        filt = build_filtration(img, SUBLEVEL)
        assert persistence(filt).multiset() == oracle_persistence(filt).multiset()


def test_annulus_betti(warm_engine):
    d = diag(annulus_image())
    assert d.betti_at(0.0, 0) == 1
    assert d.betti_at(0.0, 1) == 1


def test_shell_betti(warm_engine):
    d = diag(shell_image())
    assert d.betti_at(0.0, 0) == 1
    assert d.betti_at(0.0, 1) == 0
    assert d.betti_at(0.0, 2) == 1


def test_ball_has_no_void(warm_engine):
    d = diag(ball_image())
    assert d.betti_at(0.0, 2) == 0


def test_tube_closed_by_black_caps(warm_engine):
    img = tube_image()
    d = diag(img)
    assert d.betti_at(0.0, 1) == 1
    assert d.betti_at(0.0, 2) == 0
    capped = diag(pad_black_caps(img, 2))
    assert capped.betti_at(0.0, 2) == 1


def test_superlevel_equals_sublevel_of_inverted(warm_engine):
    rng = np.random.default_rng(3)
    img = random_image(rng, (7, 8))
    d_sup = diag(img, SUPERLEVEL)
    d_sub = diag(GrayImage(1.0 - img.data), SUBLEVEL)
    assert d_sup.multiset() == d_sub.multiset()


def test_zero_persistence_pairs_dropped(warm_engine):
    img = GrayImage(np.zeros((4, 4)))
    pts = diag(img).points
    assert len(pts) == 1
    assert pts[0].dim == 0 and pts[0].essential


def test_monotone_equivariance(warm_engine):
    rng = np.random.default_rng(11)
    img = random_image(rng, (8, 8))
    knots = np.linspace(0.0, 1.0, 6)
    values = np.concatenate([[0.0], np.cumsum(rng.uniform(0.2, 1.0, 5))])
    values /= values[-1]
    mapped = GrayImage(np.interp(img.data, knots, values))

    def f(v):
        return math.inf if math.isinf(v) else float(np.interp(v, knots, values))

    got = diag(mapped).multiset()
    expected = sorted((d, f(b), f(x)) for d, b, x in diag(img).multiset())
    assert got == expected


def test_stability_smoke(warm_engine):
    rng = np.random.default_rng(5)
    img = random_image(rng, (7, 7), levels=5)
    noise = rng.integers(-1, 2, size=(7, 7)) * 0.04
    other = GrayImage(np.clip(img.data + noise, 0.0, 1.0))
    eps = float(np.abs(img.data - other.data).max())
    d1, d2 = diag(img), diag(other)
    for dim in (0, 1):
        assert bottleneck_distance(d1, d2, dim) <= eps + 1e-9


def test_bottleneck_known_values():
    a = PersistenceDiagram((PersistencePoint(0, 0.0, 1.0, (0,) * 2),))
    b = PersistenceDiagram((PersistencePoint(0, 0.1, 0.9, (0,) * 2),))
    assert bottleneck_distance(a, b, 0) == pytest.approx(0.1)
    # unmatched point against the empty diagram: half its persistence
    empty = PersistenceDiagram(())
    assert bottleneck_distance(a, empty, 0) == pytest.approx(0.5)
    assert bottleneck_distance(a, a, 0) == 0.0


def test_h0_fast_path_matches_full(warm_engine):
    rng = np.random.default_rng(9)
    img = random_image(rng, (9, 9))
    filt = build_filtration(img, SUBLEVEL)
    full = [(p.dim, p.birth, p.death) for p in persistence(filt).in_dim(0)]
    fast = [(p.dim, p.birth, p.death) for p in persistence_h0(filt).in_dim(0)]
    assert sorted(full) == sorted(fast)


def test_component_at_matches_frame(warm_engine):
    img = annulus_image()
    comp = component_at(img, SUBLEVEL, 0.0, (1, 5))
    frame = build_filtration(img, SUBLEVEL).frame(0.0)
    assert comp.data.sum() == frame.data.sum()  # ring is one component
    assert comp.data[1, 5]


def test_out_of_range_values_rejected():
    with pytest.raises(PersistenceError):
        build_filtration(GrayImage(np.full((3, 3), 1.5)), SUBLEVEL)


def test_diagram_csv_and_svg(warm_engine):
    d = diag(annulus_image())
    csv = d.to_csv()
    assert csv.splitlines()[0] == "dim,birth,death,bx,by,bz,dx,dy,dz"
    assert sum(line.startswith("1,") for line in csv.splitlines()) == 1
    svg = d.to_svg()
    assert svg.startswith("<svg") and svg.endswith("</svg>")


def test_determinism(warm_engine):
    rng = np.random.default_rng(21)
    img = random_image(rng, (10, 10, 5))
    assert diag(img).multiset() == diag(img).multiset()
    assert [p.birth_voxel for p in diag(img).points] == [
        p.birth_voxel for p in diag(img).points
    ]
