"""Acceptance gate: one test per release criterion, each printing a verdict."""

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from conftest import annulus_image, ball_image, random_image, shell_image, tube_image
from topseg.cli import main as cli_main
from topseg.config import PipelineConfig, brain_config, cardiac_config, fetal_config
from topseg.cubical import (
    SUBLEVEL,
    SUPERLEVEL,
    bottleneck_distance,
    build_filtration,
    oracle_persistence,
    persistence,
)
from topseg.grid import BinaryMask, GrayImage
from topseg.phantoms import (
    PhantomSpec,
    dice,
    evaluate_labelmap,
    make_brain_phantom,
    make_cardiac_phantom,
    make_fetal_phantom,
)
from topseg.pipeline import (
    segment_cardiac_2d,
    segment_cardiac_3d,
    segment_fetal_volume,
    segment_glioblastoma,
)
from topseg.validation import check_acdc, check_brats, check_sta


def verdict(num, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_01_oracle_equivalence(warm_engine):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    mismatches = 0
    for i in range(100):
        shape = tuple(rng.integers(2, 13, size=2))
        img = random_image(rng, shape)
        direction = SUBLEVEL if i % 2 == 0 else SUPERLEVEL
        filt = build_filtration(img, direction)
        if persistence(filt).multiset() != oracle_persistence(filt).multiset():
            mismatches += 1
    for i in range(50):
        shape = tuple(rng.integers(2, 7, size=3))
        img = random_image(rng, shape)
        direction = SUBLEVEL if i % 2 == 0 else SUPERLEVEL
        filt = build_filtration(img, direction)
        if persistence(filt).multiset() != oracle_persistence(filt).multiset():
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 60.0
    verdict(1, ok, f"oracle equivalence on 150 images, {mismatches} mismatches, {elapsed:.1f}s")


def test_criterion_02_betti_fixtures(warm_engine):
    start = time.perf_counter()
    # three components, two holes: two dark annuli plus a dark blob
    fig = np.ones((26, 12))
    for img, x0 in ((fig, 0), (fig, 12)):
        xs, ys = np.indices((12, 12))
        r = np.sqrt((xs - 5.5) ** 2 + (ys - 5.5) ** 2)
        img[x0:x0 + 12, :][(r > 2) & (r <= 5)] = 0.0
    fig[24:26, 5:7] = 0.0
    d = persistence(build_filtration(GrayImage(fig), SUBLEVEL))
    checks = [
        (d.betti_at(0.0, 0), 3),
        (d.betti_at(0.0, 1), 2),
    ]
    d = persistence(build_filtration(annulus_image(), SUBLEVEL))
    checks.append((d.betti_at(0.0, 1), 1))
    d = persistence(build_filtration(shell_image(), SUBLEVEL))
    checks.append((d.betti_at(0.0, 2), 1))
    d = persistence(build_filtration(ball_image(), SUBLEVEL))
    checks.append((d.betti_at(0.0, 2), 0))
    tube = tube_image()
    d = persistence(build_filtration(tube, SUBLEVEL))
    checks.append((d.betti_at(0.0, 1), 1))
    checks.append((d.betti_at(0.0, 2), 0))
    from topseg.grid import pad_black_caps

    d = persistence(build_filtration(pad_black_caps(tube, 2), SUBLEVEL))
    checks.append((d.betti_at(0.0, 2), 1))
    elapsed = time.perf_counter() - start
    ok = all(got == want for got, want in checks) and elapsed < 10.0
    verdict(2, ok, f"Betti fixtures {[g for g, _ in checks]} == {[w for _, w in checks]}, {elapsed:.1f}s")


def test_criterion_03_monotone_equivariance(warm_engine):
    rng = np.random.default_rng(103)
    failures = 0
    for _ in range(20):
        shape = tuple(rng.integers(4, 10, size=2))
        img = random_image(rng, shape)
        base = persistence(build_filtration(img, SUBLEVEL)).multiset()
        for _ in range(5):
            knots = np.linspace(0.0, 1.0, 5)
            vals = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 1.0, 4))])
            vals /= vals[-1]
            mapped = GrayImage(np.interp(img.data, knots, vals))

            def f(v):
                return math.inf if math.isinf(v) else float(np.interp(v, knots, vals))

            got = persistence(build_filtration(mapped, SUBLEVEL)).multiset()
            want = sorted((dim, f(b), f(x)) for dim, b, x in base)
            if got != want:
                failures += 1
    verdict(3, failures == 0, f"equivariance over 20 images x 5 maps, {failures} failures")


def test_criterion_04_stability(warm_engine):
    rng = np.random.default_rng(104)
    worst = 0.0
    failures = 0
    for i in range(20):
        shape = tuple(rng.integers(4, 8, size=2)) if i % 2 == 0 else tuple(
            rng.integers(3, 5, size=3)
        )
        img = random_image(rng, shape, levels=5)
        delta = rng.integers(-1, 2, size=shape) * 0.04
        other = GrayImage(np.clip(img.data + delta, 0.0, 1.0))
        eps = float(np.abs(img.data - other.data).max())
        d1 = persistence(build_filtration(img, SUBLEVEL))
        d2 = persistence(build_filtration(other, SUBLEVEL))
        for dim in range(len(shape)):
            b = bottleneck_distance(d1, d2, dim)
            worst = max(worst, b - eps)
            if b > eps + 1e-9:
                failures += 1
    verdict(4, failures == 0, f"stability on 20 pairs, worst excess {worst:.2e}")


def test_criterion_05_brain_phantom(warm_engine):
    start = time.perf_counter()
    flair, t1ce, truth = make_brain_phantom(PhantomSpec("brain"))
    crisp = evaluate_labelmap(
        segment_glioblastoma(flair, t1ce, PipelineConfig()).labels, truth
    )
    flair, t1ce, truth = make_brain_phantom(
        PhantomSpec("brain", noise_sigma=0.02, seed=7, render_margin=2)
    )
    noisy = evaluate_labelmap(
        segment_glioblastoma(flair, t1ce, brain_config()).labels, truth
    )
    elapsed = time.perf_counter() - start
    classes = ("ET", "TC", "ED")
    ok = (
        all(crisp[c] >= 0.98 for c in classes)
        and all(noisy[c] >= 0.90 for c in classes)
        and elapsed < 120.0
    )
    detail = (
        "brain Dice crisp "
        + "/".join(f"{crisp[c]:.3f}" for c in classes)
        + " noisy "
        + "/".join(f"{noisy[c]:.3f}" for c in classes)
        + f", {elapsed:.1f}s"
    )
    verdict(5, ok, detail)


def test_criterion_06_cardiac_phantoms(warm_engine):
    cfg = cardiac_config(sigma=0.0, dilation_radius=0)
    img2, truth2 = make_cardiac_phantom(PhantomSpec("cardiac"), "2d")
    s2 = evaluate_labelmap(segment_cardiac_2d(img2, cfg).labels, truth2)
    img3, truth3 = make_cardiac_phantom(PhantomSpec("cardiac"), "3d")
    s3 = evaluate_labelmap(segment_cardiac_3d(img3, cfg).labels, truth3)
    gap_img, gap_truth = make_cardiac_phantom(
        PhantomSpec("cardiac", violation="axial_gap"), "3d"
    )
    r0 = check_acdc(gap_truth, gap_img, "3d", myo_dilation_radius=0)
    r1 = check_acdc(gap_truth, gap_img, "3d", myo_dilation_radius=1)
    classes = ("LV", "RV", "Myo")
    ok = (
        all(s2[c] >= 0.85 for c in classes)
        and all(s3[c] >= 0.80 for c in classes)
        and not r0.result("H2_two_components").passed
        and r1.result("H2_two_components").passed
    )
    detail = (
        "cardiac Dice 2D "
        + "/".join(f"{s2[c]:.3f}" for c in classes)
        + " 3D "
        + "/".join(f"{s3[c]:.3f}" for c in classes)
        + f", gap H2' radius0={r0.result('H2_two_components').passed}"
        f" radius1={r1.result('H2_two_components').passed}"
    )
    verdict(6, ok, detail)


def test_criterion_07_fetal_phantoms(warm_engine):
    cfg = fetal_config(sigma=0.0)
    vol, truth = make_fetal_phantom(PhantomSpec("fetal"), ("one", "two", "none"))
    res = segment_fetal_volume(vol, cfg)
    kinds = [s.kind for s in res.slices]
    score = dice(res.mask, truth)
    arc_vol, _ = make_fetal_phantom(PhantomSpec("fetal", violation="open_arc"), ("one",))
    arc_res = segment_fetal_volume(arc_vol, cfg)
    arc_sta = check_sta(BinaryMask(arc_vol.data[:, :, 0] < 0.5))
    ok = (
        kinds == ["i", "ii", "none"]
        and score >= 0.90
        and arc_res.mask.empty
        and not arc_sta.overall
    )
    verdict(7, ok, f"fetal kinds {kinds}, Dice {score:.3f}, open-arc empty={arc_res.mask.empty}")


def test_criterion_08_hypothesis_checkers(warm_engine):
    results = {}
    flair, t1ce, truth = make_brain_phantom(PhantomSpec("brain"))
    results["brats_valid"] = check_brats(truth, flair, t1ce).overall
    img2, truth2 = make_cardiac_phantom(PhantomSpec("cardiac"), "2d")
    results["acdc_valid_2d"] = check_acdc(truth2, img2, "2d").overall
    img3, truth3 = make_cardiac_phantom(PhantomSpec("cardiac"), "3d")
    results["acdc_valid_3d"] = check_acdc(truth3, img3, "3d").overall
    _, ftruth = make_fetal_phantom(PhantomSpec("fetal"), ("one",))
    results["sta_valid"] = check_sta(BinaryMask(ftruth.data[:, :, 0])).overall

    def flipped(report, target):
        return [r.name for r in report.results if not r.passed] == [target]

    flair, t1ce, truth = make_brain_phantom(PhantomSpec("brain", violation="perforated_shell"))
    results["perforated_flips_split"] = flipped(check_brats(truth, flair, t1ce), "H2_et_split")
    flair, t1ce, truth = make_brain_phantom(PhantomSpec("brain", violation="solid_core"))
    results["solid_core_flips_brightest"] = flipped(
        check_brats(truth, flair, t1ce), "H2_t1ce_brightest"
    )
    gimg, gtruth = make_cardiac_phantom(PhantomSpec("cardiac", violation="axial_gap"), "3d")
    r0 = check_acdc(gtruth, gimg, "3d", myo_dilation_radius=0)
    results["axial_gap_flips_h2"] = not r0.result("H2_two_components").passed
    avol, _ = make_fetal_phantom(PhantomSpec("fetal", violation="open_arc"), ("one",))
    results["open_arc_fails_sta"] = not check_sta(
        BinaryMask(avol.data[:, :, 0] < 0.5)
    ).overall
    ok = all(results.values())
    verdict(8, ok, "checkers " + ", ".join(f"{k}={v}" for k, v in results.items()))


def test_criterion_09_determinism(warm_engine, tmp_path):
    flair, t1ce, _ = make_brain_phantom(
        PhantomSpec("brain", noise_sigma=0.02, seed=7, render_margin=2)
    )
    cfg = brain_config()
    serial = segment_glioblastoma(flair, t1ce, cfg)
    repeat = segment_glioblastoma(flair, t1ce, cfg)
    with ThreadPoolExecutor(max_workers=2) as pool:
        futures = [
            pool.submit(segment_glioblastoma, flair, t1ce, cfg) for _ in range(2)
        ]
        threaded = [f.result() for f in futures]
    same_pipeline = all(
        np.array_equal(serial.labels.data, other.labels.data)
        for other in [repeat] + threaded
    )

    spec = tmp_path / "c.txt"
    spec.write_text("task = cardiac\n")
    ph = tmp_path / "ph"
    assert cli_main(["phantom", str(spec), "--out", str(ph)]) == 0
    artifacts = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        code = cli_main(
            ["segment", "cardiac2d", str(ph / "image.nii.gz"), "--out", str(out),
             "--sigma", "0", "--dilation-radius", "0"]
        )
        assert code == 0
        artifacts.append(
            {
                f: (out / f).read_bytes()
                for f in ("labels.nii.gz", "report.txt", "diagram.csv", "diagram.svg")
            }
        )
    same_cli = artifacts[0] == artifacts[1]
    verdict(9, same_pipeline and same_cli, f"pipeline identical={same_pipeline}, CLI identical={same_cli}")


def test_criterion_10_performance(warm_engine):
    rng = np.random.default_rng(110)
    img2 = random_image(rng, (256, 256), levels=64)
    start = time.perf_counter()
    persistence(build_filtration(img2, SUBLEVEL))
    t2 = time.perf_counter() - start
    img3 = random_image(rng, (128, 128, 128), levels=64)
    start = time.perf_counter()
    persistence(build_filtration(img3, SUBLEVEL))
    t3 = time.perf_counter() - start
    ok = t2 < 1.0 and t3 < 60.0
    verdict(10, ok, f"256x256 in {t2:.2f}s (<1s), 128^3 in {t3:.1f}s (<60s)")


@pytest.mark.skipif(
    "TOPSEG_BRATS_FLAIR" not in os.environ or "TOPSEG_BRATS_T1CE" not in os.environ,
    reason="set TOPSEG_BRATS_FLAIR / TOPSEG_BRATS_T1CE to run on a real case",
)
def test_criterion_11_optional_brats_case(warm_engine):
    from topseg.nifti_io import load_image

    flair = load_image(os.environ["TOPSEG_BRATS_FLAIR"])
    t1ce = load_image(os.environ["TOPSEG_BRATS_T1CE"])
    result = segment_glioblastoma(flair, t1ce, brain_config())
    keys = [k for k, _ in result.report.entries]
    ok = all(k in keys for k in ("t_star", "geo_point")) and result.labels.data.max() >= 1
    verdict(11, ok, "real case completed with staged report")
