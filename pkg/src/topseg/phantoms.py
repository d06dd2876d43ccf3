"""Synthetic phantoms with analytically known ground truth, plus Dice metrics.

Each generator renders simple radial geometry (balls, shells, tubes, annuli)
whose class masks are exact by construction, so end-to-end pipeline runs can
be scored without reference datasets. Violation knobs reproduce documented
failure modes (open shells, missing structures, axial gaps, open arcs) with
a deterministic trigger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ImageError
from .grid import (
    BRAIN_CLASSES,
    CARDIAC_CLASSES,
    BinaryMask,
    GrayImage,
    LabelMap,
)

VIOLATIONS = (
    "none",
    "perforated_shell",
    "solid_core",
    "missing_rv",
    "axial_gap",
    "open_arc",
)

_DEFAULT_DIMS = {
    "brain": (64, 64, 64),
    "cardiac2d": (96, 96),
    "cardiac3d": (96, 96, 12),
    "fetal": (128, 64),
}

# task -> default radii: brain (tc, et, ed, tissue); cardiac (lv, myo outer,
# rv); fetal (annulus inner, annulus outer)
_DEFAULT_RADII = {
    "brain": (10.0, 16.0, 22.0, 30.0),
    "cardiac": (12.0, 17.0, 11.0),
    "fetal": (27.0, 31.0),
}


@dataclass(frozen=True)
class PhantomSpec:
    """Reproducible phantom description.

    ``render_margin`` shrinks rendered bright structures by that many voxels
    and replaces plateaus with decaying ridge profiles, so that a grayscale
    dilation of the same radius during preprocessing restores the true
    boundaries; 0 renders crisp geometry for preprocessing-free runs.
    """

    task: str  # brain | cardiac | fetal
    dims: Tuple[int, ...] = ()
    radii: Tuple[float, ...] = ()
    noise_sigma: float = 0.0
    violation: str = "none"
    gap_width: int = 1
    seed: int = 0
    render_margin: int = 0

    def __post_init__(self):
        if self.task not in ("brain", "cardiac", "fetal"):
            raise ConfigError(f"unknown phantom task {self.task!r}")
        if self.violation not in VIOLATIONS:
            raise ConfigError(f"unknown violation {self.violation!r}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if self.render_margin < 0:
            raise ConfigError("render_margin must be nonnegative")
        if self.gap_width < 1:
            raise ConfigError("gap_width must be >= 1")
        if self.radii and any(r <= 0 for r in self.radii):
            raise ConfigError("radii must be positive")


def _radii(spec: PhantomSpec, count: int) -> Tuple[float, ...]:
    radii = spec.radii or _DEFAULT_RADII[spec.task]
    if len(radii) != count:
        raise ConfigError(f"{spec.task} phantom needs {count} radii, got {len(radii)}")
    return radii


def _add_noise(data: np.ndarray, rng: np.random.Generator, sigma: float) -> np.ndarray:
    if sigma == 0:
        return data
    return np.clip(data + rng.normal(0.0, sigma, data.shape), 0.0, 1.0)


def _radial(dims: Sequence[int], center: Sequence[float]) -> np.ndarray:
    grids = np.indices(dims, dtype=np.float64)
    return np.sqrt(sum((g - c) ** 2 for g, c in zip(grids, center)))


# ---------------------------------------------------------------------------
# brain


def make_brain_phantom(spec: PhantomSpec) -> Tuple[GrayImage, GrayImage, LabelMap]:
    """Concentric tumor phantom: TC ball, ET shell, ED shell, tissue shell.

    The FLAIR channel is brightest at the center and decays quadratically
    across the whole tumor, with a large uniform tissue shell providing a
    sharp count-curve onset just past the tumor intensities. The T1ce channel
    carries the enhancing shell as its brightest structure.
    """
    if spec.task != "brain":
        raise ConfigError("spec.task must be 'brain'")
    dims = spec.dims or _DEFAULT_DIMS["brain"]
    if len(dims) != 3:
        raise ConfigError("brain phantom is rank 3")
    tc, et, ed, tis = _radii(spec, 4)
    if not 0 < tc < et < ed < tis:
        raise ConfigError("brain radii must satisfy 0 < tc < et < ed < tissue")
    center = tuple(d // 2 for d in dims)
    if any(c - tis < 0 or c + tis > d - 1 for c, d in zip(center, dims)):
        raise ConfigError("tissue shell does not fit inside dims")
    m = spec.render_margin
    if 2 * m >= et - tc:
        raise ConfigError("render_margin too large for the ET shell thickness")

    r = _radial(dims, center)
    shell = (r > tc) & (r <= et)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_polar = (np.indices(dims)[2] - center[2]) / np.where(r > 0, r, 1.0)

    # Margin-rendered structures shrink one extra voxel: the blur rounds off
    # roughly a voxel of each plateau edge before the dilation restores it.
    edge = m + 1.0 if m else 0.0

    flair = np.full(dims, 0.05)
    flair[r <= tis] = 0.35
    wt = r <= ed - edge
    flair[wt] = 0.9 - 0.45 * (r[wt] / ed) ** 2

    t1ce = np.full(dims, 0.05)
    t1ce[r <= tis] = 0.35
    t1ce[r <= ed] = 0.2
    mid = (tc + et) / 2.0
    half = (et - tc) / 2.0 - m + (1.0 if m else 0.0)
    t1ce[shell] = 0.9 - 0.15 * np.maximum(0.0, np.abs(r[shell] - mid) - half)
    # A slightly dimmer polar window sets the level at which the enhancing
    # shell closes, keeping the rest of the (possibly noisy) shell safely
    # above the closure level.
    window = shell & (cos_polar < -math.cos(0.35))
    t1ce[window] = np.minimum(t1ce[window], 0.86)
    core_value = 0.92 if spec.violation == "solid_core" else 0.3
    t1ce[r <= tc] = core_value

    labels = np.zeros(dims, dtype=np.uint8)
    labels[(r > et) & (r <= ed)] = 3  # ED
    labels[r <= tc] = 2  # TC
    labels[shell] = 1  # ET

    if spec.violation == "perforated_shell":
        # Carve a polar cap out of the enhancing shell; the hole is wide
        # enough that two radius-1 dilations cannot close it.
        cap = shell & (cos_polar > math.cos(0.45))
        t1ce[cap] = 0.2
        labels[cap] = 3

    rng = np.random.default_rng(spec.seed)
    flair = _add_noise(flair, rng, spec.noise_sigma)
    t1ce = _add_noise(t1ce, rng, spec.noise_sigma)
    return GrayImage(flair), GrayImage(t1ce), LabelMap(labels, BRAIN_CLASSES)


# ---------------------------------------------------------------------------
# cardiac


def make_cardiac_phantom(spec: PhantomSpec, mode: str = "2d") -> Tuple[GrayImage, LabelMap]:
    """Short-axis phantom: bright LV disk, dark Myo annulus, bright RV crescent.

    The RV cross-section is a disk clipped against the myocardium's outer
    circle, so it hugs the annulus without being disk-shaped itself. In 3D
    the same geometry extends along the last axis as a tube.
    """
    if spec.task != "cardiac":
        raise ConfigError("spec.task must be 'cardiac'")
    if mode not in ("2d", "3d"):
        raise ConfigError(f"mode must be '2d' or '3d', got {mode!r}")
    dims = spec.dims or _DEFAULT_DIMS[f"cardiac{mode}"]
    if len(dims) != (2 if mode == "2d" else 3):
        raise ConfigError(f"cardiac {mode} phantom has rank {2 if mode == '2d' else 3}")
    lv_r, myo_r, rv_r = _radii(spec, 3)
    if not 0 < lv_r < myo_r:
        raise ConfigError("cardiac radii must satisfy 0 < lv < myo outer")
    plane = dims[:2]
    c_lv = (plane[0] // 2 - 8, plane[1] // 2)
    d_rv = myo_r + rv_r - 4.0  # crescent depth 4 against the annulus
    c_rv = (c_lv[0] + d_rv, c_lv[1])
    if (
        c_lv[0] - myo_r < 0
        or c_lv[1] - myo_r < 0
        or c_lv[1] + myo_r > plane[1] - 1
        or c_rv[0] + rv_r > plane[0] - 1
    ):
        raise ConfigError("cardiac geometry does not fit inside dims")

    r1 = _radial(plane, c_lv)
    r2 = _radial(plane, c_rv)
    img2 = np.full(plane, 0.35)
    img2[(r1 > lv_r) & (r1 <= myo_r)] = 0.15
    img2[r1 <= lv_r] = 0.95
    rv2 = (r2 <= rv_r) & (r1 > myo_r)
    lab2 = np.zeros(plane, dtype=np.uint8)
    lab2[(r1 > lv_r) & (r1 <= myo_r)] = 3  # Myo
    lab2[r1 <= lv_r] = 1  # LV
    if spec.violation == "missing_rv":
        # A tiny distant speck keeps a second H0 candidate available so the
        # failure is the dilation cap, not candidate scarcity.
        speck = _radial(plane, (12, 12)) <= 2.0
        img2[speck] = 0.7
    else:
        img2[rv2] = 0.8
        lab2[rv2] = 2  # RV

    if mode == "2d":
        img, lab = img2, lab2
    else:
        img = np.repeat(img2[:, :, None], dims[2], axis=2)
        lab = np.repeat(lab2[:, :, None], dims[2], axis=2)
        if spec.violation == "axial_gap":
            z0 = dims[2] // 2
            if z0 < 1 or z0 + spec.gap_width > dims[2] - 1:
                raise ConfigError("axial gap must leave intact slices on both sides")
            ring = (r1 > lv_r) & (r1 <= myo_r)
            for z in range(z0, z0 + spec.gap_width):
                # the ventricle bleeds through the missing annulus and
                # touches RV in the gap slices
                img[:, :, z][ring] = 0.95
                lab[:, :, z][ring] = 1

    rng = np.random.default_rng(spec.seed)
    img = _add_noise(img, rng, spec.noise_sigma)
    return GrayImage(img), LabelMap(lab, CARDIAC_CLASSES)


# ---------------------------------------------------------------------------
# fetal


def make_fetal_phantom(
    spec: PhantomSpec, slices: Sequence[str] = ("one",)
) -> Tuple[GrayImage, BinaryMask]:
    """Stack of slices holding dark annuli on a bright background.

    Per-slice kinds: "one" (single annulus), "two" (two disjoint annuli of
    identical intensity), "arc" (open circular arcs), "none" (background
    only). The ``open_arc`` violation forces every ring into an arc.
    """
    if spec.task != "fetal":
        raise ConfigError("spec.task must be 'fetal'")
    plane = spec.dims or _DEFAULT_DIMS["fetal"]
    if len(plane) != 2:
        raise ConfigError("fetal phantom dims describe a 2D slice")
    inner, outer = _radii(spec, 2)
    if not 0 < inner < outer:
        raise ConfigError("fetal radii must satisfy 0 < inner < outer")
    centers = ((plane[0] // 4, plane[1] // 2), (3 * plane[0] // 4, plane[1] // 2))
    for c in centers:
        if c[0] - outer < 0 or c[0] + outer > plane[0] - 1 or c[1] - outer < 0 or c[1] + outer > plane[1] - 1:
            raise ConfigError("fetal annuli do not fit inside dims")
    for kind in slices:
        if kind not in ("one", "two", "arc", "none"):
            raise ConfigError(f"unknown slice kind {kind!r}")

    def annulus(center, as_arc):
        r = _radial(plane, center)
        ring = (r > inner) & (r <= outer)
        if as_arc:
            xs, ys = np.indices(plane)
            angle = np.arctan2(ys - center[1], xs - center[0])
            ring &= np.abs(angle) > 0.6
        return ring

    dims = (plane[0], plane[1], len(slices))
    vol = np.full(dims, 0.8)
    truth = np.zeros(dims, dtype=bool)
    for z, kind in enumerate(slices):
        if kind == "none":
            continue
        as_arc = spec.violation == "open_arc" or kind == "arc"
        mask = annulus(centers[0], as_arc)
        if kind == "two":
            mask |= annulus(centers[1], as_arc)
        vol[:, :, z][mask] = 0.1
        truth[:, :, z] = mask

    rng = np.random.default_rng(spec.seed)
    vol = _add_noise(vol, rng, spec.noise_sigma)
    return GrayImage(vol), BinaryMask(truth)


# ---------------------------------------------------------------------------
# metrics


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice overlap 2|A∩B|/(|A|+|B|); two empty masks score 1.0."""
    if a.dims != b.dims:
        raise ImageError("dice requires masks of equal dims")
    total = a.count + b.count
    if total == 0:
        return 1.0
    inter = int((a.data & b.data).sum())
    return 2.0 * inter / total


def evaluate_labelmap(pred: LabelMap, truth: LabelMap) -> Dict[str, float]:
    """Per-class Dice plus the macro average.

    For the brain alphabet the union score over all tumor classes is added
    under "WT".
    """
    if pred.alphabet != truth.alphabet:
        raise ImageError("label maps must share an alphabet")
    if pred.dims != truth.dims:
        raise ImageError("label maps must share dims")
    scores = {}
    for name in pred.alphabet:
        scores[name] = dice(pred.class_mask(name), truth.class_mask(name))
    scores["macro"] = float(np.mean([scores[n] for n in pred.alphabet]))
    if pred.alphabet == BRAIN_CLASSES:
        scores["WT"] = dice(pred.foreground(), truth.foreground())
    return scores


# ---------------------------------------------------------------------------
# text spec ingestion (CLI)

_SPEC_KEYS = (
    "task",
    "dims",
    "radii",
    "noise_sigma",
    "violation",
    "gap_width",
    "seed",
    "render_margin",
    "slices",
    "mode",
)


def parse_phantom_text(text: str) -> Tuple[PhantomSpec, dict]:
    """Parse a key=value phantom description.

    Returns (spec, extras) where extras holds the generator arguments that
    are not PhantomSpec fields ("mode" for cardiac, "slices" for fetal).
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _SPEC_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = raw
    if "task" not in values:
        raise ConfigError("phantom spec needs a 'task' line")
    extras = {}
    if "mode" in values:
        extras["mode"] = values.pop("mode")
    if "slices" in values:
        extras["slices"] = tuple(
            s for s in values.pop("slices").replace(",", " ").split() if s
        )
    kwargs = {"task": values.pop("task")}
    try:
        if "dims" in values:
            kwargs["dims"] = tuple(int(v) for v in values.pop("dims").replace(",", " ").split())
        if "radii" in values:
            kwargs["radii"] = tuple(float(v) for v in values.pop("radii").replace(",", " ").split())
        for key, cast in (
            ("noise_sigma", float),
            ("gap_width", int),
            ("seed", int),
            ("render_margin", int),
        ):
            if key in values:
                kwargs[key] = cast(values.pop(key))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if "violation" in values:
        kwargs["violation"] = values.pop("violation")
    return PhantomSpec(**kwargs), extras
