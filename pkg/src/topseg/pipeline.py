"""Three-module segmentation framework and its task instantiations.

Module 1 selects the whole object from the onset of a voxel-count curve,
Module 2 detects the geometric object as the most persistent feature of the
image restricted to the whole object, and Module 3 partitions the rest into
interior and exterior. The task pipelines (glioblastoma, cardiac 2D/3D,
fetal cortical plate) compose these with task-specific candidate selection.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _reduction
from .config import PipelineConfig, brain_config, cardiac_config, fetal_config
from .cubical import (
    SUBLEVEL,
    SUPERLEVEL,
    PersistenceDiagram,
    PersistencePoint,
    build_filtration,
    component_at,
    persistence,
    persistence_h0,
)
from .errors import NoOnsetError, PipelineError
from .grid import (
    BRAIN_CLASSES,
    CARDIAC_CLASSES,
    BinaryMask,
    GrayImage,
    LabelMap,
    extract_slice,
    linear_index,
    normalize01,
    pad_black_caps,
)
from .morphology import (
    StructuringBall,
    binary_dilate,
    connected_components,
    cylindricality,
    disk_shape_score,
    fill_holes,
    gaussian_blur,
    grey_dilate,
    largest_component,
)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class RunReport:
    """Structured text run report: ordered key/value entries plus flags."""

    entries: List[Tuple[str, str]] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    def add(self, key: str, value) -> None:
        self.entries.append((key, str(value)))

    def flag(self, name: str) -> None:
        if name not in self.flags:
            self.flags.append(name)

    def render(self) -> str:
        lines = [f"{k}: {v}" for k, v in self.entries]
        lines.append("flags: " + (", ".join(self.flags) if self.flags else "none"))
        return "\n".join(lines) + "\n"


class _Timer:
    def __init__(self, report: RunReport):
        self.report = report
        self._t0 = time.perf_counter()

    def lap(self, stage: str) -> None:
        t1 = time.perf_counter()
        self.report.add(f"time_{stage}_s", f"{t1 - self._t0:.3f}")
        self._t0 = t1


def _fmt_point(p: PersistencePoint) -> str:
    death = "inf" if p.essential else f"{p.death:.6g}"
    return f"H{p.dim} birth={p.birth:.6g} death={death} at {p.birth_voxel}"


# ---------------------------------------------------------------------------
# voxel-count curves


@dataclass(frozen=True)
class VoxelCountCurve:
    """Sampled superlevel voxel counts and their forward-difference derivative.

    ``thresholds`` has T entries; ``derivative[i]`` is the growth rate between
    thresholds[i] and thresholds[i+1].
    """

    thresholds: np.ndarray
    counts: np.ndarray
    derivative: np.ndarray

    def area(self) -> float:
        """Trapezoidal area under the derivative curve (auto threshold)."""
        if self.derivative.size < 2:
            return 0.0
        return float(_trapezoid(self.derivative, self.thresholds[:-1]))


def global_count_curve(img: GrayImage, cfg: PipelineConfig) -> VoxelCountCurve:
    """Superlevel frame sizes at T uniform samples of [0, 1]."""
    filt = build_filtration(img, SUPERLEVEL)
    heights = np.sort(filt.height_field.ravel())
    ts = np.linspace(0.0, 1.0, cfg.curve_samples)
    counts = np.searchsorted(heights, ts, side="right").astype(np.int64)
    deriv = np.diff(counts) / (ts[1] - ts[0])
    return VoxelCountCurve(ts, counts, deriv)


def localized_count_curve(
    img: GrayImage, seed: Sequence[int], cfg: PipelineConfig
) -> Tuple[VoxelCountCurve, float]:
    """Seed-component sizes over superlevel thresholds where the seed is active.

    Returns (curve, t_act) where t_act is the seed's activation threshold.
    """
    filt = build_filtration(img, SUPERLEVEL)
    h = filt.height_field
    seed = tuple(int(c) for c in seed)
    t_act = float(h[seed])
    ts = np.linspace(t_act, 1.0, cfg.curve_samples)
    flat = np.ascontiguousarray(h.ravel(order="F"))
    order = np.argsort(flat, kind="stable")
    shape = np.asarray(h.shape, dtype=np.int64)
    counts = _reduction.component_growth_counts(
        order, flat, shape, linear_index(h.shape, seed), ts
    )
    if ts[-1] > ts[0]:
        deriv = np.diff(counts) / (ts[1] - ts[0])
    else:
        deriv = np.zeros(cfg.curve_samples - 1)
    return VoxelCountCurve(ts, counts, deriv), t_act


# ---------------------------------------------------------------------------
# the three modules


@dataclass(frozen=True)
class OnsetResult:
    t_star: float
    whole: BinaryMask
    curve: VoxelCountCurve
    threshold: float


def module1_global(img: GrayImage, cfg: Optional[PipelineConfig] = None) -> OnsetResult:
    """Whole-object selection from the onset of the voxel-count derivative.

    t_star is one sample before the first threshold sample whose derivative
    exceeds dt_threshold; the whole object is the hole-filled largest
    component of the superlevel frame at t_star.
    """
    cfg = cfg or PipelineConfig()
    curve = global_count_curve(img, cfg)
    thr = curve.area() if cfg.dt_threshold is None else cfg.dt_threshold
    exceed = np.nonzero(curve.derivative > thr)[0]
    if exceed.size == 0:
        raise NoOnsetError("module1", "no onset detected", curve)
    t_star = float(curve.thresholds[max(int(exceed[0]) - 1, 0)])
    frame = build_filtration(img, SUPERLEVEL).frame(t_star)
    if frame.empty:
        raise NoOnsetError("module1", "no onset detected (empty frame at t_star)", curve)
    return OnsetResult(t_star, fill_holes(largest_component(frame)), curve, thr)


@dataclass(frozen=True)
class LocalOnsetResult:
    t_sel: float
    mask: BinaryMask
    curve: VoxelCountCurve
    threshold: float
    fallback: bool


def module1_localized(
    img: GrayImage, seed: Sequence[int], cfg: Optional[PipelineConfig] = None
) -> LocalOnsetResult:
    """Seed-local whole-object selection.

    The component-growth curve starts at the seed's activation threshold;
    the selected level is one sample before the first derivative exceedance.
    When no exceedance occurs the component at the activation level itself is
    returned with ``fallback=True``.
    """
    cfg = cfg or PipelineConfig()
    seed = tuple(int(c) for c in seed)
    curve, t_act = localized_count_curve(img, seed, cfg)
    thr = curve.area() if cfg.dt_threshold is None else cfg.dt_threshold
    exceed = np.nonzero(curve.derivative > thr)[0]
    if exceed.size == 0:
        mask = component_at(img, SUPERLEVEL, t_act, seed)
        return LocalOnsetResult(t_act, mask, curve, thr, True)
    t_sel = float(curve.thresholds[max(int(exceed[0]) - 1, 0)])
    mask = component_at(img, SUPERLEVEL, t_sel, seed)
    return LocalOnsetResult(t_sel, mask, curve, thr, False)


def masked_image(img: GrayImage, whole: BinaryMask, direction: str) -> GrayImage:
    """Set voxels outside the whole object to the filtration-late extreme."""
    if img.dims != whole.dims:
        raise PipelineError("module2", "image and mask dims differ")
    fill = 0.0 if direction == SUPERLEVEL else 1.0
    out = img.data.copy()
    out[~whole.data] = fill
    return GrayImage(out, img.spacing)


@dataclass(frozen=True)
class DetectResult:
    point: PersistencePoint
    geo: BinaryMask
    masked: GrayImage
    diagram: PersistenceDiagram


def _argmax_point(points: List[PersistencePoint], dims) -> PersistencePoint:
    return min(
        points,
        key=lambda p: (-(p.death - p.birth), linear_index(dims, p.birth_voxel)),
    )


def module2_detect(
    img: GrayImage,
    whole: BinaryMask,
    hom_dim: int,
    direction: str,
    stage: str = "module2",
) -> DetectResult:
    """Most persistent degree-``hom_dim`` feature of the masked image.

    ``geo`` is the face-connected component of the birth pixel in the frame
    at the feature's birth level.
    """
    if whole.empty:
        raise PipelineError(stage, "whole object mask is empty")
    masked = masked_image(img, whole, direction)
    diagram = persistence(build_filtration(masked, direction), max_dim=hom_dim)
    cands = [
        p for p in diagram.in_dim(hom_dim) if not (p.essential and hom_dim >= 1)
    ]
    if not cands:
        raise PipelineError(stage, f"no feature in degree {hom_dim}")
    point = _argmax_point(cands, img.dims)
    geo = component_at(masked, direction, point.birth, point.birth_voxel)
    return DetectResult(point, geo, masked, diagram)


@dataclass(frozen=True)
class PartitionResult:
    inside: BinaryMask
    outside: BinaryMask
    no_interior: bool


def module3_partition(whole: BinaryMask, geo: BinaryMask) -> PartitionResult:
    """Split the complement of geo into interior and exterior, within whole.

    Complement components touching the domain boundary belong to the
    exterior; the rest form the interior. Both are intersected with the
    whole object and exclude geo itself.
    """
    if whole.dims != geo.dims:
        raise PipelineError("module3", "whole and geo dims differ")
    comp = ~geo.data
    if not comp.any():
        raise PipelineError("module3", "geometric object covers the whole domain")
    labels, _ = connected_components(BinaryMask(comp))
    n = int(labels.max())
    border = np.zeros(n + 1, dtype=bool)
    for axis in range(geo.rank):
        for idx in (0, geo.dims[axis] - 1):
            border[np.unique(np.take(labels, idx, axis=axis))] = True
    border[0] = True  # label 0 marks geo voxels, which belong to neither side
    inside = BinaryMask(~border[labels] & whole.data)
    outside = BinaryMask(border[labels] & comp & whole.data)
    return PartitionResult(inside, outside, inside.empty)


# ---------------------------------------------------------------------------
# task pipelines


@dataclass(frozen=True)
class SegmentationResult:
    labels: LabelMap
    report: RunReport
    # diagram of the decisive detection step, for export
    diagram: Optional[PersistenceDiagram] = None


def preprocess(img: GrayImage, cfg: PipelineConfig) -> GrayImage:
    """0-1 normalization, Gaussian blur, grayscale ball dilation."""
    out = normalize01(img)
    if cfg.sigma > 0:
        out = gaussian_blur(out, cfg.sigma)
    if cfg.dilation_radius > 0:
        out = grey_dilate(out, StructuringBall(cfg.dilation_radius, out.rank))
    return out


def segment_glioblastoma(
    flair: GrayImage, t1ce: GrayImage, cfg: Optional[PipelineConfig] = None
) -> SegmentationResult:
    """Three-class tumor segmentation {ET, TC, ED}.

    The whole tumor comes from the FLAIR channel (global Module 1), the
    enhancing tumor from the most persistent top-degree superlevel feature of
    the masked T1ce channel, and core/edema from the interior/exterior split.
    """
    cfg = cfg or brain_config()
    if flair.dims != t1ce.dims:
        raise PipelineError("input", "FLAIR and T1ce dims differ")
    report = RunReport()
    timer = _Timer(report)
    pre_flair = preprocess(flair, cfg)
    pre_t1ce = preprocess(t1ce, cfg)
    timer.lap("preprocess")

    m1 = module1_global(pre_flair, cfg)
    report.add("t_star", f"{m1.t_star:.6g}")
    report.add("dt_threshold", f"{m1.threshold:.6g}")
    report.add("whole_voxels", m1.whole.count)
    timer.lap("module1")

    det = module2_detect(pre_t1ce, m1.whole, flair.rank - 1, SUPERLEVEL)
    report.add("geo_point", _fmt_point(det.point))
    report.add("geo_voxels", det.geo.count)
    timer.lap("module2")

    part = module3_partition(m1.whole, det.geo)
    if part.no_interior:
        report.flag("no interior")
    timer.lap("module3")

    out = np.zeros(flair.dims, dtype=np.uint8)
    out[part.outside.data] = 3  # ED
    out[part.inside.data] = 2  # TC
    out[det.geo.data & m1.whole.data] = 1  # ET
    return SegmentationResult(LabelMap(out, BRAIN_CLASSES), report, det.diagram)


def _h0_candidates(pre: GrayImage, limit: int) -> List[PersistencePoint]:
    """Top ``limit`` superlevel H0 points by persistence (essential first)."""
    diagram = persistence_h0(build_filtration(pre, SUPERLEVEL))
    pts = sorted(
        diagram.in_dim(0),
        key=lambda p: (-(p.death - p.birth), linear_index(pre.dims, p.birth_voxel)),
    )
    return pts[:limit]


def _centroid(mask: BinaryMask) -> np.ndarray:
    return np.argwhere(mask.data).mean(axis=0)


def _segment_cardiac(img: GrayImage, cfg: PipelineConfig, mode: str) -> SegmentationResult:
    stage = f"cardiac{mode}"
    report = RunReport()
    timer = _Timer(report)
    pre = preprocess(img, cfg)
    timer.lap("preprocess")

    candidates = _h0_candidates(pre, cfg.top_n_h0_rv)
    if not candidates:
        raise PipelineError(stage, "no H0 candidates")
    local = [module1_localized(pre, p.birth_voxel, cfg) for p in candidates]
    timer.lap("candidates")

    # LV: the most disk-shaped (2D) / cylindrical (3D) of the top-N components.
    if mode == "2d":
        shape_score = disk_shape_score
    else:
        shape_score = lambda m: cylindricality(m, cfg.axis)  # noqa: E731
    n = min(cfg.top_n_h0, len(candidates))
    scores = [shape_score(loc.mask) for loc in local[:n]]
    lv_idx = min(
        range(n),
        key=lambda i: (-scores[i], linear_index(pre.dims, candidates[i].birth_voxel)),
    )
    lv = local[lv_idx].mask
    for i in range(n):
        report.add(
            f"candidate_{i}",
            f"{_fmt_point(candidates[i])} shape_score={scores[i]:.4f}",
        )
    report.add("lv_point", _fmt_point(candidates[lv_idx]))
    if local[lv_idx].fallback:
        report.flag("lv fallback")

    # RV: nearest other candidate component by centroid distance.
    lv_centroid = _centroid(lv)
    rv_idx = None
    rv_dist = math.inf
    for i, loc in enumerate(local):
        if not (loc.mask.data & lv.data).any():
            d = float(np.linalg.norm(_centroid(loc.mask) - lv_centroid))
            if d < rv_dist or (
                d == rv_dist
                and linear_index(pre.dims, candidates[i].birth_voxel)
                < linear_index(pre.dims, candidates[rv_idx].birth_voxel)
            ):
                rv_idx = i
                rv_dist = d
    if rv_idx is None:
        raise PipelineError(stage, "no RV candidate distinct from LV")
    rv = local[rv_idx].mask
    report.add("rv_point", _fmt_point(candidates[rv_idx]))
    report.add("rv_distance", f"{rv_dist:.3f}")
    timer.lap("lv_rv")

    # Whole object: dilate LV until it touches RV, then take the union.
    whole = None
    for radius in range(1, cfg.lv_dilation_max_steps + 1):
        grown = binary_dilate(lv, StructuringBall(radius, pre.rank))
        if (grown.data & rv.data).any():
            whole = grown | rv
            report.add("lv_dilation_radius", radius)
            break
    if whole is None:
        raise PipelineError(stage, "RV unreachable within the dilation cap")
    timer.lap("dilation")

    if mode == "2d":
        det = module2_detect(pre, whole, 1, SUBLEVEL, stage=stage)
        geo = det.geo
        part = module3_partition(whole, geo)
    else:
        # Cap the volume with black slices so the open myocardium tube closes
        # into a void, then detect/partition in the padded domain.
        axis = cfg.axis
        masked = pad_black_caps(masked_image(pre, whole, SUBLEVEL), axis)
        diagram = persistence(build_filtration(masked, SUBLEVEL), max_dim=2)
        cands = [p for p in diagram.in_dim(2) if not p.essential]
        if not cands:
            raise PipelineError(stage, "no feature in degree 2")
        point = _argmax_point(cands, masked.dims)
        geo_p = component_at(masked, SUBLEVEL, point.birth, point.birth_voxel)
        pad = [(0, 0)] * 3
        pad[axis] = (1, 1)
        whole_p = BinaryMask(np.pad(whole.data, pad, mode="constant"))
        part_p = module3_partition(whole_p, geo_p)
        crop = [slice(None)] * 3
        crop[axis] = slice(1, -1)
        crop = tuple(crop)
        det = DetectResult(point, BinaryMask(geo_p.data[crop]), masked, diagram)
        geo = det.geo
        part = PartitionResult(
            BinaryMask(part_p.inside.data[crop]),
            BinaryMask(part_p.outside.data[crop]),
            part_p.no_interior,
        )
    report.add("myo_point", _fmt_point(det.point))
    if part.no_interior:
        report.flag("no interior")
    timer.lap("myo")

    out = np.zeros(pre.dims, dtype=np.uint8)
    out[part.inside.data] = 1  # LV
    out[part.outside.data] = 2  # RV
    out[geo.data & whole.data] = 3  # Myo
    return SegmentationResult(LabelMap(out, CARDIAC_CLASSES), report, det.diagram)


def segment_cardiac_2d(
    img: GrayImage, cfg: Optional[PipelineConfig] = None
) -> SegmentationResult:
    """Short-axis slice segmentation {LV, RV, Myo}."""
    cfg = cfg or cardiac_config()
    if img.rank != 2:
        raise PipelineError("cardiac2d", "expected a 2D slice")
    return _segment_cardiac(img, cfg, "2d")


def segment_cardiac_3d(
    img: GrayImage, cfg: Optional[PipelineConfig] = None
) -> SegmentationResult:
    """Volumetric cardiac segmentation {LV, RV, Myo}."""
    cfg = cfg or cardiac_config()
    if img.rank != 3:
        raise PipelineError("cardiac3d", "expected a 3D volume")
    if img.dims[cfg.axis] < 2:
        raise PipelineError("cardiac3d", "volume too thin along the slicing axis")
    return _segment_cardiac(img, cfg, "3d")


# ---------------------------------------------------------------------------
# fetal cortical plate


@dataclass(frozen=True)
class FetalSliceResult:
    mask: BinaryMask
    kind: str  # "none" | "i" | "ii"
    point: Optional[PersistencePoint]
    partner: Optional[PersistencePoint]
    report: RunReport
    diagram: Optional[PersistenceDiagram] = None


def segment_fetal_slice(
    img: GrayImage, cfg: Optional[PipelineConfig] = None
) -> FetalSliceResult:
    """Cortical plate segmentation of one slice.

    Sublevel H1 points whose enclosed hole covers a fraction of the slice
    within ``fetal_area_bounds`` survive; the selected component is unioned
    with a partner component when another surviving point lies within
    ``fetal_epsilon`` in the diagram plane (the two-circle case).
    """
    cfg = cfg or fetal_config()
    if img.rank != 2:
        raise PipelineError("fetal", "expected a 2D slice")
    report = RunReport()
    timer = _Timer(report)
    pre = preprocess(img, cfg)
    diagram = persistence(build_filtration(pre, SUBLEVEL), max_dim=1)
    timer.lap("diagram")

    area = int(np.prod(pre.dims))
    lo = cfg.fetal_area_bounds[0] * area
    hi = cfg.fetal_area_bounds[1] * area
    surviving = []
    for p in diagram.in_dim(1):
        if p.essential:
            continue
        comp = component_at(pre, SUBLEVEL, p.birth, p.birth_voxel)
        enclosed = (fill_holes(comp) - comp).count
        if lo <= enclosed <= hi:
            surviving.append((p, comp, enclosed))
    report.add("surviving_points", len(surviving))
    timer.lap("filter")

    if not surviving:
        empty = BinaryMask(np.zeros(pre.dims, dtype=bool))
        report.add("kind", "none")
        return FetalSliceResult(empty, "none", None, None, report, diagram)

    def rank_key(item):
        p, _, enclosed = item
        tie = linear_index(pre.dims, p.birth_voxel)
        if cfg.fetal_selector == "largest-area":
            return (-enclosed, tie)
        if cfg.fetal_selector == "earliest-birth":
            return (p.birth, tie)
        return (-(p.death - p.birth), tie)

    best_p, best_comp, best_enclosed = min(surviving, key=rank_key)
    report.add("selected_point", _fmt_point(best_p))
    report.add("enclosed_pixels", best_enclosed)

    partner = None
    partner_comp = None
    partner_dist = math.inf
    for p, comp, _ in surviving:
        if p is best_p:
            continue
        d = math.hypot(p.birth - best_p.birth, p.death - best_p.death)
        if d <= cfg.fetal_epsilon and (
            d < partner_dist
            or (
                d == partner_dist
                and linear_index(pre.dims, p.birth_voxel)
                < linear_index(pre.dims, partner.birth_voxel)
            )
        ):
            partner = p
            partner_comp = comp
            partner_dist = d
    if partner is not None:
        report.add("partner_point", _fmt_point(partner))
        report.add("kind", "ii")
        return FetalSliceResult(
            best_comp | partner_comp, "ii", best_p, partner, report, diagram
        )
    report.add("kind", "i")
    return FetalSliceResult(best_comp, "i", best_p, None, report, diagram)


@dataclass(frozen=True)
class FetalVolumeResult:
    mask: BinaryMask
    slices: Tuple[FetalSliceResult, ...]
    report: RunReport
    # diagram of the first slice carrying a detection, for export
    diagram: Optional[PersistenceDiagram] = None


def segment_fetal_volume(
    vol: GrayImage, cfg: Optional[PipelineConfig] = None, axis: Optional[int] = None
) -> FetalVolumeResult:
    """Per-slice cortical plate segmentation stacked along ``axis``."""
    cfg = cfg or fetal_config()
    if vol.rank != 3:
        raise PipelineError("fetal", "expected a 3D volume")
    axis = cfg.axis if axis is None else axis
    if not 0 <= axis < 3:
        raise PipelineError("fetal", f"axis {axis} out of range")
    report = RunReport()
    out = np.zeros(vol.dims, dtype=bool)
    results = []
    kinds = {"none": 0, "i": 0, "ii": 0}
    for idx in range(vol.dims[axis]):
        res = segment_fetal_slice(extract_slice(vol, axis, idx), cfg)
        results.append(res)
        kinds[res.kind] += 1
        sel = [slice(None)] * 3
        sel[axis] = idx
        out[tuple(sel)] = res.mask.data
    for kind in ("i", "ii", "none"):
        report.add(f"slices_type_{kind}", kinds[kind])
    decisive = next((r.diagram for r in results if r.kind != "none"), None)
    if decisive is None and results:
        decisive = results[0].diagram
    return FetalVolumeResult(BinaryMask(out), tuple(results), report, decisive)
