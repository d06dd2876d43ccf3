"""Morphological hypothesis checkers.

Each segmentation task assumes a shape model of its classes; these checkers
score a (segmentation, image) pair against that model, so inputs can be
stratified into model-valid and model-invalid before aggregating metrics.
Connectivity is face-connectivity throughout, matching the rest of the
package, and brightest-voxel ties go to the smaller Fortran linear index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .grid import BinaryMask, GrayImage, LabelMap
from .morphology import StructuringBall, binary_dilate, connected_components, fill_holes


@dataclass(frozen=True)
class CheckResult:
    """Outcome of a single hypothesis clause with its measured quantities."""

    name: str
    passed: bool
    measured: Dict[str, object] = field(default_factory=dict)

    def render(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        details = " ".join(f"{k}={v}" for k, v in self.measured.items())
        return f"{verdict} {self.name}" + (f"  [{details}]" if details else "")


@dataclass(frozen=True)
class HypothesisReport:
    """Conjunction of per-clause results for one image.

    ``slice_fraction`` is set for slice-aggregated (2D cardiac) checks: the
    fraction of nonempty slices on which every clause holds.
    """

    task: str
    results: Tuple[CheckResult, ...]
    overall: bool
    slice_fraction: Optional[float] = None

    def render(self) -> str:
        lines = [f"task: {self.task}"]
        lines += [r.render() for r in self.results]
        if self.slice_fraction is not None:
            lines.append(f"slice fraction: {self.slice_fraction:.4f}")
        lines.append("overall: " + ("PASS" if self.overall else "FAIL"))
        return "\n".join(lines)

    def result(self, name: str) -> CheckResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


def _report(task: str, results, slice_fraction=None) -> HypothesisReport:
    results = tuple(results)
    return HypothesisReport(
        task=task,
        results=results,
        overall=all(r.passed for r in results),
        slice_fraction=slice_fraction,
    )


def _brightest_index(img: np.ndarray, mask: np.ndarray) -> int:
    """Fortran linear index of the brightest voxel inside ``mask``.

    np.argmax returns the first maximum, which on the Fortran-raveled view
    is the smallest linear index.
    """
    vals = img.ravel(order="F")
    idx = np.flatnonzero(mask.ravel(order="F"))
    return int(idx[np.argmax(vals[idx])])


def _ball(rank: int, radius: int) -> StructuringBall:
    return StructuringBall(radius=radius, rank=rank)


# ---------------------------------------------------------------------------
# glioblastoma


def check_brats(seg: LabelMap, flair: GrayImage, t1ce: GrayImage) -> HypothesisReport:
    """Score a tumor segmentation against the concentric-shell model.

    Clauses: the whole tumor (WT) is essentially one component and not
    overly large relative to TC; the brightest WT voxel sits in TC or ET on
    FLAIR and in ET on T1ce; ET, after two radius-1 binary dilations, splits
    the domain in two; and radius-1 dilations of TC (resp. ED) gain at least
    (resp. at most) half their new voxels inside ET.
    """
    if seg.dims != flair.dims or seg.dims != t1ce.dims:
        raise ValidationError("segmentation and images must share dims")
    wt = seg.foreground()
    if wt.empty:
        raise ValidationError("whole tumor is empty")
    et = seg.class_mask("ET")
    tc = seg.class_mask("TC")
    ed = seg.class_mask("ED")
    rank = seg.rank
    results = []

    _, sizes = connected_components(wt)
    extras_ok = sizes.size == 1 or int(sizes[1]) * 10 <= int(sizes[0])
    results.append(
        CheckResult(
            "H1_wt_components",
            extras_ok,
            {"components": int(sizes.size), "largest": int(sizes[0]),
             "second": int(sizes[1]) if sizes.size > 1 else 0},
        )
    )

    ratio_ok = tc.count > 0 and wt.count <= 50 * tc.count
    results.append(
        CheckResult("H1_wt_tc_ratio", ratio_ok, {"wt": wt.count, "tc": tc.count})
    )

    bf = _brightest_index(flair.data, wt.data)
    in_core = bool(tc.data.ravel(order="F")[bf] or et.data.ravel(order="F")[bf])
    results.append(CheckResult("H1_flair_brightest", in_core, {"voxel": bf}))

    if et.empty:
        results.append(CheckResult("H2_et_split", False, {"components": 0}))
    else:
        et_d = binary_dilate(binary_dilate(et, _ball(rank, 1)), _ball(rank, 1))
        _, comp_sizes = connected_components(et_d.complement())
        results.append(
            CheckResult(
                "H2_et_split", comp_sizes.size == 2, {"components": int(comp_sizes.size)}
            )
        )

    bt = _brightest_index(t1ce.data, wt.data)
    results.append(
        CheckResult("H2_t1ce_brightest", bool(et.data.ravel(order="F")[bt]), {"voxel": bt})
    )

    for name, mask, at_least in (("H3_tc_dilation", tc, True), ("H3_ed_dilation", ed, False)):
        new = binary_dilate(mask, _ball(rank, 1)) - mask
        gained = new.count
        in_et = (new & et).count
        if gained == 0:
            ok = True  # nothing gained, nothing to violate
        elif at_least:
            ok = 2 * in_et >= gained
        else:
            ok = 2 * in_et <= gained
        results.append(CheckResult(name, ok, {"new": gained, "in_et": in_et}))

    return _report("brats", results)


# ---------------------------------------------------------------------------
# cardiac


def _acdc_clauses(seg: LabelMap, img: GrayImage, radius: int):
    lv = seg.class_mask("LV")
    rv = seg.class_mask("RV")
    myo = seg.class_mask("Myo")
    whole = seg.foreground()
    results = []

    _, sizes = connected_components(whole)
    results.append(
        CheckResult("H1_whole_connected", sizes.size == 1, {"components": int(sizes.size)})
    )

    means = {}
    for name, mask in (("LV", lv), ("RV", rv), ("Myo", myo)):
        means[name] = float(img.data[mask.data].mean()) if not mask.empty else None
    darkest = (
        means["Myo"] is not None
        and means["LV"] is not None
        and means["RV"] is not None
        and means["Myo"] < means["LV"]
        and means["Myo"] < means["RV"]
    )
    results.append(
        CheckResult(
            "H1_myo_darkest",
            darkest,
            {k: (round(v, 4) if v is not None else "n/a") for k, v in means.items()},
        )
    )

    myo_d = binary_dilate(myo, _ball(seg.rank, radius)) if radius else myo
    _, cavity_sizes = connected_components(whole - myo_d)
    results.append(
        CheckResult(
            "H2_two_components",
            cavity_sizes.size == 2,
            {"components": int(cavity_sizes.size), "radius": radius},
        )
    )

    # The myocardium is a tube open at the axial ends, so its "inner side"
    # only makes sense short-axis plane by plane.
    if seg.rank == 2:
        inner = fill_holes(myo_d) - myo_d
    else:
        planes = [
            fill_holes(BinaryMask(myo_d.data[:, :, z])).data
            for z in range(seg.dims[2])
        ]
        inner = BinaryMask(np.stack(planes, axis=2)) - myo_d
    lv_out = lv - myo_d
    contained = lv_out.empty or (lv_out - inner).empty
    results.append(
        CheckResult(
            "H3_lv_inner",
            contained,
            {"lv_outside_myo": lv_out.count, "uncovered": (lv_out - inner).count},
        )
    )
    return results


def check_acdc(
    seg: LabelMap, img: GrayImage, mode: str, myo_dilation_radius: int = 1
) -> HypothesisReport:
    """Score a cardiac segmentation against the ventricle/annulus model.

    Clauses: the whole object is connected and the myocardium is its darkest
    class; removing the (optionally dilated) myocardium leaves exactly the
    two ventricle cavities; and the enclosed side of the myocardium covers
    LV. In "2d" mode a 3D segmentation is checked slice by slice along the
    last axis and the passing fraction over nonempty slices is reported;
    "3d" checks the volume globally.
    """
    if mode not in ("2d", "3d"):
        raise ValidationError(f"mode must be '2d' or '3d', got {mode!r}")
    if seg.dims != img.dims:
        raise ValidationError("segmentation and image must share dims")
    if myo_dilation_radius < 0:
        raise ValidationError("myo_dilation_radius must be nonnegative")
    for name in ("LV", "RV", "Myo"):
        if seg.class_mask(name).empty:
            raise ValidationError(f"class {name} is empty")

    if mode == "3d" or seg.rank == 2:
        if mode == "3d" and seg.rank != 3:
            raise ValidationError("3d mode requires a rank-3 segmentation")
        results = _acdc_clauses(seg, img, myo_dilation_radius)
        return _report("acdc", results)

    # 2d mode on a volume: aggregate clause-by-clause over nonempty slices
    names = ("H1_whole_connected", "H1_myo_darkest", "H2_two_components", "H3_lv_inner")
    passes = {n: 0 for n in names}
    slices_ok = 0
    nonempty = 0
    for z in range(seg.dims[2]):
        plane = seg.data[:, :, z]
        if not plane.any():
            continue
        nonempty += 1
        sub = _acdc_clauses(
            LabelMap(plane, seg.alphabet),
            GrayImage(img.data[:, :, z]),
            myo_dilation_radius,
        )
        for r in sub:
            passes[r.name] += int(r.passed)
        slices_ok += int(all(r.passed for r in sub))
    if nonempty == 0:
        raise ValidationError("no nonempty slices to check")
    results = [
        CheckResult(n, passes[n] == nonempty, {"slices_passing": passes[n], "slices": nonempty})
        for n in names
    ]
    return _report("acdc", results, slice_fraction=slices_ok / nonempty)


# ---------------------------------------------------------------------------
# fetal


def check_sta(cp_slice: BinaryMask) -> HypothesisReport:
    """Check that a cortical-plate slice encloses one or two regions.

    Complement components that touch the border count as background and
    components smaller than a hundredth of the slice count as noise; the
    remainder must number one or two.
    """
    if cp_slice.rank != 2:
        raise ValidationError("check_sta expects a 2D slice")
    labels, sizes = connected_components(cp_slice.complement())
    area = int(np.prod(cp_slice.dims))
    border = set()
    for axis in range(2):
        for idx in (0, cp_slice.dims[axis] - 1):
            border.update(int(v) for v in np.unique(np.take(labels, idx, axis=axis)))
    border.discard(0)
    kept = [
        int(s)
        for lab, s in enumerate(sizes, start=1)
        if lab not in border and 100 * int(s) >= area
    ]
    count = len(kept)
    result = CheckResult(
        "H2_enclosed_regions", count in (1, 2), {"count": count, "sizes": tuple(kept)}
    )
    return _report("sta", [result])
