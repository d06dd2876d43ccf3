"""Command-line front end.

Subcommands:
  segment   run a task pipeline, write labels + report + diagram + manifest
  ph        compute the persistence diagram of an image
  validate  score a segmentation against its task's shape model
  eval      per-class Dice between two label maps
  phantom   generate a synthetic phantom from a text spec

Exit codes: 0 success, 1 pipeline or model failure, 2 usage/config error.
A config file can be set per invocation with --config or globally through
the TOPSEG_CONFIG environment variable; individual settings are overridable
with flags of the same name. Stage timings go to the manifest only, so all
other artifacts are bit-identical across reruns.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import List, Optional, Tuple

from . import __version__
from .config import PRESETS, PipelineConfig, load_config, parse_config_text
from .cubical import SUBLEVEL, SUPERLEVEL, build_filtration, persistence
from .errors import ConfigError, PipelineError, TopsegError
from .grid import (
    BRAIN_CLASSES,
    CARDIAC_CLASSES,
    FETAL_CLASSES,
    BinaryMask,
    GrayImage,
    LabelMap,
    extract_slice,
)
from .nifti_io import load_image, save_nifti
from .phantoms import (
    evaluate_labelmap,
    make_brain_phantom,
    make_cardiac_phantom,
    make_fetal_phantom,
    parse_phantom_text,
)
from .pipeline import (
    RunReport,
    segment_cardiac_2d,
    segment_cardiac_3d,
    segment_fetal_slice,
    segment_fetal_volume,
    segment_glioblastoma,
)
from .validation import check_acdc, check_brats, check_sta

ENV_CONFIG = "TOPSEG_CONFIG"
_DIRECTIONS = {"sub": SUBLEVEL, "super": SUPERLEVEL}


# ---------------------------------------------------------------------------
# helpers


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="config file (key = value lines)")
    group = parser.add_argument_group("config overrides")
    for f in fields(PipelineConfig):
        group.add_argument(
            "--" + f.name.replace("_", "-"),
            dest="cfg_" + f.name,
            metavar="V",
            help=f"override {f.name}",
        )


def _resolve_config(args, task: Optional[str] = None) -> PipelineConfig:
    cfg = PRESETS[task]() if task in PRESETS else PipelineConfig()
    path = args.config or os.environ.get(ENV_CONFIG)
    if path:
        cfg = load_config(path, cfg)
    overrides = [
        f"{f.name} = {getattr(args, 'cfg_' + f.name)}"
        for f in fields(PipelineConfig)
        if getattr(args, "cfg_" + f.name, None) is not None
    ]
    if overrides:
        cfg = parse_config_text("\n".join(overrides), cfg)
    return cfg


def _parse_slice(text: str) -> Tuple[int, int]:
    try:
        axis, index = text.split(":", 1)
        return int(axis), int(index)
    except ValueError as exc:
        raise ConfigError(f"--slice expects AXIS:INDEX, got {text!r}") from exc


def _load_gray(path) -> GrayImage:
    img = load_image(path)
    if not isinstance(img, GrayImage):
        raise ConfigError(f"{path}: expected a grayscale image, found a label map")
    return img


def _load_labels(path, alphabet: Tuple[str, ...]) -> LabelMap:
    img = load_image(path)
    if not isinstance(img, LabelMap):
        raise ConfigError(f"{path}: expected a label map")
    if img.alphabet != alphabet:
        raise ConfigError(
            f"{path}: expected alphabet {','.join(alphabet)}, got {','.join(img.alphabet)}"
        )
    return img


def _split_report(report: RunReport) -> Tuple[RunReport, dict]:
    """Move stage timings out of the report so artifacts stay reproducible."""
    timings = {k: float(v) for k, v in report.entries if k.startswith("time_")}
    kept = RunReport(
        [(k, v) for k, v in report.entries if not k.startswith("time_")],
        list(report.flags),
    )
    return kept, timings


def _write_manifest(out_dir: Path, args, inputs, outputs, timings, digest=None) -> Path:
    manifest = {
        "command": args.command,
        "version": __version__,
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(p) for p in outputs),
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    if digest is not None:
        manifest["config_digest"] = digest
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_diagram(out_dir: Path, diagram) -> List[Path]:
    csv_path = out_dir / "diagram.csv"
    svg_path = out_dir / "diagram.svg"
    csv_path.write_text(diagram.to_csv())
    svg_path.write_text(diagram.to_svg())
    return [csv_path, svg_path]


# ---------------------------------------------------------------------------
# subcommands


def cmd_segment(args) -> int:
    cfg = _resolve_config(args, args.task)
    out = _out_dir(args)
    if args.task == "brain":
        if len(args.inputs) != 2:
            raise ConfigError("brain task needs two inputs: FLAIR and T1ce")
        flair = _load_gray(args.inputs[0])
        t1ce = _load_gray(args.inputs[1])
        result = segment_glioblastoma(flair, t1ce, cfg)
        labels, report, diagram = result.labels, result.report, result.diagram
    else:
        if len(args.inputs) != 1:
            raise ConfigError(f"{args.task} task needs exactly one input image")
        img = _load_gray(args.inputs[0])
        if args.slice is not None:
            axis, index = _parse_slice(args.slice)
            img = extract_slice(img, axis, index)
        if args.task == "cardiac2d":
            if img.rank != 2:
                raise ConfigError("expected 2D input (pass --slice AXIS:INDEX to pick a slice)")
            result = segment_cardiac_2d(img, cfg)
            labels, report, diagram = result.labels, result.report, result.diagram
        elif args.task == "cardiac3d":
            result = segment_cardiac_3d(img, cfg)
            labels, report, diagram = result.labels, result.report, result.diagram
        else:  # fetal
            if img.rank == 2:
                res = segment_fetal_slice(img, cfg)
            else:
                res = segment_fetal_volume(img, cfg)
            labels = LabelMap(res.mask.data.astype(int), FETAL_CLASSES)
            report, diagram = res.report, res.diagram

    report, timings = _split_report(report)
    outputs = []
    labels_path = out / "labels.nii.gz"
    save_nifti(labels, labels_path)
    outputs.append(labels_path)
    report_path = out / "report.txt"
    report_path.write_text(report.render())
    outputs.append(report_path)
    if diagram is not None:
        outputs += _write_diagram(out, diagram)
    outputs.append(_write_manifest(out, args, args.inputs, outputs, timings, cfg.digest()))
    print(f"wrote {labels_path}")
    for line in report.render().splitlines():
        print(line)
    return 0


def cmd_ph(args) -> int:
    img = _load_gray(args.input)
    out = _out_dir(args)
    maxdim = args.maxdim if args.maxdim is not None else img.rank - 1
    if maxdim > img.rank - 1:
        print(
            f"warning: maxdim {maxdim} exceeds top degree {img.rank - 1}; clamping",
            file=sys.stderr,
        )
        maxdim = img.rank - 1
    if maxdim < 0:
        raise ConfigError("maxdim must be nonnegative")
    diagram = persistence(build_filtration(img, _DIRECTIONS[args.direction]), max_dim=maxdim)
    outputs = _write_diagram(out, diagram)
    outputs.append(_write_manifest(out, args, [args.input], outputs, {}))
    print(f"{len(diagram.points)} points, wrote {outputs[0]}")
    return 0


def cmd_validate(args) -> int:
    if args.task == "brats":
        if len(args.inputs) != 3:
            raise ConfigError("brats validation needs SEG FLAIR T1CE")
        seg = _load_labels(args.inputs[0], BRAIN_CLASSES)
        report = check_brats(seg, _load_gray(args.inputs[1]), _load_gray(args.inputs[2]))
    elif args.task == "acdc":
        if len(args.inputs) != 2:
            raise ConfigError("acdc validation needs SEG IMG")
        seg = _load_labels(args.inputs[0], CARDIAC_CLASSES)
        mode = args.mode or ("2d" if seg.rank == 2 else "3d")
        report = check_acdc(seg, _load_gray(args.inputs[1]), mode, args.myo_dilation_radius)
    else:  # sta
        if len(args.inputs) != 1:
            raise ConfigError("sta validation needs one CP slice")
        img = load_image(args.inputs[0])
        if isinstance(img, LabelMap):
            if img.alphabet != FETAL_CLASSES:
                raise ConfigError(
                    f"expected alphabet {','.join(FETAL_CLASSES)}, got {','.join(img.alphabet)}"
                )
            mask = img.class_mask("CP")
        else:
            mask = BinaryMask(img.data > 0)
        if args.slice is not None:
            axis, index = _parse_slice(args.slice)
            mask = BinaryMask(mask.data.take(index, axis=axis))
        report = check_sta(mask)
    print(report.render())
    return 0 if report.overall else 1


def cmd_eval(args) -> int:
    alphabet = {
        "brain": BRAIN_CLASSES,
        "cardiac2d": CARDIAC_CLASSES,
        "cardiac3d": CARDIAC_CLASSES,
        "fetal": FETAL_CLASSES,
    }[args.task]
    pred = _load_labels(args.pred, alphabet)
    truth = _load_labels(args.truth, alphabet)
    scores = evaluate_labelmap(pred, truth)
    for name, value in scores.items():
        print(f"{name:8s} {value:.4f}")
    print("csv," + ",".join(f"{k}={v:.6f}" for k, v in scores.items()))
    return 0


def cmd_phantom(args) -> int:
    spec, extras = parse_phantom_text(Path(args.spec).read_text())
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = _out_dir(args)
    outputs = []
    if spec.task == "brain":
        flair, t1ce, truth = make_brain_phantom(spec)
        for name, img in (("flair", flair), ("t1ce", t1ce), ("truth", truth)):
            path = out / f"{name}.nii.gz"
            save_nifti(img, path)
            outputs.append(path)
    elif spec.task == "cardiac":
        img, truth = make_cardiac_phantom(spec, extras.get("mode", "2d"))
        for name, vol in (("image", img), ("truth", truth)):
            path = out / f"{name}.nii.gz"
            save_nifti(vol, path)
            outputs.append(path)
    else:  # fetal
        vol, truth = make_fetal_phantom(spec, extras.get("slices", ("one",)))
        truth_labels = LabelMap(truth.data.astype(int), FETAL_CLASSES)
        for name, item in (("image", vol), ("truth", truth_labels)):
            path = out / f"{name}.nii.gz"
            save_nifti(item, path)
            outputs.append(path)
    outputs.append(_write_manifest(out, args, [args.spec], outputs, {}))
    print(f"wrote {len(outputs)} files to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topseg",
        description="Train-free image segmentation via cubical persistent homology.",
    )
    parser.add_argument("--version", action="version", version=f"topseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="run a task pipeline")
    p.add_argument("task", choices=("brain", "cardiac2d", "cardiac3d", "fetal"))
    p.add_argument("inputs", nargs="+", metavar="IMAGE")
    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--slice", metavar="AXIS:INDEX", help="take one slice of a 3D input")
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("ph", help="persistence diagram of an image")
    p.add_argument("input", metavar="IMAGE")
    p.add_argument("--direction", choices=("sub", "super"), default="sub")
    p.add_argument("--maxdim", type=int, default=None, metavar="N")
    p.add_argument("--out", default=".", metavar="DIR")
    p.set_defaults(func=cmd_ph)

    p = sub.add_parser("validate", help="check shape-model hypotheses")
    p.add_argument("task", choices=("brats", "acdc", "sta"))
    p.add_argument("inputs", nargs="+", metavar="FILE")
    p.add_argument("--mode", choices=("2d", "3d"), default=None)
    p.add_argument("--myo-dilation-radius", type=int, default=1, metavar="R")
    p.add_argument("--slice", metavar="AXIS:INDEX")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="per-class Dice of a prediction")
    p.add_argument("task", choices=("brain", "cardiac2d", "cardiac3d", "fetal"))
    p.add_argument("pred", metavar="PRED")
    p.add_argument("truth", metavar="TRUTH")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("phantom", help="generate a synthetic phantom")
    p.add_argument("spec", metavar="SPEC")
    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--seed", type=int, default=None, metavar="N")
    p.set_defaults(func=cmd_phantom)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TopsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
