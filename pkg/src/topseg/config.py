"""Pipeline configuration: defaults, per-task presets, and the key=value
config file format used by the CLI.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Values are parsed as int, float, bool, a comma-separated pair (for
``fetal_area_bounds``), or a bare string.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Tuple

from .errors import ConfigError

SELECTORS = ("earliest-birth", "largest-area", "most-persistent")


@dataclass(frozen=True)
class PipelineConfig:
    # None means "auto": threshold = trapezoidal area under the sampled
    # voxel-count derivative curve.
    dt_threshold: Optional[float] = None
    curve_samples: int = 256
    sigma: float = 0.0
    dilation_radius: int = 0
    top_n_h0: int = 5
    top_n_h0_rv: int = 20
    fetal_area_bounds: Tuple[float, float] = (0.25, 0.75)
    fetal_epsilon: float = 0.1
    fetal_selector: str = "largest-area"
    lv_dilation_max_steps: int = 64
    axis: int = 2  # slicing axis for cardiac 3D / fetal volumes

    def __post_init__(self):
        lo, hi = self.fetal_area_bounds
        if not 0.0 < lo < hi < 1.0:
            raise ConfigError("fetal_area_bounds must satisfy 0 < lower < upper < 1")
        if self.curve_samples < 16:
            raise ConfigError("curve_samples must be >= 16")
        if self.top_n_h0 < 1 or self.top_n_h0_rv < 1:
            raise ConfigError("top_n settings must be >= 1")
        if self.fetal_selector not in SELECTORS:
            raise ConfigError(f"fetal_selector must be one of {SELECTORS}")
        if self.sigma < 0 or self.dilation_radius < 0:
            raise ConfigError("preprocessing parameters must be nonnegative")

    def digest(self) -> str:
        body = ";".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(body.encode()).hexdigest()[:16]


def brain_config(**overrides) -> PipelineConfig:
    """Glioblastoma preset: blur sigma 1, grayscale dilation radius 2."""
    return replace(PipelineConfig(sigma=1.0, dilation_radius=2), **overrides)


def cardiac_config(**overrides) -> PipelineConfig:
    """Cardiac preset: blur sigma 2.5, dilation radius 1."""
    return replace(PipelineConfig(sigma=2.5, dilation_radius=1), **overrides)


def fetal_config(**overrides) -> PipelineConfig:
    """Fetal preset: light blur sigma 0.5, no dilation."""
    return replace(PipelineConfig(sigma=0.5, dilation_radius=0), **overrides)


PRESETS = {
    "brain": brain_config,
    "cardiac2d": cardiac_config,
    "cardiac3d": cardiac_config,
    "fetal": fetal_config,
}

_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "fetal_area_bounds":
        parts = [p for p in raw.replace(",", " ").split() if p]
        if len(parts) != 2:
            raise ConfigError(f"{key}: expected two numbers, got {raw!r}")
        return (float(parts[0]), float(parts[1]))
    if key == "fetal_selector":
        return raw
    if key == "dt_threshold":
        return None if raw.lower() in ("auto", "none") else float(raw)
    if key in ("sigma", "fetal_epsilon"):
        return float(raw)
    return int(raw)


def parse_config_text(text: str, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            updates[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    return replace(cfg, **updates)


def load_config(path, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    return parse_config_text(Path(path).read_text(), base)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if f.name == "fetal_area_bounds":
            val = f"{val[0]}, {val[1]}"
        elif f.name == "dt_threshold" and val is None:
            val = "auto"
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"
