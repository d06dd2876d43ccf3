"""Configuration defaults, presets, and the key=value file format."""

import pytest

from topseg.config import (
    PRESETS,
    PipelineConfig,
    brain_config,
    cardiac_config,
    dump_config,
    fetal_config,
    load_config,
    parse_config_text,
)
from topseg.errors import ConfigError


def test_presets():
    assert brain_config().sigma == 1.0 and brain_config().dilation_radius == 2
    assert cardiac_config().sigma == 2.5 and cardiac_config().dilation_radius == 1
    assert fetal_config().sigma == 0.5 and fetal_config().dilation_radius == 0
    assert set(PRESETS) == {"brain", "cardiac2d", "cardiac3d", "fetal"}


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        PipelineConfig(curve_samples=4)
    with pytest.raises(ConfigError):
        PipelineConfig(fetal_area_bounds=(0.7, 0.3))
    with pytest.raises(ConfigError):
        PipelineConfig(fetal_selector="random")
    with pytest.raises(ConfigError):
        PipelineConfig(sigma=-1.0)


def test_parse_and_dump_roundtrip():
    cfg = brain_config(curve_samples=128, dt_threshold=250.0)
    back = parse_config_text(dump_config(cfg))
    assert back == cfg
    auto = parse_config_text("dt_threshold = auto\n", cfg)
    assert auto.dt_threshold is None


def test_parse_errors():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("sigma 2.0\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("blur = 2.0\n")
    with pytest.raises(ConfigError):
        parse_config_text("curve_samples = many\n")


def test_digest_tracks_content(tmp_path):
    a = PipelineConfig()
    b = PipelineConfig(sigma=1.0)
    assert a.digest() != b.digest()
    assert a.digest() == PipelineConfig().digest()
    path = tmp_path / "cfg.txt"
    path.write_text("sigma = 1.0\n# comment\n")
    assert load_config(path) == PipelineConfig(sigma=1.0)
