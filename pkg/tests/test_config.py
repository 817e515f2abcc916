"""Config parsing, defaults, validation and round-trips."""

import pytest

from specseg.config import (
    PipelineConfig,
    config_from_sections,
    dump_config,
    load_config,
    parse_config_text,
)
from specseg.errors import ConfigError


def test_defaults():
    cfg = load_config(None)
    assert cfg.affinity.patch_size == 8
    assert cfg.affinity.c_ssd == 1.0
    assert cfg.affinity.c_mi == 1.0
    assert cfg.affinity.c_pos == 0.1
    assert cfg.spectral.n_eigensegments == 15
    assert cfg.spectral.solver == "dense"
    assert cfg.crf.n_iters == 5
    assert cfg.crf.unary_confidence == 0.7
    assert cfg.evaluate.matching == "hungarian"
    assert cfg.evaluate.boundary_d == 3


def test_parse_scalars():
    sections = parse_config_text(
        "[affinity]\n"
        "patch_size = 16\n"
        "delta = 2.5\n"
        "[semantic]\n"
        "split_components = true\n"
        'crop_features = "sidecar"\n'
        "[spectral]\n"
        "solver = lanczos  # bare strings work too\n"
    )
    assert sections["affinity"]["patch_size"] == 16
    assert sections["affinity"]["delta"] == 2.5
    assert sections["semantic"]["split_components"] is True
    assert sections["semantic"]["crop_features"] == "sidecar"
    assert sections["spectral"]["solver"] == "lanczos"


def test_full_config_applies(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(
        "[preprocess]\n"
        "gaussian_sigma = 1.5\n"
        'hist_eq = "clahe"\n'
        "[affinity]\n"
        "c_pos = 0.0\n"
        "[spectral]\n"
        "seed = 42\n"
        "[crf]\n"
        "n_iters = 0\n"
        "[baseline]\n"
        'method = "fz"\n'
        "scale = 50.0\n"
        "n_superpixels = 64\n"
    )
    cfg = load_config(path)
    assert cfg.preprocess.gaussian_sigma == 1.5
    assert cfg.preprocess.hist_eq == "clahe"
    assert cfg.affinity.c_pos == 0.0
    assert cfg.seed == 42
    assert cfg.crf.n_iters == 0
    assert cfg.baseline.method == "fz"
    assert cfg.baseline.fz.scale == 50.0
    assert cfg.baseline.slic.n_superpixels == 64


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_sections({"affinity": {"patch_sizes": 8}})


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        config_from_sections({"affinityy": {}})


def test_type_mismatch_rejected():
    with pytest.raises(ConfigError):
        config_from_sections({"affinity": {"patch_size": "eight"}})
    with pytest.raises(ConfigError):
        config_from_sections({"semantic": {"split_components": 3}})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        config_from_sections({"affinity": {"delta": 0.0}})
    with pytest.raises(ConfigError):
        config_from_sections({"affinity": {"c_ssd": -1.0}})
    with pytest.raises(ConfigError):
        config_from_sections({"crf": {"unary_confidence": 1.5}})
    with pytest.raises(ConfigError):
        config_from_sections({"spectral": {"solver": "magic"}})


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("[affinity]\npatch_size = 8\npatch_size = 4\n")


def test_key_outside_section_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("patch_size = 8\n")


def test_dump_round_trip(tmp_path):
    cfg = PipelineConfig()
    cfg.affinity.delta = 3.25
    cfg.semantic.split_components = True
    cfg.baseline.method = "fz"
    path = tmp_path / "dump.toml"
    dump_config(cfg, path)
    back = load_config(path)
    assert back == cfg


def test_dump_is_strict_toml(tmp_path):
    # the snapshot must parse with a real TOML parser
    tomllib = pytest.importorskip("tomli")
    text = dump_config(PipelineConfig())
    parsed = tomllib.loads(text)
    assert parsed["affinity"]["patch_size"] == 8
    assert parsed["semantic"]["crop_features"] == "histogram"


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")
