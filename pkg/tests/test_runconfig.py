from pathlib import Path

import pytest

from shadowseg.errors import ConfigError
from shadowseg.runconfig import RunConfig, known_keys, load_config, parse_lines, reference_text

ROOT = Path(__file__).resolve().parents[1]


def test_defaults_validate():
    cfg = load_config()
    assert cfg.unet.depth == 3 and cfg.unet.base_channels == 8
    assert cfg.synth.width == 256 and cfg.train.epochs == 140


def test_parse_types_comments_and_blank_lines():
    cfg = parse_lines(["# header", "", "synth.r_min = 3  # inline", "train.epochs=7", "loss.alpha=0.5"])
    assert cfg.synth.r_min == 3.0 and isinstance(cfg.synth.r_min, float)
    assert cfg.train.epochs == 7 and isinstance(cfg.train.epochs, int)
    assert cfg.loss.alpha == 0.5


@pytest.mark.parametrize("line", ["synth.nope=1", "nosection.x=1", "plain=1", "train.epochs=many", "synth.r_min"])
def test_bad_lines_name_source_and_line(line):
    with pytest.raises(ConfigError, match=r"cfg:2:"):
        parse_lines(["# ok", line], source="cfg")


def test_paths_resolved_relative_to_file(tmp_path):
    sub = tmp_path / "conf"
    sub.mkdir()
    f = sub / "a.cfg"
    f.write_text("paths.data=../data\npaths.model=m.stck\n")
    cfg = load_config(f)
    assert cfg.path("data") == (tmp_path / "data").resolve()
    assert cfg.path("model") == (sub / "m.stck").resolve()
    assert cfg.path("out") is None


def test_overrides_apply_after_file(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("train.epochs=3\n")
    assert load_config(f, ["train.epochs=9"]).train.epochs == 9
    with pytest.raises(ConfigError):
        load_config(f, ["train.epochs"])
    with pytest.raises(ConfigError):
        load_config(f, ["train.bogus=1"])


def test_values_validated():
    with pytest.raises(ConfigError):
        load_config(None, ["synth.r_min=10", "synth.r_max=5"])
    with pytest.raises(ConfigError):
        load_config(None, ["unet.depth=0"])


def test_reference_lists_every_key_with_default():
    text = reference_text()
    listed = dict(line.split("=", 1) for line in text.splitlines() if line and not line.startswith("#"))
    keys = known_keys()
    assert list(listed) == list(keys)
    # The reference parses back into the defaults.
    assert parse_lines(text.splitlines()) == RunConfig()


def test_shipped_reference_is_current():
    assert (ROOT / "config-reference.txt").read_text() == reference_text()


@pytest.mark.parametrize("name", ["desk.cfg", "desk-test.cfg", "full-test.cfg"])
def test_shipped_configs_load(name):
    load_config(ROOT / "configs" / name)
