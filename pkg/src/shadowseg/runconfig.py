"""Flat ``key=value`` run configuration.

One key per line, ``#`` starts a comment.  Keys carry a dotted section
prefix (``synth.r_min``, ``train.epochs``); unknown sections or keys are
rejected.  Values under ``paths.`` are resolved relative to the file that
declares them.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .baseline import BaselineConfig
from .errors import ConfigError
from .evalx import MatchGates
from .loss import LossConfig
from .segment import SegmentConfig
from .synth import SynthConfig
from .train import TrainConfig
from .unet import DESK, TRAIN_HEAD_INIT, UNetConfig


@dataclass
class InitConfig:
    """Parameter initialization for a fresh model."""

    seed: int = 0
    head_bias: float = TRAIN_HEAD_INIT["head_bias"]
    head_gain: float = TRAIN_HEAD_INIT["head_gain"]


@dataclass
class EvalConfig:
    bin_width: float = 1.0
    min_center_px: float = 2.0
    min_radius_px: float = 2.0
    radius_fraction: float = 0.5

    def validate(self) -> "EvalConfig":
        if self.bin_width <= 0:
            raise ConfigError(f"eval.bin_width must be positive, got {self.bin_width}")
        return self

    @property
    def gates(self) -> MatchGates:
        return MatchGates(self.min_center_px, self.min_radius_px, self.radius_fraction)


@dataclass
class PathsConfig:
    data: str = ""
    test_data: str = ""
    model: str = ""
    out: str = ""


@dataclass
class UNetSection:
    depth: int = DESK.depth
    base_channels: int = DESK.base_channels

    def build(self) -> UNetConfig:
        return UNetConfig(self.depth, self.base_channels).validate()


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    unet: UNetSection = field(default_factory=UNetSection)
    init: InitConfig = field(default_factory=InitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> "RunConfig":
        self.synth.validate()
        self.unet.build()
        self.train.validate()
        self.loss.validate()
        self.segment.validate()
        self.baseline.validate()
        self.eval.validate()
        return self

    def path(self, key: str) -> Path | None:
        value = getattr(self.paths, key)
        return Path(value) if value else None


SECTIONS = [f.name for f in dataclasses.fields(RunConfig)]


def known_keys() -> dict[str, object]:
    """Every accepted key with its default value, in documentation order."""
    defaults = RunConfig()
    out = {}
    for section in SECTIONS:
        obj = getattr(defaults, section)
        for f in dataclasses.fields(obj):
            out[f"{section}.{f.name}"] = getattr(obj, f.name)
    return out


def _convert(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def apply_setting(cfg: RunConfig, key: str, raw: str, base_dir: Path | None = None) -> None:
    section, dot, name = key.partition(".")
    if not dot or section not in SECTIONS:
        raise ConfigError(f"unknown config key: {key}")
    obj = getattr(cfg, section)
    names = {f.name for f in dataclasses.fields(obj)}
    if name not in names:
        raise ConfigError(f"unknown config key: {key}")
    value = _convert(key, raw.strip(), getattr(obj, name))
    if section == "paths" and value and base_dir is not None:
        value = str((base_dir / value).resolve())
    setattr(obj, name, value)


def parse_lines(lines, base_dir: Path | None = None, source: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    for no, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, raw = text.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{no}: expected key=value, got {line.strip()!r}")
        try:
            apply_setting(cfg, key.strip(), raw, base_dir)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{no}: {exc}") from None
    return cfg


def load_config(path=None, overrides=()) -> RunConfig:
    """Read a config file (or start from defaults) and apply ``key=value`` overrides."""
    if path is None:
        cfg = RunConfig()
    else:
        p = Path(path)
        cfg = parse_lines(p.read_text().splitlines(), p.parent, str(p))
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        apply_setting(cfg, key.strip(), raw, Path.cwd())
    return cfg.validate()


def reference_text() -> str:
    """The shipped key reference: every key, its default, one per line."""
    lines = [
        "# shadowseg run-configuration keys (key=default).",
        "# One key per line; '#' starts a comment; unknown keys are errors.",
        "# paths.* values are resolved relative to the config file.",
    ]
    current = None
    for key, default in known_keys().items():
        section = key.split(".", 1)[0]
        if section != current:
            lines.append("")
            current = section
        lines.append(f"{key}={default}")
    return "\n".join(lines) + "\n"
