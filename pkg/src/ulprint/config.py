"""Pipeline configuration: an INI-style file with one section per stage.

Grammar (read with :mod:`configparser`)::

    # comment
    [section]
    key = value

Sections: ``preenhance``, ``gabor``, ``guided``, ``segnet``, ``augment``.
Every key is optional; unknown sections or keys are errors. Integers and
floats use Python literal syntax, booleans accept true/false/yes/no/1/0,
tuples are comma separated (``enc_widths = 4, 8, 8, 16, 16``).
"""
from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .augment import AugmentConfig
from .guidedblend import GuidedFilterParams
from .preenhance import AdaptiveThreshParams, ClaheParams, NlMeansParams, PreenhanceConfig
from .ridgegabor import GaborConfig, GaborParams
from .segnet.losses import LossParams
from .segnet.model import ToyNetConfig

ENV_VAR = "ULPRINT_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class PreenhanceSection:
    clip_limit: float = 2.0
    tiles_x: int = 8
    tiles_y: int = 8
    bins: int = 256
    nlm_h: float = 5.0
    nlm_template: int = 3
    nlm_search: int = 7
    thresh_block: int = 15
    thresh_c: float = 0.02
    threshold_weight: float = 0.5

    def build(self) -> PreenhanceConfig:
        return PreenhanceConfig(
            ClaheParams(self.clip_limit, self.tiles_x, self.tiles_y, self.bins),
            NlMeansParams(self.nlm_h, self.nlm_template, self.nlm_search),
            AdaptiveThreshParams(self.thresh_block, self.thresh_c),
            self.threshold_weight,
        )


@dataclass
class GaborSection:
    block: int = 16
    sigma_x: float = 4.0
    sigma_y: float = 4.0
    kernel_radius: int = 11
    min_coherence: float = 0.3
    fusion: str = "min"
    contrast_boost: float = 1.5
    min_component: int = 4
    signature_length: int = 48
    region_smooth: int = 3

    def build(self) -> GaborConfig:
        return GaborConfig(self.block, GaborParams(self.sigma_x, self.sigma_y, self.kernel_radius),
                           self.min_coherence, self.fusion, self.contrast_boost, self.min_component,
                           self.signature_length, self.region_smooth)


@dataclass
class GuidedSection:
    r: int = 5
    eps: float = 1e-6
    w_latent: float = 0.2
    w_guided: float = 0.8

    def build(self) -> GuidedFilterParams:
        return GuidedFilterParams(self.r, self.eps, self.w_latent, self.w_guided)


@dataclass
class SegnetSection:
    alpha: float = 0.25
    gamma: float = 2.0
    w_dice: float = 0.5
    w_focal: float = 0.5
    smooth: float = 1.0
    lr: float = 3e-3
    epochs: int = 30
    seed: int = 0
    batch_size: int = 8
    val_fraction: float = 0.2
    block_mode: str = "parallel"
    enc_widths: tuple = (4, 8, 8, 16, 16)
    dec_widths: tuple = (16, 8, 8, 4)
    plain_width: int = 4
    min_white: float = 0.05
    augment: bool = True

    def loss(self) -> LossParams:
        return LossParams(self.w_dice, self.w_focal, self.alpha, self.gamma, self.smooth)

    def net(self) -> ToyNetConfig:
        return ToyNetConfig(tuple(self.enc_widths), tuple(self.dec_widths), self.plain_width, self.block_mode)

    def build(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.min_white <= 1.0:
            raise ValueError("min_white must lie in [0, 1]")
        return self.loss(), self.net()


@dataclass
class AugmentSection:
    crop: int = 256
    p_geom: float = 0.75
    p_rrc: float = 0.5
    rrc_scale_min: float = 0.8
    rrc_scale_max: float = 1.2
    p_cutout: float = 0.3
    cutout_max_holes: int = 5
    cutout_hole: int = 10
    p_lines: float = 0.3
    p_letters: float = 0.3
    seed: int = 0

    def build(self) -> AugmentConfig:
        return AugmentConfig(self.crop, self.p_geom, self.p_rrc, (self.rrc_scale_min, self.rrc_scale_max),
                             self.p_cutout, self.cutout_max_holes, self.cutout_hole, self.p_lines,
                             self.p_letters, self.seed)


SECTIONS = {
    "preenhance": PreenhanceSection,
    "gabor": GaborSection,
    "guided": GuidedSection,
    "segnet": SegnetSection,
    "augment": AugmentSection,
}


@dataclass
class PipelineConfig:
    preenhance: PreenhanceSection = field(default_factory=PreenhanceSection)
    gabor: GaborSection = field(default_factory=GaborSection)
    guided: GuidedSection = field(default_factory=GuidedSection)
    segnet: SegnetSection = field(default_factory=SegnetSection)
    augment: AugmentSection = field(default_factory=AugmentSection)

    def validate(self) -> "PipelineConfig":
        """Build every module's parameter object so its invariants are checked."""
        for name in SECTIONS:
            try:
                getattr(self, name).build()
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{name}] {exc}") from exc
        return self

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        obj = getattr(self, section)
        names = {f.name for f in fields(obj)}
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        default = getattr(SECTIONS[section](), key)
        try:
            setattr(obj, key, _parse_value(raw, default))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc

    def dumps(self) -> str:
        out = io.StringIO()
        for name in SECTIONS:
            out.write(f"[{name}]\n")
            for f in fields(getattr(self, name)):
                out.write(f"{f.name} = {_format_value(getattr(getattr(self, name), f.name))}\n")
            out.write("\n")
        return out.getvalue()


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw, 0)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return tuple(int(p, 0) for p in parts)
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def loads(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = base if base is not None else PipelineConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            cfg.set(section, key, raw)
    return cfg.validate()


def load(path=None, overrides=()) -> PipelineConfig:
    """Read ``path`` (default: ``$ULPRINT_CONFIG`` if set) and apply
    ``section.key=value`` overrides on top."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    cfg = PipelineConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = loads(text, cfg)
    for item in overrides:
        target, sep, raw = item.partition("=")
        section, dot, key = target.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        cfg.set(section, key, raw)
    return cfg.validate()
