"""TOML configuration.

A config file holds up to five tables, [model], [loss], [train],
[inference] and [curation], whose keys mirror the corresponding dataclass
fields.  Unknown keys are rejected rather than ignored so typos fail loudly.
Command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import UsageError
from .inference import BurnInConfig
from .losses import LossWeights
from .nets import NetConfig
from .trainer import TrainConfig

_TUPLE_FIELDS = {"adam_betas", "coarse_channels"}


@dataclass
class CurationSettings:
    min_track_frames: int = 30
    max_hamming: int = 10
    sigma_iou: float = 0.5
    crop_resolution: int = 256


@dataclass
class AppConfig:
    model: NetConfig = field(default_factory=NetConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    inference: BurnInConfig = field(default_factory=BurnInConfig)
    curation: CurationSettings = field(default_factory=CurationSettings)


_SECTIONS = {
    "model": NetConfig,
    "loss": LossWeights,
    "train": TrainConfig,
    "inference": BurnInConfig,
    "curation": CurationSettings,
}


def _build_section(name: str, cls, file_values: dict, overrides: dict):
    known = {f.name: f for f in dataclasses.fields(cls)}
    merged = {}
    for source, values in (("config file", file_values), ("override", overrides)):
        for key, value in values.items():
            if key not in known:
                raise UsageError(f"unknown key '{key}' in [{name}] ({source}); "
                                 f"valid keys: {', '.join(sorted(known))}")
            if key in _TUPLE_FIELDS and isinstance(value, list):
                value = tuple(value)
            merged[key] = value
    try:
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad [{name}] section: {exc}") from exc


def load_config(path=None, overrides: dict = None) -> AppConfig:
    """Build an AppConfig from an optional TOML file plus per-section overrides.

    ``overrides`` maps section name to a dict of field values, e.g.
    ``{"train": {"seed": 3}}``; None-valued overrides are dropped so unset
    CLI flags do not mask file values.
    """
    data = {}
    if path is not None:
        try:
            with open(Path(path), "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"cannot parse {path}: {exc}")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise UsageError(f"unknown config sections: {', '.join(sorted(unknown))}")
    overrides = overrides or {}
    sections = {}
    for name, cls in _SECTIONS.items():
        file_values = data.get(name, {})
        section_overrides = {k: v for k, v in (overrides.get(name) or {}).items()
                             if v is not None}
        sections[name] = _build_section(name, cls, file_values, section_overrides)
    return AppConfig(**sections)
