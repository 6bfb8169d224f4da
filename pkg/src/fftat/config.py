"""Run configuration: nested dataclasses behind a flat key namespace.

Config files are flat key/value TOML or JSON (one level of tables is
flattened). ``--set key=value`` overrides are parsed with the field's type.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .model import ModelConfig
from .trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class DataConfig:
    n_per_class: int = 200
    data_seed: int = 0
    source_dir: str = ""
    target_dir: str = ""


@dataclass
class RunConfig:
    name: str = "run"
    out_dir: str = "runs"
    precision: str = "f32"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    @property
    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.name

    def flat(self) -> dict:
        out = {k: getattr(self, k) for k in _TOP}
        for section in _SECTIONS:
            out.update(asdict(getattr(self, section)))
        return out


class ConfigKeyError(KeyError):
    def __str__(self) -> str:
        return self.args[0]


_TOP = ("name", "out_dir", "precision")
_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig}


def _field_types() -> dict[str, tuple[str | None, type]]:
    types = {}
    for f in fields(RunConfig):
        if f.name in _TOP:
            types[f.name] = (None, str)
    for section, cls in _SECTIONS.items():
        for f in fields(cls):
            types[f.name] = (section, type(getattr(cls(), f.name)))
    return types


def valid_keys() -> list[str]:
    return sorted(_field_types())


def parse_value(key: str, raw):
    _, typ = _field_types()[key]
    if not isinstance(raw, str):
        if typ is float and isinstance(raw, int) and not isinstance(raw, bool):
            return float(raw)
        return raw
    text = raw.strip()
    if typ is bool:
        low = text.lower()
        if low in ("1", "true", "on", "yes"):
            return True
        if low in ("0", "false", "off", "no"):
            return False
        raise ValueError(f"{key}: cannot read {raw!r} as a boolean")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    return text


def build_config(values: dict) -> RunConfig:
    """Assemble a RunConfig from flat keys; unknown keys fail listing the valid ones."""
    types = _field_types()
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise ConfigKeyError(f"unknown config key(s) {unknown}; valid keys: {', '.join(valid_keys())}")
    top, per = {}, {s: {} for s in _SECTIONS}
    for key, raw in values.items():
        section, _ = types[key]
        val = parse_value(key, raw)
        (top if section is None else per[section])[key] = val
    cfg = RunConfig(**top, **{s: cls(**per[s]) for s, cls in _SECTIONS.items()})
    if cfg.precision not in ("f32", "f64"):
        raise ValueError(f"precision must be f32 or f64, got {cfg.precision!r}")
    return cfg


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} not found")
    text = path.read_text()
    raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    flat = {}
    for k, v in raw.items():
        if isinstance(v, dict):
            flat.update(v)
        else:
            flat[k] = v
    return flat


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not of the form key=value")
        out[key.strip()] = value
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    """File values, then ``--set`` overrides, then the FFTAT_PRECISION environment variable."""
    values = read_config_file(path) if path else {}
    values.update(parse_overrides(overrides))
    env = os.environ.get("FFTAT_PRECISION")
    if env:
        values["precision"] = env
    return build_config(values)


def save_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg.flat(), indent=2, sort_keys=True) + "\n")
    return path


def with_overrides(cfg: RunConfig, **values) -> RunConfig:
    flat = cfg.flat()
    flat.update(values)
    return build_config(flat)

