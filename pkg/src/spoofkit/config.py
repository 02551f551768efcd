"""JSON run configuration shared by all CLI subcommands."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .classifier import LossConfig, ModelConfig
from .datagen import SynthConfig
from .optim import AugmentConfig, TrainConfig
from .toyfeat import ToyExtractorConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HeadConfig:
    """Classifier widths; input layers and dim come from the extractor."""

    hidden_dim: int = 128
    attn_dim: int = 128
    embed_dim: int = 128


@dataclass(frozen=True)
class EvalConfig:
    # score from precomputed LFT1 files when a manifest row names one
    use_features: bool = True


@dataclass(frozen=True)
class RunConfig:
    data: SynthConfig = field(default_factory=SynthConfig)
    extractor: ToyExtractorConfig = field(default_factory=ToyExtractorConfig)
    model: HeadConfig = field(default_factory=HeadConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            num_layers_plus_one=self.extractor.num_layers + 1,
            feature_dim=self.extractor.feature_dim,
            hidden_dim=self.model.hidden_dim,
            attn_dim=self.model.attn_dim,
            embed_dim=self.model.embed_dim,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _coerce(section: str, f: dataclasses.Field, value):
    default = type(f.default)
    key = f"{section}.{f.name}"
    if default is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean")
        return value
    if default is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{key} must be an integer")
        return value
    if default is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if default is tuple:
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{key} must be a list of numbers")
        return tuple(float(v) for v in value)
    if default is str and not isinstance(value, str):
        raise ConfigError(f"{key} must be a string")
    return value


def from_dict(doc: dict) -> RunConfig:
    """Build a RunConfig; unknown sections or keys are errors, missing ones take defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    sections = {f.name: f for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - set(sections)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    built = {}
    for name, sf in sections.items():
        cls = sf.default_factory
        values = doc.get(name, {})
        if not isinstance(values, dict):
            raise ConfigError(f"section {name!r} must be an object")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        bad = set(values) - set(fields)
        if bad:
            raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(sorted(bad))}")
        kwargs = {k: _coerce(name, fields[k], v) for k, v in values.items()}
        try:
            built[name] = cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    return RunConfig(**built)


def parse_override(text: str) -> tuple[str, str, object]:
    """``section.key=value``; the value is JSON if it parses, else a bare string."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    path, raw = text.split("=", 1)
    section, key = path.split(".", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return section, key, value


def load_config(path=None, overrides=(), seed: int | None = None) -> RunConfig:
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    for text in overrides:
        section, key, value = parse_override(text)
        doc.setdefault(section, {})
        if not isinstance(doc[section], dict):
            raise ConfigError(f"section {section!r} must be an object")
        doc[section][key] = value
    if seed is not None:
        doc.setdefault("data", {})["seed"] = seed
        doc.setdefault("train", {})["seed"] = seed
    return from_dict(doc)
