"""Run configuration: one sectioned text file driving every subcommand.

A config file is the committed record of a run. Loading and saving are
exact inverses over the full field set, so a saved config never drifts
from the values actually used; command-line flags override individual
fields after loading.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .data import SynthConfig
from .encoders import EncoderDims
from .exceptions import ConfigError
from .training import TrainConfig


@dataclass(frozen=True)
class EvalConfig:
    """Bag protocol settings for the evaluation subcommand."""

    split: str = "test"
    bag_size: int = 1000
    n_bags: int = 10

    def validate(self) -> None:
        if self.bag_size < 1:
            raise ConfigError(f"bag_size must be positive, got {self.bag_size}")
        if self.n_bags < 1:
            raise ConfigError(f"n_bags must be positive, got {self.n_bags}")
        if not self.split:
            raise ConfigError("split name must be nonempty")


@dataclass(frozen=True)
class PathsConfig:
    """Default file locations; subcommand flags take precedence."""

    dataset: str = "dataset.jsonl"
    checkpoint: str = "checkpoint.json"
    out_dir: str = "run"


@dataclass
class RunConfig:
    data: SynthConfig = field(default_factory=SynthConfig)
    model: EncoderDims = field(default_factory=EncoderDims)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> None:
        self.data.validate()
        self.train.validate()
        self.eval.validate()

    def with_seed(self, seed: int) -> "RunConfig":
        """Route one seed to every stochastic stage."""
        return RunConfig(
            data=dataclasses.replace(self.data, seed=seed),
            model=self.model,
            train=dataclasses.replace(self.train, seed=seed),
            eval=self.eval,
            paths=self.paths,
        )


_SECTIONS = ("data", "model", "train", "eval", "paths")


def _convert(section: str, key: str, raw: str, default) -> object:
    kind = type(default)
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(
            f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}"
        ) from exc


def loads_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    sections: dict[str, object] = {}
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{name}]")
    for name in _SECTIONS:
        template = getattr(RunConfig(), name)
        if not parser.has_section(name):
            sections[name] = template
            continue
        known = {f.name: f for f in dataclasses.fields(template)}
        overrides = {}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"unknown config key [{name}] {key}")
            overrides[key] = _convert(
                name, key, raw, getattr(template, key)
            )
        sections[name] = dataclasses.replace(template, **overrides)
    return RunConfig(**sections)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads_config(path.read_text(encoding="utf-8"))


def dumps_config(config: RunConfig) -> str:
    """Canonical text form: every field, fixed section and key order."""
    parser = configparser.ConfigParser(interpolation=None)
    for name in _SECTIONS:
        section = getattr(config, name)
        parser.add_section(name)
        for f in dataclasses.fields(section):
            value = getattr(section, f.name)
            parser.set(name, f.name, repr(value) if isinstance(value, float) else str(value))
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(config), encoding="utf-8")
