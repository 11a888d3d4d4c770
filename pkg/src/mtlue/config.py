"""Run configuration: defaults, config files, ``MTLUE_`` environment overrides.

Config files are either JSON objects or ``key = value`` lines (``#`` starts a
comment). Both may carry ``config_version``; unknown keys are rejected.
Precedence, lowest first: preset, config file, environment, command line.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import types
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .sgns import TrainConfig

CONFIG_VERSION = 1
ENV_PREFIX = "MTLUE_"
PRESETS = ("full", "desk", "personalize")
TRAIN_FIELDS = tuple(f.name for f in fields(TrainConfig))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # training, mirrors TrainConfig; None means "take it from the preset"
    preset: str = "full"
    dim: int | None = None
    learning_rate: float | None = None
    epochs: int | None = None
    negatives: int | None = None
    window: int | None = None
    adam_beta1: float | None = None
    adam_beta2: float | None = None
    adam_eps: float | None = None
    init_scale: float | None = None
    seed: int | None = None
    n_user_vocab: int | None = None
    word_power: float | None = None
    tasks: tuple[str, ...] | None = None
    threads: int = 1
    # data
    input: str | None = None
    reviews: str | None = None
    embeddings: str | None = None
    output: str | None = None
    dataset_kind: str = "synthetic"
    lenient: bool = False
    salt: str | None = None
    # synthetic corpus
    fixture: str = "default"
    n_users: int | None = None
    n_items: int | None = None
    n_genres: int | None = None
    docs_per_user: int | None = None
    vocab_per_genre: int | None = None
    noise_rate: float | None = None
    # evaluation and analysis
    label: str | None = None
    ks: tuple[int, ...] = (4, 8, 12)
    split_ratios: tuple[float, ...] = (0.8, 0.1, 0.1)
    eval_seed: int = 0
    max_features: int = 15000
    average: str = "weighted"
    top_k: int = 1000
    mi_target: str = "sentiment"
    config_version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config_version {self.config_version}")
        if self.fixture not in ("default", "personalize"):
            raise ConfigError(f"fixture must be 'default' or 'personalize', got {self.fixture!r}")
        if self.mi_target not in ("sentiment", "genre"):
            raise ConfigError(f"mi_target must be 'sentiment' or 'genre', got {self.mi_target!r}")
        if self.average not in ("weighted", "macro"):
            raise ConfigError(f"average must be 'weighted' or 'macro', got {self.average!r}")

    def train_config(self) -> TrainConfig:
        from .pipeline import DESK_CONFIG, PERSONALIZE_CONFIG

        base = {"full": TrainConfig(), "desk": DESK_CONFIG, "personalize": PERSONALIZE_CONFIG}[self.preset]
        overrides = {k: getattr(self, k) for k in TRAIN_FIELDS if getattr(self, k, None) is not None}
        try:
            return dataclasses.replace(base, **overrides)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def as_dict(self) -> dict:
        return {f.name: _jsonable(getattr(self, f.name)) for f in fields(self)}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode()).hexdigest()

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError("missing required setting(s): " + ", ".join(missing))


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


_HINTS = typing.get_type_hints(RunConfig)


def _base_type(name: str):
    hint = _HINTS[name]
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    if typing.get_origin(hint) in (typing.Union, types.UnionType):
        hint = args[0]
    return hint


def coerce(name: str, value):
    """Convert a raw (string or JSON) value to the field's declared type."""
    if name not in _HINTS:
        raise ConfigError(f"unknown config key {name!r}")
    hint = _base_type(name)
    try:
        if value is None:
            return None
        if typing.get_origin(hint) is tuple:
            (item,) = {a for a in typing.get_args(hint) if a is not Ellipsis}
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            return tuple(item(v) for v in value)
        if hint is bool:
            if isinstance(value, bool):
                return value
            low = str(value).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if hint is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        return hint(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for {name}") from None


def parse_config_text(text: str) -> dict:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        return {k: coerce(k, v) for k, v in raw.items()}
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = coerce(key, value)
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            out[key[len(ENV_PREFIX):].lower()] = value
    return {k: coerce(k, v) for k, v in out.items()}


def resolve(config_file=None, cli: dict | None = None, environ=None) -> RunConfig:
    values: dict = {}
    if config_file is not None:
        try:
            text = Path(config_file).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {config_file}: {e}") from e
        values.update(parse_config_text(text))
    values.update(env_overrides(environ))
    values.update({k: coerce(k, v) for k, v in (cli or {}).items() if v is not None})
    return RunConfig(**values)
