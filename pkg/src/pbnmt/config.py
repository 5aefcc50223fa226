"""Decoder configuration: flat ``key = value`` text, one setting per line."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

ALGORITHMS = ("naive", "two-pass", "stack-rescore")
EXPANSIONS = ("exhaustive", "cube")
RECOMBINATION_MODES = ("features", "full", "none")
MODES = ("test", "tuning")

PRESETS = {
    # cube pruning with 1,000-hypothesis stacks; the pop limit is 2,000 while
    # tuning and 5,000 at test time; distortion limit 12
    "paper": {
        "stack_size": 1000,
        "pop_limit_tuning": 2000,
        "pop_limit_test": 5000,
        "distortion_limit": 12,
    },
}

_PATH_FIELDS = ("phrase_table", "lm", "source_vocab", "target_vocab", "weights", "bpe_source")


class ConfigError(ValueError):
    pass


@dataclass
class DecoderConfig:
    phrase_table: str | None = None
    lm: str | None = None
    scorers: list[str] = field(default_factory=list)
    source_vocab: str | None = None
    target_vocab: str | None = None
    weights: str | None = None
    bpe_source: str | None = None
    truecase: bool = False

    algorithm: str = "stack-rescore"
    expansion: str = "exhaustive"
    mode: str = "test"
    stack_size: int = 100
    pop_limit_tuning: int = 200
    pop_limit_test: int = 200
    distortion_limit: int | None = 6
    beam_threshold: float | None = None
    table_limit: int = 20
    nbest: int = 10
    recombination: str = "features"
    row_cap: int = 8192
    max_source_length: int = 100
    workers: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def pop_limit(self) -> int:
        return self.pop_limit_tuning if self.mode == "tuning" else self.pop_limit_test

    def validate(self) -> None:
        for name, allowed in (("algorithm", ALGORITHMS), ("expansion", EXPANSIONS),
                              ("recombination", RECOMBINATION_MODES), ("mode", MODES)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {', '.join(allowed)}, got {getattr(self, name)!r}")
        if self.algorithm == "two-pass" and self.expansion == "cube":
            raise ConfigError("two-pass decoding needs exhaustive expansion; cube pruning is lazy")
        for name in ("stack_size", "pop_limit_tuning", "pop_limit_test", "table_limit", "nbest",
                     "row_cap", "max_source_length"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")

    @classmethod
    def preset(cls, name: str, **overrides) -> "DecoderConfig":
        try:
            values = dict(PRESETS[name])
        except KeyError:
            raise ConfigError(f"unknown preset {name!r}") from None
        values.update(overrides)
        return cls(**values)

    def replace(self, **changes) -> "DecoderConfig":
        return dataclasses.replace(self, **changes)

    # -- text form --------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                text = ""
            elif isinstance(value, list):
                text = ", ".join(value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = str(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base_dir=None) -> "DecoderConfig":
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in raw:
                raise ConfigError(f"line {lineno}: duplicate key {key}")
            raw[key] = value

        values: dict = {}
        if "preset" in raw:
            name = raw.pop("preset")
            if name not in PRESETS:
                raise ConfigError(f"unknown preset {name!r}")
            values.update(PRESETS[name])
        types = {f.name: f for f in fields(cls)}
        for key, text in raw.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _parse_value(key, text, types[key].type)

        if base_dir is not None:
            base = Path(base_dir)
            for key in _PATH_FIELDS:
                if values.get(key):
                    values[key] = str(base / values[key])
            if values.get("scorers"):
                values["scorers"] = [str(base / p) for p in values["scorers"]]
        return cls(**values)

    @classmethod
    def load(cls, path) -> "DecoderConfig":
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), base_dir=path.parent)

    def check_paths(self) -> None:
        if not self.phrase_table:
            raise ConfigError("phrase_table is required")
        if self.scorers and not (self.source_vocab and self.target_vocab):
            raise ConfigError("scorers need source_vocab and target_vocab")
        for key in _PATH_FIELDS:
            value = getattr(self, key)
            if value and not Path(value).exists():
                raise ConfigError(f"{key}: file not found: {value}")
        for p in self.scorers:
            if not Path(p).exists():
                raise ConfigError(f"scorers: file not found: {p}")


def _parse_value(key: str, text: str, annotation: str):
    try:
        if annotation == "list[str]":
            return [p.strip() for p in text.split(",") if p.strip()]
        if annotation == "bool":
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if text == "" and "None" in annotation:
            return None
        if annotation.startswith("int"):
            return int(text)
        if annotation.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def load_decoder(config: DecoderConfig):
    """Load every resource the configuration names and build a decoder."""
    from .decoder import Decoder
    from .features import NGramLM, WeightVector, load_phrase_table
    from .scorer import NeuralScorer, Vocab, load_model

    config.check_paths()
    table = load_phrase_table(config.phrase_table)
    lm = NGramLM.load_arpa(config.lm) if config.lm else None
    scorers = []
    if config.scorers:
        src_vocab = Vocab.load(config.source_vocab)
        tgt_vocab = Vocab.load(config.target_vocab)
        scorers = [NeuralScorer(load_model(p), src_vocab, tgt_vocab) for p in config.scorers]
    if not config.weights:
        raise ConfigError("weights is required")
    weights = WeightVector.load(config.weights)
    return Decoder(table, lm, weights, scorers, config)
