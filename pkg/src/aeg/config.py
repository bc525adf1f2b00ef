"""Dataclass configs and the flat key=value config-file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

MODES = ("full", "no_pert", "char_dec")


@dataclass
class AegConfig:
    word_emb: int = 32
    char_emb: int = 16
    hidden: int = 32
    num_classes: int = 2
    mode: str = "full"            # full | no_pert | char_dec
    always_spell: bool = False    # spell every word via the char path at inference
    max_word_len: int = 24        # char decoding cap per word
    max_len_factor: float = 1.5   # output word cap relative to input length
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown decoder mode {self.mode!r}")


@dataclass
class PretrainConfig:
    epochs: int = 6
    learning_rate: float = 3e-3   # Adam
    checkpoint_every: int = 0     # steps; 0 disables periodic checkpoints
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.learning_rate <= 0:
            raise ConfigError("pretraining epochs and learning rate must be positive")


@dataclass
class RlConfig:
    episodes: int = 2000
    learning_rate: float = 3e-3   # plain SGD
    gamma_adversarial: float = 1.0
    gamma_semantic: float = 0.5
    gamma_lexical: float = 0.25
    oracle_budget_per_episode: int = 2
    strict_greedy_gradient: bool = False  # attach log-probs to the greedy decode
    holdout_fraction: float = 0.1
    eval_every: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.episodes <= 0 or self.learning_rate <= 0:
            raise ConfigError("RL episodes and learning rate must be positive")


@dataclass
class AttackConfig:
    attacker: str = "aeg"   # aeg | aeg_no_rl | aeg_no_pert | aeg_char_dec | random | wordbug
    budget: int = 25
    gamma_adversarial: float = 1.0
    gamma_semantic: float = 0.5
    gamma_lexical: float = 0.25
    seed: int = 0

    ATTACKERS = ("aeg", "aeg_no_rl", "aeg_no_pert", "aeg_char_dec", "random", "wordbug")

    def __post_init__(self):
        if self.attacker not in self.ATTACKERS:
            raise ConfigError(f"unknown attacker {self.attacker!r}")
        if self.budget < 1:
            raise ConfigError("query budget must be at least 1")


def _coerce(text):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text.strip("\"'")


def load_config_file(path):
    """Flat key=value file; '#' starts a comment; values are coerced."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        values[key.strip()] = _coerce(raw.strip())
    return values


def apply_overrides(config, values):
    """Copy of a dataclass config with matching keys replaced."""
    names = {f.name for f in dataclasses.fields(config)}
    relevant = {k: v for k, v in values.items() if k in names}
    return dataclasses.replace(config, **relevant)
