"""Model and training configuration, plus the key=value config file loader.

Precedence for training settings: CLI flag > environment variable > config
file > built-in default. Environment variables use the PROTORES_ prefix with
the upper-cased field name (e.g. PROTORES_LEARNING_RATE).
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError

ENV_PREFIX = "PROTORES_"

PSA = "psa"
MCDC = "mcdc"


@dataclass
class ModelConfig:
    joint_count: int
    width: int = 1024
    encoder_blocks: int = 3
    gpd_blocks: int = 3
    ikd_blocks: int = 3
    layers_per_block: int = 3
    embedding_dim: int = 32
    dropout: float = 0.01
    encoder_variant: str = PSA
    embedding_width: int | None = None  # pose-embedding width; defaults to `width`

    def __post_init__(self):
        if self.embedding_width is None:
            self.embedding_width = self.width
        self.validate()

    def validate(self) -> "ModelConfig":
        if self.joint_count < 1:
            raise ConfigError("joint_count must be >= 1")
        if self.width < 1:
            raise ConfigError("width must be positive")
        if self.layers_per_block < 1:
            raise ConfigError("layers_per_block must be >= 1")
        if self.encoder_blocks < 1:
            raise ConfigError("encoder_blocks must be >= 1")
        if self.gpd_blocks < 0 or self.ikd_blocks < 0:
            raise ConfigError("decoder block counts must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.encoder_variant not in (PSA, MCDC):
            raise ConfigError(f"unknown encoder variant {self.encoder_variant!r}")
        # The prototype subtraction (PSA, blocks >= 2) and the MCDC maxpool both
        # feed block outputs of width `width` back in as embeddings.
        if self.encoder_variant == PSA and self.encoder_blocks >= 2 \
                and self.embedding_width != self.width:
            raise ConfigError("PSA with >= 2 encoder blocks requires embedding_width == width")
        if self.encoder_variant == MCDC and self.embedding_width != self.width:
            raise ConfigError("MCDC requires embedding_width == width")
        return self

    @property
    def input_width(self) -> int:
        return 7 + 2 * self.embedding_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainConfig:
    # One epoch draws and trains on one sampled batch.
    epochs: int = 1000
    batch_size: int = 2048
    learning_rate: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    w_pos: float = 1e2
    sigma_max_position: float = 0.1
    sigma_max_rotation: float = 0.1
    sigma_max_lookat: float = 0.1
    w_max: float = 1e3
    eta: float = 13.0
    n_effectors_min: int = 3
    n_effectors_max: int = 16
    augment_mirror: bool = True
    augment_rotate_y: bool = True
    seed: int = 0
    log_interval: int = 100
    checkpoint_interval: int = 1000

    def __post_init__(self):
        self.validate()

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 1 <= self.n_effectors_min <= self.n_effectors_max:
            raise ConfigError("effector count range must satisfy 1 <= min <= max")
        if self.log_interval < 1 or self.checkpoint_interval < 1:
            raise ConfigError("intervals must be >= 1")
        return self

    def sigma_max_for(self, etype: int) -> float:
        return (self.sigma_max_position, self.sigma_max_rotation, self.sigma_max_lookat)[int(etype)]

    def to_dict(self) -> dict:
        return asdict(self)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Parse a key = value config file; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().lower()] = value.strip()
    return values


def _coerce(raw: str, target_type: type):
    if target_type is bool:
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse {raw!r} as a boolean")
    return target_type(raw)


def load_train_config(
    path: str | Path | None = None,
    overrides: dict | None = None,
    env: dict[str, str] | None = None,
) -> TrainConfig:
    """Build a TrainConfig with CLI > env > file > default precedence."""
    env = os.environ if env is None else env
    values: dict = {}
    file_values = parse_config_file(path) if path is not None else {}
    for f in fields(TrainConfig):
        target = type(getattr(TrainConfig, f.name))
        if f.name in file_values:
            try:
                values[f.name] = _coerce(file_values[f.name], target)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"config file value for {f.name}: {exc}") from exc
        env_key = ENV_PREFIX + f.name.upper()
        if env_key in env:
            try:
                values[f.name] = _coerce(env[env_key], target)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"environment value {env_key}: {exc}") from exc
    unknown = set(file_values) - {f.name for f in fields(TrainConfig)}
    if unknown:
        raise ConfigError(f"unknown config file keys: {sorted(unknown)}")
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)
