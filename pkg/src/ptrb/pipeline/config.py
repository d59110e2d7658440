"""Model and training hyperparameters."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..geometry import ORDERINGS

ORDERING_CHOICES = ORDERINGS + ("sio", "bio")
POOLING_CHOICES = ("iap", "iap_step", "avg", "max", "wsum")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    # grouping
    num_groups: int = 256
    group_size: int = 16
    num_points: int = 1024
    fps_seed_index: int = 0
    # architecture
    channel: int = 384
    heads: int = 6
    encoder_depth: int = 4
    mamba_depth: int = 12
    num_classes: int = 15
    embed_hidden: int = 128
    group_pool: str = "max"
    state_dim: int = 16
    conv_width: int = 4
    expand: int = 2
    dt_rank: int = 0            # 0 -> ceil(channel / 16)
    proj_hidden: int = 128
    proj_dim: int = 256
    head_hidden: int = 256
    head_dropout: float = 0.5
    dropout: float = 0.0
    bn_momentum: float = 0.1
    # ordering / pooling
    ordering: str = "bio"
    pooling: str = "iap"
    curve_bits: int = 10
    temperature: float = 1.0
    # loss weights
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    # optimization
    lr: float = 3e-4
    lr_min: float = 1e-6
    weight_decay: float = 5e-2
    betas: list = field(default_factory=lambda: [0.9, 0.999])
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 300
    warmup_epochs: int = 10
    # augmentation
    scale_low: float = 0.8
    scale_high: float = 1.2
    translate: float = 0.1
    rotate: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def inner_dim(self):
        return self.expand * self.channel

    @property
    def resolved_dt_rank(self):
        return self.dt_rank or -(-self.channel // 16)

    @property
    def sequence_length(self):
        return 2 * self.num_groups if self.ordering == "bio" else self.num_groups

    def validate(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            want = {"int": int, "float": (int, float), "str": str, "bool": bool,
                    "list": list}.get(f.type if isinstance(f.type, str) else f.type.__name__)
            if want is not None and (not isinstance(value, want)
                                     or (want is int and isinstance(value, bool))):
                raise ConfigError(f"{f.name}: expected {f.type}, got {value!r}")
        positive = ("num_groups", "group_size", "num_points", "channel", "heads",
                    "mamba_depth", "num_classes", "embed_hidden", "state_dim", "conv_width",
                    "expand", "proj_hidden", "proj_dim", "head_hidden", "batch_size",
                    "epochs", "curve_bits")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.encoder_depth < 0 or self.warmup_epochs < 0 or self.dt_rank < 0:
            raise ConfigError("encoder_depth, warmup_epochs and dt_rank must be >= 0")
        if self.channel % self.heads:
            raise ConfigError(f"channel {self.channel} not divisible by heads {self.heads}")
        if self.group_size > self.num_points or self.num_groups > self.num_points:
            raise ConfigError("num_groups and group_size must not exceed num_points")
        if self.ordering not in ORDERING_CHOICES:
            raise ConfigError(f"ordering must be one of {ORDERING_CHOICES}, got {self.ordering!r}")
        if self.pooling not in POOLING_CHOICES:
            raise ConfigError(f"pooling must be one of {POOLING_CHOICES}, got {self.pooling!r}")
        if self.group_pool not in ("max", "mean"):
            raise ConfigError(f"group_pool must be 'max' or 'mean', got {self.group_pool!r}")
        if not 1 <= self.curve_bits <= 21:
            raise ConfigError("curve_bits must lie in [1, 21]")
        if not 0.0 <= self.head_dropout < 1.0 or not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout rates must lie in [0, 1)")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if len(self.betas) != 2:
            raise ConfigError("betas must have two entries")
        if self.warmup_epochs > self.epochs:
            raise ConfigError("warmup_epochs exceeds epochs")
        if not 0 < self.scale_low <= self.scale_high:
            raise ConfigError("need 0 < scale_low <= scale_high")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(d)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)
