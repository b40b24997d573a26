"""Run configuration: model shape, anchors and training hyperparameters."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

MIXERS = ("softmax", "fourier", "nystrom", "dwt")
POOLINGS = ("roi", "fft", "flat")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    mixer: str = "softmax"
    pooling: str = "roi"
    anchor_scales: tuple = (4, 8, 12)
    feat_dim: int = 1024
    hidden: int = 128
    fc_depth: int = 1
    dropout: float = 0.5
    nystrom_landmarks: int = 16

    def __post_init__(self):
        object.__setattr__(self, "anchor_scales", tuple(int(s) for s in self.anchor_scales))
        if self.mixer not in MIXERS:
            raise ConfigError(f"mixer must be one of {MIXERS}, got {self.mixer!r}")
        if self.pooling not in POOLINGS:
            raise ConfigError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if not self.anchor_scales or min(self.anchor_scales) < 1:
            raise ConfigError("anchor_scales must be a non-empty list of positive lengths")
        if self.feat_dim < 1 or self.hidden < 1 or self.fc_depth < 1:
            raise ConfigError("feat_dim, hidden and fc_depth must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.nystrom_landmarks < 1:
            raise ConfigError("nystrom_landmarks must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    weight_decay: float = 1e-5
    epochs: int = 300
    nms_threshold: float = 0.5
    loss_balance: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0 or self.loss_balance < 0:
            raise ConfigError("lr, weight_decay and loss_balance must be non-negative")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not 0 < self.nms_threshold <= 1:
            raise ConfigError("nms_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class RunConfig:
    """Flat JSON-facing configuration used by the command line."""

    mixer: str = "softmax"
    pooling: str = "roi"
    anchor_scales: tuple = (4, 8, 12)
    feat_dim: int = 1024
    hidden: int = 128
    fc_depth: int = 1
    dropout: float = 0.5
    lr: float = 5e-5
    weight_decay: float = 1e-5
    epochs: int = 300
    nms_threshold: float = 0.5
    summary_ratio: float = 0.15
    pos_tiou: float = 0.6
    neg_band_max: float = 0.3
    neg_per_pos: int = 3
    nystrom_landmarks: int = 16
    kts_penalty: float = 1.0
    loss_balance: float = 1.0
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "anchor_scales", tuple(int(s) for s in self.anchor_scales))
        if not 0 < self.summary_ratio < 1:
            raise ConfigError("summary_ratio must lie in (0, 1)")
        if self.kts_penalty < 0:
            raise ConfigError("kts_penalty must be non-negative")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        # validate the derived views eagerly
        self.model_config()
        self.train_config()
        self.anchor_config()

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            mixer=self.mixer,
            pooling=self.pooling,
            anchor_scales=self.anchor_scales,
            feat_dim=self.feat_dim,
            hidden=self.hidden,
            fc_depth=self.fc_depth,
            dropout=self.dropout,
            nystrom_landmarks=self.nystrom_landmarks,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            nms_threshold=self.nms_threshold,
            loss_balance=self.loss_balance,
            seed=self.seed,
        )

    def anchor_config(self):
        from .proposals import AnchorConfig

        return AnchorConfig(
            scales=self.anchor_scales,
            pos_tiou=self.pos_tiou,
            neg_band_max=self.neg_band_max,
            neg_per_pos=self.neg_per_pos,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["anchor_scales"] = list(self.anchor_scales)
        return d

    def replace(self, **changes) -> "RunConfig":
        return replace(self, **changes)


# Preset used by the FC-depth ablation sweep.
FC_DEPTH_ABLATION_SCALES = (4, 8, 16, 32)
