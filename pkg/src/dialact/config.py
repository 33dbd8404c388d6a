"""Model and training configuration with named presets.

"desk" is the trainable default. The two "paper-*" presets pin the
published hyperparameter tables (finetuning lr/decay/epochs/batch;
pretraining depth/width/heads/head-size/dropout) and exist as reference
configurations; at full scale they are far beyond desk-size training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError

ENCODERS = ("attention", "bilm", "both-concat")
CONFIG_LABEL_MODES = ("gold", "none")


@dataclass
class ModelConfig:
    preset: str = "desk"
    # architecture
    encoder: str = "attention"
    bilm_layers: int = 2
    d_emb: int = 32
    d_hid: int = 32
    d_mix: int = 32
    gru_hidden: int = 32
    attn_heads: int = 4
    attn_hidden: int = 16
    combiner_hidden: int = 32
    label_emb_width: int = 8
    include_rep_in_final: bool = True
    pca_dim: int | None = None
    # optimization
    lr: float = 3e-3
    weight_decay: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 30
    batch_conversations: int = 8
    dropout: float = 0.1
    label_mode: str = "gold"
    # inference / data
    fallback_threshold: float = 0.5
    taxonomy: str = "swda"

    def validate(self) -> "ModelConfig":
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}, got '{self.encoder}'")
        if self.label_mode not in CONFIG_LABEL_MODES:
            raise ConfigError(f"label_mode must be one of {CONFIG_LABEL_MODES}, got '{self.label_mode}'")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} outside [0, 1)")
        if not 0.0 <= self.fallback_threshold <= 1.0:
            raise ConfigError(f"fallback_threshold {self.fallback_threshold} outside [0, 1]")
        if self.epochs < 0 or self.batch_conversations < 1:
            raise ConfigError("epochs must be >= 0 and batch_conversations >= 1")
        positive = ("bilm_layers", "d_emb", "d_hid", "d_mix", "gru_hidden", "attn_heads",
                    "attn_hidden", "combiner_hidden", "label_emb_width")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise ConfigError("pca_dim must be >= 1 when set")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj).validate()


_PRESETS = {
    "desk": {},
    "paper-finetune": {
        "lr": 1e-5,
        "weight_decay": 0.1,
        "epochs": 7,
        "batch_conversations": 8000,
    },
    "paper-pretrain": {
        "encoder": "both-concat",
        "bilm_layers": 24,
        "d_emb": 1024,
        "d_hid": 1024,
        "d_mix": 1024,
        "gru_hidden": 1024,
        "attn_heads": 16,
        "attn_hidden": 64,
        "combiner_hidden": 1024,
        "dropout": 0.1,
        "batch_conversations": 8000,
    },
}

PRESETS = tuple(_PRESETS)


def make_config(preset: str = "desk", **overrides) -> ModelConfig:
    if preset not in _PRESETS:
        raise ConfigError(f"unknown preset '{preset}'; choose from {PRESETS}")
    merged: dict = {"preset": preset}
    merged.update(_PRESETS[preset])
    merged.update(overrides)
    return ModelConfig.from_dict(merged)


def load_config_file(path: str | Path) -> tuple[ModelConfig, dict]:
    """Read a JSON config: a preset name plus field overrides.

    Keys outside the ModelConfig schema ("corpus", "split_ratios",
    "train_utterances", ...) are returned separately for the CLI.
    """
    with open(path, encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    cli_keys = {"corpus", "split_ratios", "split_seed"}
    cli_extra = {k: obj.pop(k) for k in list(obj) if k in cli_keys}
    preset = obj.pop("preset", "desk")
    return make_config(preset, **obj), cli_extra
