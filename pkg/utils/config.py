# utils/config.py
"""
Configuration management for ThermalSR.
Flat ``key = value`` run configs are read with python-dotenv and validated
by a pydantic model; .env loading is kept for logging settings.

Precedence: RunConfig defaults < config file < explicit overrides (CLI flags).
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.degradation import MAX_SEQUENCE_LENGTH, DegradationParams
from core.errors import ConfigError
from core.network import NetworkConfig
from core.trainer import TrainConfig

logger = logging.getLogger("utils.config")

SECTIONS = {
    "network": [f for f in NetworkConfig.__dataclass_fields__],
    "training": [f for f in TrainConfig.__dataclass_fields__ if f != "seed"],
    "degradation": ["blur_sigma", "noise_sigma"],
    "data": ["data_root", "train_ratio", "split_by", "synth_sequences", "synth_frames", "synth_size",
             "synth_subjects", "maxval"],
    "run": ["seed", "out", "checkpoint", "complexity_h", "complexity_w"],
}


class RunConfig(BaseModel):
    """Every tunable of a run; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # network
    scale: int = 4
    misr_channels: int = Field(32, ge=1)
    misr_blocks: int = Field(4, ge=1)
    residual_channels: int = Field(32, ge=1)
    residual_blocks: int = Field(4, ge=1)
    sisr_feat0: int = Field(64, ge=1)
    sisr_feat: int = Field(18, ge=1)
    sisr_stages: int = Field(2, ge=1)
    fusion_channels: int = Field(32, ge=1)
    bicubic_skip: int = Field(1, ge=0, le=1)

    # training
    epochs: int = Field(100, ge=1)
    base_lr: float = Field(1e-4, gt=0)
    lr_decay_factor: float = Field(0.5, gt=0, le=1)
    lr_decay_period: int = Field(25, ge=1)
    weight_decay: float = Field(1e-4, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    batch_size: int = Field(8, ge=1)
    min_seq_len: int = Field(1, ge=1)
    max_seq_len: int = Field(10, ge=1, le=MAX_SEQUENCE_LENGTH)
    crop_size: int = Field(128, ge=1)
    prefetch: int = Field(0, ge=0)
    checkpoint_every: int = Field(0, ge=0)

    # degradation
    blur_sigma: float = Field(1.0, ge=0)
    noise_sigma: float = Field(0.01, ge=0)

    # data
    data_root: str = "data/corpus"
    train_ratio: float = Field(0.83, gt=0, le=1)
    split_by: str = "sequence"
    synth_sequences: int = Field(120, ge=1)
    synth_frames: int = Field(10, ge=1, le=MAX_SEQUENCE_LENGTH)
    synth_size: int = Field(96, ge=1)
    synth_subjects: int = Field(0, ge=0)
    maxval: int = 65535

    # run
    seed: int = 0
    out: str = "runs/default"
    checkpoint: str = ""
    complexity_h: int = Field(80, ge=1)
    complexity_w: int = Field(80, ge=1)

    @field_validator("scale")
    @classmethod
    def _scale(cls, v: int) -> int:
        if v not in (2, 4):
            raise ValueError("scale must be 2 or 4")
        return v

    @field_validator("split_by")
    @classmethod
    def _split_by(cls, v: str) -> str:
        if v not in ("sequence", "subject"):
            raise ValueError("split_by must be 'sequence' or 'subject'")
        return v

    @field_validator("maxval")
    @classmethod
    def _maxval(cls, v: int) -> int:
        if v not in (255, 65535):
            raise ValueError("maxval must be 255 or 65535")
        return v

    @model_validator(mode="after")
    def _sequence_bounds(self) -> "RunConfig":
        if self.min_seq_len > self.max_seq_len:
            raise ValueError("min_seq_len must not exceed max_seq_len")
        if self.crop_size % self.scale:
            raise ValueError("crop_size must be divisible by scale")
        return self

    # typed views ------------------------------------------------------
    def network(self) -> NetworkConfig:
        return NetworkConfig(**{k: getattr(self, k) for k in SECTIONS["network"]})

    def train(self) -> TrainConfig:
        values = {k: getattr(self, k) for k in SECTIONS["training"]}
        return TrainConfig(seed=self.seed, **values)

    def degradation(self) -> DegradationParams:
        return DegradationParams(scale=self.scale, blur_sigma=self.blur_sigma,
                                 noise_sigma=self.noise_sigma, seed=self.seed)


def _validation_keys(error: ValidationError) -> list:
    keys = []
    for item in error.errors():
        key = ".".join(str(part) for part in item.get("loc", ())) or "config"
        if key not in keys:
            keys.append(key)
    return keys


def build_config(values: Mapping[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(dict(values))
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(map(str, i['loc'])) or 'config'}: {i['msg']}" for i in e.errors())
        raise ConfigError(f"Invalid configuration ({details})", _validation_keys(e)) from None


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Resolve a RunConfig from an optional flat config file plus overrides.

    Args:
        path: ``key = value`` file (comments with #), or None for defaults
        overrides: Values that win over the file; None entries are ignored

    Returns:
        Validated RunConfig
    """
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        raw = dotenv_values(path)
        empty = sorted(k for k, v in raw.items() if v is None)
        if empty:
            raise ConfigError("Config keys without a value", empty)
        values.update(raw)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = build_config(values)
    logger.debug(f"Resolved config from {path or 'defaults'}")
    return config


def dump_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write every field as ``key = value``, grouped by section."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = config.model_dump()
    lines = ["# ThermalSR run configuration (fully resolved)"]
    for section, keys in SECTIONS.items():
        lines.append("")
        lines.append(f"# {section}")
        lines += [f"{key} = {data[key]!r}" if isinstance(data[key], float) else f"{key} = {data[key]}"
                  for key in keys]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_env(env_path: Optional[str] = None) -> dict:
    """Load a .env file (if present) into the environment."""
    env_file = Path(env_path or Path.cwd() / ".env")
    if env_file.exists():
        load_dotenv(dotenv_path=env_file)
    else:
        logger.debug(f".env not found at {env_file}")
    return dict(os.environ)
