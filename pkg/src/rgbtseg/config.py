"""Run configuration: model dimensions, training hyperparameters, and the
ablation switches, with JSON round-trip and eager validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


class ConfigValidationError(ValueError):
    pass


@dataclass
class ModelConfig:
    image_size: int = 64
    patch: int = 8
    d: int = 64
    heads: int = 4
    depth: int = 4
    lora_rank: int = 4
    lora_alpha: float | None = None  # None -> alpha = rank (scale 1)
    decoder_layers: int = 2
    mask_tokens: int = 4
    d_k: int = 32
    d_v: int = 32
    d_t: int = 32
    se_reduction: int = 4
    num_classes: int = 4
    enable_dffm: bool = True
    enable_decoder_lora: bool = True
    enable_text: bool = True


@dataclass
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 0.01
    lambda_dice: float = 1.0
    dice_smooth: float = 1.0
    ignore_label: int = 255
    steps: int = 200
    batch: int = 4
    seed: int = 0
    cosine_lr: bool = False


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    backbone_seed: int = 1234

    def validate(self) -> None:
        m = self.model
        positive = {
            "image_size": m.image_size, "patch": m.patch, "d": m.d,
            "heads": m.heads, "depth": m.depth, "lora_rank": m.lora_rank,
            "decoder_layers": m.decoder_layers, "mask_tokens": m.mask_tokens,
            "d_k": m.d_k, "d_v": m.d_v, "d_t": m.d_t,
            "se_reduction": m.se_reduction, "num_classes": m.num_classes,
        }
        for k, v in positive.items():
            if v < 1:
                raise ConfigValidationError(f"{k} must be positive, got {v}")
        if m.image_size % m.patch != 0:
            raise ConfigValidationError(
                f"image_size {m.image_size} not divisible by patch {m.patch}")
        if m.d % m.heads != 0:
            raise ConfigValidationError(f"d {m.d} not divisible by heads {m.heads}")
        if m.d % 4 != 0:
            raise ConfigValidationError(f"d {m.d} must be divisible by 4 (upscaling)")
        if m.d % m.se_reduction != 0:
            raise ConfigValidationError(
                f"d {m.d} not divisible by se_reduction {m.se_reduction}")
        if not (1 <= m.lora_rank < m.d):
            raise ConfigValidationError(
                f"lora_rank must satisfy 1 <= r < d, got {m.lora_rank}")
        if m.lora_alpha is not None and m.lora_alpha <= 0:
            raise ConfigValidationError("lora_alpha must be positive")
        t = self.train
        if t.lr <= 0 or t.weight_decay < 0 or t.lambda_dice < 0 or t.dice_smooth <= 0:
            raise ConfigValidationError("invalid training hyperparameters")
        if t.steps < 0 or t.batch < 1:
            raise ConfigValidationError("steps must be >= 0 and batch >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @staticmethod
    def from_dict(doc: dict) -> "RunConfig":
        known = {"model", "train", "backbone_seed"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg = RunConfig(
            model=ModelConfig(**doc.get("model", {})),
            train=TrainConfig(**doc.get("train", {})),
            backbone_seed=doc.get("backbone_seed", 1234),
        )
        cfg.validate()
        return cfg

    @staticmethod
    def from_json_file(path) -> "RunConfig":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigValidationError(f"malformed config file: {e}") from e
        try:
            return RunConfig.from_dict(doc)
        except TypeError as e:
            raise ConfigValidationError(str(e)) from e
