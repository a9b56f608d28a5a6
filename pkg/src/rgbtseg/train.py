"""Training loop, evaluation, and the trainable-parameter ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .data import RgbtSample
from .losses import total_loss
from .metrics import IouAccumulator
from .model import RgbtSegModel
from .optim import AdamW
from .prompts import ClassVocabulary


@dataclass
class StepRecord:
    step: int
    loss: float
    miou: float


def train(model: RgbtSegModel, vocab: ClassVocabulary, samples: list[RgbtSample],
          cfg: TrainConfig, log_fn=None) -> list[StepRecord]:
    """Seeded training run; returns one record per step (loss, batch mIoU).

    Batches are drawn by epoch-wise seeded shuffles. A NaN anywhere in the
    forward or backward pass raises NumericError and aborts the run.
    """
    opt = AdamW(model.registry, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    order: list[int] = []
    history: list[StepRecord] = []
    num_classes = vocab.num_classes

    for step in range(cfg.steps):
        while len(order) < cfg.batch:
            order.extend(rng.permutation(len(samples)).tolist())
        idx, order = order[:cfg.batch], order[cfg.batch:]

        if cfg.cosine_lr:
            opt.lr = cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / max(1, cfg.steps)))

        acc = IouAccumulator(num_classes, cfg.ignore_label)
        loss = None
        for i in idx:
            s = samples[i]
            out = model.forward(s.rgb, s.thermal, vocab)
            term = total_loss(out.logits, s.labels, cfg.lambda_dice,
                              cfg.ignore_label, cfg.dice_smooth)
            loss = term if loss is None else loss + term
            acc.update(np.argmax(out.logits.data, axis=-1), s.labels)
        loss = loss * (1.0 / cfg.batch)
        opt.zero_grad()
        loss.backward()
        opt.step()
        opt.zero_grad()

        rec = StepRecord(step=step, loss=loss.item(), miou=acc.miou())
        history.append(rec)
        if log_fn is not None:
            log_fn(rec)
    return history


@dataclass
class SplitResult:
    split: str
    per_class: np.ndarray
    miou: float
    num_samples: int


def evaluate(model: RgbtSegModel, vocab: ClassVocabulary,
             samples: list[RgbtSample], ignore_label: int = 255,
             include_absent: bool = False) -> dict[str, SplitResult]:
    """Per-split metric tables; splits come from the samples' tags, plus an
    'overall' row aggregating everything."""
    accs: dict[str, IouAccumulator] = {}
    counts: dict[str, int] = {}
    overall = IouAccumulator(vocab.num_classes, ignore_label)
    n = 0
    for s in samples:
        pred = model.predict(s.rgb, s.thermal, vocab)
        overall.update(pred, s.labels)
        n += 1
        acc = accs.setdefault(s.split, IouAccumulator(vocab.num_classes, ignore_label))
        acc.update(pred, s.labels)
        counts[s.split] = counts.get(s.split, 0) + 1
    results = {
        split: SplitResult(split, acc.iou(), acc.miou(include_absent), counts[split])
        for split, acc in accs.items()
    }
    results["overall"] = SplitResult("overall", overall.iou(),
                                     overall.miou(include_absent), n)
    return results


# -- parameter ledger -----------------------------------------------------------

LEDGER_GROUPS = [
    "thermal_patch_embed",
    "dffm",
    "encoder_lora",
    "decoder_lora",
    "decoder_heads",
    "text_attention",
    "prompt_embeddings",
]


def _classify(name: str) -> str | None:
    if name.startswith("encoder.thermal_embed"):
        return "thermal_patch_embed"
    if name.startswith("encoder.dffm"):
        return "dffm"
    if name.startswith("encoder.blocks") and ".lora." in name:
        return "encoder_lora"
    if name.startswith("decoder.twoway") and ".lora." in name:
        return "decoder_lora"
    if name.startswith("decoder.upscale") or name.startswith("decoder.head"):
        return "decoder_heads"
    if name.startswith("decoder.text_attn"):
        return "text_attention"
    if name.startswith("prompt.") or name.startswith("decoder.tokens"):
        return "prompt_embeddings"
    return None


@dataclass
class LedgerReport:
    groups: dict[str, int] = field(default_factory=dict)
    trainable_total: int = 0
    frozen_total: int = 0

    def lines(self) -> list[str]:
        width = max(len(g) for g in LEDGER_GROUPS)
        out = [f"{'group':<{width}}  trainable"]
        for g in LEDGER_GROUPS:
            if g in self.groups:
                out.append(f"{g:<{width}}  {self.groups[g]:>9d}")
        out.append(f"{'total trainable':<{width}}  {self.trainable_total:>9d}")
        out.append(f"{'total frozen':<{width}}  {self.frozen_total:>9d}")
        return out


def param_ledger(registry) -> LedgerReport:
    """Group trainable parameter counts; totals are exact sums."""
    report = LedgerReport()
    for name, (tensor, frozen) in registry.items():
        if frozen:
            report.frozen_total += tensor.size
            continue
        group = _classify(name)
        if group is None:
            raise KeyError(f"trainable parameter '{name}' fits no ledger group")
        report.groups[group] = report.groups.get(group, 0) + tensor.size
        report.trainable_total += tensor.size
    return report
