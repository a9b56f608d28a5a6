"""Segmentation losses: pixel-wise cross-entropy plus soft Dice overlap.

Labels are integer maps; the ignore label (default 255) drops pixels from
both losses. The combined objective is CE + lambda * Dice.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class LabelError(ValueError):
    pass


def _flatten_and_mask(logits: Tensor, labels: np.ndarray, ignore_label: int):
    if logits.ndim != 3:
        raise ShapeError(f"logits must be [H, W, C], got {logits.shape}")
    h, w, c = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (h, w):
        raise ShapeError(f"labels {labels.shape} do not match logits {(h, w)}")
    flat_labels = labels.reshape(-1)
    valid = flat_labels != ignore_label
    bad = flat_labels[valid]
    if bad.size and (bad.min() < 0 or bad.max() >= c):
        raise LabelError(
            f"labels must lie in [0, {c}) or equal ignore={ignore_label}; "
            f"found {int(bad.min())}..{int(bad.max())}"
        )
    onehot = np.zeros((h * w, c))
    onehot[np.arange(h * w)[valid], flat_labels[valid]] = 1.0
    return logits.reshape(h * w, c), onehot, valid


def cross_entropy(logits: Tensor, labels: np.ndarray,
                  ignore_label: int = 255) -> Tensor:
    """Mean over non-ignored pixels of -log softmax(logits)[label]."""
    x, onehot, valid = _flatten_and_mask(logits, labels, ignore_label)
    n_valid = int(valid.sum())
    if n_valid == 0:
        warnings.warn("cross_entropy: every pixel is ignored; loss defined as 0")
        return Tensor(0.0)
    xmax = Tensor(x.data.max(axis=-1, keepdims=True))
    lse = T.log(T.exp(x - xmax).sum(axis=-1, keepdims=True)) + xmax
    picked = (x * Tensor(onehot)).sum(axis=-1, keepdims=True)
    per_pixel = (lse - picked) * Tensor(valid.astype(float).reshape(-1, 1))
    return per_pixel.sum() * (1.0 / n_valid)


def dice_loss(logits: Tensor, labels: np.ndarray, ignore_label: int = 255,
              smooth: float = 1.0) -> Tensor:
    """1 - mean over classes of the soft Dice coefficient.

    Probabilities come from softmax over the class axis; ignored pixels are
    excluded from every sum. Classes absent from both prediction mass and
    labels score smooth/smooth = 1.
    """
    x, onehot, valid = _flatten_and_mask(logits, labels, ignore_label)
    n_valid = int(valid.sum())
    if n_valid == 0:
        warnings.warn("dice_loss: every pixel is ignored; loss defined as 0")
        return Tensor(0.0)
    mask = Tensor(valid.astype(float).reshape(-1, 1))
    p = T.softmax(x, axis=-1) * mask
    y = Tensor(onehot)
    inter = (p * y).sum(axis=0)
    denom = p.sum(axis=0) + y.sum(axis=0)
    dice = (inter * 2.0 + smooth) / (denom + smooth)
    return 1.0 - dice.mean()


def total_loss(logits: Tensor, labels: np.ndarray, lambda_dice: float = 1.0,
               ignore_label: int = 255, smooth: float = 1.0) -> Tensor:
    ce = cross_entropy(logits, labels, ignore_label)
    if lambda_dice == 0.0:
        return ce
    return ce + dice_loss(logits, labels, ignore_label, smooth) * lambda_dice
