"""Low-rank adaptation of frozen linear projections: W = W0 + (alpha/r) * B A.

A is initialized N(0, 1/r), B starts at zero, so an adapted layer computes
exactly the frozen layer's function until the first optimizer step. The
adapter path is evaluated as two thin matmuls; the dense merge exists only
for verification and inference-time folding.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParamRegistry
from .tensor import ShapeError, Tensor


class LoraConfigError(ValueError):
    pass


class LoraLinear:
    """Frozen base projection with a trainable rank-r update on top.

    Weights are stored row-convention ([d_in, d_out], applied as x @ W), so
    the update term enters as x @ A^T @ B^T.
    """

    def __init__(self, reg: ParamRegistry, name: str, d: int, rank: int,
                 alpha: float | None, rng: np.random.Generator,
                 base_frozen: bool = True, bias: bool = True):
        if rank < 1 or rank >= d:
            raise LoraConfigError(f"rank must satisfy 1 <= r < d, got r={rank}, d={d}")
        self.d, self.rank = d, rank
        self.alpha = float(alpha) if alpha is not None else float(rank)
        self.scale = self.alpha / rank
        std = 1.0 / np.sqrt(d)
        self.W0 = reg.register(f"{name}.W0", Tensor(rng.normal(0.0, std, (d, d))),
                               frozen=base_frozen)
        self.b0 = None
        if bias:
            self.b0 = reg.register(f"{name}.b0", Tensor(np.zeros(d)), frozen=base_frozen)
        self.A = reg.register(f"{name}.lora.A",
                              Tensor(rng.normal(0.0, 1.0 / np.sqrt(rank), (rank, d))),
                              frozen=False)
        self.B = reg.register(f"{name}.lora.B", Tensor(np.zeros((d, rank))),
                              frozen=False)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d:
            raise ShapeError(f"lora layer expects last dim {self.d}, got {x.shape}")
        lead = x.shape[:-1]
        flat = x.reshape(-1, self.d)
        base = T.matmul(flat, self.W0)
        update = T.matmul(T.matmul(flat, self.A.transpose(1, 0)),
                          self.B.transpose(1, 0))
        out = base + update * self.scale
        if self.b0 is not None:
            out = out + self.b0
        return out.reshape(*lead, self.d)

    def merged_weight(self) -> np.ndarray:
        """Dense W0 + scale * (B A), in the stored [d_in, d_out] layout."""
        return self.W0.data + self.scale * (self.B.data @ self.A.data).T

    def param_count(self) -> int:
        return self.A.size + self.B.size


def lora_param_count(d: int, rank: int, sites: int) -> int:
    """Trainable adapter parameters for ``sites`` adapted d x d projections."""
    if rank < 1:
        raise LoraConfigError(f"rank must be >= 1, got {rank}")
    if sites < 0:
        raise LoraConfigError(f"sites must be >= 0, got {sites}")
    return sites * (rank * d + d * rank)
