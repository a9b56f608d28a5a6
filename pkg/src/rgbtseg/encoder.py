"""Dual-branch RGB-thermal image encoder.

A frozen RGB patch embedding and a trainable thermal patch embedding feed a
stack of N (fusion block, frozen transformer block with LoRA Q/V) pairs. Each
fusion block projects both streams through 1x1 convs, gates the backbone
stream with squeeze-and-excitation, and re-projects through a zero-initialized
output conv - so at initialization the encoder computes exactly the frozen
RGB-only backbone function, bitwise independent of the thermal input.

With fusion disabled (ablation baseline) the two patch embedding sequences
are concatenated along the token axis and fed to the same frozen backbone;
the RGB-position tokens of the output form the image embedding, so thermal
information reaches them only through the (frozen, low-rank-adapted)
attention - there is no dedicated trainable fusion path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import (Linear, PatchEmbed, SEBlock, TransformerBlock,
                     grid_to_tokens, tokens_to_grid)
from .params import ParamRegistry, derive_rng
from .tensor import ShapeError, Tensor


@dataclass
class EncoderState:
    """The pair of streams threaded through the encoder stack."""
    f_dffm: Tensor  # fusion-stream feature grid [Hp, Wp, d]
    f_tb: Tensor    # backbone-stream feature grid [Hp, Wp, d]
    depth_index: int


class DffmBlock:
    """Dynamic feature fusion: conv_out(conv_prev(f_dffm) + SE(conv_tb(f_tb))).

    All 1x1 convs act on the patch grid. conv_out starts at exactly zero
    (weights and bias) so the block contributes nothing before training.
    """

    # Gain on the trainable fusion convs: the zero conv_out means the fusion
    # signal must grow from nothing, and a unit-scale init makes that slow;
    # a larger init keeps the thermal pathway trainable within short budgets.
    INIT_GAIN = 3.0

    def __init__(self, reg: ParamRegistry, name: str, d: int, se_reduction: int,
                 rng: np.random.Generator):
        r1, r2, r3 = rng.spawn(3)
        std = self.INIT_GAIN / np.sqrt(d)
        self.conv_prev = Linear(reg, f"{name}.conv_prev", d, d, r1, init_std=std)
        self.conv_tb = Linear(reg, f"{name}.conv_tb", d, d, r2, init_std=std)
        self.se = SEBlock(reg, f"{name}.se", d, se_reduction, r3,
                          init_gain=self.INIT_GAIN)
        self.conv_out = Linear(reg, f"{name}.conv_out", d, d, rng, zero_init=True)

    def __call__(self, state: EncoderState) -> Tensor:
        return self.conv_out(self.conv_prev(state.f_dffm) + self.se(self.conv_tb(state.f_tb)))


class RgbtEncoder:
    def __init__(self, reg: ParamRegistry, cfg, seed: int):
        self.cfg = cfg
        d, p = cfg.d, cfg.patch
        self.rgb_embed = PatchEmbed(reg, "encoder.rgb_embed", p, 3, d,
                                    derive_rng(seed, "encoder.rgb_embed"), frozen=True)
        # The thermal embedding is the only trainable entry point for the
        # thermal modality; the same short-budget argument as DffmBlock's
        # gain applies, amplified because its signal must also pass conv_tb.
        self.thermal_embed = PatchEmbed(reg, "encoder.thermal_embed", p, 1, d,
                                        derive_rng(seed, "encoder.thermal_embed"),
                                        init_gain=4.0)
        self.blocks = [
            TransformerBlock(reg, f"encoder.blocks.{i}", d, cfg.heads,
                             derive_rng(seed, f"encoder.blocks.{i}"), frozen=True,
                             lora_rank=cfg.lora_rank, lora_alpha=cfg.lora_alpha)
            for i in range(cfg.depth)
        ]
        self.enable_dffm = cfg.enable_dffm
        if self.enable_dffm:
            self.dffm = [
                DffmBlock(reg, f"encoder.dffm.{i}", d, cfg.se_reduction,
                          derive_rng(seed, f"encoder.dffm.{i}"))
                for i in range(cfg.depth)
            ]

    def embed_pair(self, rgb: Tensor, th: Tensor) -> EncoderState:
        """Patch-embed both modalities into the depth-0 encoder state."""
        if rgb.shape[:2] != th.shape[:2]:
            raise ShapeError(
                f"rgb {rgb.shape[:2]} and thermal {th.shape[:2]} are not pixel-aligned"
            )
        return EncoderState(f_dffm=self.thermal_embed(th),
                            f_tb=self.rgb_embed(rgb), depth_index=0)

    def forward(self, rgb: Tensor, th: Tensor) -> Tensor:
        """Run the full encoder; returns the image embedding grid [Hp, Wp, d]."""
        state = self.embed_pair(rgb, th)
        hp, wp, d = state.f_tb.shape

        if not self.enable_dffm:
            n = hp * wp
            tokens = T.concat(
                [grid_to_tokens(state.f_tb), grid_to_tokens(state.f_dffm)], axis=0)
            for block in self.blocks:
                tokens = block(tokens)
            # keep the RGB-position half of the sequence as the spatial output
            sel = Tensor(np.array([[1.0, 0.0]]))
            rgb_half = T.matmul(sel, tokens.reshape(2, n * d)).reshape(n, d)
            return tokens_to_grid(rgb_half, hp, wp)

        for i, (dffm, block) in enumerate(zip(self.dffm, self.blocks), start=1):
            f_dffm = dffm(state)
            tokens = block(grid_to_tokens(state.f_tb + f_dffm))
            state = EncoderState(f_dffm=f_dffm,
                                 f_tb=tokens_to_grid(tokens, hp, wp),
                                 depth_index=i)
        return state.f_tb
