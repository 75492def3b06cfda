"""
Decoder layers with gated guidance injection

Every layer runs self-attention over the decoder stream (mode queries
followed by the encoded scene tokens). When a guidance vector is present
a second attention branch reads it as a single key/value token and is
added with the learnable scalar gate g:

    s' = s + g * MHA(Q, K_guide, V_guide) + MHA(Q, K_s, V_s)
    s_next = s' + FFN(LN(s'))

With g = 0 the result is bitwise the result without guidance.
"""

from __future__ import annotations
from typing import Optional

import numpy as np

from guidedplan.errors import ShapeError
from guidedplan.numerics import (LayerNorm, Linear, MLP, Module,
                                 MultiHeadAttention, Tensor, as_tensor, ops)
from guidedplan.numerics.modules import param


class GatedDecoderLayer(Module):
    """ One decoder layer of the planner

    Attributes:
        d (int): stream width D_p
        d_g (int): guidance width D_g
        gate (Tensor): scalar g, starts at 0
    """

    def __init__(self, d: int, d_g: int, heads: int,
                 rng: np.random.Generator) -> None:
        self.d = d
        self.d_g = d_g
        self.norm = LayerNorm(d)
        self.scene_attention = MultiHeadAttention(d, heads, rng)
        self.guidance_proj = Linear(d_g, d, rng)
        self.guidance_attention = MultiHeadAttention(d, heads, rng)
        self.gate = param(np.zeros(()))
        self.norm_ffn = LayerNorm(d)
        self.ffn = MLP(d, 2 * d, d, rng)

    def guidance_token(self, guidance: Tensor) -> Tensor:
        guidance = as_tensor(guidance)
        if guidance.shape != (self.d_g, ):
            raise ShapeError(
                f'guidance {guidance.shape} does not match width {self.d_g}')
        return ops.reshape(self.guidance_proj(guidance), (1, self.d))

    def forward(self,
                s: Tensor,
                guidance: Optional[Tensor] = None,
                mask: Optional[np.ndarray] = None) -> Tensor:
        if s.ndim != 2 or s.shape[1] != self.d:
            raise ShapeError(f'decoder stream {s.shape} for width {self.d}')
        h = self.norm(s)
        update = self.scene_attention(h, h, h, mask=mask)
        if guidance is not None:
            token = self.guidance_token(guidance)
            guided = self.guidance_attention(h, token, token)
            update = ops.add(ops.mul(guided, self.gate), update)
        x = ops.add(s, update)
        return ops.add(x, self.ffn(self.norm_ffn(x)))


def decode_with_injection(s: Tensor, guidance: Optional[Tensor],
                          layer: GatedDecoderLayer,
                          mask: Optional[np.ndarray] = None) -> Tensor:
    return layer(s, guidance, mask)
