"""
The reasoner

A small pre-LN causal transformer over a PromptSequence. Its final hidden
state at the last position, passed through the feature adapter, is the
guidance vector handed to the planner. A tied output projection onto the
token table serves the pretraining objective.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from guidedplan.config import ModelConfig
from guidedplan.numerics import (LayerNorm, MLP, Module, MultiHeadAttention,
                                 Tensor, as_tensor, causal_mask, ops,
                                 sinusoidal_positions)
from guidedplan.numerics.modules import param
from .aux import AuxHeads
from .prompt import SEGMENTS, PromptSequence
from .tokenizer import Tokenizer


@dataclass(frozen=True, eq=False)
class HiddenStates:
    """ h [L, D_llm] of the final layer """

    h: Tensor

    @property
    def last(self) -> Tensor:
        return ops.slice(self.h, self.h.shape[0] - 1)


@dataclass(frozen=True, eq=False)
class GuidanceVector:
    """ Immutable snapshot of h_tilde published to the planner

    Attributes:
        h_tilde (np.ndarray): [D_g], read-only
        tick (int): tick the reasoner ran at
        grade (Optional[int]): complexity grade that triggered the run
    """

    h_tilde: np.ndarray
    tick: int = 0
    grade: Optional[int] = None

    def __post_init__(self) -> None:
        values = np.array(self.h_tilde, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, 'h_tilde', values)

    @classmethod
    def snapshot(cls, h_tilde: Tensor, tick: int = 0,
                 grade: Optional[int] = None) -> 'GuidanceVector':
        return cls(h_tilde.values.copy(), tick, grade)

    def as_tensor(self) -> Tensor:
        return Tensor(self.h_tilde)


class TransformerBlock(Module):

    def __init__(self, d: int, heads: int, rng: np.random.Generator) -> None:
        self.norm1 = LayerNorm(d)
        self.attention = MultiHeadAttention(d, heads, rng)
        self.norm2 = LayerNorm(d)
        self.mlp = MLP(d, 2 * d, d, rng)

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        h = self.norm1(x)
        x = ops.add(x, self.attention(h, h, h, mask=mask))
        return ops.add(x, self.mlp(self.norm2(x)))


class Reasoner(Module):
    """ Prompt -> hidden states -> guidance and auxiliary predictions """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        d = cfg.d_llm
        self.d = d
        self.tokenizer = Tokenizer(cfg.vocab_size, d, rng)
        self.segment_embedding = param(
            rng.normal(0.0, 0.02, size=(len(SEGMENTS), d)))
        self.blocks = [
            TransformerBlock(d, cfg.reasoner_heads, rng)
            for _ in range(cfg.reasoner_layers)
        ]
        self.final_norm = LayerNorm(d)
        self.feature_adapter = MLP(d, d, cfg.d_g, rng)
        self.aux = AuxHeads(d, rng)

    def embed(self, prompt: PromptSequence) -> Tensor:
        n = prompt.length
        seg = [SEGMENTS.index(_s) for _s in prompt.segments]
        return ops.add(
            ops.add(prompt.embeddings,
                    ops.take_rows(self.segment_embedding, seg)),
            Tensor(sinusoidal_positions(n, self.d)))

    def run(self, x: Tensor) -> Tensor:
        """ The transformer stack on already embedded positions """

        mask = causal_mask(x.shape[0])
        for _b in self.blocks:
            x = _b(x, mask)
        return self.final_norm(x)

    def forward(self, prompt: PromptSequence) -> HiddenStates:
        return HiddenStates(self.run(self.embed(prompt)))

    def guidance(self, hidden: HiddenStates) -> Tensor:
        """ h_tilde = FeatureAdapter(h_n), [D_g] """

        return self.feature_adapter(hidden.last)

    def token_logits(self, hidden: HiddenStates) -> Tensor:
        """ Next-token logits [L, vocab] through the tied token table """

        table = self.tokenizer.embedding.table
        return ops.matmul(hidden.h, ops.transpose(table, (1, 0)))

    def lm_loss(self, prompt_ids: List[int], answer_ids: List[int]) -> Tensor:
        """ Mean next-token cross-entropy over the answer positions of a
        question/answer text pair """

        ids = list(prompt_ids) + list(answer_ids)
        emb = ops.add(self.tokenizer.embedding(ids),
                      Tensor(sinusoidal_positions(len(ids), self.d)))
        logits = ops.matmul(
            self.run(emb),
            ops.transpose(self.tokenizer.embedding.table, (1, 0)))
        start = len(prompt_ids)
        terms = [
            ops.cross_entropy(ops.slice(logits, _i - 1), ids[_i])
            for _i in range(max(start, 1), len(ids))
        ]
        return ops.scale(ops.sum(ops.stack(terms)), 1.0 / len(terms))


def reasoner_forward(prompt: PromptSequence, reasoner: Reasoner) -> HiddenStates:
    return reasoner(prompt)


def extract_guidance(hidden: HiddenStates, reasoner: Reasoner) -> Tensor:
    return reasoner.guidance(hidden)


def as_guidance_tensor(guidance) -> Optional[Tensor]:
    if guidance is None:
        return None
    if isinstance(guidance, GuidanceVector):
        return guidance.as_tensor()
    return as_tensor(guidance)
