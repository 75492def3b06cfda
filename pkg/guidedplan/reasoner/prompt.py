"""
Reasoner prompts

A prompt is the concatenation of four runs, always in this order: the
fixed system message, the map tokens, the image tokens and the navigation
instruction. Every position carries the tag of the run it belongs to.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

from guidedplan.errors import PromptOrderError, ShapeError
from guidedplan.numerics import Tensor, ops
from .tokenizer import Tokenizer

SEGMENTS = ('system', 'map', 'image', 'nav')

SYSTEM_MESSAGE = (
    'You are driving the ego vehicle. The map tokens describe the ego '
    'history, the surrounding agents, the lanes and the crosswalks around '
    'you. The image tokens describe what the cameras see. Follow the '
    'navigation instruction and plan a safe trajectory that strictly '
    'adheres to traffic regulations.')


@dataclass(frozen=True, eq=False)
class PromptSequence:
    """
    Attributes:
        embeddings (Tensor): [L, D_llm]
        segments (Tuple[str, ...]): tag of every position
    """

    embeddings: Tensor
    segments: Tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'segments', tuple(self.segments))
        if len(self.segments) != self.embeddings.shape[0]:
            raise ShapeError(
                f'{len(self.segments)} tags for {self.embeddings.shape[0]} '
                'positions')
        runs = []
        for _s in self.segments:
            if _s not in SEGMENTS:
                raise PromptOrderError(f'unknown segment {_s!r}')
            if not runs or runs[-1] != _s:
                runs.append(_s)
        if tuple(runs) != SEGMENTS:
            raise PromptOrderError(
                f'segments must run {" -> ".join(SEGMENTS)}, got '
                f'{" -> ".join(runs)}')

    @property
    def length(self) -> int:
        return len(self.segments)

    def spans(self) -> Dict[str, Tuple[int, int]]:
        """ [start, end) of every segment """

        out: Dict[str, Tuple[int, int]] = {}
        for _i, _s in enumerate(self.segments):
            start, _ = out.get(_s, (_i, _i))
            out[_s] = (start, _i + 1)
        return out

    def truncated(self, k: int) -> Tensor:
        return ops.slice(self.embeddings, slice(0, k))


def assemble_prompt(tokenizer: Tokenizer, system_text: str,
                    map_tokens: Tensor, image_tokens: Tensor,
                    nav_text: str) -> PromptSequence:
    """ Concatenate the four runs of a prompt

    Raises:
        ShapeError: token widths differ from the embedding width
    """

    sys_emb = tokenizer(system_text)
    nav_emb = tokenizer(nav_text)
    d = sys_emb.shape[1]
    for _name, _t in (('map', map_tokens), ('image', image_tokens)):
        if _t.ndim != 2 or _t.shape[1] != d or _t.shape[0] == 0:
            raise ShapeError(
                f'{_name} tokens {_t.shape} do not match width {d}')
    parts = (sys_emb, map_tokens, image_tokens, nav_emb)
    tags = tuple(_s for _s, _p in zip(SEGMENTS, parts)
                 for _ in range(_p.shape[0]))
    return PromptSequence(ops.concat(parts, axis=0), tags)
