"""
Word-hash tokenizer

Each whitespace-separated word is hashed (blake2b) into one of
vocab_size - 1 buckets of a learnable embedding table; the last row is
reserved for the empty text.
"""

import hashlib
from typing import List

import numpy as np

from guidedplan.numerics import Embedding, Module, Tensor


def word_id(word: str, vocab_size: int) -> int:
    digest = hashlib.blake2b(word.encode('utf8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little') % (vocab_size - 1)


def reserved_id(vocab_size: int) -> int:
    return vocab_size - 1


def token_ids(text: str, vocab_size: int) -> List[int]:
    words = text.split()
    if not words:
        return [reserved_id(vocab_size)]
    return [word_id(_w, vocab_size) for _w in words]


class Tokenizer(Module):
    """ text -> [L_t, D_llm] embeddings """

    def __init__(self, vocab_size: int, d: int,
                 rng: np.random.Generator) -> None:
        self.vocab_size = vocab_size
        self.embedding = Embedding(vocab_size, d, rng)

    def ids(self, text: str) -> List[int]:
        return token_ids(text, self.vocab_size)

    def forward(self, text: str) -> Tensor:
        return self.embedding(self.ids(text))


def tokenize_text(text: str, tokenizer: Tokenizer) -> Tensor:
    return tokenizer(text)
