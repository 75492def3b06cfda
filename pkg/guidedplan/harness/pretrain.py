"""
Two-round reasoner pretraining

Round one fits the reasoner's next-token objective on DriveVQA only.
Round two runs on ReasoningVQA with a fixed share of DriveVQA mixed into
every epoch. Questions and answers are tokenized with the reasoner's
hashing tokenizer and truncated to <max_tokens> each.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from tqdm import tqdm  # type: ignore

from guidedplan.config import PretrainConfig
from guidedplan.errors import ConfigError, TrainingDivergedError
from guidedplan.numerics import AdamW, Tape, WarmupCosine
from guidedplan.reasoner import Reasoner, token_ids

logger = logging.getLogger(__name__)

TextPair = Tuple[str, str]


@dataclass
class PretrainResult:
    round1: List[float] = field(default_factory=list)
    round2: List[float] = field(default_factory=list)


def as_pairs(records: Sequence) -> List[TextPair]:
    """ (question, answer) of DriveVQA or ReasoningVQA records """

    return [(_r.question, _r.answer) for _r in records]


def encode_pair(pair: TextPair, vocab_size: int,
                max_tokens: int) -> Tuple[List[int], List[int]]:
    question, answer = pair
    q = token_ids(question, vocab_size)[-max_tokens:]
    a = token_ids(answer, vocab_size)[:max_tokens]
    return q, a


def mixed_epoch(drive: Sequence[TextPair], reasoning: Sequence[TextPair],
                fraction: float, rng: np.random.Generator) -> List[TextPair]:
    """ All of <reasoning> plus DriveVQA pairs making up <fraction> of the
    epoch, shuffled

    The DriveVQA count is round(fraction * n_r / (1 - fraction)), capped by
    the DriveVQA pool; a fraction of 1 gives a DriveVQA-only epoch.
    """

    if fraction >= 1.0:
        n_drive = len(drive)
        reasoning = []
    else:
        n_drive = min(len(drive),
                      int(round(fraction * len(reasoning) / (1.0 - fraction))))
    picked = rng.choice(len(drive), size=n_drive, replace=False) \
        if n_drive else np.zeros(0, dtype=int)
    epoch = list(reasoning) + [drive[_i] for _i in picked]
    order = rng.permutation(len(epoch))
    return [epoch[_i] for _i in order]


class Pretrainer:
    """ AdamW over the reasoner on the next-token loss """

    def __init__(self, reasoner: Reasoner, cfg: PretrainConfig) -> None:
        self.reasoner = reasoner
        self.cfg = cfg
        self.vocab_size = reasoner.tokenizer.vocab_size
        self.optimizer = AdamW(reasoner.parameters(prefix='reasoner.'),
                               lr=cfg.lr,
                               weight_decay=cfg.weight_decay)
        total = max(1, cfg.round1_steps + cfg.round2_steps)
        self.schedule = WarmupCosine(cfg.lr, total, cfg.warmup_steps,
                                     cfg.final_lr)
        self.step_count = 0

    def loss(self, pair: TextPair):
        q, a = encode_pair(pair, self.vocab_size, self.cfg.max_tokens)
        return self.reasoner.lm_loss(q, a)

    def eval_loss(self, pairs: Sequence[TextPair]) -> float:
        return float(np.mean([self.loss(_p).item() for _p in pairs]))

    def step(self, pair: TextPair) -> float:
        self.reasoner.zero_grad()
        with Tape() as tape:
            loss = self.loss(pair)
        value = loss.item()
        if not math.isfinite(value):
            tape.clear()
            logger.error('pretrain step %d: loss is %s', self.step_count,
                         value)
            raise TrainingDivergedError(
                f'non-finite pretraining loss at step {self.step_count}',
                {'step': self.step_count, 'loss': value})
        tape.backward(loss)
        self.optimizer.step(self.schedule(self.step_count))
        self.step_count += 1
        return value

    def run(self,
            epochs: Sequence[Sequence[TextPair]],
            steps: int,
            desc: str,
            progress: bool = False) -> List[float]:
        """ <steps> single-pair steps cycling through successive epochs """

        losses: List[float] = []
        it = iter(())
        epoch_no = 0
        for _ in tqdm(range(steps), disable=not progress, desc=desc):
            pair = next(it, None)
            if pair is None:
                it = iter(epochs[epoch_no % len(epochs)])
                epoch_no += 1
                pair = next(it)
            losses.append(self.step(pair))
        if losses:
            logger.info('%s: %d steps, loss %.4f -> %.4f', desc, steps,
                        losses[0], losses[-1])
        return losses


def pretrain(reasoner: Reasoner,
             drivevqa: Sequence,
             reasoningvqa: Sequence,
             cfg: PretrainConfig = PretrainConfig(),
             progress: bool = False) -> PretrainResult:
    """ Both pretraining rounds on <reasoner>, in place

    Raises:
        ConfigError: the DriveVQA set is empty, or round two has steps and
            nothing to train on
    """

    drive = as_pairs(drivevqa)
    reasoning = as_pairs(reasoningvqa)
    if not drive:
        raise ConfigError('pretraining needs DriveVQA records')
    rng = np.random.default_rng(cfg.seed)
    trainer = Pretrainer(reasoner, cfg)
    result = PretrainResult()

    n_epochs = max(1, math.ceil(cfg.round1_steps / len(drive)))
    round1 = [[drive[_i] for _i in rng.permutation(len(drive))]
              for _ in range(n_epochs)]
    result.round1 = trainer.run(round1, cfg.round1_steps, 'pretrain round 1',
                                progress)

    if cfg.round2_steps:
        first = mixed_epoch(drive, reasoning, cfg.drivevqa_fraction, rng)
        if not first:
            raise ConfigError('round two has no records')
        n_epochs = max(1, math.ceil(cfg.round2_steps / len(first)))
        round2 = [first] + [
            mixed_epoch(drive, reasoning, cfg.drivevqa_fraction, rng)
            for _ in range(n_epochs - 1)
        ]
        result.round2 = trainer.run(round2, cfg.round2_steps,
                                    'pretrain round 2', progress)
    return result
