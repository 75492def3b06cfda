"""
Complexity grades 1 (simple) to 5 (complex)

The rule grade aggregates five subscores in [0, 1] with configured
weights and cuts the aggregate at four thresholds. The learned grade is
an ordinal regression: a network maps its input to one score, and the
four cumulative logits are that score minus four learned cutpoints, so
z_k estimates P(grade > k).
"""

from __future__ import annotations
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm  # type: ignore

from guidedplan.config import RuleGateConfig
from guidedplan.encoders import DESCRIPTOR_DIM
from guidedplan.errors import ConfigError, ShapeError
from guidedplan.numerics import MLP, AdamW, Module, Tape, Tensor, as_tensor, ops
from guidedplan.numerics.modules import param
from .features import ComplexityFeatures

logger = logging.getLogger(__name__)

N_GRADES = 5
N_FEATURES = 8
LOGIT_CLIP = 30.0
# per-feature scale of the learned grader input; values are clipped to [0, 2]
FEATURE_SCALE = np.array([10.0, 10.0, 10.0, 25.0, 3.0, 15.0, 3.0, 50.0])


def _clamp01(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


def subscores(f: ComplexityFeatures,
              rule: Optional[RuleGateConfig] = None) -> np.ndarray:
    """ agents, proximity, lanes, kinematics, intersection; each in [0, 1] """

    rule = rule or RuleGateConfig()
    agents = min(1.0, (f.n_within_10 + 0.5 * f.n_within_25 +
                       0.25 * f.n_within_50) / 10.0)
    proximity = _clamp01(1.0 - f.min_agent_distance / rule.proximity_range)
    lanes = _clamp01((f.n_lanes_at_ego - 1) / 3.0)
    kinematics = 0.5 * min(1.0, f.ego_speed / rule.speed_scale) + \
        0.5 * min(1.0, f.ego_accel / rule.accel_scale)
    intersection = _clamp01(1.0 -
                            f.dist_to_intersection / rule.intersection_range)
    return np.array([agents, proximity, lanes, kinematics, intersection])


def rule_score(f: ComplexityFeatures,
               rule: Optional[RuleGateConfig] = None) -> float:
    rule = rule or RuleGateConfig()
    return float(np.dot(rule.weights, subscores(f, rule)))


def grade_from_score(score: float, thresholds: Sequence[float]) -> int:
    return 1 + int(sum(score > _t for _t in thresholds))


def rule_complexity(f: ComplexityFeatures,
                    rule: Optional[RuleGateConfig] = None) -> int:
    rule = rule or RuleGateConfig()
    return grade_from_score(rule_score(f, rule), rule.thresholds)


def normalize_features(f: ComplexityFeatures) -> np.ndarray:
    return np.clip(f.as_array() / FEATURE_SCALE, 0.0, 2.0)


def grade_from_logits(logits) -> int:
    """ 1 + the number of cumulative logits above 0 (sigmoid above 0.5) """

    z = logits.values if isinstance(logits, Tensor) else np.asarray(logits)
    return 1 + int(np.sum(z > 0.0))


def ordinal_targets(grade: int) -> np.ndarray:
    if not 1 <= grade <= N_GRADES:
        raise ConfigError(f'grade must be in 1..{N_GRADES}, got {grade}')
    return np.array([float(grade > _k) for _k in range(1, N_GRADES)])


def ordinal_loss(logits, grades) -> Tensor:
    """ Sum over the four cumulative logits of the binary cross-entropy
    against 1[grade > k], averaged over a batch

    Plain arrays are clipped to +-30 first, so infinite logits are
    accepted.

    Args:
        logits: [4] or [B, 4]
        grades: one grade or B grades
    """

    if not isinstance(logits, Tensor):
        logits = Tensor(np.clip(np.asarray(logits, dtype=np.float64),
                                -LOGIT_CLIP, LOGIT_CLIP))
    grades = np.atleast_1d(np.asarray(grades, dtype=int))
    targets = np.stack([ordinal_targets(int(_g)) for _g in grades])
    if logits.ndim == 1:
        targets = targets[0]
        return ops.sum(ops.bce_with_logits(logits, targets))
    if logits.shape != targets.shape:
        raise ShapeError(f'ordinal_loss: logits {logits.shape} for '
                         f'{len(grades)} grades')
    return ops.scale(ops.sum(ops.bce_with_logits(logits, targets)),
                     1.0 / len(grades))


class LearnedGrader(Module):
    """ Ordinal regression over complexity features or a front-view grid

    Attributes:
        input (str): features | grid
        cutpoints (Tensor): [4] subtracted from the score
    """

    def __init__(self,
                 rng: np.random.Generator,
                 input: str = 'features',
                 hidden: int = 64,
                 channels: int = DESCRIPTOR_DIM) -> None:
        if input not in ('features', 'grid'):
            raise ConfigError(f'unknown grader input {input!r}')
        self.input = input
        if input == 'features':
            self.mlp = MLP(N_FEATURES, hidden, 1, rng)
        else:
            self.conv = param(rng.normal(0.0, 0.1, size=(8, channels, 3, 3)))
            self.mlp = MLP(8, hidden, 1, rng)
        self.cutpoints = param(np.array([-1.5, -0.5, 0.5, 1.5]))

    def score(self, x) -> Tensor:
        """ [B] scores of a batch, or a single score of shape () """

        x = as_tensor(x)
        if self.input == 'grid':
            if x.ndim == 4:
                return ops.concat([
                    ops.reshape(self.score(ops.slice(x, _i)), (1, ))
                    for _i in range(x.shape[0])
                ])
            h = ops.relu(ops.conv2d(x, self.conv, padding=1))
            return ops.reshape(self.mlp(ops.mean(h, axis=(1, 2))), ())
        if x.ndim == 1:
            return ops.reshape(self.mlp(x), ())
        return ops.reshape(self.mlp(x), (x.shape[0], ))

    def forward(self, x) -> Tensor:
        s = self.score(x)
        if s.ndim == 0:
            return ops.sub(s, self.cutpoints)
        column = ops.reshape(s, (s.shape[0], 1))
        return ops.sub(ops.matmul(column, Tensor(np.ones((1, 4)))),
                       self.cutpoints)


def learned_complexity(grader: LearnedGrader, x) -> Tuple[int, Tensor]:
    logits = grader(x)
    return grade_from_logits(logits), logits


def split_70_30(n: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """ Seeded shuffle of range(n) cut into 70% train and 30% held out """

    order = np.random.default_rng(seed).permutation(n)
    cut = int(round(0.7 * n))
    return np.sort(order[:cut]), np.sort(order[cut:])


def fit_grader(grader: LearnedGrader,
               inputs: np.ndarray,
               grades: Sequence[int],
               steps: int = 1000,
               lr: float = 1e-2,
               batch_size: Optional[int] = None,
               seed: int = 0,
               progress: bool = False) -> List[float]:
    """ Fit <grader> to (input, grade) pairs with AdamW

    Args:
        inputs: [N, 8] normalized features, or [N, C, H, W] grids
        grades: N grades in 1..5
        batch_size: rows per step, all rows when None

    Returns:
        the loss of every step
    """

    inputs = np.asarray(inputs, dtype=np.float64)
    grades = np.asarray(grades, dtype=int)
    if len(inputs) != len(grades) or not len(grades):
        raise ShapeError(f'{len(inputs)} inputs for {len(grades)} grades')
    optimizer = AdamW(grader.parameters(), lr=lr, weight_decay=0.0)
    rng = np.random.default_rng(seed)
    losses = []
    for _ in tqdm(range(steps), disable=not progress, desc='grader'):
        if batch_size is None or batch_size >= len(grades):
            idx = np.arange(len(grades))
        else:
            idx = rng.choice(len(grades), size=batch_size, replace=False)
        grader.zero_grad()
        with Tape() as tape:
            loss = ordinal_loss(grader(Tensor(inputs[idx])), grades[idx])
        tape.backward(loss)
        optimizer.step()
        losses.append(loss.item())
    if losses:
        logger.info('grader fit: %d steps, loss %.4f -> %.4f', steps,
                    losses[0], losses[-1])
    return losses


def grade_accuracy(grader: LearnedGrader, inputs: np.ndarray,
                   grades: Sequence[int]) -> Tuple[float, float]:
    """ (exact-match rate, within-one rate) """

    predicted = np.array([grade_from_logits(_z) for _z in
                          np.atleast_2d(grader(Tensor(inputs)).values)])
    err = np.abs(predicted - np.asarray(grades))
    return float(np.mean(err == 0)), float(np.mean(err <= 1))
