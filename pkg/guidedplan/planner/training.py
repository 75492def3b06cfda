"""
Fine-tuning of the full stack

A TrainingSample freezes everything one step needs from a logged
scenario at one tick. Trainer runs AdamW with a warm-up cosine schedule
over the trainable parameters of a DrivingStack; frozen components never
reach the optimizer.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm  # type: ignore

from guidedplan.config import ModelConfig, TrainConfig
from guidedplan.encoders import ImageDescriptors, rasterize, select_views
from guidedplan.errors import (ConfigError, NonFiniteError,
                               TrainingDivergedError)
from guidedplan.numerics import AdamW, Tape, WarmupCosine, ops
from guidedplan.reasoner import AuxLabels, derive_aux_labels
from guidedplan.scene import (LaneGraph, LocalSceneView, Scenario,
                              route_instruction, to_ego_frame)

if TYPE_CHECKING:
    from guidedplan.interfaces import DrivingStack

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """ One supervised tick

    Attributes:
        scenario (Scenario): source scenario
        tick (int): view tick
        view (LocalSceneView): planner input, with the expert future
        nav_text (str): route instruction of the prompt
        descriptors (ImageDescriptors): rasterized camera grid
        aux_labels (AuxLabels): auxiliary targets
    """

    scenario: Scenario
    tick: int
    view: LocalSceneView
    nav_text: str
    descriptors: ImageDescriptors
    aux_labels: AuxLabels


def make_sample(scenario: Scenario,
                tick: int,
                cfg: ModelConfig,
                graph: Optional[LaneGraph] = None) -> Optional[TrainingSample]:
    """ The sample at <tick>, or None when the log ends before the horizon """

    view = to_ego_frame(scenario, tick, cfg.limits, history=cfg.history,
                        future=cfg.future)
    if view.future_gt is None:
        return None
    return TrainingSample(
        scenario=scenario,
        tick=tick,
        view=view,
        nav_text=route_instruction(scenario, view.pose, view.ego_speed,
                                   cfg.future / 10.0),
        descriptors=rasterize(scenario, tick,
                              select_views(scenario.camera_rig, cfg.n_views),
                              grid=(cfg.grid_h, cfg.grid_w)),
        aux_labels=derive_aux_labels(scenario, tick, graph))


def make_samples(scenarios: Sequence[Scenario],
                 cfg: ModelConfig,
                 ticks_per_scenario: int = 4,
                 seed: int = 0) -> List[TrainingSample]:
    """ Up to <ticks_per_scenario> samples per scenario at evenly spaced
    ticks, shifted by a seeded offset """

    rng = np.random.default_rng(seed)
    out: List[TrainingSample] = []
    for _sc in scenarios:
        first = cfg.history - 1
        last = _sc.num_ticks - cfg.future - 1
        if last < first:
            logger.info('scenario %s: too short for training, skipped', _sc.id)
            continue
        ticks = np.unique(
            np.linspace(first, last, ticks_per_scenario).round().astype(int))
        shift = int(rng.integers(0, 3))
        graph = LaneGraph(_sc.lanes)
        for _t in ticks:
            sample = make_sample(_sc, int(min(last, _t + shift)), cfg, graph)
            if sample is not None:
                out.append(sample)
    return out


class Trainer:
    """ AdamW fine-tuning loop

    Attributes:
        stack (DrivingStack): the model being trained
        cfg (TrainConfig): schedule, head and frozen components
        step_count (int): optimizer steps taken so far
        history (List[float]): loss of every step
    """

    def __init__(self, stack: 'DrivingStack', cfg: TrainConfig) -> None:
        self.stack = stack
        self.cfg = cfg
        self.params = stack.trainable_parameters(cfg.freeze)
        self.optimizer = AdamW(self.params,
                               lr=cfg.lr,
                               betas=cfg.betas,
                               weight_decay=cfg.weight_decay,
                               max_grad_norm=cfg.max_grad_norm)
        self.schedule = WarmupCosine(cfg.lr, cfg.steps, cfg.warmup_steps,
                                     cfg.final_lr)
        self.step_count = 0
        self.history: List[float] = []

    def _diagnostics(self, terms: Sequence,
                     error: Optional[str] = None) -> Dict[str, object]:
        return {
            'step': self.step_count,
            'lr': self.schedule(self.step_count),
            'error': error,
            'plan_loss': [_t.plan.item() for _t in terms],
            'aux_loss': [_t.aux.item() for _t in terms],
            'param_norms': {
                _k: float(np.linalg.norm(_p.values))
                for _k, _p in self.params.items()
            },
        }

    def train_step(self, batch: Sequence[TrainingSample]) -> float:
        """ One forward/backward/update over <batch>

        Raises:
            ConfigError: empty batch
            TrainingDivergedError: the loss is not finite
        """

        if not batch:
            raise ConfigError('train_step needs a nonempty batch')
        self.stack.zero_grad()
        terms: List = []
        try:
            with Tape() as tape:
                for _s in batch:
                    terms.append(
                        self.stack.sample_loss(_s, self.cfg.head,
                                               self.cfg.use_guidance))
                loss = ops.scale(
                    ops.sum(ops.stack([_t.total for _t in terms])),
                    1.0 / len(terms))
        except NonFiniteError as e:
            tape.clear()
            logger.error('step %d: %s, training aborted', self.step_count, e)
            raise TrainingDivergedError(
                f'non-finite loss input at step {self.step_count}',
                self._diagnostics(terms, str(e))) from e
        value = loss.item()
        if not math.isfinite(value):
            tape.clear()
            diagnostics = self._diagnostics(terms)
            logger.error('step %d: loss is %s, training aborted',
                         self.step_count, value)
            raise TrainingDivergedError(
                f'non-finite loss at step {self.step_count}', diagnostics)
        tape.backward(loss)
        self.optimizer.step(self.schedule(self.step_count))
        self.stack.apply_after_step()
        self.step_count += 1
        self.history.append(value)
        return value

    def fit(self,
            samples: Sequence[TrainingSample],
            steps: Optional[int] = None,
            progress: bool = False) -> List[float]:
        """ <steps> steps over random batches of <samples> """

        if not samples:
            raise ConfigError('no training samples')
        steps = self.cfg.steps if steps is None else steps
        rng = np.random.default_rng(self.cfg.seed + self.step_count)
        size = min(self.cfg.batch_size, len(samples))
        losses = []
        for _ in tqdm(range(steps), disable=not progress, desc='finetune'):
            idx = rng.choice(len(samples), size=size, replace=False)
            losses.append(self.train_step([samples[_i] for _i in idx]))
        if losses:
            logger.info('trained %d steps, loss %.4f -> %.4f', steps,
                        losses[0], losses[-1])
        return losses

