"""
Inference scheduler

The gate decides at every planner tick whether the reasoner runs. A run
is due when nothing has been inferred yet, or when the ticks since the
last run reach the interval the GateConfig assigns to the current grade.
The simulation loop owns the GateState; the planner reads the last
guidance snapshot in between runs.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from guidedplan.config import GateConfig
from guidedplan.encoders import ImageDescriptors
from guidedplan.errors import ConfigError
from guidedplan.numerics import Tensor
from guidedplan.reasoner import GuidanceVector
from guidedplan.scene import LaneGraph, LocalSceneView, Scenario
from .features import ComplexityFeatures, extract_features
from .grading import (LearnedGrader, grade_from_logits, normalize_features,
                      rule_complexity)

logger = logging.getLogger(__name__)


@dataclass
class GateState:
    """ Single-writer scheduler state of one simulation

    Attributes:
        ticks_since_infer (int): ticks since the last reasoner run
        last_guidance (Optional[GuidanceVector]): guidance of that run
        inference_log (List[int]): ticks of every run
        grade_log (List[int]): grade at every tick
    """

    ticks_since_infer: int = 0
    last_guidance: Optional[GuidanceVector] = None
    inference_log: List[int] = field(default_factory=list)
    grade_log: List[int] = field(default_factory=list)

    def record_inference(self,
                         tick: int,
                         guidance: Optional[GuidanceVector] = None) -> None:
        self.ticks_since_infer = 0
        self.last_guidance = guidance
        self.inference_log.append(tick)

    def advance(self) -> None:
        self.ticks_since_infer += 1


def should_infer(state: GateState,
                 grade: int,
                 setting: GateConfig,
                 tick: int = 0) -> bool:
    """ True when the reasoner must run at <tick>

    The 'never' mode runs nothing; every other mode runs at the first
    tick it sees and then once the grade's interval has elapsed.
    """

    if setting.mode == 'never':
        return False
    if not state.inference_log:
        return True
    due = state.ticks_since_infer >= setting.interval_for(grade)
    if due:
        logger.debug('tick %d: grade %d, %d ticks since last run, infer',
                     tick, grade, state.ticks_since_infer)
    return due


def average_interval(log: Sequence[int], total_ticks: int) -> float:
    """ Mean gap between consecutive inference ticks; <total_ticks> when
    fewer than two runs happened """

    if len(log) < 2:
        return float(total_ticks)
    return float(np.mean(np.diff(np.asarray(log, dtype=np.float64))))


def run_schedule(grades: Sequence[int], setting: GateConfig) -> List[int]:
    """ Ticks at which the scheduler fires for a per-tick grade sequence """

    state = GateState()
    for _t, _g in enumerate(grades):
        if _t:
            state.advance()
        if should_infer(state, int(_g), setting, _t):
            state.record_inference(_t)
    return state.inference_log


class CAIGate:
    """ Grades the scene and schedules reasoner runs

    Attributes:
        cfg (GateConfig): mode, intervals and rule weights
        grader (Optional[LearnedGrader]): required by the learned mode
    """

    def __init__(self,
                 cfg: Optional[GateConfig] = None,
                 grader: Optional[LearnedGrader] = None) -> None:
        self.cfg = cfg or GateConfig()
        if self.cfg.mode == 'learned':
            if grader is None:
                raise ConfigError('the learned gate needs a grader')
            if grader.input != self.cfg.learned_input:
                raise ConfigError(
                    f'grader consumes {grader.input}, gate is configured '
                    f'for {self.cfg.learned_input}')
        self.grader = grader

    @property
    def needs_descriptors(self) -> bool:
        return self.cfg.mode == 'learned' and self.cfg.learned_input == 'grid'

    def features(self, view: LocalSceneView, scenario: Scenario,
                 graph: Optional[LaneGraph] = None) -> ComplexityFeatures:
        return extract_features(view, scenario, graph,
                                self.cfg.rule.turn_threshold)

    def grade(self,
              view: LocalSceneView,
              scenario: Scenario,
              descriptors: Optional[ImageDescriptors] = None,
              graph: Optional[LaneGraph] = None) -> int:
        if self.cfg.mode == 'learned' and self.grader is not None:
            if self.cfg.learned_input == 'grid':
                if descriptors is None:
                    raise ConfigError('the grid grader needs image descriptors')
                x = descriptors.front_grid(0)
            else:
                x = normalize_features(self.features(view, scenario, graph))
            return grade_from_logits(self.grader(Tensor(x)))
        return rule_complexity(self.features(view, scenario, graph),
                               self.cfg.rule)

    def decide(self,
               state: GateState,
               view: LocalSceneView,
               scenario: Scenario,
               tick: int,
               descriptors: Optional[ImageDescriptors] = None,
               graph: Optional[LaneGraph] = None) -> Tuple[bool, int]:
        """ (run the reasoner now, grade) at <tick>; the grade is logged """

        grade = self.grade(view, scenario, descriptors, graph)
        state.grade_log.append(grade)
        return should_infer(state, grade, self.cfg, tick), grade
