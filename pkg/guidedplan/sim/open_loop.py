"""
Open-loop evaluation

The bundle plans at sampled ticks of the logged scenario and nothing is
executed. Plans are compared with the logged expert over 3, 5 and 8 s.
The score is a displacement proxy:

    error = mean over the horizons of (ADE_h + FDE_h) / 2
    score = 100 * (1 - min(1, error / tolerance))

with an 8 m tolerance. A sample misses when its FDE at 8 s exceeds 2 m.
"""

from __future__ import annotations
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from guidedplan.config import HZ, SimConfig
from guidedplan.errors import ConfigError
from guidedplan.gate import GateState
from guidedplan.scene import LaneGraph, Scenario
from guidedplan.scene.geometry import to_local
from .simulator import PlanningBundle, start_tick_for

logger = logging.getLogger(__name__)

HORIZONS_S = (3, 5, 8)
MISS_DISTANCE = 2.0
ERROR_TOLERANCE = 8.0


@dataclass
class OpenLoopReport:
    """
    Attributes:
        ade (Dict[int, float]): average displacement error by horizon (s)
        fde (Dict[int, float]): final displacement error by horizon (s)
        miss_rate (float): share of samples with FDE@8s above 2 m
        score (float): proxy score in [0, 100]
        ticks (List[int]): sampled ticks
        inference_log (List[int]): ticks at which the reasoner ran
    """

    scenario_id: str
    ade: Dict[int, float] = field(default_factory=dict)
    fde: Dict[int, float] = field(default_factory=dict)
    miss_rate: float = 0.0
    score: float = 100.0
    ticks: List[int] = field(default_factory=list)
    inference_log: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def displacement_errors(plan_xy: np.ndarray, gt_xy: np.ndarray,
                        horizon: int) -> Tuple[float, float]:
    """ (ADE, FDE) over the first <horizon> steps """

    if len(plan_xy) < horizon or len(gt_xy) < horizon:
        raise ConfigError(f'trajectories shorter than {horizon} steps')
    d = np.linalg.norm(plan_xy[:horizon, :2] - gt_xy[:horizon, :2], axis=1)
    return float(d.mean()), float(d[-1])


def proxy_score(ade: Dict[int, float], fde: Dict[int, float]) -> float:
    error = np.mean([(ade[_h] + fde[_h]) / 2.0 for _h in ade])
    return float(100.0 * (1.0 - min(1.0, error / ERROR_TOLERANCE)))


def expert_future(scenario: Scenario, tick: int, pose: Sequence[float],
                  horizon: int) -> np.ndarray:
    """ [horizon, 2] logged ego positions after <tick> in the frame of <pose> """

    rows = scenario.ego.states[tick + 1:tick + 1 + horizon, :2]
    return to_local(rows, np.array(pose[:2]), float(pose[2]))


def run_open_loop(bundle: PlanningBundle,
                  scenario: Scenario,
                  config: Optional[SimConfig] = None,
                  graph: Optional[LaneGraph] = None) -> OpenLoopReport:
    """ Plan at every <open_loop_stride>-th tick that has 8 s of log ahead

    Raises:
        ConfigError: no tick qualifies, or plans shorter than 8 s
    """

    config = config or SimConfig(mode='open_loop')
    horizon = max(HORIZONS_S) * HZ
    start = start_tick_for(bundle, config)
    ticks = list(range(start, scenario.num_ticks - horizon,
                       config.open_loop_stride))
    if not ticks:
        raise ConfigError(f'{scenario.id}: no tick with {horizon} ticks of log')
    graph = graph or LaneGraph(scenario.lanes)
    state = GateState()
    ade: Dict[int, List[float]] = {_h: [] for _h in HORIZONS_S}
    fde: Dict[int, List[float]] = {_h: [] for _h in HORIZONS_S}
    for _i, _t in enumerate(ticks):
        for _ in range(config.open_loop_stride if _i else 0):
            state.advance()
        obs = bundle.observe(scenario, _t, graph)
        descriptors = obs.descriptors if bundle.gate.needs_descriptors \
            else None
        infer, grade = bundle.gate.decide(state, obs.view, scenario, _t,
                                          descriptors, graph)
        if infer:
            state.record_inference(_t, bundle.guidance(obs, grade))
        out = bundle.plan(obs, state.last_guidance)
        gt = expert_future(scenario, _t, obs.view.pose, horizon)
        for _h in HORIZONS_S:
            a, f = displacement_errors(out.trajectory, gt, _h * HZ)
            ade[_h].append(a)
            fde[_h].append(f)
    report = OpenLoopReport(
        scenario_id=scenario.id,
        ade={_h: float(np.mean(_v)) for _h, _v in ade.items()},
        fde={_h: float(np.mean(_v)) for _h, _v in fde.items()},
        miss_rate=float(np.mean(np.array(fde[max(HORIZONS_S)]) >
                                MISS_DISTANCE)),
        ticks=ticks,
        inference_log=list(state.inference_log))
    report.score = proxy_score(report.ade, report.fde)
    logger.debug('%s open loop: ADE@8s %.3f, score %.2f', scenario.id,
                 report.ade[8], report.score)
    return report
