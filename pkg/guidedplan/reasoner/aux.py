"""
Auxiliary tasks of the reasoner

Side predictions made from the last hidden state: ego speed and
longitudinal acceleration one second ahead, the velocity decision over
the next two seconds, the light of the current route lane, whether lanes
exist to the left and right, and whether a lane change happens within
four seconds. Labels are derived from the logged scenario.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from networkx import has_path  # type: ignore

from guidedplan.numerics import MLP, Module, Tensor, ops
from guidedplan.scene import LIGHT_STATES, LaneGraph, Scenario

logger = logging.getLogger(__name__)

VELOCITY_DECISIONS = ('accelerate', 'keep', 'decelerate', 'stop')
DEAD_BAND = 0.5
STOP_SPEED = 0.2
VELOCITY_AHEAD = 10
DECISION_AHEAD = 20
LANE_CHANGE_AHEAD = 40

# slices of the packed head output
_SLICES = {
    'ego_velocity': slice(0, 1),
    'ego_acceleration': slice(1, 2),
    'velocity_decision': slice(2, 6),
    'traffic_light': slice(6, 9),
    'adjacent_lane': slice(9, 11),
    'lane_change': slice(11, 12),
}
_WIDTH = 12


@dataclass(frozen=True, eq=False)
class AuxPredictions:
    ego_velocity: Tensor
    ego_acceleration: Tensor
    velocity_decision: Tensor
    traffic_light: Tensor
    adjacent_lane: Tensor
    lane_change: Tensor


@dataclass(frozen=True)
class AuxLabels:
    """ Targets of the auxiliary heads, None where the log cannot tell """

    ego_velocity: Optional[float] = None
    ego_acceleration: Optional[float] = None
    velocity_decision: Optional[int] = None
    traffic_light: Optional[int] = None
    adjacent_lane: Optional[Tuple[float, float]] = None
    lane_change: Optional[float] = None


class AuxHeads(Module):

    def __init__(self, d: int, rng: np.random.Generator) -> None:
        self.mlp = MLP(d, d, _WIDTH, rng)

    def forward(self, h_n: Tensor) -> AuxPredictions:
        out = self.mlp(h_n)
        return AuxPredictions(
            **{_k: ops.slice(out, _s)
               for _k, _s in _SLICES.items()})


def aux_heads(h_n: Tensor, heads: AuxHeads) -> AuxPredictions:
    return heads(h_n)


def aux_terms(pred: AuxPredictions, labels: AuxLabels) -> Dict[str, Tensor]:
    """ Every available loss term by name; missing labels are skipped """

    terms: Dict[str, Tensor] = {}
    if labels.ego_velocity is not None:
        terms['ego_velocity'] = ops.sum(
            ops.square(ops.sub(pred.ego_velocity, labels.ego_velocity)))
    if labels.ego_acceleration is not None:
        terms['ego_acceleration'] = ops.sum(
            ops.square(ops.sub(pred.ego_acceleration,
                               labels.ego_acceleration)))
    if labels.velocity_decision is not None:
        terms['velocity_decision'] = ops.cross_entropy(
            pred.velocity_decision, labels.velocity_decision)
    if labels.traffic_light is not None:
        terms['traffic_light'] = ops.cross_entropy(pred.traffic_light,
                                                   labels.traffic_light)
    if labels.adjacent_lane is not None:
        bce = ops.bce_with_logits(pred.adjacent_lane,
                                  np.asarray(labels.adjacent_lane, float))
        terms['adjacent_left'] = ops.slice(bce, 0)
        terms['adjacent_right'] = ops.slice(bce, 1)
    if labels.lane_change is not None:
        terms['lane_change'] = ops.sum(
            ops.bce_with_logits(pred.lane_change,
                                np.array([labels.lane_change])))
    skipped = [
        _k for _k in ('ego_velocity', 'ego_acceleration', 'velocity_decision',
                      'traffic_light', 'adjacent_lane', 'lane_change')
        if getattr(labels, _k) is None
    ]
    if skipped:
        logger.debug('aux loss: no label for %s, term skipped',
                     ', '.join(skipped))
    return terms


def aux_loss(pred: AuxPredictions, labels: AuxLabels) -> Tensor:
    """ Equal-weight sum of the available auxiliary terms """

    terms = aux_terms(pred, labels)
    if not terms:
        return Tensor(0.0)
    return ops.sum(ops.stack(list(terms.values())))


def _signed_speed(state: np.ndarray) -> float:
    return float(state[3] * np.cos(state[2]) + state[4] * np.sin(state[2]))


def _lon_accel(state: np.ndarray) -> float:
    return float(state[5] * np.cos(state[2]) + state[6] * np.sin(state[2]))


def current_route_lane(scenario: Scenario, graph: LaneGraph,
                       point: np.ndarray) -> str:
    route = [_ for _ in scenario.route_lane_ids if _ in graph.lanes]
    return graph.nearest_lane(point, route or None)


def derive_aux_labels(scenario: Scenario,
                      tick: int,
                      graph: Optional[LaneGraph] = None) -> AuxLabels:
    """ Auxiliary targets at <tick> from the expert log """

    graph = graph or LaneGraph(scenario.lanes)
    ego = scenario.ego.states
    n = scenario.num_ticks
    labels: Dict[str, object] = {}

    if tick + VELOCITY_AHEAD < n:
        labels['ego_velocity'] = _signed_speed(ego[tick + VELOCITY_AHEAD])
        labels['ego_acceleration'] = _lon_accel(ego[tick + VELOCITY_AHEAD])
    if tick + DECISION_AHEAD < n:
        later = _signed_speed(ego[tick + DECISION_AHEAD])
        delta = later - _signed_speed(ego[tick])
        if abs(later) < STOP_SPEED:
            decision = 'stop'
        elif delta > DEAD_BAND:
            decision = 'accelerate'
        elif delta < -DEAD_BAND:
            decision = 'decelerate'
        else:
            decision = 'keep'
        labels['velocity_decision'] = VELOCITY_DECISIONS.index(decision)

    here = graph.nearest_lane(ego[tick, :2])
    route_lane = current_route_lane(scenario, graph, ego[tick, :2])
    labels['traffic_light'] = LIGHT_STATES.index(
        scenario.light_state(tick, route_lane))
    lane = graph.lanes[here]
    labels['adjacent_lane'] = (float(lane.left is not None),
                               float(lane.right is not None))
    if tick + LANE_CHANGE_AHEAD < n:
        there = graph.nearest_lane(ego[tick + LANE_CHANGE_AHEAD, :2])
        labels['lane_change'] = float(
            not has_path(graph.successors, here, there))
    return AuxLabels(**labels)  # type: ignore
