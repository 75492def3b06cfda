"""
Traffic during simulation

Non-reactive traffic replays the logs. In reactive mode every vehicle and
bicycle present at the first simulated tick becomes a lane follower: it
keeps its lateral offset to a lane path and chooses its acceleration with
the intelligent driver model, treating the nearest box ahead on its path
(other agents, static obstacles and the ego) as its leader. Pedestrians
and agents that appear later keep replaying their logs.
"""

from __future__ import annotations
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from guidedplan.config import DT, IDMConfig
from guidedplan.errors import ConfigError
from guidedplan.scene import LaneGraph, Scenario
from guidedplan.scene.geometry import (interpolate_polyline,
                                       project_to_polyline, wrap_to_pi)
from .collision import BoxState

logger = logging.getLogger(__name__)

AGENT_MODES = ('non_reactive', 'reactive')
FOLLOW_DISTANCE = 1000.0
# lateral distance within which another box counts as on the same lane
SAME_LANE = 1.75
REACTIVE_CLASSES = ('vehicle', 'bicycle')
MIN_GAP = 0.1


def idm_acceleration(v: float, v0: float, gap: Optional[float],
                     dv: float, cfg: IDMConfig) -> float:
    """ Intelligent driver model

    Args:
        v: own speed
        v0: desired speed
        gap: bumper-to-bumper distance to the leader, None without one
        dv: own speed minus leader speed
    """

    free = 1.0 - (v / v0)**cfg.exponent if v0 > 0 else -1.0
    if gap is None:
        return cfg.max_accel * free
    s_star = cfg.min_gap + max(
        0.0, v * cfg.time_headway +
        v * dv / (2.0 * math.sqrt(cfg.max_accel * cfg.comfortable_decel)))
    return cfg.max_accel * (free - (s_star / max(gap, MIN_GAP))**2)


def idm_step(v: float, a: float, dt: float = DT) -> Tuple[float, float]:
    """ (new speed, distance travelled); speeds never go negative """

    v_new = max(0.0, v + a * dt)
    return v_new, 0.5 * (v + v_new) * dt


class LaneFollower:
    """ One reactive agent

    Attributes:
        id (str): agent id
        path (np.ndarray): [K, 2+] chained centerlines the agent drives along
        s (float): arc length along the path
        offset (float): constant lateral offset to the path
        v (float): speed along the path
        v0 (float): desired speed, the limit of the starting lane
    """

    def __init__(self, agent_id: str, length: float, width: float,
                 path: np.ndarray, state: np.ndarray, v0: float) -> None:
        self.id = agent_id
        self.length = length
        self.width = width
        self.path = path
        self.s, self.offset, _ = project_to_polyline(state[:2], path)
        self.v = float(np.hypot(state[3], state[4]))
        self.v0 = v0
        self.a = 0.0

    def pose(self) -> Tuple[float, float, float]:
        x, y, h = interpolate_polyline(self.path, self.s)
        return (x - self.offset * math.sin(h), y + self.offset * math.cos(h),
                float(wrap_to_pi(h)))

    def state(self) -> np.ndarray:
        x, y, h = self.pose()
        c, s = math.cos(h), math.sin(h)
        return np.array(
            [x, y, h, self.v * c, self.v * s, self.a * c, self.a * s])

    def box(self) -> BoxState:
        return BoxState.from_state(self.id, self.state(), self.length,
                                   self.width)

    def leader(self, others: List[BoxState],
               lookahead: float) -> Optional[Tuple[float, float]]:
        """ (gap, leader speed along the path) of the nearest box ahead """

        x, y, _ = self.pose()
        best: Optional[Tuple[float, float]] = None
        for _o in others:
            if _o.id == self.id or math.hypot(_o.x - x, _o.y - y) > \
                    lookahead + _o.half_diagonal + self.length:
                continue
            s, lateral, heading = project_to_polyline(_o.center, self.path)
            ds = s - self.s
            if abs(lateral - self.offset) >= SAME_LANE or not 0.0 < ds < lookahead:
                continue
            gap = ds - (self.length + _o.length) / 2.0
            speed = _o.vx * math.cos(heading) + _o.vy * math.sin(heading)
            if best is None or gap < best[0]:
                best = (gap, speed)
        return best

    def step(self, others: List[BoxState], cfg: IDMConfig,
             dt: float = DT) -> None:
        lead = self.leader(others, cfg.lookahead)
        if lead is None:
            self.a = idm_acceleration(self.v, self.v0, None, 0.0, cfg)
        else:
            gap, speed = lead
            self.a = idm_acceleration(self.v, self.v0, gap, self.v - speed,
                                      cfg)
        v_new, ds = idm_step(self.v, self.a, dt)
        self.a = (v_new - self.v) / dt
        self.v = v_new
        self.s += ds


def lane_path(graph: LaneGraph, lane_id: str,
              distance: float = FOLLOW_DISTANCE) -> np.ndarray:
    """ Centerlines from <lane_id> on, chained over <distance> meters """

    pieces: List[np.ndarray] = []
    for _id in graph.follow(lane_id, distance):
        pts = graph.lanes[_id].centerline
        if pieces and np.allclose(pieces[-1][-1, :2], pts[0, :2]):
            pts = pts[1:]
        pieces.append(pts)
    return np.concatenate(pieces, axis=0)


def heading_compatible_lane(graph: LaneGraph, state: np.ndarray) -> str:
    """ Nearest lane running within 90 degrees of the agent's heading """

    xy = state[:2]
    candidates = []
    for _id in graph.lanes_at(xy, tolerance=2.0 * SAME_LANE) or graph.lanes:
        _, _, h = project_to_polyline(xy, graph.lanes[_id].centerline)
        if abs(wrap_to_pi(h - state[2])) < math.pi / 2:
            candidates.append(_id)
    return graph.nearest_lane(xy, candidates or None)


class AgentSimulator:
    """ The traffic of one simulation run

    Attributes:
        scenario (Scenario): the logged scenario
        mode (str): non_reactive | reactive
        tick (int): tick of the current agent states
        followers (Dict[str, LaneFollower]): reactive agents by id
    """

    def __init__(self,
                 scenario: Scenario,
                 mode: str,
                 start_tick: int,
                 idm: Optional[IDMConfig] = None,
                 graph: Optional[LaneGraph] = None) -> None:
        if mode not in AGENT_MODES:
            raise ConfigError(f'unknown agent mode {mode!r}')
        self.scenario = scenario
        self.mode = mode
        self.tick = start_tick
        self.idm = idm or IDMConfig()
        self.followers: Dict[str, LaneFollower] = {}
        if mode == 'reactive':
            graph = graph or LaneGraph(scenario.lanes)
            for _a in scenario.agents:
                if _a.agent_class not in REACTIVE_CLASSES or \
                        not _a.valid[start_tick]:
                    continue
                state = _a.states[start_tick]
                lane = heading_compatible_lane(graph, state)
                self.followers[_a.id] = LaneFollower(
                    _a.id, _a.length, _a.width, lane_path(graph, lane), state,
                    graph.lanes[lane].speed_limit)
            logger.debug('%s: %d reactive agents', scenario.id,
                         len(self.followers))

    def states(self) -> Dict[str, np.ndarray]:
        """ [7] states of every agent present at the current tick """

        out: Dict[str, np.ndarray] = {}
        for _a in self.scenario.agents:
            if _a.id in self.followers:
                out[_a.id] = self.followers[_a.id].state()
            elif _a.valid[self.tick]:
                out[_a.id] = _a.states[self.tick]
        return out

    def boxes(self) -> List[BoxState]:
        """ Agent and obstacle boxes at the current tick """

        agents = self.scenario.agent_by_id
        out = [
            BoxState.from_state(_id, _s, agents[_id].length, agents[_id].width)
            for _id, _s in sorted(self.states().items())
        ]
        out.extend(
            BoxState(_o.id, _o.x, _o.y, _o.heading, _o.length, _o.width)
            for _o in self.scenario.obstacles)
        return out

    def step(self, ego: BoxState) -> None:
        """ Advance every agent by one tick; followers see the boxes of the
        current tick (ego included) """

        if self.followers:
            others = self.boxes() + [ego]
            for _id in sorted(self.followers):
                self.followers[_id].step(others, self.idm)
        self.tick += 1


def step_agents(sim: AgentSimulator, ego: BoxState) -> Dict[str, np.ndarray]:
    sim.step(ego)
    return sim.states()
