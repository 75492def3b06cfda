"""
Synthetic scenarios

synth_scenario() builds a complete Scenario from a seed and a handful of
parameters. The road is a bundle of parallel lanes along a reference line
that is straight or contains one circular turn. Traffic moves at constant
speed along its lane, one speed per lane, so logged vehicles never run into
each other. The expert ego follows lane 0 with a smooth speed profile
(constant, or a cosine-shaped stop) and, for lane-change scenes, a cosine
lateral shift into lane 1. Every expert log stays inside the comfort
bounds of the default MetricConfig.

The whole scene is finally moved by a random rigid transform so nothing
downstream may assume a particular global pose.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from guidedplan.config import DT
from guidedplan.errors import ConfigError
from .geometry import wrap_to_pi
from .scenario import (SCENARIO_TYPE_NAMES, SCENARIO_TYPES, Camera, CameraRig,
                       CrosswalkPolygon, LaneSegment, Scenario, StaticObstacle,
                       Track, rigid_transform_scenario)

logger = logging.getLogger(__name__)

LANE_WIDTH = 3.5
SEGMENT_LENGTH = 25.0
SPEED_LIMIT = 15.0
EGO_LENGTH = 4.8
EGO_WIDTH = 2.0
SIDEWALK_OFFSET = -(LANE_WIDTH / 2 + 2.5)
MAX_AGENTS = 40
MAX_LANES = 6


@dataclass(frozen=True)
class _TypeProfile:
    speed: float  # nominal ego speed
    turn: int = 0  # +1 left, -1 right, 0 straight
    radius: float = 60.0
    turn_start: float = 30.0
    lead: Optional[str] = None  # 'follow' | 'truck' | 'stopped' | 'pedestrian'
    stop: bool = False
    lane_change: bool = False
    intersection: Optional[Tuple[float, float]] = None
    light: Optional[str] = None


_PROFILES: Dict[str, _TypeProfile] = {
    'starting_left_turn': _TypeProfile(7.0, turn=1, light='green'),
    'starting_right_turn': _TypeProfile(7.0, turn=-1, light='green'),
    'starting_straight_traffic_light_intersection_traversal':
    _TypeProfile(10.0, intersection=(40.0, 65.0), light='green'),
    'stopping_with_lead': _TypeProfile(8.0, lead='follow', stop=True,
                                       light='red'),
    'high_lateral_acceleration': _TypeProfile(9.0, turn=1, radius=80.0,
                                              turn_start=10.0),
    'high_magnitude_speed': _TypeProfile(13.0),
    'low_magnitude_speed': _TypeProfile(3.0),
    'traversing_pickup_dropoff': _TypeProfile(5.0),
    'waiting_for_pedestrian_to_cross': _TypeProfile(0.0, lead='pedestrian'),
    'behind_long_vehicle': _TypeProfile(8.0, lead='truck'),
    'stationary_in_traffic': _TypeProfile(0.0, lead='stopped'),
    'near_multiple_vehicles': _TypeProfile(8.0),
    'changing_lane': _TypeProfile(9.0, lane_change=True),
    'following_lane_with_lead': _TypeProfile(9.0, lead='follow'),
}


class _ReferenceLine:
    """ Straight line along +x with an optional circular arc of 90 degrees """

    def __init__(self, turn: int, radius: float, turn_start: float) -> None:
        self.turn = turn
        self.radius = radius
        self.a = turn_start
        self.arc = radius * math.pi / 2 if turn else 0.0

    def pose(self, s: np.ndarray,
             offset: float = 0.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=np.float64)
        x, y, h = s.copy(), np.zeros_like(s), np.zeros_like(s)
        if self.turn:
            r, sg = self.radius, self.turn
            on_arc = (s > self.a) & (s <= self.a + self.arc)
            psi = (s[on_arc] - self.a) / r
            x[on_arc] = self.a + r * np.sin(psi)
            y[on_arc] = sg * r * (1.0 - np.cos(psi))
            h[on_arc] = sg * psi
            after = s > self.a + self.arc
            he = sg * math.pi / 2
            xe, ye = self.a + r, sg * r
            d = s[after] - self.a - self.arc
            x[after] = xe + d * math.cos(he)
            y[after] = ye + d * math.sin(he)
            h[after] = he
        if offset:
            x = x - offset * np.sin(h)
            y = y + offset * np.cos(h)
        return x, y, h


def _speed_profile(v0: float, n_ticks: int, stop_at: Optional[float],
                   stop_duration: float) -> np.ndarray:
    """ Arc-length offset s(t) for every tick: constant v0, or a cosine stop
    starting at time <stop_at> lasting <stop_duration> """

    t = np.arange(n_ticks) * DT
    if stop_at is None or v0 == 0.0:
        return v0 * t
    T = stop_duration
    tau = np.clip(t - stop_at, 0.0, T)
    return np.where(
        t < stop_at, v0 * t,
        v0 * stop_at + v0 * (tau / 2 + T / (2 * math.pi) *
                             np.sin(math.pi * tau / T)))


def _track_from_path(track_id: str, agent_class: str, length: float,
                     width: float, x: np.ndarray, y: np.ndarray,
                     lane_heading: np.ndarray) -> Track:
    pos = np.stack([x, y], axis=1)
    vel = np.gradient(pos, DT, axis=0) if len(pos) > 1 else np.zeros_like(pos)
    acc = np.gradient(vel, DT, axis=0) if len(pos) > 1 else np.zeros_like(pos)
    speed = np.linalg.norm(vel, axis=1)
    heading = np.where(speed > 0.05, np.arctan2(vel[:, 1], vel[:, 0]),
                       lane_heading)
    states = np.concatenate(
        [pos, wrap_to_pi(heading)[:, None], vel, acc], axis=1)
    return Track(track_id, agent_class, length, width, states,
                 np.ones(len(pos), dtype=bool))


def default_camera_rig(image_size: int = 128) -> CameraRig:
    """ Four 90-degree cameras (front, left, right, rear) on the roof """

    f = image_size / 2.0
    cams = [
        Camera(_name, f, f, image_size / 2.0, image_size / 2.0, 0.0, 0.0, 1.6,
               _yaw, image_size, image_size)
        for _name, _yaw in (('front', 0.0), ('left', math.pi / 2),
                            ('right', -math.pi / 2), ('rear', math.pi))
    ]
    return CameraRig(tuple(cams))


def _ring(corners: np.ndarray, n_points: int) -> np.ndarray:
    """ n_points spread evenly along the closed ring through <corners> """

    closed = np.concatenate([corners, corners[:1]], axis=0)
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    ss = np.linspace(0.0, cum[-1], n_points, endpoint=False)
    out = np.zeros((n_points, 4))
    out[:, 0] = np.interp(ss, cum, closed[:, 0])
    out[:, 1] = np.interp(ss, cum, closed[:, 1])
    return out


def synth_scenario(seed: int,
                   n_agents: int = 8,
                   n_lanes: int = 2,
                   scenario_type: str = 'type13',
                   duration_s: float = 11.0,
                   hazard: bool = False,
                   n_points: int = 20,
                   history: int = 20,
                   future: int = 80) -> Scenario:
    """ A deterministic synthetic scenario

    Args:
        seed: random seed, the result is a pure function of all arguments
        n_agents: traffic participants, 0 to 40
        n_lanes: parallel lanes, 1 to 6
        scenario_type: one of SCENARIO_TYPES
        duration_s: log length, at least (history + future) * 0.1 s
        hazard: put a static obstacle on the ego lane ahead; the expert
            stops in front of it
        n_points: points per lane centerline and crosswalk ring

    Raises:
        ConfigError: parameters outside the documented bounds
    """

    if scenario_type not in SCENARIO_TYPES:
        raise ConfigError(f'unknown scenario type {scenario_type!r}')
    if not 0 <= n_agents <= MAX_AGENTS:
        raise ConfigError(f'n_agents must be in [0, {MAX_AGENTS}]')
    if not 1 <= n_lanes <= MAX_LANES:
        raise ConfigError(f'n_lanes must be in [1, {MAX_LANES}]')
    if n_points < 2:
        raise ConfigError('n_points must be >= 2')
    min_duration = (history + future) * DT
    if duration_s + 1e-9 < min_duration or duration_s > 120.0:
        raise ConfigError(
            f'duration_s must be in [{min_duration:.1f}, 120], got {duration_s}')

    type_index = SCENARIO_TYPES.index(scenario_type)
    rng = np.random.default_rng([seed, type_index, n_agents, n_lanes,
                                 int(hazard)])
    prof = _PROFILES[SCENARIO_TYPE_NAMES[scenario_type]]
    n_ticks = int(round(duration_s / DT))
    t = np.arange(n_ticks) * DT
    v0 = prof.speed
    lane_change = prof.lane_change and n_lanes >= 2 and not hazard
    road = _ReferenceLine(prof.turn, prof.radius, prof.turn_start)

    # ego longitudinal profile
    stop_at: Optional[float] = None
    stop_duration = 6.0
    obstacle_s: Optional[float] = None
    if hazard:
        stop_duration = max(4.0, 0.75 * v0)
        stop_at = 2.5
        s_stop = v0 * stop_at + v0 * stop_duration / 2
        obstacle_s = s_stop + EGO_LENGTH / 2 + 1.0 + 4.0 + rng.uniform(0.0, 2.0)
    elif prof.stop:
        stop_at = 3.0
    s_ego = _speed_profile(v0, n_ticks, stop_at, stop_duration)

    s_min = -60.0
    s_max = max(float(s_ego[-1]), 0.0) + 120.0 + SPEED_LIMIT * duration_s
    n_seg = int(math.ceil((s_max - s_min) / SEGMENT_LENGTH))

    # lanes
    intersection = prof.intersection
    if prof.turn:
        intersection = (road.a, road.a + road.arc)
    lanes: List[LaneSegment] = []
    seg_bounds = [(s_min + _k * SEGMENT_LENGTH, s_min + (_k + 1) * SEGMENT_LENGTH)
                  for _k in range(n_seg)]

    def lane_id(j: int, k: int) -> str:
        return f'lane{j}_{k:03d}'

    for _j in range(n_lanes):
        for _k, (_a, _b) in enumerate(seg_bounds):
            ss = np.linspace(_a, _b, n_points)
            x, y, h = road.pose(ss, _j * LANE_WIDTH)
            centerline = np.stack(
                [x, y, wrap_to_pi(h),
                 np.full(n_points, SPEED_LIMIT)], axis=1)
            is_inter = intersection is not None and \
                _b > intersection[0] and _a < intersection[1]
            lanes.append(
                LaneSegment(lane_id(_j, _k),
                            centerline,
                            successors=(lane_id(_j, _k + 1), )
                            if _k + 1 < n_seg else (),
                            left=lane_id(_j + 1, _k)
                            if _j + 1 < n_lanes else None,
                            right=lane_id(_j - 1, _k) if _j > 0 else None,
                            is_intersection=bool(is_inter)))

    def segment_of(s: float) -> int:
        return int(np.clip((s - s_min) // SEGMENT_LENGTH, 0, n_seg - 1))

    # ego path
    offset = np.zeros(n_ticks)
    change_start, change_len = 3.0, 4.0
    if lane_change:
        tau = np.clip((t - change_start) / change_len, 0.0, 1.0)
        offset = LANE_WIDTH * (1.0 - np.cos(math.pi * tau)) / 2.0
    x, y, h = road.pose(s_ego)
    ex = x - offset * np.sin(h)
    ey = y + offset * np.cos(h)
    ego = _track_from_path('ego', 'ego', EGO_LENGTH, EGO_WIDTH, ex, ey, h)

    first = segment_of(0.0)
    if lane_change:
        s_switch = float(np.interp(change_start + change_len / 2, t, s_ego))
        k_switch = segment_of(s_switch)
        route = [lane_id(0, _k) for _k in range(first, k_switch)] + \
            [lane_id(1, _k) for _k in range(k_switch, n_seg)]
    else:
        route = [lane_id(0, _k) for _k in range(first, n_seg)]

    # agents
    agents: List[Track] = []
    ego_lanes = {0, 1} if lane_change else {0}
    occupied: Dict[int, List[float]] = {_j: [] for _j in range(-1, n_lanes)}
    lane_speed = {
        _j: (v0 + 1.0 if _j in ego_lanes else
             (v0 if v0 > 0 else float(rng.uniform(0.0, 5.0))))
        for _j in range(n_lanes)
    }
    crosswalk_s: Optional[float] = None
    if intersection is not None:
        crosswalk_s = intersection[0] - 3.0
    next_id = 0

    def new_id() -> str:
        nonlocal next_id
        next_id += 1
        return f'agent{next_id:03d}'

    def lane_agent(j: int, s0: float, v: float, cls: str, length: float,
                   width: float) -> Track:
        s = s0 + v * t
        ax, ay, ah = road.pose(s, j * LANE_WIDTH)
        return _track_from_path(new_id(), cls, length, width, ax, ay, ah)

    lead_gap = 0.0
    if n_agents > 0 and prof.lead is not None and not hazard:
        if prof.lead in ('follow', 'truck'):
            length = 12.0 if prof.lead == 'truck' else 4.6
            lead_gap = 20.0 if prof.lead == 'truck' else 15.0
            ls = lead_gap + s_ego
            ax, ay, ah = road.pose(ls)
            agents.append(
                _track_from_path(new_id(), 'vehicle', length,
                                 2.5 if prof.lead == 'truck' else 1.9, ax, ay,
                                 ah))
            occupied[0].append(lead_gap)
        elif prof.lead == 'stopped':
            lead_gap = 9.0
            agents.append(lane_agent(0, lead_gap, 0.0, 'vehicle', 4.6, 1.9))
            occupied[0].append(lead_gap)
        elif prof.lead == 'pedestrian':
            crosswalk_s = 14.0
            lat = -6.0 + 1.2 * t
            ax, ay, ah = road.pose(np.full(n_ticks, crosswalk_s))
            px = ax - lat * np.sin(ah)
            py = ay + lat * np.cos(ah)
            agents.append(
                _track_from_path(new_id(), 'pedestrian', 0.7, 0.7, px, py,
                                 ah + math.pi / 2))

    while len(agents) < n_agents:
        placed = False
        for _ in range(200):
            cls = rng.choice(['vehicle', 'pedestrian', 'bicycle'],
                             p=[0.8, 0.1, 0.1])
            if cls == 'pedestrian':
                s0 = float(rng.uniform(-30.0, 70.0))
                if all(abs(s0 - _o) >= 3.0 for _o in occupied[-1]):
                    occupied[-1].append(s0)
                    agents.append(_sidewalk_agent(road, new_id(), s0, t))
                    placed = True
                    break
                continue
            j = int(rng.integers(0, n_lanes))
            s0 = float(rng.uniform(-35.0, 70.0))
            if j in ego_lanes:
                if hazard or s0 < max(20.0, lead_gap + 15.0):
                    continue
            elif abs(s0) < 10.0 and lane_speed[j] != v0:
                continue
            if any(abs(s0 - _o) < 12.0 for _o in occupied[j]):
                continue
            if cls == 'bicycle':
                length, width = 1.8, 0.7
            else:
                length = float(rng.uniform(4.2, 5.2))
                width = float(rng.uniform(1.8, 2.1))
            occupied[j].append(s0)
            agents.append(
                lane_agent(j, s0, lane_speed[j], str(cls), length, width))
            placed = True
            break
        if not placed:
            raise ConfigError(
                f'cannot place {n_agents} agents on {n_lanes} lanes')

    # crosswalks
    crosswalks: List[CrosswalkPolygon] = []
    if crosswalk_s is not None:
        lo = -LANE_WIDTH / 2 - 0.5
        hi = (n_lanes - 1) * LANE_WIDTH + LANE_WIDTH / 2 + 0.5
        corners = []
        for _s, _d in ((crosswalk_s - 2.0, lo), (crosswalk_s + 2.0, lo),
                       (crosswalk_s + 2.0, hi), (crosswalk_s - 2.0, hi)):
            cx, cy, _ = road.pose(np.array([_s]), _d)
            corners.append([cx[0], cy[0]])
        crosswalks.append(CrosswalkPolygon('cw000', _ring(np.array(corners),
                                                          n_points)))

    # obstacles
    obstacles: List[StaticObstacle] = []
    if obstacle_s is not None:
        ox, oy, oh = road.pose(np.array([obstacle_s]))
        obstacles.append(
            StaticObstacle('obstacle000', float(ox[0]), float(oy[0]),
                           float(wrap_to_pi(oh[0])), 2.0, 2.0))

    # traffic lights
    lights: List[Dict[str, str]] = [{} for _ in range(n_ticks)]
    if prof.light is not None and not hazard:
        if prof.light == 'green' and intersection is not None:
            flagged = [_l.id for _l in lanes if _l.is_intersection]
            lights = [{_id: 'green' for _id in flagged} for _ in range(n_ticks)]
        elif prof.light == 'red':
            stop_lane = route[min(len(route) - 1,
                                  segment_of(float(s_ego[-1]) + 10.0) - first)]
            lights = [{stop_lane: 'red'} for _ in range(n_ticks)]

    scenario = Scenario(id=f'{scenario_type}_{seed:06d}' + ('h' if hazard else ''),
                        scenario_type=scenario_type,
                        lanes=tuple(lanes),
                        crosswalks=tuple(crosswalks),
                        ego=ego,
                        agents=tuple(agents),
                        route_lane_ids=tuple(route),
                        traffic_lights=tuple(lights),
                        camera_rig=default_camera_rig(),
                        obstacles=tuple(obstacles))
    moved = rigid_transform_scenario(scenario, float(rng.uniform(-500, 500)),
                                     float(rng.uniform(-500, 500)),
                                     float(rng.uniform(-math.pi, math.pi)))
    logger.debug('synthesized %s with %d agents', moved.id, len(agents))
    return moved.validate(min_ticks=history + future)


def _sidewalk_agent(road: _ReferenceLine, track_id: str, s0: float,
                    t: np.ndarray) -> Track:
    s = s0 + 1.2 * t
    x, y, h = road.pose(s, SIDEWALK_OFFSET)
    return _track_from_path(track_id, 'pedestrian', 0.7, 0.7, x, y, h)


def synth_batch(seed: int,
                count: int,
                n_agents: int = 8,
                n_lanes: int = 2,
                duration_s: float = 11.0,
                hazard_fraction: float = 0.0) -> List[Scenario]:
    """ <count> scenarios cycling through the 14 types """

    rng = np.random.default_rng(seed)
    out = []
    for _i in range(count):
        scenario_type = SCENARIO_TYPES[_i % len(SCENARIO_TYPES)]
        hazard = bool(rng.uniform() < hazard_fraction)
        out.append(
            synth_scenario(seed * 100003 + _i,
                           n_agents=n_agents,
                           n_lanes=n_lanes,
                           scenario_type=scenario_type,
                           duration_s=duration_s,
                           hazard=hazard))
    return out
