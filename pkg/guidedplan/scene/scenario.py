"""
Scenario representation

A Scenario is the complete logged world of one driving episode: the map,
the ego log, the agent logs, the route, the per-tick traffic-light table
and the camera rig. Logs are stored as [T, 7] arrays of
(x, y, heading, vx, vy, ax, ay) in the global frame at 10 Hz.

All objects are frozen and their arrays are read-only, so a Scenario may
be shared across threads and worker processes.
"""

from __future__ import annotations
import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from guidedplan.config import DT
from guidedplan.errors import ScenarioInvariantError, TickOutOfRangeError

SCENARIO_TYPES: Tuple[str, ...] = tuple(f'type{_i}' for _i in range(14))

# descriptive name of every scenario type tag, used by the generator and
# the report tables
SCENARIO_TYPE_NAMES: Dict[str, str] = {
    'type0': 'starting_left_turn',
    'type1': 'starting_right_turn',
    'type2': 'starting_straight_traffic_light_intersection_traversal',
    'type3': 'stopping_with_lead',
    'type4': 'high_lateral_acceleration',
    'type5': 'high_magnitude_speed',
    'type6': 'low_magnitude_speed',
    'type7': 'traversing_pickup_dropoff',
    'type8': 'waiting_for_pedestrian_to_cross',
    'type9': 'behind_long_vehicle',
    'type10': 'stationary_in_traffic',
    'type11': 'near_multiple_vehicles',
    'type12': 'changing_lane',
    'type13': 'following_lane_with_lead',
}

AGENT_CLASSES: Tuple[str, ...] = ('vehicle', 'pedestrian', 'bicycle')
# class-as-code in the neighbor attribute block, 0 is reserved for padding
AGENT_CLASS_CODES: Dict[str, int] = {
    'vehicle': 1,
    'pedestrian': 2,
    'bicycle': 3
}
LIGHT_STATES: Tuple[str, ...] = ('red', 'green', 'unknown')

STATE_DIM = 7


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EgoState:
    """ Ego vehicle state at one tick, global frame """

    x: float
    y: float
    heading: float
    vx: float
    vy: float
    ax: float
    ay: float
    length: float
    width: float

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class AgentState(EgoState):
    agent_class: str = 'vehicle'


@dataclass(frozen=True, eq=False)
class Track:
    """ Logged motion of one traffic participant

    Attributes:
        id (str): unique id within the scenario ('ego' for the ego track)
        agent_class (str): 'ego' or one of AGENT_CLASSES
        length (float): box length (m)
        width (float): box width (m)
        states (np.ndarray): [T, 7] rows of (x, y, heading, vx, vy, ax, ay)
        valid (np.ndarray): [T] bool, the agent is observed at that tick
    """

    id: str
    agent_class: str
    length: float
    width: float
    states: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, 'states', _frozen(self.states))
        object.__setattr__(self, 'valid', _frozen(self.valid, dtype=bool))

    @property
    def num_ticks(self) -> int:
        return int(self.states.shape[0])

    def state(self, tick: int) -> EgoState:
        if not 0 <= tick < self.num_ticks:
            raise TickOutOfRangeError(
                f'tick {tick} outside [0, {self.num_ticks}) of track {self.id}')
        row = [float(_) for _ in self.states[tick]]
        if self.agent_class == 'ego':
            return EgoState(*row, self.length, self.width)
        return AgentState(*row, self.length, self.width, self.agent_class)


@dataclass(frozen=True, eq=False)
class LaneSegment:
    """ One lane piece of the map

    Attributes:
        centerline (np.ndarray): [N_p, 4] rows of (x, y, heading, speed_limit)
        successors (Tuple[str, ...]): lanes that continue this one
        left (Optional[str]): adjacent lane to the left, same direction
        right (Optional[str]): adjacent lane to the right, same direction
    """

    id: str
    centerline: np.ndarray
    successors: Tuple[str, ...] = ()
    left: Optional[str] = None
    right: Optional[str] = None
    is_intersection: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, 'centerline', _frozen(self.centerline))
        object.__setattr__(self, 'successors', tuple(self.successors))

    @property
    def speed_limit(self) -> float:
        return float(self.centerline[0, 3])


@dataclass(frozen=True, eq=False)
class CrosswalkPolygon:
    """ boundary: [N_p, 4] rows of (x, y, 0, 0), the polygon ring """

    id: str
    boundary: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, 'boundary', _frozen(self.boundary))


@dataclass(frozen=True)
class StaticObstacle:
    """ A stationary box seen by the cameras but absent from the map and
    the agent logs """

    id: str
    x: float
    y: float
    heading: float
    length: float
    width: float


@dataclass(frozen=True)
class Camera:
    """ Pinhole camera mounted on the ego

    The pose is relative to the ego frame (x forward, y left, z up);
    yaw rotates the optical axis about z.
    """

    name: str
    fx: float
    fy: float
    cx: float
    cy: float
    x: float
    y: float
    z: float
    yaw: float
    height: int
    width: int


@dataclass(frozen=True)
class CameraRig:
    cameras: Tuple[Camera, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'cameras', tuple(self.cameras))

    def __len__(self) -> int:
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)


@dataclass(frozen=True, eq=False)
class Scenario:
    """ A logged driving episode

    Attributes:
        id (str): scenario id
        scenario_type (str): one of SCENARIO_TYPES
        lanes (Tuple[LaneSegment, ...]): lane map
        crosswalks (Tuple[CrosswalkPolygon, ...]): crosswalk map
        ego (Track): the expert ego log
        agents (Tuple[Track, ...]): other traffic participants
        route_lane_ids (Tuple[str, ...]): ordered lanes of the ego route
        traffic_lights (Tuple[Mapping[str, str], ...]): per tick, lane id to
            light state; lanes without an entry are 'unknown'
        camera_rig (CameraRig): cameras of the ego
        obstacles (Tuple[StaticObstacle, ...]): image-only static hazards
        dt (float): tick spacing, always 0.1 s
    """

    id: str
    scenario_type: str
    lanes: Tuple[LaneSegment, ...]
    crosswalks: Tuple[CrosswalkPolygon, ...]
    ego: Track
    agents: Tuple[Track, ...]
    route_lane_ids: Tuple[str, ...]
    traffic_lights: Tuple[Mapping[str, str], ...]
    camera_rig: CameraRig
    obstacles: Tuple[StaticObstacle, ...] = ()
    dt: float = DT

    def __post_init__(self) -> None:
        for _name in ('lanes', 'crosswalks', 'agents', 'route_lane_ids',
                      'obstacles'):
            object.__setattr__(self, _name, tuple(getattr(self, _name)))
        object.__setattr__(self, 'traffic_lights',
                           tuple(dict(_) for _ in self.traffic_lights))

    @property
    def num_ticks(self) -> int:
        return self.ego.num_ticks

    @cached_property
    def lane_by_id(self) -> Dict[str, LaneSegment]:
        return {_l.id: _l for _l in self.lanes}

    @cached_property
    def agent_by_id(self) -> Dict[str, Track]:
        return {_a.id: _a for _a in self.agents}

    def light_state(self, tick: int, lane_id: str) -> str:
        if not 0 <= tick < len(self.traffic_lights):
            return 'unknown'
        return self.traffic_lights[tick].get(lane_id, 'unknown')

    def route_polyline(self) -> np.ndarray:
        """ Centerlines of the route lanes chained into one [K, 4] polyline """

        pieces: List[np.ndarray] = []
        for _id in self.route_lane_ids:
            pts = self.lane_by_id[_id].centerline
            if pieces and np.allclose(pieces[-1][-1, :2], pts[0, :2]):
                pts = pts[1:]
            pieces.append(pts)
        return np.concatenate(pieces, axis=0)

    def content_hash(self) -> str:
        """ sha256 of the canonical file form """

        from .io import dumps_scenario
        return hashlib.sha256(
            dumps_scenario(self).encode('utf8')).hexdigest()

    def validate(self, min_ticks: int = 100) -> 'Scenario':
        """ Check every scenario invariant

        Args:
            min_ticks: required log length, T_h + T_f by default

        Raises:
            ScenarioInvariantError: naming the first failed check
        """

        if abs(self.dt - DT) > 1e-12:
            raise ScenarioInvariantError('tick_spacing',
                                         f'dt must be {DT}, got {self.dt}')
        if self.scenario_type not in SCENARIO_TYPES:
            raise ScenarioInvariantError(
                'scenario_type', f'unknown type {self.scenario_type!r}')
        n = self.num_ticks
        if n < min_ticks:
            raise ScenarioInvariantError(
                'log_length', f'{n} ticks, at least {min_ticks} required')
        for _t in (self.ego, ) + self.agents:
            if _t.states.shape != (n, STATE_DIM) or _t.valid.shape != (n, ):
                raise ScenarioInvariantError(
                    'log_length',
                    f'track {_t.id} has {_t.states.shape[0]} ticks, expected {n}'
                )
            if not (_t.length > 0 and _t.width > 0):
                raise ScenarioInvariantError('box_size',
                                             f'track {_t.id} box not positive')
            if not np.all(np.isfinite(_t.states)):
                raise ScenarioInvariantError('finite_states',
                                             f'track {_t.id} has non-finite state')
            h = _t.states[:, 2]
            if np.any(h <= -math.pi) or np.any(h > math.pi):
                raise ScenarioInvariantError(
                    'heading_range', f'track {_t.id} heading outside (-pi, pi]')
            if _t.agent_class != 'ego' and _t.agent_class not in AGENT_CLASSES:
                raise ScenarioInvariantError(
                    'agent_class', f'track {_t.id}: {_t.agent_class!r}')
        if not self.ego.valid.all():
            raise ScenarioInvariantError('ego_valid',
                                         'ego must be valid at every tick')
        ids = [_a.id for _a in self.agents]
        if len(set(ids)) != len(ids) or 'ego' in ids:
            raise ScenarioInvariantError('unique_ids', 'agent ids not unique')
        if len(self.traffic_lights) != n:
            raise ScenarioInvariantError(
                'traffic_lights',
                f'{len(self.traffic_lights)} light rows for {n} ticks')
        for _row in self.traffic_lights:
            for _state in _row.values():
                if _state not in LIGHT_STATES:
                    raise ScenarioInvariantError('traffic_lights',
                                                 f'bad light state {_state!r}')
        self._validate_map()
        for _c in self.camera_rig:
            if not (_c.fx > 0 and _c.fy > 0):
                raise ScenarioInvariantError(
                    'camera_intrinsics', f'camera {_c.name}: fx, fy must be > 0')
            if not (_c.height > 0 and _c.width > 0):
                raise ScenarioInvariantError(
                    'camera_intrinsics', f'camera {_c.name}: empty image')
        for _o in self.obstacles:
            if not (_o.length > 0 and _o.width > 0):
                raise ScenarioInvariantError('box_size',
                                             f'obstacle {_o.id} box not positive')
        return self

    def _validate_map(self) -> None:
        if not self.lanes:
            raise ScenarioInvariantError('lanes_present', 'map has no lanes')
        lane_ids = [_l.id for _l in self.lanes]
        if len(set(lane_ids)) != len(lane_ids):
            raise ScenarioInvariantError('unique_ids', 'lane ids not unique')
        n_points = {_l.centerline.shape[0] for _l in self.lanes} | {
            _c.boundary.shape[0] for _c in self.crosswalks
        }
        if len(n_points) != 1 or next(iter(n_points)) < 2:
            raise ScenarioInvariantError(
                'polyline_points',
                f'polylines must share N_p >= 2, got {sorted(n_points)}')
        known = set(lane_ids)
        for _l in self.lanes:
            if _l.centerline.shape[1] != 4:
                raise ScenarioInvariantError(
                    'polyline_points', f'lane {_l.id} needs 4 attributes')
            seg = np.linalg.norm(np.diff(_l.centerline[:, :2], axis=0), axis=1)
            if np.any(seg <= 0):
                raise ScenarioInvariantError(
                    'centerline_monotone',
                    f'lane {_l.id} repeats a centerline point')
            for _ref in _l.successors + tuple(
                    _ for _ in (_l.left, _l.right) if _ is not None):
                if _ref not in known:
                    raise ScenarioInvariantError(
                        'lane_references',
                        f'lane {_l.id} references missing lane {_ref}')
        for _l in self.lanes:
            if _l.left is not None and \
                    self.lane_by_id[_l.left].right != _l.id:
                raise ScenarioInvariantError(
                    'adjacency_symmetric',
                    f'{_l.left} is left of {_l.id} but not the reverse')
            if _l.right is not None and \
                    self.lane_by_id[_l.right].left != _l.id:
                raise ScenarioInvariantError(
                    'adjacency_symmetric',
                    f'{_l.right} is right of {_l.id} but not the reverse')
        if not self.route_lane_ids:
            raise ScenarioInvariantError('route_lanes_exist', 'empty route')
        for _id in self.route_lane_ids:
            if _id not in known:
                raise ScenarioInvariantError(
                    'route_lanes_exist', f'route lane {_id} not in map')


def rigid_transform_scenario(scenario: Scenario, dx: float, dy: float,
                             dtheta: float) -> Scenario:
    """ The same scenario moved by a rotation <dtheta> about the origin
    followed by a translation (dx, dy) """

    from .geometry import rotate_vectors, wrap_to_pi
    shift = np.array([dx, dy])

    def move_states(states: np.ndarray) -> np.ndarray:
        out = np.array(states, dtype=np.float64)
        out[:, 0:2] = rotate_vectors(states[:, 0:2], dtheta) + shift
        out[:, 2] = wrap_to_pi(states[:, 2] + dtheta)
        out[:, 3:5] = rotate_vectors(states[:, 3:5], dtheta)
        out[:, 5:7] = rotate_vectors(states[:, 5:7], dtheta)
        return out

    def move_poly(pts: np.ndarray, with_heading: bool) -> np.ndarray:
        out = np.array(pts, dtype=np.float64)
        out[:, 0:2] = rotate_vectors(pts[:, 0:2], dtheta) + shift
        if with_heading:
            out[:, 2] = wrap_to_pi(pts[:, 2] + dtheta)
        return out

    def move_track(t: Track) -> Track:
        return Track(t.id, t.agent_class, t.length, t.width,
                     move_states(t.states), t.valid)

    lanes = tuple(
        LaneSegment(_l.id, move_poly(_l.centerline, True), _l.successors,
                    _l.left, _l.right, _l.is_intersection)
        for _l in scenario.lanes)
    crosswalks = tuple(
        CrosswalkPolygon(_c.id, move_poly(_c.boundary, False))
        for _c in scenario.crosswalks)
    obstacles = []
    for _o in scenario.obstacles:
        xy = rotate_vectors(np.array([_o.x, _o.y]), dtheta) + shift
        obstacles.append(
            StaticObstacle(_o.id, float(xy[0]), float(xy[1]),
                           float(wrap_to_pi(_o.heading + dtheta)), _o.length,
                           _o.width))
    return Scenario(scenario.id, scenario.scenario_type, lanes, crosswalks,
                    move_track(scenario.ego),
                    tuple(move_track(_a) for _a in scenario.agents),
                    scenario.route_lane_ids, scenario.traffic_lights,
                    scenario.camera_rig, tuple(obstacles), scenario.dt)
