"""
Ego-centric scene views

to_ego_frame() cuts the planner's input out of a Scenario at one tick:
the ego history, the nearest agents, lanes and crosswalks, all expressed in
the frame where the ego sits at the origin with heading 0. Rows that have
nothing to show are zero and their mask bit is False.

Attribute layouts:
    s_ego        [1, T_h, 7]   x, y, heading, vx, vy, ax, ay
    s_neighbor   [N_n, T_h, 8] x, y, heading, vx, vy, length, width, class code
    m_lane       [N_l, N_p, 4] x, y, heading, speed limit
    m_crosswalk  [N_c, N_p, 4] x, y, 0, 0
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import Point, Polygon  # type: ignore

from guidedplan.config import SceneLimits
from guidedplan.errors import ConfigError, TickOutOfRangeError
from .geometry import (point_to_polyline_distance, rotate_vectors, to_global,
                       to_local, wrap_to_pi)
from .scenario import AGENT_CLASS_CODES, Scenario

EGO_DIM = 7
NEIGHBOR_DIM = 8
POINT_DIM = 4


@dataclass(frozen=True, eq=False)
class LocalSceneView:
    """ The planner's world at one tick, ego-centric

    Attributes:
        s_ego (np.ndarray): [1, T_h, 7]
        s_neighbor (np.ndarray): [N_n, T_h, 8]
        m_lane (np.ndarray): [N_l, N_p, 4]
        m_crosswalk (np.ndarray): [N_c, N_p, 4]
        ego_mask, neighbor_mask, lane_mask, crosswalk_mask (np.ndarray):
            bool row masks of the four blocks
        future_gt (Optional[np.ndarray]): [T_f, 3] expert future
            (x, y, heading), None when the log ends too early
        future_neighbors (Optional[np.ndarray]): [N_n, T_f, 2]
        future_neighbor_mask (Optional[np.ndarray]): [N_n], True when the
            neighbor is observed over the whole future
        neighbor_ids, lane_ids, crosswalk_ids (Tuple[str, ...]): ids of the
            selected rows, in row order
        pose (Tuple[float, float, float]): global (x, y, heading) of the ego
        tick (int): view tick
    """

    s_ego: np.ndarray
    s_neighbor: np.ndarray
    m_lane: np.ndarray
    m_crosswalk: np.ndarray
    ego_mask: np.ndarray
    neighbor_mask: np.ndarray
    lane_mask: np.ndarray
    crosswalk_mask: np.ndarray
    future_gt: Optional[np.ndarray]
    future_neighbors: Optional[np.ndarray]
    future_neighbor_mask: Optional[np.ndarray]
    neighbor_ids: Tuple[str, ...]
    lane_ids: Tuple[str, ...]
    crosswalk_ids: Tuple[str, ...]
    pose: Tuple[float, float, float]
    tick: int

    def __post_init__(self) -> None:
        for _k, _v in vars(self).items():
            if isinstance(_v, np.ndarray):
                _v.setflags(write=False)

    @property
    def history(self) -> int:
        return int(self.s_ego.shape[1])

    @property
    def ego_speed(self) -> float:
        return float(np.hypot(self.s_ego[0, -1, 3], self.s_ego[0, -1, 4]))

    def trajectory_to_global(self, traj: np.ndarray) -> np.ndarray:
        """ Map an ego-frame trajectory [T, 3] back to the global frame """

        x, y, theta = self.pose
        out = np.array(traj, dtype=np.float64)
        out[:, :2] = to_global(traj[:, :2], np.array([x, y]), theta)
        out[:, 2] = wrap_to_pi(traj[:, 2] + theta)
        return out


def _rank(distances: Sequence[float], ids: Sequence[str],
          k: int) -> Sequence[int]:
    """ Indices of the k nearest items, ties broken by ascending id """

    order = sorted(range(len(ids)), key=lambda _i: (distances[_i], ids[_i]))
    return order[:k]


def to_ego_frame(scenario: Scenario,
                 tick: int,
                 limits: Optional[SceneLimits] = None,
                 history: int = 20,
                 future: int = 80) -> LocalSceneView:
    """ Ego-centric view of <scenario> at <tick>

    Args:
        scenario: the scenario
        tick: view tick, at least history - 1
        limits: row budgets (N_n, N_l, N_c)
        history: T_h ticks of history, the view tick included
        future: T_f ticks of expert future

    Raises:
        TickOutOfRangeError: tick before T_h - 1 or past the log
        ConfigError: non-positive limits
    """

    limits = limits or SceneLimits()
    if min(limits.n_neighbors, limits.n_lanes, limits.n_crosswalks,
           history) <= 0:
        raise ConfigError(f'limits must be positive, got {limits}')
    n_ticks = scenario.num_ticks
    if tick < history - 1 or tick >= n_ticks:
        raise TickOutOfRangeError(
            f'tick {tick} outside [{history - 1}, {n_ticks})')

    ego = scenario.ego.states
    origin = ego[tick, :2]
    theta = float(ego[tick, 2])
    hist = slice(tick - history + 1, tick + 1)

    def local_states(states: np.ndarray) -> np.ndarray:
        out = np.zeros((len(states), 7))
        out[:, 0:2] = to_local(states[:, 0:2], origin, theta)
        out[:, 2] = wrap_to_pi(states[:, 2] - theta)
        out[:, 3:5] = rotate_vectors(states[:, 3:5], -theta)
        out[:, 5:7] = rotate_vectors(states[:, 5:7], -theta)
        return out

    s_ego = local_states(ego[hist])[None]
    ego_mask = np.ones(1, dtype=bool)

    # neighbors: agents observed at the view tick
    live = [_a for _a in scenario.agents if _a.valid[tick]]
    dist = [float(np.linalg.norm(_a.states[tick, :2] - origin)) for _a in live]
    chosen = [live[_i] for _i in _rank(dist, [_a.id for _a in live],
                                       limits.n_neighbors)]
    s_neighbor = np.zeros((limits.n_neighbors, history, NEIGHBOR_DIM))
    neighbor_mask = np.zeros(limits.n_neighbors, dtype=bool)
    for _row, _a in enumerate(chosen):
        st = local_states(_a.states[hist])
        valid = _a.valid[hist]
        block = np.zeros((history, NEIGHBOR_DIM))
        block[:, 0:5] = st[:, 0:5]
        block[:, 5] = _a.length
        block[:, 6] = _a.width
        block[:, 7] = AGENT_CLASS_CODES[_a.agent_class]
        block[~valid] = 0.0
        s_neighbor[_row] = block
        neighbor_mask[_row] = True

    # lanes by centerline distance
    lanes = list(scenario.lanes)
    n_points = lanes[0].centerline.shape[0]
    lane_dist = [point_to_polyline_distance(origin, _l.centerline) for _l in lanes]
    lane_rows = [lanes[_i] for _i in _rank(lane_dist, [_l.id for _l in lanes],
                                           limits.n_lanes)]
    m_lane = np.zeros((limits.n_lanes, n_points, POINT_DIM))
    lane_mask = np.zeros(limits.n_lanes, dtype=bool)
    for _row, _l in enumerate(lane_rows):
        c = _l.centerline
        m_lane[_row, :, 0:2] = to_local(c[:, 0:2], origin, theta)
        m_lane[_row, :, 2] = wrap_to_pi(c[:, 2] - theta)
        m_lane[_row, :, 3] = c[:, 3]
        lane_mask[_row] = True

    # crosswalks by polygon distance, zero inside
    cws = list(scenario.crosswalks)
    cw_dist = [
        float(Polygon(_c.boundary[:, :2]).distance(Point(origin))) for _c in cws
    ]
    cw_rows = [cws[_i] for _i in _rank(cw_dist, [_c.id for _c in cws],
                                       limits.n_crosswalks)]
    m_crosswalk = np.zeros((limits.n_crosswalks, n_points, POINT_DIM))
    crosswalk_mask = np.zeros(limits.n_crosswalks, dtype=bool)
    for _row, _c in enumerate(cw_rows):
        m_crosswalk[_row, :, 0:2] = to_local(_c.boundary[:, 0:2], origin, theta)
        crosswalk_mask[_row] = True

    future_gt = future_neighbors = future_neighbor_mask = None
    if tick + future < n_ticks:
        fut = slice(tick + 1, tick + future + 1)
        future_gt = local_states(ego[fut])[:, 0:3]
        future_neighbors = np.zeros((limits.n_neighbors, future, 2))
        future_neighbor_mask = np.zeros(limits.n_neighbors, dtype=bool)
        for _row, _a in enumerate(chosen):
            if _a.valid[fut].all():
                future_neighbors[_row] = to_local(_a.states[fut, 0:2], origin,
                                                  theta)
                future_neighbor_mask[_row] = True

    return LocalSceneView(s_ego=s_ego,
                          s_neighbor=s_neighbor,
                          m_lane=m_lane,
                          m_crosswalk=m_crosswalk,
                          ego_mask=ego_mask,
                          neighbor_mask=neighbor_mask,
                          lane_mask=lane_mask,
                          crosswalk_mask=crosswalk_mask,
                          future_gt=future_gt,
                          future_neighbors=future_neighbors,
                          future_neighbor_mask=future_neighbor_mask,
                          neighbor_ids=tuple(_a.id for _a in chosen),
                          lane_ids=tuple(_l.id for _l in lane_rows),
                          crosswalk_ids=tuple(_c.id for _c in cw_rows),
                          pose=(float(origin[0]), float(origin[1]), theta),
                          tick=tick)
