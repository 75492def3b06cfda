"""
Hand-built scenarios shared by the tests
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from guidedplan.scene import (CameraRig, CrosswalkPolygon, LaneSegment,
                              Scenario, Track, default_camera_rig)


def straight_lane(lane_id: str,
                  y: float = 0.0,
                  x0: float = -50.0,
                  x1: float = 250.0,
                  n_points: int = 20,
                  speed_limit: float = 15.0,
                  **kwargs) -> LaneSegment:
    xs = np.linspace(x0, x1, n_points)
    c = np.stack([xs, np.full(n_points, y),
                  np.zeros(n_points),
                  np.full(n_points, speed_limit)], axis=1)
    return LaneSegment(lane_id, c, **kwargs)


def moving_track(track_id: str,
                 x0: float,
                 y0: float,
                 vx: float,
                 n_ticks: int = 110,
                 heading: float = 0.0,
                 agent_class: str = 'vehicle',
                 length: float = 4.8,
                 width: float = 2.0,
                 vy: float = 0.0) -> Track:
    t = np.arange(n_ticks) * 0.1
    states = np.zeros((n_ticks, 7))
    states[:, 0] = x0 + vx * t
    states[:, 1] = y0 + vy * t
    states[:, 2] = heading
    states[:, 3] = vx
    states[:, 4] = vy
    return Track(track_id, agent_class, length, width, states,
                 np.ones(n_ticks, dtype=bool))


def straight_scenario(agents: Sequence[Track] = (),
                      n_lanes: int = 1,
                      ego_speed: float = 10.0,
                      n_ticks: int = 110,
                      crosswalks: Sequence[CrosswalkPolygon] = (),
                      obstacles=(),
                      lights: Optional[List[dict]] = None,
                      rig: Optional[CameraRig] = None,
                      intersection_at: Optional[float] = None,
                      scenario_type: str = 'type13') -> Scenario:
    """ Ego at the origin heading +x on lane0, extra lanes to the left """

    lanes = []
    for _j in range(n_lanes):
        segs = [(-50.0, 100.0), (100.0, 250.0)] if intersection_at else [
            (-50.0, 250.0)
        ]
        for _k, (_a, _b) in enumerate(segs):
            lid = f'l{_j}' if len(segs) == 1 else f'l{_j}_{_k}'
            nxt = () if _k + 1 == len(segs) else (f'l{_j}_{_k + 1}', )
            left = None if _j + 1 == n_lanes else (
                f'l{_j + 1}' if len(segs) == 1 else f'l{_j + 1}_{_k}')
            right = None if _j == 0 else (
                f'l{_j - 1}' if len(segs) == 1 else f'l{_j - 1}_{_k}')
            lanes.append(
                straight_lane(lid, y=3.5 * _j, x0=_a, x1=_b, successors=nxt,
                              left=left, right=right,
                              is_intersection=bool(intersection_at and _k == 1)))
    route = tuple(_l.id for _l in lanes if _l.id.startswith('l0'))
    ego = moving_track('ego', 0.0, 0.0, ego_speed, n_ticks)
    ego = Track('ego', 'ego', 4.8, 2.0, ego.states, ego.valid)
    return Scenario(id='hand',
                    scenario_type=scenario_type,
                    lanes=tuple(lanes),
                    crosswalks=tuple(crosswalks),
                    ego=ego,
                    agents=tuple(agents),
                    route_lane_ids=route,
                    traffic_lights=tuple(lights or [{}] * n_ticks),
                    camera_rig=rig or default_camera_rig(),
                    obstacles=tuple(obstacles))


def quarter_circle(radius: float, n: int, left: bool = True) -> np.ndarray:
    """ [n, 3] ego-frame points along a quarter circle starting at the origin """

    sign = 1.0 if left else -1.0
    psi = np.linspace(0.0, math.pi / 2, n + 1)[1:]
    out = np.zeros((n, 3))
    out[:, 0] = radius * np.sin(psi)
    out[:, 1] = sign * radius * (1.0 - np.cos(psi))
    out[:, 2] = sign * psi
    return out


def rect_crosswalk(cw_id: str, x: float, y0: float, y1: float,
                   n_points: int = 20) -> CrosswalkPolygon:
    corners = np.array([[x - 2, y0], [x + 2, y0], [x + 2, y1], [x - 2, y1],
                        [x - 2, y0]])
    seg = np.linalg.norm(np.diff(corners, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    ss = np.linspace(0.0, cum[-1], n_points, endpoint=False)
    pts = np.zeros((n_points, 4))
    pts[:, 0] = np.interp(ss, cum, corners[:, 0])
    pts[:, 1] = np.interp(ss, cum, corners[:, 1])
    return CrosswalkPolygon(cw_id, pts)


def pose_tuple(scenario: Scenario, tick: int) -> Tuple[float, float, float]:
    s = scenario.ego.states[tick]
    return float(s[0]), float(s[1]), float(s[2])


def view_for(cfg, seed: int = 0, tick: Optional[int] = None, **kwargs):
    """ A LocalSceneView of a generated scenario shaped by a ModelConfig """

    from guidedplan.scene import synth_scenario, to_ego_frame

    kwargs.setdefault('n_points', cfg.n_points)
    sc = synth_scenario(seed, **kwargs)
    tick = cfg.history - 1 if tick is None else tick
    return sc, to_ego_frame(sc, tick, cfg.limits, history=cfg.history,
                            future=cfg.future)
