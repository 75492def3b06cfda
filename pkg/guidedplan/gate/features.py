"""
Scene-complexity features

Plain geometry and kinematics read from a LocalSceneView and the map:
how many agents are near and how near the closest one is, how many lanes
run abreast at the ego, how fast the ego moves, and how far ahead along
the route the next intersection or sharp turn starts. Distances that do
not exist are the SENTINEL value.
"""

from __future__ import annotations
import math
from dataclasses import astuple, dataclass
from typing import Optional, Tuple

import numpy as np

from guidedplan.errors import ConfigError
from guidedplan.scene import LaneGraph, LocalSceneView, Scenario
from guidedplan.scene.geometry import arc_lengths, project_to_polyline, wrap_to_pi

SENTINEL = 1e9
RANGES = (10.0, 25.0, 50.0)


@dataclass(frozen=True)
class ComplexityFeatures:

    n_within_10: int = 0
    n_within_25: int = 0
    n_within_50: int = 0
    min_agent_distance: float = SENTINEL
    n_lanes_at_ego: int = 0
    ego_speed: float = 0.0
    ego_accel: float = 0.0
    dist_to_intersection: float = SENTINEL

    def __post_init__(self) -> None:
        if min(self.as_array()) < 0:
            raise ConfigError(f'complexity features must be >= 0: {self}')

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


def distance_to_intersection(scenario: Scenario,
                             pose: Tuple[float, float, float],
                             turn_threshold: float = math.pi / 6) -> float:
    """ Arc length along the route from the ego's projection to the start
    of the next intersection lane or of the first segment turning more
    than <turn_threshold> away from the road direction at the ego """

    poly = scenario.route_polyline()
    s_ego, _, road_heading = project_to_polyline(np.array(pose[:2]), poly)
    best = SENTINEL

    start = 0.0
    for _id in scenario.route_lane_ids:
        lane = scenario.lane_by_id[_id]
        length = float(arc_lengths(lane.centerline)[-1])
        if lane.is_intersection and start + length > s_ego:
            best = max(0.0, start - s_ego)
            break
        start += length

    s_cum = arc_lengths(poly)
    seg = np.diff(poly[:, :2], axis=0)
    headings = np.arctan2(seg[:, 1], seg[:, 0])
    ahead = np.flatnonzero(s_cum[:-1] >= s_ego)
    turning = ahead[np.abs(wrap_to_pi(headings[ahead] - road_heading)) >
                    turn_threshold]
    if len(turning):
        best = min(best, float(s_cum[turning[0]] - s_ego))
    return best


def extract_features(view: LocalSceneView,
                     scenario: Scenario,
                     graph: Optional[LaneGraph] = None,
                     turn_threshold: float = math.pi / 6) -> ComplexityFeatures:
    rows = view.s_neighbor[view.neighbor_mask, -1, 0:2]
    dist = np.hypot(rows[:, 0], rows[:, 1]) if len(rows) else np.zeros(0)
    counts = [int((dist <= _r).sum()) for _r in RANGES]
    graph = graph or LaneGraph(scenario.lanes)
    ego_xy = np.array(view.pose[:2])
    lanes = len(graph.lanes_abreast(graph.nearest_lane(ego_xy))) \
        if graph.lanes else 0
    accel = view.s_ego[0, -1, 5:7]
    return ComplexityFeatures(
        n_within_10=counts[0],
        n_within_25=counts[1],
        n_within_50=counts[2],
        min_agent_distance=float(dist.min()) if len(dist) else SENTINEL,
        n_lanes_at_ego=lanes,
        ego_speed=view.ego_speed,
        ego_accel=float(np.hypot(accel[0], accel[1])),
        dist_to_intersection=distance_to_intersection(scenario, view.pose,
                                                      turn_threshold))
