"""
Closed-loop metrics

Every metric reads a finished SimTrace against its scenario and returns a
value in [0, 1]. Collision, drivable area and driving direction gate the
score multiplicatively; time to collision, progress, speed limit and
comfort enter a weighted average:

    score = 100 * collision * drivable * direction
                * (5 ttc + 5 progress + 4 speed_limit + 2 comfort) / 16
"""

from __future__ import annotations
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from shapely.geometry import LineString, Polygon  # type: ignore
from shapely.ops import unary_union  # type: ignore
from shapely.prepared import prep  # type: ignore

from guidedplan.config import DT, MetricConfig
from guidedplan.errors import ConfigError
from guidedplan.scene import LaneGraph, Scenario
from guidedplan.scene.geometry import box_corners, project_to_polyline
from .collision import BoxState, in_contact, is_at_fault
from .trace import SimTrace

logger = logging.getLogger(__name__)

METRICS = ('drivable', 'direction', 'comfort', 'progress', 'collision',
           'speed_limit', 'ttc')
MULTIPLIERS = ('collision', 'drivable', 'direction')
WEIGHTS: Dict[str, float] = {
    'ttc': 5.0,
    'progress': 5.0,
    'speed_limit': 4.0,
    'comfort': 2.0
}


@dataclass(frozen=True)
class MetricReport:
    """ Per-metric values in [0, 1] of one simulated scenario """

    drivable: float = 1.0
    direction: float = 1.0
    comfort: float = 1.0
    progress: float = 1.0
    collision: float = 1.0
    speed_limit: float = 1.0
    ttc: float = 1.0
    scenario_id: str = ''

    def __post_init__(self) -> None:
        for _m in METRICS:
            v = getattr(self, _m)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f'metric {_m} must be in [0, 1], got {v}')

    @property
    def score(self) -> float:
        return aggregate_score(self)

    def to_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = asdict(self)
        out['score'] = self.score
        return out


def aggregate_score(report: MetricReport) -> float:
    gate = float(np.prod([getattr(report, _m) for _m in MULTIPLIERS]))
    weighted = sum(_w * getattr(report, _m) for _m, _w in WEIGHTS.items())
    return 100.0 * gate * weighted / sum(WEIGHTS.values())


def drivable_area(scenario: Scenario, cfg: Optional[MetricConfig] = None):
    """ Union of the lane corridors and crosswalks, inflated by the margin """

    cfg = cfg or MetricConfig()
    pieces = [
        LineString(_l.centerline[:, :2]).buffer(cfg.lane_half_width +
                                                cfg.drivable_margin)
        for _l in scenario.lanes
    ]
    pieces.extend(
        Polygon(_c.boundary[:, :2]).buffer(cfg.drivable_margin)
        for _c in scenario.crosswalks)
    return unary_union(pieces)


def drivable_compliance(ego: np.ndarray, length: float, width: float,
                        area) -> float:
    """ 1 when the ego footprint stays inside <area> at every tick """

    inside = prep(area)
    for _s in ego:
        if not inside.covers(
                Polygon(box_corners(_s[0], _s[1], _s[2], length, width))):
            return 0.0
    return 1.0


def direction_compliance(ego: np.ndarray, graph: LaneGraph,
                         cfg: Optional[MetricConfig] = None) -> float:
    """ 0 once the ego has covered more than the wrong-way distance against
    the direction of the lane it is on """

    cfg = cfg or MetricConfig()
    against = 0.0
    for _a, _b in zip(ego[:-1], ego[1:]):
        lane = graph.lanes[graph.nearest_lane(_a[:2])]
        _, _, heading = project_to_polyline(_a[:2], lane.centerline)
        along = float(np.dot(_b[:2] - _a[:2],
                             [np.cos(heading), np.sin(heading)]))
        against += max(0.0, -along)
    return 0.0 if against > cfg.wrong_way_distance else 1.0


def comfort_signals(ego: np.ndarray, dt: float = DT) -> Dict[str, np.ndarray]:
    """ Longitudinal and lateral acceleration, jerk, yaw rate and yaw
    acceleration of a pose sequence [n, >=3] """

    xy = ego[:, 0:2]
    heading = np.unwrap(ego[:, 2])
    vel = np.gradient(xy, dt, axis=0)
    acc = np.gradient(vel, dt, axis=0)
    c, s = np.cos(heading), np.sin(heading)
    lon = acc[:, 0] * c + acc[:, 1] * s
    lat = -acc[:, 0] * s + acc[:, 1] * c
    yaw_rate = np.gradient(heading, dt)
    return {
        'lon_accel': lon,
        'lat_accel': lat,
        'jerk': np.gradient(lon, dt),
        'yaw_rate': yaw_rate,
        'yaw_accel': np.gradient(yaw_rate, dt),
    }


def comfort(ego: np.ndarray, cfg: Optional[MetricConfig] = None) -> float:
    cfg = cfg or MetricConfig()
    if len(ego) < 3:
        return 1.0
    sig = comfort_signals(ego)
    ok = (np.all(sig['lon_accel'] <= cfg.max_lon_accel) and
          np.all(sig['lon_accel'] >= -cfg.max_lon_decel) and
          np.all(np.abs(sig['lat_accel']) <= cfg.max_lat_accel) and
          np.all(np.abs(sig['jerk']) <= cfg.max_jerk) and
          np.all(np.abs(sig['yaw_rate']) <= cfg.max_yaw_rate) and
          np.all(np.abs(sig['yaw_accel']) <= cfg.max_yaw_accel))
    return 1.0 if ok else 0.0


def route_progress(scenario: Scenario, ego: np.ndarray) -> float:
    """ Route arc length covered between the first and last pose, >= 0 """

    route = scenario.route_polyline()
    s0, _, _ = project_to_polyline(ego[0, :2], route)
    s1, _, _ = project_to_polyline(ego[-1, :2], route)
    return max(0.0, s1 - s0)


def progress_ratio(scenario: Scenario, ego: np.ndarray, start: int,
                   cfg: Optional[MetricConfig] = None) -> float:
    """ Ego route progress over expert route progress, clamped to [0, 1];
    1 when the expert itself moves less than the configured minimum """

    cfg = cfg or MetricConfig()
    expert = route_progress(scenario,
                            scenario.ego.states[start:start + len(ego)])
    if expert < cfg.min_expert_progress:
        return 1.0
    return float(np.clip(route_progress(scenario, ego) / expert, 0.0, 1.0))


def speed_limit_compliance(speeds: Sequence[float],
                           limits: Sequence[float]) -> float:
    """ 1 minus the mean relative overspeed max(0, v - limit) / limit """

    v = np.asarray(speeds, dtype=np.float64)
    lim = np.asarray(limits, dtype=np.float64)
    over = np.maximum(0.0, v - lim) / np.maximum(lim, 1e-9)
    return float(np.clip(1.0 - over.mean(), 0.0, 1.0)) if len(v) else 1.0


def lane_speed_limits(ego: np.ndarray, graph: LaneGraph) -> np.ndarray:
    return np.array(
        [graph.lanes[graph.nearest_lane(_s[:2])].speed_limit for _s in ego])


def collision_free(trace: SimTrace) -> float:
    return 0.0 if any(_e.at_fault for _e in trace.collisions) else 1.0


def _boxes(scenario: Scenario, agents: Dict[str, np.ndarray]) -> List[BoxState]:
    by_id = scenario.agent_by_id
    out = [
        BoxState(_id, *_s[:3], by_id[_id].length, by_id[_id].width, _s[3],
                 _s[4]) for _id, _s in sorted(agents.items())
    ]
    out.extend(
        BoxState(_o.id, _o.x, _o.y, _o.heading, _o.length, _o.width)
        for _o in scenario.obstacles)
    return out


def min_time_to_collision(trace: SimTrace,
                          scenario: Scenario,
                          cfg: Optional[MetricConfig] = None) -> float:
    """ Smallest time until the ego, moving on at constant velocity, would
    cause an at-fault contact; inf when it never does within the horizon

    The other boxes are projected the same way from their state at the same
    tick. Boxes already touching the ego are skipped, and so are ticks at
    which the ego stands still.
    """

    cfg = cfg or MetricConfig()
    ego = trace.ego_states()
    frames = [_boxes(scenario, _a) for _a in trace.agent_states()]
    steps = int(round(cfg.ttc_horizon / cfg.ttc_step))
    best = float('inf')
    length, width = scenario.ego.length, scenario.ego.width
    for _i, _s in enumerate(ego):
        now = BoxState('ego', *_s[:3], length, width, _s[3], _s[4])
        if now.speed < cfg.stopped_speed:
            continue
        touching = {_b.id for _b in frames[_i] if in_contact(now, _b)}
        reach = now.speed * cfg.ttc_horizon
        for _k in range(1, steps + 1):
            dt = _k * cfg.ttc_step
            if dt >= best:
                break
            ego_k = now.moved(dt)
            for _b in (_o.moved(dt) for _o in frames[_i]):
                if _b.id in touching:
                    continue
                if np.hypot(_b.x - now.x, _b.y - now.y) > \
                        reach + _b.speed * cfg.ttc_horizon + \
                        now.half_diagonal + _b.half_diagonal:
                    continue
                if in_contact(ego_k, _b) and is_at_fault(
                        now, _b, cfg.stopped_speed):
                    best = min(best, dt)
                    break
    return best


def evaluate(trace: SimTrace,
             scenario: Scenario,
             cfg: Optional[MetricConfig] = None,
             graph: Optional[LaneGraph] = None,
             area=None) -> MetricReport:
    """ All metrics of a finished trace

    Raises:
        ConfigError: the trace is incomplete
    """

    cfg = cfg or MetricConfig()
    if not trace.complete:
        raise ConfigError(f'trace of {trace.scenario_id} is incomplete')
    graph = graph or LaneGraph(scenario.lanes)
    ego = trace.ego_states()
    area = area if area is not None else drivable_area(scenario, cfg)
    ttc = min_time_to_collision(trace, scenario, cfg)
    report = MetricReport(
        drivable=drivable_compliance(ego, scenario.ego.length,
                                     scenario.ego.width, area),
        direction=direction_compliance(ego, graph, cfg),
        comfort=comfort(ego, cfg),
        progress=progress_ratio(scenario, ego, trace.start_tick, cfg),
        collision=collision_free(trace),
        speed_limit=speed_limit_compliance(
            np.hypot(ego[:, 3], ego[:, 4]), lane_speed_limits(ego, graph)),
        ttc=1.0 if ttc >= cfg.ttc_threshold else 0.0,
        scenario_id=scenario.id)
    logger.debug('%s: %s', scenario.id, report.to_dict())
    return report


def metrics(trace: SimTrace, scenario: Scenario,
            cfg: Optional[MetricConfig] = None) -> MetricReport:
    return evaluate(trace, scenario, cfg)
