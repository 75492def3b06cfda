"""
Navigation instructions

The reasoner is told where to go with one short sentence such as
"Go straight for 110.9m" or "Turn left for 31.4m". In training the text
comes from the expert future; at inference it is generated from the route.
"""

import math
import re
from typing import Optional, Tuple

import numpy as np

from guidedplan.errors import ConfigError
from .geometry import (arc_lengths, interpolate_polyline, project_to_polyline,
                       to_local, wrap_to_pi)
from .scenario import Scenario

STRAIGHT_THRESHOLD = math.pi / 12
STATIONARY = 'Remain stationary'
MANEUVERS = ('Go straight', 'Turn left', 'Turn right')

_PATTERN = re.compile(r'^(Go straight|Turn left|Turn right) for (\d+\.\d)m$')


def _instruction(path: np.ndarray, heading_change: float) -> str:
    distance = round(float(arc_lengths(path)[-1]), 1)
    if distance <= 0.0:
        return STATIONARY
    if abs(heading_change) < STRAIGHT_THRESHOLD:
        maneuver = 'Go straight'
    elif heading_change > 0:
        maneuver = 'Turn left'
    else:
        maneuver = 'Turn right'
    return f'{maneuver} for {distance:.1f}m'


def build_navigation_instruction(future: Optional[np.ndarray] = None,
                                 route: Optional[np.ndarray] = None) -> str:
    """ "<maneuver> for <distance>m" from an ego-frame path

    Args:
        future: [T_f, 3] expert future (x, y, heading) in the ego frame; the
            path starts at the origin with heading 0
        route: [K, >=3] route polyline ahead of the ego in the ego frame,
            see route_path()

    Returns:
        the instruction; a path of zero length gives "Remain stationary"
    """

    if future is not None:
        future = np.asarray(future, dtype=np.float64)
        path = np.concatenate([np.zeros((1, 2)), future[:, :2]], axis=0)
        return _instruction(path, float(wrap_to_pi(future[-1, 2])))
    if route is not None:
        route = np.asarray(route, dtype=np.float64)
        if len(route) < 2:
            return STATIONARY
        return _instruction(route[:, :2],
                            float(wrap_to_pi(route[-1, 2] - route[0, 2])))
    raise ConfigError('a future trajectory or a route path is required')


def parse_navigation_instruction(text: str) -> Tuple[str, float]:
    """ (maneuver, distance) of an emitted instruction """

    if text == STATIONARY:
        return STATIONARY, 0.0
    m = _PATTERN.match(text)
    if m is None:
        raise ValueError(f'not a navigation instruction: {text!r}')
    return m.group(1), float(m.group(2))


def route_path(scenario: Scenario,
               pose: Tuple[float, float, float],
               speed: float,
               horizon_s: float = 8.0,
               step: float = 1.0) -> np.ndarray:
    """ The stretch of the route the ego would cover in <horizon_s> at its
    current speed, in the frame of <pose>, as [K, 3] (x, y, heading)

    The route polyline is walked from the ego's projection; the stretch
    ends early where the route ends.
    """

    poly = scenario.route_polyline()
    total = float(arc_lengths(poly)[-1])
    origin = np.array(pose[:2])
    s0, _, _ = project_to_polyline(origin, poly)
    length = max(0.0, min(speed * horizon_s, total - s0))
    if length <= 0.0:
        return np.zeros((1, 3))
    samples = np.append(np.arange(0.0, length, step), length)
    pts = np.array([interpolate_polyline(poly, s0 + _s) for _s in samples])
    out = np.zeros((len(pts), 3))
    out[:, :2] = to_local(pts[:, :2], origin, pose[2])
    out[:, 2] = wrap_to_pi(pts[:, 2] - pose[2])
    return out


def route_instruction(scenario: Scenario, pose: Tuple[float, float, float],
                      speed: float, horizon_s: float = 8.0) -> str:
    return build_navigation_instruction(
        route=route_path(scenario, pose, speed, horizon_s))
