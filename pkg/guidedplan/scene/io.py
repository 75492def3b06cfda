"""
Scenario files (schema "gdsv1")

One UTF-8 JSON document per scenario. Fields appear in the canonical
order below and every float is written with 9 significant digits, so
saving a loaded canonical file reproduces it byte for byte:

    schema, id, scenario_type, dt, num_ticks, lanes, crosswalks,
    route_lane_ids, ego_log, agents, obstacles, traffic_lights, camera_rig
"""

from __future__ import annotations
import json
import logging
import os
from typing import Any, Dict, List

import numpy as np

from guidedplan.errors import ScenarioParseError
from .scenario import (Camera, CameraRig, CrosswalkPolygon, LaneSegment,
                       Scenario, StaticObstacle, Track)

logger = logging.getLogger(__name__)

SCHEMA = 'gdsv1'


def _num(x: float) -> float:
    return float(f'{float(x):.9g}')


def _rows(a: np.ndarray) -> List[List[float]]:
    return [[_num(_v) for _v in _row] for _row in np.asarray(a)]


def _track_dict(t: Track, with_id: bool) -> Dict[str, Any]:
    d: Dict[str, Any] = {}
    if with_id:
        d['id'] = t.id
        d['class'] = t.agent_class
    d['length'] = _num(t.length)
    d['width'] = _num(t.width)
    d['states'] = _rows(t.states)
    if with_id:
        d['valid'] = [bool(_) for _ in t.valid]
    return d


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    return {
        'schema': SCHEMA,
        'id': scenario.id,
        'scenario_type': scenario.scenario_type,
        'dt': _num(scenario.dt),
        'num_ticks': scenario.num_ticks,
        'lanes': [{
            'id': _l.id,
            'centerline': _rows(_l.centerline),
            'successors': list(_l.successors),
            'left': _l.left,
            'right': _l.right,
            'is_intersection': bool(_l.is_intersection),
        } for _l in scenario.lanes],
        'crosswalks': [{
            'id': _c.id,
            'boundary': _rows(_c.boundary)
        } for _c in scenario.crosswalks],
        'route_lane_ids': list(scenario.route_lane_ids),
        'ego_log': _track_dict(scenario.ego, with_id=False),
        'agents': [_track_dict(_a, with_id=True) for _a in scenario.agents],
        'obstacles': [{
            'id': _o.id,
            'x': _num(_o.x),
            'y': _num(_o.y),
            'heading': _num(_o.heading),
            'length': _num(_o.length),
            'width': _num(_o.width),
        } for _o in scenario.obstacles],
        'traffic_lights': [{
            _k: _row[_k]
            for _k in sorted(_row)
        } for _row in scenario.traffic_lights],
        'camera_rig': [{
            'name': _c.name,
            'fx': _num(_c.fx),
            'fy': _num(_c.fy),
            'cx': _num(_c.cx),
            'cy': _num(_c.cy),
            'x': _num(_c.x),
            'y': _num(_c.y),
            'z': _num(_c.z),
            'yaw': _num(_c.yaw),
            'height': int(_c.height),
            'width': int(_c.width),
        } for _c in scenario.camera_rig],
    }


def dumps_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario),
                      ensure_ascii=True,
                      separators=(',', ':')) + '\n'


def save_scenario(scenario: Scenario, path: str) -> None:
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    with open(path, 'w', encoding='utf8') as w:
        w.write(dumps_scenario(scenario))


class _Reader:
    """ Field access that reports the dotted path of whatever is missing """

    def __init__(self, data: Any, path: str = '') -> None:
        self.data = data
        self.path = path

    def _sub(self, key) -> str:
        if isinstance(key, int):
            return f'{self.path}[{key}]'
        return f'{self.path}.{key}' if self.path else str(key)

    def get(self, key, kind=None, optional: bool = False):
        where = self._sub(key)
        if not isinstance(self.data, dict):
            raise ScenarioParseError('expected an object', field=self.path)
        if key not in self.data:
            if optional:
                return None
            raise ScenarioParseError('missing field', field=where)
        value = self.data[key]
        if kind is not None and value is not None and \
                not isinstance(value, kind):
            raise ScenarioParseError(
                f'expected {getattr(kind, "__name__", kind)}', field=where)
        return value

    def child(self, key) -> '_Reader':
        return _Reader(self.get(key), self._sub(key))

    def items(self, key) -> List['_Reader']:
        seq = self.get(key, list)
        where = self._sub(key)
        return [_Reader(_v, f'{where}[{_i}]') for _i, _v in enumerate(seq)]

    def array(self, key, width: int) -> np.ndarray:
        where = self._sub(key)
        try:
            a = np.asarray(self.get(key, list), dtype=np.float64)
        except (TypeError, ValueError):
            raise ScenarioParseError('expected a numeric table', field=where)
        if a.ndim != 2 or a.shape[1] != width:
            raise ScenarioParseError(f'expected rows of {width} numbers',
                                     field=where)
        return a

    def number(self, key) -> float:
        value = self.get(key, (int, float))
        if isinstance(value, bool):
            raise ScenarioParseError('expected a number', field=self._sub(key))
        return float(value)


def _track(r: _Reader, track_id: str, agent_class: str) -> Track:
    states = r.array('states', 7)
    valid = r.get('valid', list, optional=True)
    if valid is None:
        valid = [True] * len(states)
    return Track(track_id, agent_class, r.number('length'),
                 r.number('width'), states, np.asarray(valid, dtype=bool))


def scenario_from_dict(data: Any) -> Scenario:
    r = _Reader(data)
    schema = r.get('schema', str)
    if schema != SCHEMA:
        raise ScenarioParseError(f'unsupported schema {schema!r}',
                                 field='schema')
    lanes = []
    for _l in r.items('lanes'):
        lanes.append(
            LaneSegment(_l.get('id', str), _l.array('centerline', 4),
                        tuple(_l.get('successors', list)),
                        _l.get('left', str, optional=True),
                        _l.get('right', str, optional=True),
                        bool(_l.get('is_intersection', bool))))
    crosswalks = [
        CrosswalkPolygon(_c.get('id', str), _c.array('boundary', 4))
        for _c in r.items('crosswalks')
    ]
    ego = _track(r.child('ego_log'), 'ego', 'ego')
    agents = [
        _track(_a, _a.get('id', str), _a.get('class', str))
        for _a in r.items('agents')
    ]
    obstacles = [
        StaticObstacle(_o.get('id', str), _o.number('x'), _o.number('y'),
                       _o.number('heading'), _o.number('length'),
                       _o.number('width')) for _o in r.items('obstacles')
    ]
    cameras = [
        Camera(_c.get('name', str), _c.number('fx'), _c.number('fy'),
               _c.number('cx'), _c.number('cy'), _c.number('x'),
               _c.number('y'), _c.number('z'), _c.number('yaw'),
               int(_c.get('height', int)), int(_c.get('width', int)))
        for _c in r.items('camera_rig')
    ]
    lights = r.get('traffic_lights', list)
    for _i, _row in enumerate(lights):
        if not isinstance(_row, dict):
            raise ScenarioParseError('expected an object',
                                     field=f'traffic_lights[{_i}]')
    num_ticks = int(r.get('num_ticks', int))
    if num_ticks != len(ego.states):
        raise ScenarioParseError(
            f'num_ticks {num_ticks} but ego_log has {len(ego.states)} states',
            field='num_ticks')
    return Scenario(id=r.get('id', str),
                    scenario_type=r.get('scenario_type', str),
                    lanes=tuple(lanes),
                    crosswalks=tuple(crosswalks),
                    ego=ego,
                    agents=tuple(agents),
                    route_lane_ids=tuple(r.get('route_lane_ids', list)),
                    traffic_lights=tuple(lights),
                    camera_rig=CameraRig(tuple(cameras)),
                    obstacles=tuple(obstacles),
                    dt=r.number('dt'))


def loads_scenario(text: str, min_ticks: int = 100) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(e.msg, line=e.lineno) from e
    return scenario_from_dict(data).validate(min_ticks=min_ticks)


def load_scenario(path: str, min_ticks: int = 100) -> Scenario:
    """ Read and validate one scenario file

    Args:
        path: file in the gdsv1 schema
        min_ticks: required log length, T_h + T_f by default

    Raises:
        ScenarioParseError: syntax error (with line) or a missing/mistyped
            field (with its dotted path)
        ScenarioInvariantError: the parsed scenario breaks an invariant
    """

    with open(path, 'r', encoding='utf8') as r:
        text = r.read()
    logger.debug('loading scenario %s', path)
    return loads_scenario(text, min_ticks=min_ticks)


def load_scenario_dir(path: str, min_ticks: int = 100) -> List[Scenario]:
    """ Every *.json scenario of a directory, sorted by scenario id """

    out = [
        load_scenario(os.path.join(path, _f), min_ticks=min_ticks)
        for _f in sorted(os.listdir(path)) if _f.endswith('.json')
    ]
    return sorted(out, key=lambda _s: _s.id)
