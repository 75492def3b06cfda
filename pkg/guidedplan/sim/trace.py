"""
Simulation traces

A SimTrace is the append-only record of one simulated scenario: one
TickRecord per simulated tick, the ego state after the last tick, every
collision event, and the gate logs. Records must arrive in tick order.

File format (gdtr1, JSON lines):

    {"schema": "gdtr1", "scenario_id": ..., "mode": ..., "seed": ...,
     "start_tick": ..., "n_ticks": ..., "config_hash": ...}
    {"tick": t, "ego": [7], "plan": [[x, y, heading], ...] | null,
     "inferred": bool, "grade": int, "guidance_tick": int | null,
     "agents": {id: [x, y, heading, vx, vy]}}          one per tick
    {"end": true, "ego": [7], "agents": {...}, "collisions": [...],
     "inference_log": [...], "grade_log": [...], "aborted": bool}

Floats are written with repr precision, so a reloaded trace is bitwise
equal to the one that was saved.
"""

from __future__ import annotations
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from guidedplan.errors import GuidedPlanError, ScenarioParseError
from .collision import CollisionEvent

SCHEMA = 'gdtr1'


@dataclass(eq=False)
class TickRecord:
    """ What happened at one simulated tick

    Attributes:
        tick (int): scenario tick
        ego (np.ndarray): [7] ego state at the tick, global frame
        plan (Optional[np.ndarray]): [T, 3] plan made at the tick, global
            frame, None when no plan was made
        inferred (bool): the reasoner ran at the tick
        grade (int): complexity grade at the tick, 0 when not graded
        guidance_tick (Optional[int]): tick of the guidance the planner used
        agents (Dict[str, np.ndarray]): [5] (x, y, heading, vx, vy) of every
            agent present at the tick
    """

    tick: int
    ego: np.ndarray
    plan: Optional[np.ndarray] = None
    inferred: bool = False
    grade: int = 0
    guidance_tick: Optional[int] = None
    agents: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(eq=False)
class SimTrace:

    scenario_id: str
    mode: str
    seed: int
    start_tick: int
    n_ticks: int
    config_hash: str = ''
    records: List[TickRecord] = field(default_factory=list)
    final_ego: Optional[np.ndarray] = None
    final_agents: Dict[str, np.ndarray] = field(default_factory=dict)
    collisions: List[CollisionEvent] = field(default_factory=list)
    inference_log: List[int] = field(default_factory=list)
    grade_log: List[int] = field(default_factory=list)
    aborted: bool = False

    def append(self, record: TickRecord) -> None:
        expected = self.start_tick + len(self.records)
        if record.tick != expected:
            raise GuidedPlanError(
                f'trace of {self.scenario_id}: record for tick {record.tick}, '
                f'expected {expected}')
        self.records.append(record)

    @property
    def complete(self) -> bool:
        return len(self.records) == self.n_ticks and self.final_ego is not None

    @property
    def ticks(self) -> List[int]:
        return [_r.tick for _r in self.records]

    def ego_states(self) -> np.ndarray:
        """ [n + 1, 7] ego states, the state after the last tick included """

        rows = [_r.ego for _r in self.records]
        if self.final_ego is not None:
            rows.append(self.final_ego)
        return np.array(rows, dtype=np.float64).reshape(-1, 7)

    def agent_states(self) -> List[Dict[str, np.ndarray]]:
        """ Agent states aligned with ego_states() """

        out = [_r.agents for _r in self.records]
        if self.final_ego is not None:
            out.append(self.final_agents)
        return out

    def digest(self) -> str:
        return hashlib.sha256(dumps_trace(self).encode('utf8')).hexdigest()


def _floats(a: Optional[np.ndarray]) -> Any:
    if a is None:
        return None
    return np.asarray(a, dtype=np.float64).tolist()


def _agents(agents: Dict[str, np.ndarray]) -> Dict[str, Any]:
    return {_k: _floats(agents[_k]) for _k in sorted(agents)}


def dumps_trace(trace: SimTrace) -> str:
    lines = [{
        'schema': SCHEMA,
        'scenario_id': trace.scenario_id,
        'mode': trace.mode,
        'seed': trace.seed,
        'start_tick': trace.start_tick,
        'n_ticks': trace.n_ticks,
        'config_hash': trace.config_hash,
    }]
    for _r in trace.records:
        lines.append({
            'tick': _r.tick,
            'ego': _floats(_r.ego),
            'plan': _floats(_r.plan),
            'inferred': _r.inferred,
            'grade': _r.grade,
            'guidance_tick': _r.guidance_tick,
            'agents': _agents(_r.agents),
        })
    lines.append({
        'end': True,
        'ego': _floats(trace.final_ego),
        'agents': _agents(trace.final_agents),
        'collisions': [dataclasses.asdict(_c) for _c in trace.collisions],
        'inference_log': list(trace.inference_log),
        'grade_log': list(trace.grade_log),
        'aborted': trace.aborted,
    })
    return ''.join(json.dumps(_l, separators=(',', ':')) + '\n' for _l in lines)


def _array(v: Any) -> Optional[np.ndarray]:
    return None if v is None else np.array(v, dtype=np.float64)


def loads_trace(text: str) -> SimTrace:
    """
    Raises:
        ScenarioParseError: malformed line or unknown schema
    """

    rows = []
    for _no, _line in enumerate(text.splitlines(), start=1):
        if not _line.strip():
            continue
        try:
            rows.append(json.loads(_line))
        except json.JSONDecodeError as e:
            raise ScenarioParseError(f'bad trace line: {e.msg}', line=_no) from e
    if not rows or rows[0].get('schema') != SCHEMA:
        raise ScenarioParseError(f'not a {SCHEMA} trace', line=1, field='schema')
    head = rows[0]
    trace = SimTrace(head['scenario_id'], head['mode'], int(head['seed']),
                     int(head['start_tick']), int(head['n_ticks']),
                     head.get('config_hash', ''))
    for _row in rows[1:]:
        if _row.get('end'):
            trace.final_ego = _array(_row['ego'])
            trace.final_agents = {
                _k: _array(_v) for _k, _v in _row['agents'].items()
            }
            trace.collisions = [CollisionEvent(**_c) for _c in _row['collisions']]
            trace.inference_log = list(_row['inference_log'])
            trace.grade_log = list(_row['grade_log'])
            trace.aborted = bool(_row['aborted'])
            break
        trace.append(
            TickRecord(tick=int(_row['tick']),
                       ego=_array(_row['ego']),
                       plan=_array(_row['plan']),
                       inferred=bool(_row['inferred']),
                       grade=int(_row['grade']),
                       guidance_tick=_row['guidance_tick'],
                       agents={
                           _k: _array(_v)
                           for _k, _v in _row['agents'].items()
                       }))
    return trace


def save_trace(trace: SimTrace, path: str) -> None:
    with open(path, 'w') as w:
        w.write(dumps_trace(trace))


def load_trace(path: str) -> SimTrace:
    with open(path, 'r') as r:
        return loads_trace(r.read())
