"""
VQA corpora for reasoner pretraining

DriveVQA asks for one of three views of the expert's next eight seconds
given another: the navigation instruction, the trajectory waypoints and
the control signals. Every ordered pair of categories gives one question,
so a sampled tick yields six records before subsampling.

ReasoningVQA serializes a scene into text and asks an external responder
for a planning decision with a rationale. The responder is pluggable;
TemplateResponder answers offline from the logged future.
"""

from __future__ import annotations
import json
import logging
import math
import re
from dataclasses import asdict, dataclass
from itertools import permutations
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from guidedplan.config import HZ, VQAConfig
from guidedplan.errors import ResponseMismatchError, ScenarioParseError
from guidedplan.reasoner import VELOCITY_DECISIONS, derive_aux_labels
from guidedplan.scene import (LIGHT_STATES, LaneGraph, Scenario,
                              build_navigation_instruction, to_ego_frame)
from guidedplan.scene.geometry import wrap_to_pi

logger = logging.getLogger(__name__)

TEMPLATE_VERSION = 'vqa-templates-1'
CATEGORIES = ('instruction', 'trajectory', 'control')
HORIZON_S = 8.0
HISTORY_S = 2.0
TURN_THRESHOLD = math.pi / 12
ACCEL_BAND = 0.3

REGULATION_BLOCK = (
    'Plan the ego motion for the next 8 seconds while strictly adhering to '
    'traffic regulations: obey the traffic lights, keep a safe distance to '
    'every agent and yield to pedestrians on crosswalks. Reply with a '
    'driving decision and a short rationale.')

_NUMBER = re.compile(r'(?<![\w.])-?\d+(?:\.\d+)?(?!\.?\d)')


@dataclass(frozen=True)
class DriveVQARecord:
    """
    Attributes:
        scenario_id (str): source scenario
        tick (int): tick the question is asked at
        feature_ref (str): "<scenario id>@<tick>", the camera grid of that
            tick as rasterize() produces it
        given (str): category stated in the question
        category (str): category asked for, the answer's category
        question (str): question text
        answer (str): answer text
    """

    scenario_id: str
    tick: int
    feature_ref: str
    given: str
    category: str
    question: str
    answer: str


def _future(scenario: Scenario, tick: int) -> Optional[np.ndarray]:
    horizon = int(round(HORIZON_S * HZ))
    view = to_ego_frame(scenario, tick, history=1, future=horizon)
    return view.future_gt


def instruction_text(future: np.ndarray) -> str:
    return build_navigation_instruction(future=future)


def trajectory_text(future: np.ndarray, spacing_s: float = 1.0) -> str:
    """ Ego-frame waypoints every <spacing_s>, one decimal """

    step = max(1, int(round(spacing_s * HZ)))
    points = future[step - 1::step, :2]
    return 'Waypoints: ' + ', '.join(f'({_x:.1f}, {_y:.1f})'
                                     for _x, _y in points)


def control_text(scenario: Scenario, tick: int, future: np.ndarray) -> str:
    """ Speed, acceleration and turn descriptors of the next seconds """

    state = scenario.ego.states[tick]
    speed = float(np.hypot(state[3], state[4]))
    ahead = int(min(len(future), 2 * HZ))
    end_speed = float(
        np.linalg.norm(future[ahead - 1, :2] - future[ahead - 2, :2]) *
        HZ) if ahead >= 2 else speed
    accel = (end_speed - speed) / (ahead / HZ) if ahead else 0.0
    if accel > ACCEL_BAND:
        longitudinal = 'accelerate'
    elif accel < -ACCEL_BAND:
        longitudinal = 'decelerate'
    else:
        longitudinal = 'keep speed'
    turn = float(wrap_to_pi(future[-1, 2]))
    if abs(turn) < TURN_THRESHOLD:
        lateral = 'go straight'
    else:
        lateral = 'turn left' if turn > 0 else 'turn right'
    return (f'Speed {speed:.1f} m/s, acceleration {accel:.1f} m/s/s, '
            f'{longitudinal}, {lateral}')


def _question(given: str, given_text: str, asked: str) -> str:
    return f'Given the {given} "{given_text}", what is the {asked}?'


def sample_ticks(scenario: Scenario, count: int, history: int = 20) -> List[int]:
    """ Up to <count> evenly spaced ticks with 8 s of log ahead """

    first = history - 1
    last = scenario.num_ticks - int(round(HORIZON_S * HZ)) - 1
    if last < first:
        return []
    if count <= 1:
        return [first]
    ticks = np.linspace(first, last, count).round().astype(int)
    return sorted(set(int(_) for _ in ticks))


def gen_drivevqa(scenarios: Iterable[Scenario],
                 cfg: Optional[VQAConfig] = None) -> List[DriveVQARecord]:
    """ DriveVQA records of every scenario, subsampled by seed

    Scenarios without 8 s of future after the history are skipped. The
    subsample keeps exactly round(subsample * n) records in their original
    order.
    """

    cfg = cfg or VQAConfig()
    records: List[DriveVQARecord] = []
    for _sc in scenarios:
        ticks = sample_ticks(_sc, cfg.ticks_per_scenario)
        if not ticks:
            logger.info('scenario %s: no tick with %.0f s of future, skipped',
                        _sc.id, HORIZON_S)
            continue
        for _t in ticks:
            future = _future(_sc, _t)
            if future is None:
                logger.info('scenario %s tick %d: log too short, skipped',
                            _sc.id, _t)
                continue
            texts = {
                'instruction': instruction_text(future),
                'trajectory': trajectory_text(future, cfg.waypoint_spacing_s),
                'control': control_text(_sc, _t, future),
            }
            for _a, _b in permutations(CATEGORIES, 2):
                records.append(
                    DriveVQARecord(_sc.id, _t, f'{_sc.id}@{_t}', _a, _b,
                                   _question(_a, texts[_a], _b), texts[_b]))
    if cfg.subsample >= 1.0:
        return records
    keep = int(round(cfg.subsample * len(records)))
    rng = np.random.default_rng(cfg.seed)
    idx = np.sort(rng.choice(len(records), size=keep, replace=False))
    logger.info('drivevqa: kept %d of %d records', keep, len(records))
    return [records[_i] for _i in idx]


def numbers_in(text: str) -> List[float]:
    """ Every numeric token of <text> in order """

    return [float(_) for _ in _NUMBER.findall(text)]


# ReasoningVQA


@dataclass(frozen=True)
class ReasoningVQAPrompt:
    """
    Attributes:
        id (str): "<scenario id>@<tick>"
        scenario_id (str): source scenario
        tick (int): serialized tick
        text (str): scene description followed by the regulation block
    """

    id: str
    scenario_id: str
    tick: int
    text: str


@dataclass(frozen=True)
class ReasoningVQARecord:
    prompt_id: str
    scenario_id: str
    tick: int
    question: str
    decision: str
    rationale: str

    @property
    def answer(self) -> str:
        return f'Decision: {self.decision}. Rationale: {self.rationale}'


def _pose_text(state: np.ndarray) -> str:
    speed = float(np.hypot(state[3], state[4]))
    return (f'position ({state[0]:.1f}, {state[1]:.1f}) m, heading '
            f'{math.degrees(float(state[2])):.1f} deg, speed {speed:.1f} m/s')


def serialize_scene(scenario: Scenario,
                    tick: int,
                    graph: Optional[LaneGraph] = None) -> str:
    """ Deterministic text of the scene at <tick>

    Positions are global and rounded to 0.1 m, headings are in degrees.
    One block per agent observed at <tick>, nearest first.
    """

    graph = graph or LaneGraph(scenario.lanes)
    ego = scenario.ego.states
    lines = [f'Scene {scenario.id}, scenario type {scenario.scenario_type}.',
             f'Ego vehicle: {_pose_text(ego[tick])}.']
    back = int(round(HISTORY_S * HZ))
    hist = range(max(0, tick - back), tick, HZ)
    lines.append('Ego history: ' + '; '.join(
        f'{(_t - tick) / HZ:.1f} s at ({ego[_t, 0]:.1f}, {ego[_t, 1]:.1f})'
        for _t in hist) + '.')
    live = [_a for _a in scenario.agents if _a.valid[tick]]
    live.sort(key=lambda _a: (float(np.hypot(*(_a.states[tick, :2] -
                                              ego[tick, :2]))), _a.id))
    for _a in live:
        lines.append(f'Agent {_a.id} ({_a.agent_class}, {_a.length:.1f} m '
                     f'long): {_pose_text(_a.states[tick])}.')
    here = graph.nearest_lane(ego[tick, :2])
    for _l in scenario.lanes:
        succ = ', '.join(_l.successors) or 'none'
        mark = ' The ego is on this lane.' if _l.id == here else ''
        lines.append(f'Lane {_l.id}: speed limit {_l.speed_limit:.1f} m/s, '
                     f'successors {succ}, traffic light '
                     f'{scenario.light_state(tick, _l.id)}.{mark}')
    for _c in scenario.crosswalks:
        center = _c.boundary[:, :2].mean(axis=0)
        lines.append(f'Crosswalk {_c.id} centered at ({center[0]:.1f}, '
                     f'{center[1]:.1f}).')
    route = ', '.join(scenario.route_lane_ids)
    lines.append(f'Route: {route}.')
    lines.append(REGULATION_BLOCK)
    return '\n'.join(lines)


def gen_reasoningvqa_prompts(
        scenarios: Iterable[Scenario],
        cfg: Optional[VQAConfig] = None) -> List[ReasoningVQAPrompt]:
    """ One prompt per sampled tick, in scenario order """

    cfg = cfg or VQAConfig()
    out: List[ReasoningVQAPrompt] = []
    for _sc in scenarios:
        graph = LaneGraph(_sc.lanes)
        ticks = sample_ticks(_sc, cfg.ticks_per_scenario)
        if not ticks:
            logger.info('scenario %s: too short for a prompt, skipped', _sc.id)
        for _t in ticks:
            out.append(
                ReasoningVQAPrompt(f'{_sc.id}@{_t}', _sc.id, _t,
                                   serialize_scene(_sc, _t, graph)))
    return out


Responder = Callable[[ReasoningVQAPrompt], Mapping[str, str]]


class TemplateResponder:
    """ Offline responder answering from the logged future

    The decision is the velocity decision of the expert over the next two
    seconds; the rationale names the light of the ego's route lane and
    whether a lane change follows.
    """

    def __init__(self, scenarios: Iterable[Scenario]) -> None:
        self.scenarios = {_s.id: _s for _s in scenarios}
        self._graphs: Dict[str, LaneGraph] = {}

    def __call__(self, prompt: ReasoningVQAPrompt) -> Dict[str, str]:
        scenario = self.scenarios[prompt.scenario_id]
        graph = self._graphs.setdefault(scenario.id,
                                        LaneGraph(scenario.lanes))
        labels = derive_aux_labels(scenario, prompt.tick, graph)
        decision = VELOCITY_DECISIONS[labels.velocity_decision] \
            if labels.velocity_decision is not None else 'keep'
        light = LIGHT_STATES[labels.traffic_light] \
            if labels.traffic_light is not None else 'unknown'
        lane = 'a lane change follows' if labels.lane_change else \
            'the ego keeps its lane'
        rationale = (f'the route lane light is {light} and {lane}, so the '
                     f'ego should {decision}')
        return {'id': prompt.id, 'decision': decision, 'rationale': rationale}


def write_responses(path: str, prompts: Sequence[ReasoningVQAPrompt],
                    responder: Responder) -> None:
    """ Query <responder> for every prompt and store the replies as JSON
    lines """

    with open(path, 'w') as w:
        for _p in prompts:
            reply = dict(responder(_p))
            reply.setdefault('id', _p.id)
            w.write(json.dumps(reply, sort_keys=True) + '\n')


def ingest_responses(prompts: Sequence[ReasoningVQAPrompt],
                     path: str) -> List[ReasoningVQARecord]:
    """ Pair every prompt with its reply

    Raises:
        ResponseMismatchError: a reply without a prompt, a prompt without
            a reply, or a reply lacking the decision or the rationale
        ScenarioParseError: a line is not JSON
    """

    replies: Dict[str, dict] = {}
    with open(path, 'r') as r:
        for _no, _line in enumerate(r, 1):
            if not _line.strip():
                continue
            try:
                reply = json.loads(_line)
            except json.JSONDecodeError as e:
                raise ScenarioParseError(f'{path}: {e.msg}', line=_no) from e
            replies[str(reply.get('id'))] = reply
    by_id = {_p.id: _p for _p in prompts}
    unknown = sorted(set(replies) - set(by_id))
    missing = sorted(set(by_id) - set(replies))
    if unknown or missing:
        raise ResponseMismatchError(
            f'{len(unknown)} replies without a prompt (e.g. {unknown[:3]}), '
            f'{len(missing)} prompts without a reply (e.g. {missing[:3]})')
    out = []
    for _p in prompts:
        reply = replies[_p.id]
        if not reply.get('decision') or not reply.get('rationale'):
            raise ResponseMismatchError(f'reply {_p.id} lacks a decision or '
                                        'a rationale')
        out.append(
            ReasoningVQARecord(_p.id, _p.scenario_id, _p.tick, _p.text,
                               str(reply['decision']),
                               str(reply['rationale'])))
    return out


# storage


def save_records(path: str, records: Iterable[object]) -> int:
    n = 0
    with open(path, 'w') as w:
        for _r in records:
            w.write(json.dumps(asdict(_r), sort_keys=True) + '\n')
            n += 1
    return n


def load_drivevqa(path: str) -> List[DriveVQARecord]:
    return [DriveVQARecord(**_d) for _d in _read_lines(path)]


def load_reasoningvqa(path: str) -> List[ReasoningVQARecord]:
    return [ReasoningVQARecord(**_d) for _d in _read_lines(path)]


def load_prompts(path: str) -> List[ReasoningVQAPrompt]:
    return [ReasoningVQAPrompt(**_d) for _d in _read_lines(path)]


def _read_lines(path: str) -> List[dict]:
    out = []
    with open(path, 'r') as r:
        for _no, _line in enumerate(r, 1):
            if not _line.strip():
                continue
            try:
                out.append(json.loads(_line))
            except json.JSONDecodeError as e:
                raise ScenarioParseError(f'{path}: {e.msg}', line=_no) from e
    return out
