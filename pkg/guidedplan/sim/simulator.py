"""
Closed-loop simulation

run() drives one scenario at 10 Hz. At every tick the world is rebuilt
from the executed ego states and the current agent states, the bundle
observes it, the gate decides whether the reasoner runs (its guidance is
used in the same tick), the planner plans and the ego executes the first
0.1 s of the plan. Agents then move and collisions are checked at the new
tick. The loop itself draws no random numbers; the seed is recorded in
the trace.

In the world handed to the bundle the ego log holds the executed states
up to the current tick and the logged expert beyond it.
"""

from __future__ import annotations
import dataclasses
import logging
import math
from functools import cached_property
from typing import Callable, Dict, List, Optional, Protocol, Set

import numpy as np

from guidedplan.config import DT, SimConfig, config_hash
from guidedplan.encoders import ImageDescriptors
from guidedplan.errors import ConfigError, SimulationAbortedError
from guidedplan.gate import CAIGate, GateState
from guidedplan.planner import PlanOutput
from guidedplan.reasoner import GuidanceVector
from guidedplan.scene import (LaneGraph, LocalSceneView, Scenario, Track,
                              to_ego_frame)
from guidedplan.scene.geometry import to_local, wrap_to_pi
from .agents import AgentSimulator
from .collision import BoxState, CollisionEvent, collision_check
from .trace import SimTrace, TickRecord

logger = logging.getLogger(__name__)

PURSUIT_MIN_LOOKAHEAD = 3.0
PURSUIT_GAIN = 0.8


class Observation:
    """ What a bundle sees at one tick

    Image descriptors are produced on first access only.
    """

    def __init__(self,
                 scenario: Scenario,
                 tick: int,
                 view: LocalSceneView,
                 graph: Optional[LaneGraph] = None,
                 describe: Optional[Callable[[], ImageDescriptors]] = None
                 ) -> None:
        self.scenario = scenario
        self.tick = tick
        self.view = view
        self.graph = graph
        self._describe = describe

    @cached_property
    def descriptors(self) -> Optional[ImageDescriptors]:
        return self._describe() if self._describe is not None else None


class PlanningBundle(Protocol):
    """ Planner, reasoner and gate as the simulator drives them """

    gate: CAIGate

    def observe(self, scenario: Scenario, tick: int,
                graph: Optional[LaneGraph] = None) -> Observation:
        ...

    def guidance(self, obs: Observation,
                 grade: int) -> Optional[GuidanceVector]:
        ...

    def plan(self, obs: Observation,
             guidance: Optional[GuidanceVector]) -> PlanOutput:
        ...


class ExpertPlanner:
    """ Plans the logged expert future, never consults guidance """

    def __init__(self,
                 horizon: int = 80,
                 gate: Optional[CAIGate] = None,
                 history: int = 20) -> None:
        self.horizon = horizon
        self.history = history
        self.gate = gate or CAIGate()

    def observe(self, scenario: Scenario, tick: int,
                graph: Optional[LaneGraph] = None) -> Observation:
        return Observation(scenario, tick,
                           to_ego_frame(scenario, tick, history=self.history,
                                        future=0),
                           graph)

    def guidance(self, obs: Observation,
                 grade: int) -> Optional[GuidanceVector]:
        return None

    def plan(self, obs: Observation,
             guidance: Optional[GuidanceVector]) -> PlanOutput:
        states = obs.scenario.ego.states
        idx = np.minimum(np.arange(obs.tick + 1, obs.tick + 1 + self.horizon),
                         obs.scenario.num_ticks - 1)
        x, y, theta = obs.view.pose
        traj = np.zeros((self.horizon, 3))
        traj[:, :2] = to_local(states[idx, :2], np.array([x, y]), theta)
        traj[:, 2] = wrap_to_pi(states[idx, 2] - theta)
        return PlanOutput(traj, 0, np.ones(1), 0.0)


def start_tick_for(bundle: PlanningBundle, config: SimConfig) -> int:
    if config.start_tick is not None:
        return config.start_tick
    return int(getattr(bundle, 'history', 20)) - 1


def _with_finite_differences(prev: np.ndarray, pose: np.ndarray) -> np.ndarray:
    """ [7] state at <pose> (x, y, heading) reached from <prev> in one tick """

    out = np.zeros(7)
    out[0:3] = pose
    if not -math.pi < pose[2] <= math.pi:
        out[2] = wrap_to_pi(pose[2])
    out[3:5] = (pose[0:2] - prev[0:2]) / DT
    out[5:7] = (out[3:5] - prev[3:5]) / DT
    return out


def pure_pursuit(prev: np.ndarray, plan: np.ndarray) -> np.ndarray:
    """ (x, y, heading) after one tick of steering toward the plan

    The speed is the speed implied by the first plan step; the steering
    arc passes through the first plan point at least the lookahead away.
    """

    speed = float(np.hypot(*(plan[0, :2] - prev[:2]))) / DT
    lookahead = max(PURSUIT_MIN_LOOKAHEAD, PURSUIT_GAIN * speed)
    dist = np.hypot(plan[:, 0] - prev[0], plan[:, 1] - prev[1])
    far = np.flatnonzero(dist >= lookahead)
    target = plan[far[0]] if len(far) else plan[-1]
    d = math.hypot(target[0] - prev[0], target[1] - prev[1])
    alpha = math.atan2(target[1] - prev[1], target[0] - prev[0]) - prev[2]
    curvature = 2.0 * math.sin(alpha) / d if d > 1e-6 else 0.0
    step = speed * DT
    heading = prev[2] + step * curvature
    mid = prev[2] + 0.5 * step * curvature
    return np.array([
        prev[0] + step * math.cos(mid), prev[1] + step * math.sin(mid),
        wrap_to_pi(heading)
    ])


class _World:
    """ Executed ego states and agent states spliced into the scenario """

    def __init__(self, scenario: Scenario, agents: AgentSimulator) -> None:
        self.scenario = scenario
        self.agents = agents
        self.ego = np.array(scenario.ego.states)
        self.agent_states = {
            _a.id: np.array(_a.states)
            for _a in scenario.agents
        }
        self.agent_valid = {_a.id: np.array(_a.valid) for _a in scenario.agents}

    def record_agents(self, tick: int) -> Dict[str, np.ndarray]:
        states = self.agents.states()
        for _id, _s in states.items():
            self.agent_states[_id][tick] = _s
            self.agent_valid[_id][tick] = True
        return states

    def scenario_at(self) -> Scenario:
        if self.agents.mode == 'non_reactive':
            agents = self.scenario.agents
        else:
            agents = tuple(
                Track(_a.id, _a.agent_class, _a.length, _a.width,
                      self.agent_states[_a.id], self.agent_valid[_a.id])
                for _a in self.scenario.agents)
        ego = Track('ego', 'ego', self.scenario.ego.length,
                    self.scenario.ego.width, self.ego, self.scenario.ego.valid)
        return dataclasses.replace(self.scenario, ego=ego, agents=agents)

    def ego_box(self, tick: int) -> BoxState:
        return BoxState.from_state('ego', self.ego[tick],
                                   self.scenario.ego.length,
                                   self.scenario.ego.width)


def _new_contacts(tick: int, ego: BoxState, others: List[BoxState],
                  touching: Set[str]) -> List[CollisionEvent]:
    events = collision_check(tick, ego, others)
    fresh = [_e for _e in events if _e.agent_id not in touching]
    touching.clear()
    touching.update(_e.agent_id for _e in events)
    for _e in fresh:
        logger.info('tick %d: ego touches %s%s', tick, _e.agent_id,
                    ' (at fault)' if _e.at_fault else '')
    return fresh


def run(bundle: PlanningBundle,
        scenario: Scenario,
        config: Optional[SimConfig] = None,
        graph: Optional[LaneGraph] = None) -> SimTrace:
    """ Simulate <scenario> in one of the closed-loop modes

    Raises:
        ConfigError: open-loop mode, or the scenario ends before the run
        SimulationAbortedError: the planner returned a non-finite plan;
            the partial trace is attached
    """

    config = config or SimConfig()
    if config.mode == 'open_loop':
        raise ConfigError('open-loop evaluation goes through run_open_loop')
    start = start_tick_for(bundle, config)
    n = config.n_ticks
    if start < 0 or start + n >= scenario.num_ticks:
        raise ConfigError(
            f'{scenario.id}: {scenario.num_ticks} ticks cannot host {n} '
            f'simulated ticks from tick {start}')
    graph = graph or LaneGraph(scenario.lanes)
    agents = AgentSimulator(
        scenario, 'reactive' if config.mode == 'closed_reactive' else
        'non_reactive', start, config.idm, graph)
    world = _World(scenario, agents)
    trace = SimTrace(scenario.id, config.mode, config.seed, start, n,
                     config_hash(config))
    state = GateState()
    touching: Set[str] = set()
    first_plan: Optional[np.ndarray] = None

    for _t in range(start, start + n):
        agent_states = world.record_agents(_t)
        ego_box = world.ego_box(_t)
        trace.collisions.extend(
            _new_contacts(_t, ego_box, agents.boxes(), touching))
        if _t > start:
            state.advance()

        record = TickRecord(_t, world.ego[_t].copy(),
                            agents={_k: _v[:5].copy() for _k, _v in
                                    agent_states.items()})
        if config.mode != 'first_frame' or _t == start:
            obs = bundle.observe(world.scenario_at(), _t, graph)
            descriptors = obs.descriptors if bundle.gate.needs_descriptors \
                else None
            infer, grade = bundle.gate.decide(state, obs.view, obs.scenario,
                                              _t, descriptors, graph)
            record.grade = grade
            if infer:
                state.record_inference(_t, bundle.guidance(obs, grade))
                record.inferred = True
            guidance = state.last_guidance
            record.guidance_tick = guidance.tick if guidance is not None \
                else None
            out = bundle.plan(obs, guidance)
            plan = obs.view.trajectory_to_global(out.trajectory)
            record.plan = plan
            if not np.all(np.isfinite(plan)):
                trace.append(record)
                trace.aborted = True
                trace.inference_log = list(state.inference_log)
                trace.grade_log = list(state.grade_log)
                logger.error('%s tick %d: non-finite plan, scenario aborted',
                             scenario.id, _t)
                raise SimulationAbortedError(
                    f'{scenario.id}: non-finite plan at tick {_t}', trace)
            if first_plan is None:
                first_plan = plan
        trace.append(record)

        if config.mode == 'first_frame':
            k = min(_t - start, len(first_plan) - 1)
            pose = first_plan[k]
        elif config.controller == 'pure_pursuit':
            pose = pure_pursuit(world.ego[_t], record.plan)
        else:
            pose = record.plan[0]
        world.ego[_t + 1] = _with_finite_differences(world.ego[_t], pose)
        agents.step(ego_box)

    end = start + n
    trace.final_agents = {
        _k: _v[:5].copy()
        for _k, _v in world.record_agents(end).items()
    }
    trace.final_ego = world.ego[end].copy()
    trace.collisions.extend(
        _new_contacts(end, world.ego_box(end), agents.boxes(), touching))
    trace.inference_log = list(state.inference_log)
    trace.grade_log = list(state.grade_log)
    logger.debug('%s: %d ticks simulated, %d reasoner runs', scenario.id, n,
                 len(trace.inference_log))
    return trace
