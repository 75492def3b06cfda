"""
Configuration objects

All tunables live in frozen dataclasses so a run can be hashed and
replayed. YAML files map one-to-one onto the dataclass fields; unknown
keys are rejected.
"""

from __future__ import annotations
import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import (Any, Dict, Mapping, Optional, Tuple, Type, TypeVar,
                    get_type_hints)

import numpy as np
import yaml

from .errors import ConfigError

DT = 0.1
HZ = 10
RUN_DIR_ENV = 'GUIDEDPLAN_RUN_DIR'

T = TypeVar('T')


@dataclass(frozen=True)
class SceneLimits:
    """ Row budgets of a LocalSceneView

    Attributes:
        n_neighbors (int): N_n, nearest agents kept
        n_lanes (int): N_l, nearest lanes kept
        n_crosswalks (int): N_c, nearest crosswalks kept
    """

    n_neighbors: int = 20
    n_lanes: int = 16
    n_crosswalks: int = 4


@dataclass(frozen=True)
class ModelConfig:
    """ Every width and count of the network stack

    The defaults are the desk-scale configuration. ModelConfig.micro()
    returns a configuration with every dimension <= 8 for finite-difference
    checks of the full graph.
    """

    history: int = 20  # T_h
    future: int = 80  # T_f
    n_neighbors: int = 20
    n_lanes: int = 16
    n_crosswalks: int = 4
    n_points: int = 20  # N_p
    d_enc: int = 64
    d_llm: int = 128
    d_g: int = 64
    d_planner: int = 64
    encoder_heads: int = 4
    n_views: int = 4
    grid_h: int = 8
    grid_w: int = 8
    image_channels: int = 64  # C
    n_ref_queries: int = 32
    depth_bins: Tuple[float, ...] = (2.0, 5.0, 10.0, 20.0, 40.0)
    scene_bounds: Tuple[Tuple[float, float], ...] = ((-60.0, 60.0),
                                                     (-60.0, 60.0), (-2.0,
                                                                     6.0))
    aggregator_depth: int = 1
    aggregator_heads: int = 4
    reasoner_layers: int = 2
    reasoner_heads: int = 4
    vocab_size: int = 4096
    decoder_layers: int = 2
    decoder_heads: int = 4
    n_modes: int = 6
    sigma_min: float = 1e-3
    mode_alignment: str = 'fde'
    tie_map_encoder: bool = False
    seed: int = 0

    @classmethod
    def micro(cls) -> 'ModelConfig':
        return cls(history=4,
                   future=4,
                   n_neighbors=2,
                   n_lanes=2,
                   n_crosswalks=1,
                   n_points=3,
                   d_enc=8,
                   d_llm=8,
                   d_g=8,
                   d_planner=8,
                   encoder_heads=2,
                   n_views=2,
                   grid_h=2,
                   grid_w=2,
                   image_channels=8,
                   n_ref_queries=3,
                   depth_bins=(2.0, 5.0),
                   aggregator_heads=2,
                   reasoner_layers=1,
                   reasoner_heads=2,
                   vocab_size=64,
                   decoder_heads=2,
                   n_modes=3)

    @property
    def limits(self) -> SceneLimits:
        return SceneLimits(self.n_neighbors, self.n_lanes, self.n_crosswalks)

    @property
    def n_map_tokens(self) -> int:
        return 1 + self.n_neighbors + self.n_lanes + self.n_crosswalks


GATE_MODES = ('rule', 'learned', 'fixed', 'every_tick', 'never')
GATE_ORIENTATIONS = ('safety_first', 'by_index')

# interval tables of the scheduler, one entry per complexity grade
GATE_PRESETS: Dict[str, Tuple[int, ...]] = {
    'setting1': (10, 20, 40, 60, 90),
    'setting2': (20, 40, 60, 90, 120),
    'setting3': (40, 60, 90, 120, 160),
}


@dataclass(frozen=True)
class RuleGateConfig:
    """ Weights and thresholds of the rule-based complexity grade

    Subscore order: agents, proximity, lanes, kinematics, intersection.
    """

    weights: Tuple[float, ...] = (0.3, 0.25, 0.1, 0.15, 0.2)
    thresholds: Tuple[float, ...] = (0.15, 0.35, 0.55, 0.75)
    proximity_range: float = 25.0
    intersection_range: float = 50.0
    speed_scale: float = 15.0
    accel_scale: float = 3.0
    turn_threshold: float = math.pi / 6

    def __post_init__(self) -> None:
        if len(self.weights) != 5 or len(self.thresholds) != 4:
            raise ConfigError('rule gate needs 5 weights and 4 thresholds')
        if list(self.thresholds) != sorted(self.thresholds):
            raise ConfigError('rule gate thresholds must be ascending')


@dataclass(frozen=True)
class GateConfig:
    """ Scheduler of reasoner invocations

    Attributes:
        mode (str): rule | learned | fixed | every_tick | never
        intervals (Tuple[int, ...]): planner ticks between reasoner calls,
            one per grade
        fixed_interval (int): interval of the fixed mode
        orientation (str): safety_first maps grade g to intervals[5 - g]
            (complex scenes infer often); by_index maps g to intervals[g - 1]
        rule (RuleGateConfig): weights of the rule-based grade
        learned_input (str): features | grid, input of the learned grader
    """

    mode: str = 'rule'
    intervals: Tuple[int, ...] = GATE_PRESETS['setting1']
    fixed_interval: int = 20
    orientation: str = 'safety_first'
    rule: RuleGateConfig = RuleGateConfig()
    learned_input: str = 'features'

    def __post_init__(self) -> None:
        if self.mode not in GATE_MODES:
            raise ConfigError(f'unknown gate mode {self.mode!r}')
        if self.orientation not in GATE_ORIENTATIONS:
            raise ConfigError(f'unknown orientation {self.orientation!r}')
        if len(self.intervals) != 5 or min(self.intervals) < 1:
            raise ConfigError(
                f'gate needs 5 intervals >= 1, got {self.intervals}')
        if self.fixed_interval < 1:
            raise ConfigError('fixed interval must be >= 1')
        if self.learned_input not in ('features', 'grid'):
            raise ConfigError(f'unknown learned input {self.learned_input!r}')

    @classmethod
    def preset(cls, name: str, **kwargs: Any) -> 'GateConfig':
        """ Named scheduler settings: setting1..3, fixed20, fixed60,
        every_tick """

        if name in GATE_PRESETS:
            return cls(intervals=GATE_PRESETS[name], **kwargs)
        if name.startswith('fixed') and name[5:].isdigit():
            return cls(mode='fixed', fixed_interval=int(name[5:]), **kwargs)
        if name in ('every_tick', 'never'):
            return cls(mode=name, **kwargs)
        raise ConfigError(f'unknown gate preset {name!r}')

    def interval_for(self, grade: int) -> int:
        if self.mode == 'every_tick':
            return 1
        if self.mode == 'fixed':
            return self.fixed_interval
        if not 1 <= grade <= 5:
            raise ConfigError(f'grade must be in 1..5, got {grade}')
        if self.orientation == 'by_index':
            return int(self.intervals[grade - 1])
        return int(self.intervals[5 - grade])


@dataclass(frozen=True)
class IDMConfig:
    """ Intelligent driver model of the reactive agents """

    time_headway: float = 1.5
    min_gap: float = 2.0
    max_accel: float = 1.5
    comfortable_decel: float = 2.0
    exponent: float = 4.0
    lookahead: float = 60.0


SIM_MODES = ('open_loop', 'closed_nonreactive', 'closed_reactive',
             'first_frame')


@dataclass(frozen=True)
class SimConfig:
    """ One simulation run

    Attributes:
        hz (int): simulation rate
        horizon_s (float): planning horizon of every plan
        mode (str): open_loop | closed_nonreactive | closed_reactive |
            first_frame
        duration_s (float): simulated time
        seed (int): root of every random draw of the run
        controller (str): kinematic | pure_pursuit
        start_tick (Optional[int]): first simulated tick, T_h - 1 by default
        open_loop_stride (int): ticks between open-loop samples
    """

    hz: int = HZ
    horizon_s: float = 8.0
    mode: str = 'closed_nonreactive'
    duration_s: float = 8.0
    seed: int = 0
    controller: str = 'kinematic'
    start_tick: Optional[int] = None
    open_loop_stride: int = 10
    idm: IDMConfig = IDMConfig()

    def __post_init__(self) -> None:
        if self.mode not in SIM_MODES:
            raise ConfigError(f'unknown simulation mode {self.mode!r}')
        if self.controller not in ('kinematic', 'pure_pursuit'):
            raise ConfigError(f'unknown controller {self.controller!r}')
        if self.hz != HZ:
            raise ConfigError('the simulator runs at 10 Hz only')
        if self.duration_s <= 0 or self.horizon_s <= 0:
            raise ConfigError('duration and horizon must be > 0')

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration_s * self.hz))

    @property
    def horizon_ticks(self) -> int:
        return int(round(self.horizon_s * self.hz))


@dataclass(frozen=True)
class MetricConfig:
    """ Thresholds of the closed-loop metrics (SI units) """

    max_lon_accel: float = 2.4
    max_lon_decel: float = 4.05
    max_lat_accel: float = 4.89
    max_jerk: float = 8.37
    max_yaw_rate: float = 0.95
    max_yaw_accel: float = 1.93
    drivable_margin: float = 0.3
    lane_half_width: float = 1.75
    wrong_way_distance: float = 2.0
    ttc_threshold: float = 0.95
    ttc_horizon: float = 3.0
    ttc_step: float = 0.1
    stopped_speed: float = 0.05
    min_expert_progress: float = 2.0


COMPONENTS = ('encoders', 'reasoner', 'planner')


@dataclass(frozen=True)
class TrainConfig:
    """ Fine-tuning of the full stack """

    head: str = 'gmm'
    steps: int = 500
    batch_size: int = 4
    lr: float = 1e-3
    warmup_steps: int = 20
    final_lr: float = 1e-5
    weight_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    max_grad_norm: Optional[float] = 5.0
    freeze: Tuple[str, ...] = ()
    use_guidance: bool = True
    pool_size: int = 1000
    ticks_per_scenario: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.head not in ('gmm', 'multimodal'):
            raise ConfigError(f'unknown head {self.head!r}')
        if self.lr <= 0:
            raise ConfigError(f'learning rate must be > 0, got {self.lr}')
        if self.steps <= 0 or self.batch_size <= 0:
            raise ConfigError('steps and batch size must be > 0')
        unknown = set(self.freeze) - set(COMPONENTS)
        if unknown:
            raise ConfigError(f'unknown components to freeze: {sorted(unknown)}')


@dataclass(frozen=True)
class PretrainConfig:
    """ The two reasoner pretraining rounds over VQA pairs """

    round1_steps: int = 200
    round2_steps: int = 100
    drivevqa_fraction: float = 0.1
    lr: float = 1e-3
    warmup_steps: int = 10
    final_lr: float = 1e-5
    weight_decay: float = 0.01
    max_tokens: int = 48
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.drivevqa_fraction <= 1.0:
            raise ConfigError('drivevqa_fraction must be in [0, 1]')
        if self.lr <= 0:
            raise ConfigError(f'learning rate must be > 0, got {self.lr}')


@dataclass(frozen=True)
class VQAConfig:
    """ VQA corpus generation """

    ticks_per_scenario: int = 10
    subsample: float = 1.0
    waypoint_spacing_s: float = 1.0
    drivevqa_target: int = 5000
    reasoningvqa_target: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.subsample <= 1.0:
            raise ConfigError('subsample must be in (0, 1]')


@dataclass(frozen=True)
class BenchmarkConfig:
    """ Hard20 construction and the evaluation passes """

    per_type: int = 20
    pool_per_type: int = 100
    modes: Tuple[str, ...] = SIM_MODES
    gate_presets: Tuple[str, ...] = ('every_tick', 'fixed20', 'fixed60',
                                     'setting1', 'setting2', 'setting3')
    workers: int = 1
    plots: str = 'none'
    seed: int = 0

    def __post_init__(self) -> None:
        unknown = set(self.modes) - set(SIM_MODES)
        if unknown:
            raise ConfigError(f'unknown simulation modes {sorted(unknown)}')
        if self.plots not in ('none', 'all'):
            raise ConfigError('plots must be none or all')
        if self.workers < 1 or self.per_type < 1:
            raise ConfigError('workers and per_type must be >= 1')


def from_dict(cls: Type[T], data: Mapping[str, Any]) -> T:
    """ Build the dataclass <cls> from a plain mapping

    Nested dataclass fields are built recursively, lists become tuples
    where the field is a tuple.

    Raises:
        ConfigError: unknown key or a value of the wrong kind
    """

    if not isinstance(data, Mapping):
        raise ConfigError(f'{cls.__name__} expects a mapping, got {data!r}')
    hints = get_type_hints(cls)
    known = {_f.name: _f for _f in dataclasses.fields(cls)}
    kwargs: Dict[str, Any] = {}
    for _k, _v in data.items():
        if _k not in known:
            raise ConfigError(f'unknown key {_k!r} for {cls.__name__}')
        hint = hints[_k]
        if dataclasses.is_dataclass(hint):
            kwargs[_k] = from_dict(hint, _v)
        elif isinstance(_v, list):
            kwargs[_k] = _to_tuple(_v)
        else:
            kwargs[_k] = _v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f'invalid {cls.__name__}: {e}') from e


def _to_tuple(v: Any) -> Any:
    if isinstance(v, list):
        return tuple(_to_tuple(_) for _ in v)
    return v


def load_yaml(path: str, cls: Type[T]) -> T:
    with open(path, 'r') as r:
        try:
            data = yaml.safe_load(r) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f'{path}: {e}') from e
    return from_dict(cls, data)


def to_jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            _f.name: to_jsonable(getattr(obj, _f.name))
            for _f in dataclasses.fields(obj)
        }
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(_) for _ in obj]
    if isinstance(obj, dict):
        return {str(_k): to_jsonable(_v) for _k, _v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(',', ':'))


def config_hash(obj: Any) -> str:
    """ sha256 of the canonical JSON form of a config (or any jsonable) """

    return hashlib.sha256(canonical_json(obj).encode('utf8')).hexdigest()


def default_run_dir() -> str:
    return os.environ.get(RUN_DIR_ENV, os.path.join(os.getcwd(), 'runs'))


def replace(obj: T, **changes: Any) -> T:
    return dataclasses.replace(obj, **changes)  # type: ignore


__all__ = [
    'DT', 'HZ', 'RUN_DIR_ENV', 'SceneLimits', 'ModelConfig', 'GATE_PRESETS',
    'RuleGateConfig', 'GateConfig', 'IDMConfig', 'SIM_MODES', 'SimConfig',
    'MetricConfig', 'COMPONENTS', 'TrainConfig', 'PretrainConfig',
    'VQAConfig', 'BenchmarkConfig', 'from_dict', 'load_yaml', 'to_jsonable',
    'canonical_json', 'config_hash', 'default_run_dir', 'replace'
]
