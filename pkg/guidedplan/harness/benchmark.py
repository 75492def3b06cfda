"""
Benchmark orchestration

A run builds the Hard20 sets from a baseline pass over the scenario pool
(open-loop scores for the open set, closed-loop non-reactive scores for
the closed set), evaluates every variant in every simulation mode on its
set, and measures every gate setting in closed-loop non-reactive mode.

Scenarios run in a process pool when workers > 1. Results are sorted by
(mode, variant, setting, scenario id) before anything is aggregated, so
the tables do not depend on completion order.
"""

from __future__ import annotations
import copy
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm  # type: ignore

from guidedplan.config import (BenchmarkConfig, GateConfig, MetricConfig,
                               SimConfig, config_hash, replace,
                               to_jsonable)
from guidedplan.errors import ConfigError, SimulationAbortedError
from guidedplan.gate import CAIGate, average_interval
from guidedplan.scene import SCENARIO_TYPES, LaneGraph, Scenario
from guidedplan.sim import (Hard20Manifest, PlanningBundle, SimTrace, evaluate,
                            run, run_open_loop, save_trace, select_hard20)

logger = logging.getLogger(__name__)

MAIN_VARIANT = 'ours'
BASELINE_VARIANT = 'baseline'
GATE_MODE = 'closed_nonreactive'


@dataclass
class ScenarioResult:
    """ One (scenario, mode, variant, gate setting) evaluation

    Attributes:
        score (float): aggregate score in [0, 100], 0 for an aborted run
        metrics (Dict[str, float]): per-metric values, or open-loop errors
        n_inferences (int): reasoner runs
        avg_interval (float): mean ticks between reasoner runs
        trace_digest (str): sha256 of the trace, empty in open loop
        trace_path (str): trace file relative to the run directory
    """

    scenario_id: str
    scenario_type: str
    mode: str
    variant: str
    setting: str
    score: float
    metrics: Dict[str, object] = field(default_factory=dict)
    n_inferences: int = 0
    avg_interval: float = 0.0
    aborted: bool = False
    trace_digest: str = ''
    trace_path: str = ''

    @property
    def key(self) -> Tuple[str, str, str, str]:
        return (self.mode, self.variant, self.setting, self.scenario_id)


@dataclass
class _Job:
    bundle: PlanningBundle
    scenario: Scenario
    mode: str
    variant: str
    setting: str
    sim: SimConfig
    metric: MetricConfig


def _with_gate(bundle: PlanningBundle, gate: GateConfig) -> PlanningBundle:
    """ <bundle> scheduling with <gate>; the networks are shared """

    clone = copy.copy(bundle)
    clone.gate = CAIGate(gate, getattr(bundle.gate, 'grader', None))
    return clone


def run_job(job: _Job) -> Tuple[ScenarioResult, Optional[SimTrace]]:
    """ Evaluate one job; the trace is returned for closed-loop modes """

    sc = job.scenario
    base = dict(scenario_id=sc.id,
                scenario_type=sc.scenario_type,
                mode=job.mode,
                variant=job.variant,
                setting=job.setting)
    if job.mode == 'open_loop':
        report = run_open_loop(job.bundle, sc, replace(job.sim, mode='open_loop'))
        return ScenarioResult(score=report.score,
                              metrics={
                                  'ade': report.ade,
                                  'fde': report.fde,
                                  'miss_rate': report.miss_rate
                              },
                              n_inferences=len(report.inference_log),
                              avg_interval=average_interval(
                                  report.inference_log,
                                  len(report.ticks) * job.sim.open_loop_stride),
                              **base), None
    graph = LaneGraph(sc.lanes)
    try:
        trace = run(job.bundle, sc, replace(job.sim, mode=job.mode), graph)
    except SimulationAbortedError as e:
        logger.error('%s (%s, %s): %s', sc.id, job.mode, job.variant, e)
        trace = e.trace
        return ScenarioResult(score=0.0,
                              aborted=True,
                              n_inferences=len(trace.inference_log),
                              trace_digest=trace.digest(),
                              **base), trace
    report = evaluate(trace, sc, job.metric, graph)
    metrics = {_k: _v for _k, _v in report.to_dict().items()
               if _k not in ('scenario_id', 'score')}
    return ScenarioResult(score=report.score,
                          metrics=metrics,
                          n_inferences=len(trace.inference_log),
                          avg_interval=average_interval(
                              trace.inference_log, trace.n_ticks),
                          trace_digest=trace.digest(),
                          **base), trace


def run_jobs(jobs: Sequence[_Job],
             workers: int = 1,
             progress: bool = False,
             desc: str = 'benchmark'
             ) -> List[Tuple[ScenarioResult, Optional[SimTrace]]]:
    """ Every job, serially or in a process pool, sorted by result key """

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(
                tqdm(pool.map(run_job, jobs, chunksize=1),
                     total=len(jobs),
                     disable=not progress,
                     desc=desc))
    else:
        out = [run_job(_j) for _j in tqdm(jobs, disable=not progress, desc=desc)]
    return sorted(out, key=lambda _r: _r[0].key)


def type_table(results: Sequence[ScenarioResult]) -> Dict[str, float]:
    """ Mean score per scenario type in type order, plus 'mean', the mean
    of the per-type scores """

    by_type: Dict[str, List[float]] = {}
    for _r in sorted(results, key=lambda _r: _r.scenario_id):
        by_type.setdefault(_r.scenario_type, []).append(_r.score)
    order = [_t for _t in SCENARIO_TYPES if _t in by_type] + sorted(
        set(by_type) - set(SCENARIO_TYPES))
    table = {_t: float(np.mean(by_type[_t])) for _t in order}
    table['mean'] = float(np.mean(list(table.values()))) if table else 0.0
    return table


def gate_row(setting: str, results: Sequence[ScenarioResult]) -> Dict[str, object]:
    """ Score and average interval of one gate setting """

    return {
        'setting': setting,
        'score': float(np.mean([_r.score for _r in results])),
        'avg_interval': float(np.mean([_r.avg_interval for _r in results])),
        'n_scenarios': len(results),
    }


def source_hash(root: Optional[str] = None) -> str:
    """ sha256 over the package sources, in path order """

    root_path = Path(root) if root else Path(__file__).resolve().parents[1]
    h = hashlib.sha256()
    for _p in sorted(root_path.rglob('*.py')):
        h.update(str(_p.relative_to(root_path)).encode('utf8'))
        h.update(_p.read_bytes())
    return h.hexdigest()


@dataclass
class BenchmarkRun:
    """
    Attributes:
        manifests (Dict[str, Hard20Manifest]): 'open' and 'closed' sets
        results (List[ScenarioResult]): every evaluation, sorted by key
        tables (Dict[str, Dict[str, Dict[str, float]]]): mode -> variant ->
            type -> mean score
        gate_table (List[Dict[str, object]]): one row per gate setting
        config (Dict[str, object]): configuration snapshot
        source_hash (str): hash of the package sources
    """

    manifests: Dict[str, Hard20Manifest]
    results: List[ScenarioResult]
    tables: Dict[str, Dict[str, Dict[str, float]]]
    gate_table: List[Dict[str, object]]
    config: Dict[str, object]
    source_hash: str
    traces: Dict[Tuple[str, str, str, str], SimTrace] = field(
        default_factory=dict, repr=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            'manifests': {
                _k: json.loads(_m.dumps())
                for _k, _m in self.manifests.items()
            },
            'results': [asdict(_r) for _r in self.results],
            'tables': self.tables,
            'gate_table': self.gate_table,
            'config': self.config,
            'source_hash': self.source_hash,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, run_dir: str) -> str:
        """ Write run.json, the manifests and the closed-loop traces """

        os.makedirs(run_dir, exist_ok=True)
        for _r in self.results:
            trace = self.traces.get(_r.key)
            if trace is None:
                continue
            rel = os.path.join('traces', _r.mode, _r.variant, _r.setting or
                               'default', f'{_r.scenario_id}.gdtr')
            os.makedirs(os.path.dirname(os.path.join(run_dir, rel)),
                        exist_ok=True)
            save_trace(trace, os.path.join(run_dir, rel))
            _r.trace_path = rel
        for _k, _m in self.manifests.items():
            _m.save(os.path.join(run_dir, f'hard20_{_k}.json'))
        path = os.path.join(run_dir, 'run.json')
        with open(path, 'w') as w:
            w.write(self.dumps())
        logger.info('benchmark run written to %s', run_dir)
        return path

    @classmethod
    def load(cls, run_dir: str) -> 'BenchmarkRun':
        with open(os.path.join(run_dir, 'run.json'), 'r') as r:
            data = json.load(r)
        manifests = {
            _k: Hard20Manifest.loads(json.dumps(_v))
            for _k, _v in data['manifests'].items()
        }
        results = [ScenarioResult(**_r) for _r in data['results']]
        return cls(manifests, results, data['tables'], data['gate_table'],
                   data['config'], data['source_hash'])


def _jobs(bundle: PlanningBundle, scenarios: Sequence[Scenario], mode: str,
          variant: str, setting: str, sim: SimConfig,
          metric: MetricConfig) -> List[_Job]:
    return [
        _Job(bundle, _s, mode, variant, setting, sim, metric)
        for _s in sorted(scenarios, key=lambda _s: _s.id)
    ]


def build_hard20(baseline: PlanningBundle,
                 pool: Sequence[Scenario],
                 family: str,
                 cfg: BenchmarkConfig,
                 sim: Optional[SimConfig] = None,
                 metric: Optional[MetricConfig] = None,
                 progress: bool = False) -> Hard20Manifest:
    """ Hard20 manifest of <pool> under <baseline>

    Args:
        family: 'open' scores the pool open loop, 'closed' closed loop
            with non-reactive agents
    """

    if family not in ('open', 'closed'):
        raise ConfigError(f'unknown benchmark family {family!r}')
    sim = sim or SimConfig()
    mode = 'open_loop' if family == 'open' else GATE_MODE
    results = run_jobs(
        _jobs(baseline, pool, mode, BASELINE_VARIANT, '', sim, metric or
              MetricConfig()), cfg.workers, progress, f'hard20 {family}')
    scores = {_r.scenario_id: _r.score for _r, _ in results}
    types = {_s.id: _s.scenario_type for _s in pool}
    ids = select_hard20(scores, types, cfg.per_type)
    return Hard20Manifest(tuple(ids), config_hash(cfg), cfg.per_type)


def run_benchmark(variants: Mapping[str, PlanningBundle],
                  pool: Sequence[Scenario],
                  cfg: Optional[BenchmarkConfig] = None,
                  baseline: Optional[PlanningBundle] = None,
                  sim: Optional[SimConfig] = None,
                  metric: Optional[MetricConfig] = None,
                  manifests: Optional[Mapping[str, Hard20Manifest]] = None,
                  progress: bool = False) -> BenchmarkRun:
    """ Hard20 construction plus every evaluation pass

    Args:
        variants: bundles by row name; the gate table is measured on
            'ours' (or the first variant)
        pool: candidate scenarios
        baseline: bundle ranking the pool, 'ours' with the reasoner
            switched off when not given
        manifests: prebuilt 'open' / 'closed' sets, skipping the
            baseline pass
    """

    if not variants:
        raise ConfigError('run_benchmark needs at least one variant')
    cfg = cfg or BenchmarkConfig()
    sim = sim or SimConfig()
    metric = metric or MetricConfig()
    main_name = MAIN_VARIANT if MAIN_VARIANT in variants else next(
        iter(variants))
    main = variants[main_name]
    baseline = baseline or _with_gate(main, GateConfig(mode='never'))
    by_id = {_s.id: _s for _s in pool}

    families = {'open' if _m == 'open_loop' else 'closed' for _m in cfg.modes}
    if cfg.gate_presets:
        families.add('closed')
    sets: Dict[str, Hard20Manifest] = dict(manifests or {})
    for _f in sorted(families - set(sets)):
        sets[_f] = build_hard20(baseline, pool, _f, cfg, sim, metric, progress)
    chosen = {
        _f: [by_id[_i] for _i in _m.ids if _i in by_id]
        for _f, _m in sets.items()
    }

    jobs: List[_Job] = []
    for _mode in cfg.modes:
        family = 'open' if _mode == 'open_loop' else 'closed'
        for _name, _bundle in variants.items():
            jobs.extend(
                _jobs(_bundle, chosen[family], _mode, _name, '', sim, metric))
    for _preset in cfg.gate_presets:
        gated = _with_gate(main, GateConfig.preset(_preset))
        jobs.extend(
            _jobs(gated, chosen['closed'], GATE_MODE, main_name, _preset, sim,
                  metric))
    done = run_jobs(jobs, cfg.workers, progress)

    results = [_r for _r, _ in done]
    traces = {_r.key: _t for _r, _t in done if _t is not None}
    tables: Dict[str, Dict[str, Dict[str, float]]] = {}
    for _mode in cfg.modes:
        tables[_mode] = {
            _name: type_table([
                _r for _r in results
                if _r.mode == _mode and _r.variant == _name and not _r.setting
            ])
            for _name in variants
        }
    gate_table = [
        gate_row(_p, [_r for _r in results if _r.setting == _p])
        for _p in cfg.gate_presets
    ]
    for _row in gate_table:
        logger.info('gate %s: score %.2f, average interval %.2f',
                    _row['setting'], _row['score'], _row['avg_interval'])
    snapshot = {
        'benchmark': to_jsonable(cfg),
        'sim': to_jsonable(sim),
        'metric': to_jsonable(metric),
        'variants': sorted(variants),
    }
    return BenchmarkRun(sets, results, tables, gate_table, snapshot,
                        source_hash(), traces)
