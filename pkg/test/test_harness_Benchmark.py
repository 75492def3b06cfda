import os

import pytest

from guidedplan.config import BenchmarkConfig, ModelConfig
from guidedplan.errors import ConfigError
from guidedplan.harness import (BenchmarkRun, ScenarioResult, gate_row,
                                gate_table, report, run_benchmark,
                                score_table, type_table)
from guidedplan.interfaces import DrivingStack, StackConfig
from guidedplan.scene import SCENARIO_TYPES, synth_batch, synth_scenario
from guidedplan.sim import ExpertPlanner, Hard20Manifest


def _result(sid, stype, score, **kwargs):
    return ScenarioResult(scenario_id=sid,
                          scenario_type=stype,
                          mode='closed_nonreactive',
                          variant='ours',
                          setting='',
                          score=score,
                          **kwargs)


@pytest.fixture(scope='module')
def expert_run():
    pool = synth_batch(0, 14)
    cfg = BenchmarkConfig(per_type=1,
                          modes=('open_loop', 'closed_nonreactive'),
                          gate_presets=('every_tick', 'fixed20'))
    run = run_benchmark({'ours': ExpertPlanner(), 'copy': ExpertPlanner()},
                        pool, cfg)
    return pool, run


class TestTables:

    def test_A(self):
        results = [_result('a', 'type0', 0.0), _result('b', 'type0', 100.0),
                   _result('c', 'type1', 80.0)]
        table = type_table(results)
        assert (list(table) == ['type0', 'type1', 'mean'])
        assert (table['type0'] == 50.0)
        # the mean of the type means, not of the scenarios
        assert (table['mean'] == 65.0)

    def test_gate_row(self):
        rows = [_result('a', 'type0', 90.0, avg_interval=20.0),
                _result('b', 'type1', 70.0, avg_interval=10.0)]
        row = gate_row('setting1', rows)
        assert (row['score'] == 80.0)
        assert (row['avg_interval'] == 15.0)
        assert (gate_table([row]).splitlines()[-1] ==
                '| setting1 | 80.00 | 15.00 |')

    def test_score_table(self):
        text = score_table({'ours': {'type0': 50.0, 'mean': 50.0}})
        lines = text.splitlines()
        assert (len(lines) == 2 + len(SCENARIO_TYPES) + 1)
        assert (lines[2].endswith('| 50.00 |'))
        assert (lines[3].endswith('| - |'))
        assert (lines[-1] == '| mean | 50.00 |')


class TestBenchmark:

    def test_A(self, expert_run):
        pool, run = expert_run
        assert (set(run.manifests) == {'open', 'closed'})
        for _m in run.manifests.values():
            assert (len(_m.ids) == 14)
        for _mode in ('open_loop', 'closed_nonreactive'):
            for _variant in ('ours', 'copy'):
                table = run.tables[_mode][_variant]
                assert (len(table) == 15)
                assert (abs(table['mean'] - 100.0) < 1e-6)

    def test_gate_rows(self, expert_run):
        _, run = expert_run
        rows = {_r['setting']: _r for _r in run.gate_table}
        assert (rows['every_tick']['avg_interval'] == 1.0)
        assert (rows['fixed20']['avg_interval'] == 20.0)
        assert (all(_r['score'] == 100.0 for _r in rows.values()))

    def test_sorted(self, expert_run):
        _, run = expert_run
        keys = [_r.key for _r in run.results]
        assert (keys == sorted(keys))

    def test_report(self, expert_run, tmp_path):
        pool, run = expert_run
        files = report(run, str(tmp_path), pool, plots='all')
        assert (len(files.plots) == len(pool))
        assert (len(files.charts) == 2)
        assert (all(os.path.getsize(_p) > 0 for _p in files.plots))
        text = open(files.tables).read()
        assert (text.count('| mean |') == 2)
        with pytest.raises(ConfigError):
            report(run, str(tmp_path), pool[:3], plots='all')
        with pytest.raises(ConfigError):
            report(run, str(tmp_path), pool, plots='some')

    def test_save_load(self, expert_run, tmp_path):
        pool, run = expert_run
        run_dir = str(tmp_path / 'run')
        run.save(run_dir)
        again = BenchmarkRun.load(run_dir)
        assert (again.tables == run.tables)
        assert (again.gate_table == run.gate_table)
        assert (again.manifests == run.manifests)
        closed = [_r for _r in again.results if _r.mode != 'open_loop']
        assert (closed and all(
            os.path.exists(os.path.join(run_dir, _r.trace_path))
            for _r in closed))
        files = report(again, str(tmp_path / 'report'), pool, plots='all',
                       run_dir=run_dir)
        assert (len(files.plots) == len(pool))

    def test_no_variants(self):
        with pytest.raises(ConfigError):
            run_benchmark({}, synth_batch(0, 1))

    def test_gate_quality(self):
        # the rule gate at setting2 against running the reasoner every tick
        cfg = ModelConfig.micro()
        pool = [
            synth_scenario(_i, n_agents=3, n_points=cfg.n_points,
                           scenario_type=_t)
            for _i, _t in enumerate(SCENARIO_TYPES[:3])
        ]
        stack = DrivingStack(StackConfig(model=cfg), seed=0)
        manifest = Hard20Manifest(tuple(_s.id for _s in pool), 'fixed', 1)
        run = run_benchmark({'ours': stack}, pool,
                            BenchmarkConfig(per_type=1,
                                            modes=('closed_nonreactive', ),
                                            gate_presets=('every_tick',
                                                          'setting2')),
                            manifests={'closed': manifest})
        rows = {_r['setting']: _r for _r in run.gate_table}
        assert (rows['every_tick']['avg_interval'] == 1.0)
        assert (rows['setting2']['avg_interval'] > 10.0)
        assert (abs(rows['setting2']['score'] -
                    rows['every_tick']['score']) <= 2.0)
