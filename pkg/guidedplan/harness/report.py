"""
Benchmark reports

Markdown score tables (one per simulation mode, scenario types as rows,
variants as columns, a closing mean row), the gate table, a bar chart
per mode and, when asked for, one top-down plot per scenario showing the
map, the executed ego path against the logged expert, and the agents.
"""

from __future__ import annotations
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from tqdm import tqdm  # type: ignore # noqa: E402

from guidedplan.errors import ConfigError  # noqa: E402
from guidedplan.scene import SCENARIO_TYPES, SCENARIO_TYPE_NAMES, Scenario  # noqa: E402
from guidedplan.scene.geometry import box_corners  # noqa: E402
from guidedplan.sim import SimTrace, load_trace  # noqa: E402
from .benchmark import BenchmarkRun, ScenarioResult  # noqa: E402

logger = logging.getLogger(__name__)

PLOT_CHOICES = ('none', 'all')


@dataclass
class ReportFiles:
    tables: str = ''
    charts: List[str] = field(default_factory=list)
    plots: List[str] = field(default_factory=list)


def _cell(v: Optional[float]) -> str:
    return '-' if v is None else f'{v:.2f}'


def score_table(tables: Mapping[str, Mapping[str, float]]) -> str:
    """ One mode's table: every scenario type as a row, then the mean """

    variants = list(tables)
    lines = [
        '| type | ' + ' | '.join(variants) + ' |',
        '|---|' + '---|' * len(variants),
    ]
    for _t in SCENARIO_TYPES:
        cells = [_cell(tables[_v].get(_t)) for _v in variants]
        lines.append(f'| {SCENARIO_TYPE_NAMES[_t]} | ' + ' | '.join(cells) +
                     ' |')
    lines.append('| mean | ' +
                 ' | '.join(_cell(tables[_v].get('mean')) for _v in variants) +
                 ' |')
    return '\n'.join(lines)


def gate_table(rows: Sequence[Mapping[str, object]]) -> str:
    lines = ['| setting | score | average interval |', '|---|---|---|']
    for _r in rows:
        lines.append(f"| {_r['setting']} | {_r['score']:.2f} | "
                     f"{_r['avg_interval']:.2f} |")
    return '\n'.join(lines)


def render_markdown(run: BenchmarkRun) -> str:
    parts = ['# Benchmark', '', f'source hash `{run.source_hash}`', '']
    for _f, _m in sorted(run.manifests.items()):
        parts.append(f'{_f} set: {len(_m.ids)} scenarios, '
                     f'config `{_m.config_hash[:12]}`')
    for _mode, _tables in run.tables.items():
        parts += ['', f'## {_mode}', '', score_table(_tables)]
    if run.gate_table:
        parts += ['', '## gate', '', gate_table(run.gate_table)]
    return '\n'.join(parts) + '\n'


def score_chart(mode: str, tables: Mapping[str, Mapping[str, float]],
                path: str) -> str:
    fig, ax = plt.subplots(figsize=(12, 4))
    width = 0.8 / max(1, len(tables))
    x = np.arange(len(SCENARIO_TYPES))
    for _i, (_v, _t) in enumerate(tables.items()):
        ax.bar(x + _i * width,
               [_t.get(_k, 0.0) for _k in SCENARIO_TYPES],
               width,
               label=_v)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(SCENARIO_TYPES)
    ax.set_ylim(0, 100)
    ax.set_ylabel('score')
    ax.set_title(mode)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def _draw_box(ax, x, y, heading, length, width, **kwargs) -> None:
    corners = box_corners(x, y, heading, length, width)
    ax.fill(corners[:, 0], corners[:, 1], **kwargs)


def plot_scenario(scenario: Scenario,
                  trace: Optional[SimTrace],
                  path: str,
                  title: str = '') -> str:
    """ Top-down view of <scenario>; without a trace only the logged
    expert and the agents at the first tick are drawn """

    fig, ax = plt.subplots(figsize=(6, 6))
    for _l in scenario.lanes:
        ax.plot(_l.centerline[:, 0],
                _l.centerline[:, 1],
                color='0.75',
                linewidth=1,
                zorder=1)
    for _c in scenario.crosswalks:
        ax.fill(_c.boundary[:, 0],
                _c.boundary[:, 1],
                color='khaki',
                alpha=0.5,
                zorder=1)
    for _o in scenario.obstacles:
        _draw_box(ax, _o.x, _o.y, _o.heading, _o.length, _o.width,
                  color='black', zorder=3)

    start = trace.start_tick if trace is not None else 0
    expert = scenario.ego.states[scenario.ego.valid]
    ax.plot(expert[:, 0], expert[:, 1], '--', color='tab:green',
            label='expert', zorder=2)
    if trace is not None:
        ego = trace.ego_states()
        ax.plot(ego[:, 0], ego[:, 1], color='tab:blue', label='ego', zorder=4)
        last = trace.agent_states()[-1] if trace.records else {}
        agents = {_k: (_v[0], _v[1], _v[2]) for _k, _v in last.items()}
        final = ego[-1]
    else:
        agents = {
            _a.id: tuple(_a.states[start, :3])
            for _a in scenario.agents if _a.valid[start]
        }
        final = scenario.ego.states[start]
    sizes = {_a.id: (_a.length, _a.width) for _a in scenario.agents}
    for _id, (_x, _y, _h) in sorted(agents.items()):
        length, width = sizes.get(_id, (4.5, 2.0))
        _draw_box(ax, _x, _y, _h, length, width, color='tab:red',
                  alpha=0.7, zorder=3)
    _draw_box(ax, final[0], final[1], final[2], scenario.ego.length,
              scenario.ego.width, color='tab:blue', zorder=5)

    ax.set_aspect('equal')
    ax.set_title(title or scenario.id)
    ax.legend(loc='upper right')
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def _plot_source(results: Sequence[ScenarioResult]) -> Dict[str, ScenarioResult]:
    """ One result per scenario id, preferring closed-loop default-gate
    runs of the first variant """

    picked: Dict[str, ScenarioResult] = {}
    for _r in results:
        cur = picked.get(_r.scenario_id)
        rank = (_r.mode == 'open_loop', bool(_r.setting))
        if cur is None or rank < (cur.mode == 'open_loop', bool(cur.setting)):
            picked[_r.scenario_id] = _r
    return picked


def report(run: BenchmarkRun,
           out_dir: str,
           scenarios: Sequence[Scenario] = (),
           plots: str = 'none',
           run_dir: Optional[str] = None,
           progress: bool = False) -> ReportFiles:
    """ Write report.md, the score charts and the scenario plots

    Args:
        scenarios: the benchmarked scenarios, needed for plots
        plots: 'none' or 'all'
        run_dir: where the traces referenced by the results live, for runs
            reloaded from disk
    """

    if plots not in PLOT_CHOICES:
        raise ConfigError(f'unknown plots option {plots!r}')
    os.makedirs(out_dir, exist_ok=True)
    files = ReportFiles()
    files.tables = os.path.join(out_dir, 'report.md')
    with open(files.tables, 'w') as w:
        w.write(render_markdown(run))
    for _mode, _tables in run.tables.items():
        files.charts.append(
            score_chart(_mode, _tables,
                        os.path.join(out_dir, f'scores_{_mode}.png')))

    if plots == 'all':
        by_id = {_s.id: _s for _s in scenarios}
        picked = _plot_source(run.results)
        missing = sorted(set(picked) - set(by_id))
        if missing:
            raise ConfigError(f'no scenario for {len(missing)} results, '
                              f'e.g. {missing[0]}')
        plot_dir = os.path.join(out_dir, 'plots')
        os.makedirs(plot_dir, exist_ok=True)
        for _id in tqdm(sorted(picked), disable=not progress, desc='plots'):
            result = picked[_id]
            trace = run.traces.get(result.key)
            if trace is None and result.trace_path and run_dir:
                trace = load_trace(os.path.join(run_dir, result.trace_path))
            title = (f'{_id} {result.mode} {result.variant} '
                     f'score {result.score:.1f}')
            files.plots.append(
                plot_scenario(by_id[_id], trace,
                              os.path.join(plot_dir, f'{_id}.png'), title))
    logger.info('report written to %s (%d plots)', out_dir, len(files.plots))
    return files
