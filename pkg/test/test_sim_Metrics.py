import math

import numpy as np
import pytest
from shapely.geometry import Polygon

from guidedplan.config import MetricConfig, SimConfig
from guidedplan.errors import ConfigError, ScenarioParseError
from guidedplan.planner import PlanOutput
from guidedplan.scene import synth_scenario
from guidedplan.scene.geometry import box_corners
from guidedplan.sim import (BoxState, ExpertPlanner, Hard20Manifest,
                            MetricReport, aggregate_score, boxes_overlap,
                            collision_check, comfort_signals, drivable_area,
                            evaluate, is_at_fault, min_time_to_collision,
                            proxy_score, run, run_open_loop, select_hard20,
                            speed_limit_compliance)
from guidedplan.sim.metrics import direction_compliance, progress_ratio
from guidedplan.scene import LaneGraph, Track

from scene_factory import moving_track, straight_scenario


def _inside(points, corners):
    """ Points on or inside a counter-clockwise convex polygon """

    out = np.ones(len(points), dtype=bool)
    for _i in range(4):
        a, b = corners[_i], corners[(_i + 1) % 4]
        cross = (b[0] - a[0]) * (points[:, 1] - a[1]) - \
            (b[1] - a[1]) * (points[:, 0] - a[0])
        out &= cross >= -1e-12
    return out


def _samples(corners, n=25):
    u, v = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n))
    u, v = u.ravel()[:, None], v.ravel()[:, None]
    return corners[0] + u * (corners[1] - corners[0]) + \
        v * (corners[3] - corners[0])


class OffsetPlanner(ExpertPlanner):
    """ The expert moved 1 m to the left """

    def plan(self, obs, guidance):
        out = super().plan(obs, guidance)
        traj = out.trajectory.copy()
        traj[:, 1] += 1.0
        return PlanOutput(traj, 0, np.ones(1))


class TestCollision:

    def test_A(self):
        # separating axes agree with the exact polygon test; dense point
        # samples never find an overlap the separating axes miss
        rng = np.random.default_rng(0)
        for _ in range(500):
            a = box_corners(0.0, 0.0, rng.uniform(-math.pi, math.pi),
                            rng.uniform(1, 6), rng.uniform(0.5, 3))
            b = box_corners(*rng.uniform(-6, 6, 2),
                            rng.uniform(-math.pi, math.pi),
                            rng.uniform(1, 6), rng.uniform(0.5, 3))
            sat = boxes_overlap(a, b)
            assert (sat == Polygon(a).intersects(Polygon(b)))
            sampled = _inside(_samples(a), b).any() or \
                _inside(_samples(b), a).any()
            if sampled:
                assert (sat)

    def test_touching(self):
        a = box_corners(0.0, 0.0, 0.0, 4.0, 2.0)
        b = box_corners(4.0, 0.0, 0.0, 4.0, 2.0)
        assert (boxes_overlap(a, b))
        c = box_corners(4.01, 0.0, 0.0, 4.0, 2.0)
        assert (not boxes_overlap(a, c))

    def test_at_fault(self):
        ego = BoxState('ego', 0.0, 0.0, 0.0, 4.8, 2.0, vx=5.0)
        parked = BoxState('p', 4.0, 0.0, 0.0, 4.8, 2.0)
        assert (is_at_fault(ego, parked))
        still = BoxState('ego', 0.0, 0.0, 0.0, 4.8, 2.0)
        rear = BoxState('r', -4.0, 0.0, 0.0, 4.8, 2.0, vx=3.0)
        assert (not is_at_fault(still, rear))
        events = collision_check(7, still, [rear, parked])
        assert ([_e.agent_id for _e in events] == ['r', 'p'])
        assert ([_e.at_fault for _e in events] == [False, True])
        assert (abs(abs(events[0].bearing) - math.pi) < 1e-12)


class TestScore:

    def test_A(self):
        report = MetricReport(drivable=1.0,
                              direction=1.0,
                              comfort=1.0,
                              progress=0.9,
                              collision=1.0,
                              speed_limit=1.0,
                              ttc=0.0)
        assert (abs(aggregate_score(report) - 65.625) < 1e-12)

    def test_multipliers(self):
        for _m in ('collision', 'drivable', 'direction'):
            assert (aggregate_score(MetricReport(**{_m: 0.0})) == 0.0)
        assert (aggregate_score(MetricReport()) == 100.0)

    def test_range(self):
        with pytest.raises(ConfigError):
            MetricReport(progress=1.5)

    def test_speed_limit(self):
        assert (speed_limit_compliance([10.0, 10.0], [10.0, 5.0]) == 0.5)
        assert (speed_limit_compliance([5.0, 9.0], [10.0, 10.0]) == 1.0)
        assert (speed_limit_compliance([], []) == 1.0)

    def test_comfort_signals(self):
        # constant speed on a straight line: no acceleration, no yaw
        ego = np.zeros((30, 3))
        ego[:, 0] = np.arange(30) * 1.0
        sig = comfort_signals(ego)
        assert (np.allclose(sig['lon_accel'], 0.0))
        assert (np.allclose(sig['yaw_rate'], 0.0))


class TestClosedLoopMetrics:

    def test_A(self):
        # driving into a parked car ahead
        sc = straight_scenario([moving_track('parked', 30.0, 0.0, 0.0)])
        trace = run(ExpertPlanner(), sc)
        report = evaluate(trace, sc)
        assert (report.collision == 0.0)
        assert (report.ttc == 0.0)
        assert (report.score == 0.0)

    def test_ttc(self):
        # 10 m/s toward a parked car; after 1 s the gap is 10.2 m
        sc = straight_scenario([moving_track('parked', 44.0, 0.0, 0.0)])
        trace = run(ExpertPlanner(), sc, SimConfig(duration_s=1.0))
        assert (trace.collisions == [])
        assert (abs(min_time_to_collision(trace, sc) - 1.1) < 1e-6)
        assert (min_time_to_collision(run(ExpertPlanner(), straight_scenario()),
                                      straight_scenario()) == float('inf'))

    def test_ttc_constant_velocity(self):
        # stopped 8 m ahead of the ego at the first tick, then pulls away;
        # the projection uses the state at that tick only
        base = moving_track('leaver', 19.0 + 8.0 + 4.8, 0.0, 0.0)
        states = base.states.copy()
        t = np.arange(len(states))
        away = t > 19
        states[away, 0] += 15.0 * (t[away] - 19) * 0.1
        states[away, 3] = 15.0
        track = Track('leaver', 'vehicle', 4.8, 2.0, states, base.valid)
        sc = straight_scenario([track])
        trace = run(ExpertPlanner(), sc, SimConfig(duration_s=1.0))
        assert (trace.collisions == [])
        ttc = min_time_to_collision(trace, sc)
        assert (0.7 - 1e-9 <= ttc <= 0.9 + 1e-9)
        assert (ttc < MetricConfig().ttc_threshold)

    def test_drivable(self):
        sc = straight_scenario()
        area = drivable_area(sc)
        assert (area.covers(Polygon(box_corners(0, 0, 0, 4.8, 2.0))))
        assert (not area.covers(Polygon(box_corners(0, 3.5, 0, 4.8, 2.0))))

    def test_direction(self):
        sc = straight_scenario()
        graph = LaneGraph(sc.lanes)
        backward = np.zeros((10, 3))
        backward[:, 0] = -0.3 * np.arange(10)
        assert (direction_compliance(backward, graph) == 0.0)
        assert (direction_compliance(backward[:6], graph) == 1.0)

    def test_progress(self):
        sc = straight_scenario()
        expert = sc.ego.states[19:100]
        assert (progress_ratio(sc, expert, 19) == 1.0)
        half = expert.copy()
        half[:, 0] = expert[0, 0] + 0.5 * (expert[:, 0] - expert[0, 0])
        assert (abs(progress_ratio(sc, half, 19) - 0.5) < 1e-9)
        still = np.repeat(expert[:1], 81, axis=0)
        assert (progress_ratio(sc, still, 19) == 0.0)
        # an expert that barely moves leaves nothing to compare against
        parked = straight_scenario(ego_speed=0.01)
        assert (progress_ratio(parked, still, 19) == 1.0)


class TestOpenLoop:

    def test_A(self):
        sc = synth_scenario(0)
        report = run_open_loop(ExpertPlanner(), sc)
        assert (report.ticks == [19, 29])
        assert (all(abs(_v) < 1e-9 for _v in report.ade.values()))
        assert (report.miss_rate == 0.0)
        assert (abs(report.score - 100.0) < 1e-6)

    def test_offset(self):
        sc = synth_scenario(1)
        report = run_open_loop(OffsetPlanner(), sc)
        for _h in (3, 5, 8):
            assert (abs(report.ade[_h] - 1.0) < 1e-9)
            assert (abs(report.fde[_h] - 1.0) < 1e-9)
        assert (abs(report.score - 87.5) < 1e-6)

    def test_proxy(self):
        assert (proxy_score({8: 8.0}, {8: 8.0}) == 0.0)
        assert (proxy_score({8: 20.0}, {8: 20.0}) == 0.0)
        assert (proxy_score({3: 0.0, 8: 4.0}, {3: 0.0, 8: 4.0}) == 75.0)

    def test_too_short(self):
        sc = straight_scenario(n_ticks=99)
        with pytest.raises(ConfigError):
            run_open_loop(ExpertPlanner(), sc, SimConfig(mode='open_loop'))


class TestHard20:

    def test_A(self):
        rng = np.random.default_rng(0)
        scores = {f's{_i:03d}': float(rng.integers(0, 10)) for _i in range(90)}
        types = {_k: f'type{int(_k[1:]) % 3}' for _k in scores}
        ids = select_hard20(scores, types, per_type=5)
        for _t in ('type0', 'type1', 'type2'):
            ranked = sorted((_s, _k) for _k, _s in scores.items()
                            if types[_k] == _t)
            expected = [_k for _, _k in ranked[:5]]
            assert ([_i for _i in ids if types[_i] == _t] == expected)
        assert (len(ids) == 15)

    def test_too_few(self):
        with pytest.raises(ConfigError):
            select_hard20({'a': 1.0}, {'a': 'type0'}, per_type=2)

    def test_manifest(self, tmp_path):
        m = Hard20Manifest(('s1', 's2'), 'abc', per_type=1)
        path = str(tmp_path / 'hard20.json')
        m.save(path)
        assert (Hard20Manifest.load(path) == m)
        with pytest.raises(ScenarioParseError):
            Hard20Manifest.loads('{"schema": "other"}')
