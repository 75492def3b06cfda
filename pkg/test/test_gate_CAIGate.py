import numpy as np
import pytest

from guidedplan.config import GateConfig, ModelConfig, RuleGateConfig
from guidedplan.errors import ConfigError
from guidedplan.gate import (CAIGate, ComplexityFeatures, GateState,
                             LearnedGrader, average_interval, extract_features,
                             fit_grader, grade_accuracy, grade_from_logits,
                             grade_from_score, normalize_features,
                             ordinal_loss, ordinal_targets,
                             rule_complexity, run_schedule, should_infer,
                             split_70_30)
from guidedplan.numerics import Tensor, check_gradients
from guidedplan.scene import LaneGraph, to_ego_frame

from scene_factory import moving_track, straight_scenario

CROWDED = ComplexityFeatures(n_within_10=10,
                             n_within_25=10,
                             n_within_50=10,
                             min_agent_distance=0.0,
                             n_lanes_at_ego=4,
                             ego_speed=15.0,
                             ego_accel=3.0,
                             dist_to_intersection=0.0)


class TestSchedule:

    def test_A(self):
        # constant grade 5 runs every intervals[0] ticks
        for _name, _first in (('setting1', 10), ('setting2', 20),
                              ('setting3', 40)):
            log = run_schedule([5] * 400, GateConfig.preset(_name))
            assert (log[:3] == [0, _first, 2 * _first])
            assert (average_interval(log, 400) == float(_first))

    def test_every_grade(self):
        intervals = GateConfig.preset('setting1').intervals
        for _g in range(1, 6):
            log = run_schedule([_g] * 1000, GateConfig.preset('setting1'))
            assert (average_interval(log, 1000) == float(intervals[5 - _g]))

    def test_by_index(self):
        cfg = GateConfig.preset('setting2', orientation='by_index')
        log = run_schedule([1] * 200, cfg)
        assert (average_interval(log, 200) == 20.0)

    def test_fixed(self):
        for _n in (20, 60):
            log = run_schedule([3] * 240, GateConfig.preset(f'fixed{_n}'))
            assert (average_interval(log, 240) == float(_n))
        log = run_schedule([1] * 80, GateConfig.preset('every_tick'))
        assert (log == list(range(80)))
        assert (average_interval(log, 80) == 1.0)

    def test_never(self):
        assert (run_schedule([5] * 80, GateConfig.preset('never')) == [])
        assert (average_interval([], 80) == 80.0)
        assert (average_interval([7], 80) == 80.0)

    def test_first_tick(self):
        state = GateState()
        assert (should_infer(state, 1, GateConfig.preset('setting3')))
        state.record_inference(0)
        state.advance()
        assert (not should_infer(state, 1, GateConfig.preset('setting3')))

    def test_grade_switch(self):
        # the interval of the current grade applies at every tick
        grades = [1] * 15 + [5] * 30
        log = run_schedule(grades, GateConfig.preset('setting1'))
        assert (log == [0, 15, 25, 35])

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            GateConfig.preset('setting9')
        with pytest.raises(ConfigError):
            GateConfig(intervals=(10, 20, 40))


class TestRuleGrade:

    def test_A(self):
        assert (rule_complexity(ComplexityFeatures()) == 1)
        assert (rule_complexity(CROWDED) == 5)

    def test_thresholds(self):
        th = (0.15, 0.35, 0.55, 0.75)
        assert ([grade_from_score(_s, th) for _s in
                 (0.0, 0.15, 0.2, 0.4, 0.6, 0.8, 1.0)] == [1, 1, 2, 3, 4, 5, 5])

    def test_monotone_in_agents(self):
        grades = [
            rule_complexity(ComplexityFeatures(n_within_10=_n,
                                               n_within_25=_n,
                                               n_within_50=_n,
                                               min_agent_distance=5.0))
            for _n in range(0, 12)
        ]
        assert (grades == sorted(grades))

    def test_bad_rule(self):
        with pytest.raises(ConfigError):
            RuleGateConfig(thresholds=(0.5, 0.3, 0.6, 0.8))

    def test_features(self):
        agents = [moving_track(f'a{_i}', 8.0 + 10 * _i, 0.0, 10.0)
                  for _i in range(3)]
        sc = straight_scenario(agents, n_lanes=2)
        cfg = ModelConfig()
        view = to_ego_frame(sc, 19, cfg.limits, history=cfg.history)
        f = extract_features(view, sc, LaneGraph(sc.lanes))
        assert (f.n_within_10 == 1)
        assert (f.n_within_25 == 2)
        assert (f.n_within_50 == 3)
        assert (abs(f.min_agent_distance - 8.0) < 1e-9)
        assert (f.n_lanes_at_ego == 2)
        assert (abs(f.ego_speed - 10.0) < 1e-9)


class TestOrdinal:

    def test_A(self):
        assert (list(ordinal_targets(1)) == [0, 0, 0, 0])
        assert (list(ordinal_targets(3)) == [1, 1, 0, 0])
        assert (list(ordinal_targets(5)) == [1, 1, 1, 1])
        with pytest.raises(ConfigError):
            ordinal_targets(6)

    def test_perfect_logits(self):
        for _g in range(1, 6):
            z = np.where(ordinal_targets(_g) > 0, np.inf, -np.inf)
            assert (ordinal_loss(z, _g).item() < 1e-9)
            assert (grade_from_logits(z) == _g)

    def test_gradients(self):
        grader = LearnedGrader(np.random.default_rng(0), hidden=6)
        x = Tensor(np.random.default_rng(1).uniform(size=(5, 8)))
        grades = [1, 2, 3, 4, 5]
        inputs = [grader.mlp.fc1.weight, grader.mlp.fc2.bias, grader.cutpoints]
        assert (check_gradients(lambda: ordinal_loss(grader(x), grades),
                                inputs) < 1e-4)

    def test_grid_gradients(self):
        grader = LearnedGrader(np.random.default_rng(2),
                               input='grid',
                               hidden=4,
                               channels=3)
        x = Tensor(np.random.default_rng(3).normal(size=(3, 4, 4)))
        assert (check_gradients(lambda: ordinal_loss(grader(x), 4),
                                [grader.conv, grader.cutpoints]) < 1e-4)

    def test_split(self):
        train, held = split_70_30(100, seed=3)
        assert (len(train) == 70 and len(held) == 30)
        assert (not set(train) & set(held))

    def test_fit(self):
        # the rule grade of 2000 random views, 70/30 split
        n = 2000
        rng = np.random.default_rng(0)
        feats = [
            ComplexityFeatures(n_within_10=int(_n // 4),
                               n_within_25=int(_n // 2),
                               n_within_50=int(_n),
                               min_agent_distance=float(_d),
                               n_lanes_at_ego=int(_l),
                               ego_speed=float(_v),
                               ego_accel=float(_a),
                               dist_to_intersection=float(_i))
            for _n, _d, _l, _v, _a, _i in zip(
                rng.integers(0, 20, n), rng.uniform(0, 40, n),
                rng.integers(1, 5, n), rng.uniform(0, 20, n),
                rng.uniform(0, 3, n), rng.uniform(0, 80, n))
        ]
        x = np.stack([normalize_features(_f) for _f in feats])
        y = np.array([rule_complexity(_f) for _f in feats])
        train, held = split_70_30(len(y), seed=1)
        grader = LearnedGrader(np.random.default_rng(4), hidden=32)
        losses = fit_grader(grader, x[train], y[train], steps=1000, lr=1e-2)
        assert (losses[-1] < losses[0])
        exact, within_one = grade_accuracy(grader, x[held], y[held])
        assert (exact >= 0.7)
        assert (within_one >= 0.95)
        assert (fit_grader(grader, x[train], y[train], steps=0) == [])


class TestCAIGate:

    def test_A(self):
        sc = straight_scenario()
        cfg = ModelConfig()
        gate = CAIGate(GateConfig.preset('setting1'))
        state = GateState()
        view = to_ego_frame(sc, 19, cfg.limits, history=cfg.history)
        infer, grade = gate.decide(state, view, sc, 19)
        assert (infer)
        assert (grade == 1)
        assert (state.grade_log == [1])

    def test_learned_needs_grader(self):
        with pytest.raises(ConfigError):
            CAIGate(GateConfig(mode='learned'))
        grader = LearnedGrader(np.random.default_rng(0), input='grid',
                               channels=3)
        with pytest.raises(ConfigError):
            CAIGate(GateConfig(mode='learned'), grader)

    def test_learned_grade(self):
        grader = LearnedGrader(np.random.default_rng(0))
        gate = CAIGate(GateConfig(mode='learned'), grader)
        sc = straight_scenario([moving_track('a', 12.0, 0.0, 10.0)])
        cfg = ModelConfig()
        view = to_ego_frame(sc, 19, cfg.limits, history=cfg.history)
        assert (1 <= gate.grade(view, sc) <= 5)
