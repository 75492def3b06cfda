import json

import numpy as np
import pytest

from guidedplan.errors import ConfigError, ScenarioInvariantError, ScenarioParseError
from guidedplan.scene import (LaneGraph, SCENARIO_TYPES, dumps_scenario,
                              load_scenario, loads_scenario, save_scenario,
                              synth_scenario, to_ego_frame)

from scene_factory import straight_scenario


class TestScenarioIO:

    def test_A(self, tmp_path):
        # minimal 1-lane, 0-agent file
        sc = straight_scenario()
        path = str(tmp_path / 'minimal.json')
        save_scenario(sc, path)
        loaded = load_scenario(path)
        assert (len(loaded.lanes) == 1)
        assert (loaded.num_ticks == 110)
        assert (loaded.agents == ())

    def test_missing_route_lane(self):
        data = json.loads(dumps_scenario(straight_scenario()))
        data['route_lane_ids'] = ['nowhere']
        with pytest.raises(ScenarioInvariantError) as e:
            loads_scenario(json.dumps(data))
        assert (e.value.check == 'route_lanes_exist')

    def test_parse_error_line(self):
        text = dumps_scenario(straight_scenario()).replace('{', '{\n', 1)
        broken = text[:-3] + '\n,,'
        with pytest.raises(ScenarioParseError) as e:
            loads_scenario(broken)
        assert (e.value.line is not None)

    def test_parse_error_field(self):
        data = json.loads(dumps_scenario(straight_scenario()))
        del data['lanes'][0]['centerline']
        with pytest.raises(ScenarioParseError) as e:
            loads_scenario(json.dumps(data))
        assert (e.value.field == 'lanes[0].centerline')

    def test_short_log(self):
        with pytest.raises(ScenarioInvariantError) as e:
            loads_scenario(dumps_scenario(straight_scenario(n_ticks=50)))
        assert (e.value.check == 'log_length')

    def test_canonical_round_trip(self, tmp_path):
        for _i in range(20):
            sc = synth_scenario(_i, n_agents=_i % 5,
                                scenario_type=SCENARIO_TYPES[_i % 14],
                                hazard=_i % 3 == 0)
            first = str(tmp_path / 'a.json')
            second = str(tmp_path / 'b.json')
            save_scenario(sc, first)
            save_scenario(load_scenario(first), second)
            save_scenario(load_scenario(second), first)
            with open(first, 'rb') as a, open(second, 'rb') as b:
                assert (a.read() == b.read())

    def test_field_order(self):
        keys = list(json.loads(dumps_scenario(straight_scenario())))
        assert (keys == [
            'schema', 'id', 'scenario_type', 'dt', 'num_ticks', 'lanes',
            'crosswalks', 'route_lane_ids', 'ego_log', 'agents', 'obstacles',
            'traffic_lights', 'camera_rig'
        ])


class TestSynthScenario:

    def test_A(self):
        a = synth_scenario(1, n_agents=6, scenario_type='type3')
        b = synth_scenario(1, n_agents=6, scenario_type='type3')
        assert (a.content_hash() == b.content_hash())
        c = synth_scenario(2, n_agents=6, scenario_type='type3')
        assert (a.content_hash() != c.content_hash())

    def test_no_agents(self):
        sc = synth_scenario(4, n_agents=0)
        assert (sc.agents == ())
        view = to_ego_frame(sc, 19)
        assert (not view.neighbor_mask.any())

    def test_adjacency_symmetric(self):
        sc = synth_scenario(5, n_lanes=2)
        graph = LaneGraph(sc.lanes)
        assert (graph.is_adjacency_symmetric())
        for _l in sc.lanes:
            if _l.left is not None:
                assert (sc.lane_by_id[_l.left].right == _l.id)

    def test_infeasible(self):
        with pytest.raises(ConfigError):
            synth_scenario(0, duration_s=1.5)
        with pytest.raises(ConfigError):
            synth_scenario(0, n_lanes=0)
        with pytest.raises(ConfigError):
            synth_scenario(0, scenario_type='type14')

    def test_every_type(self):
        for _t in SCENARIO_TYPES:
            sc = synth_scenario(7, n_agents=8, n_lanes=3, scenario_type=_t)
            assert (sc.scenario_type == _t)
            assert (len(sc.agents) == 8)
            assert (sc.num_ticks == 110)

    def test_hazard(self):
        sc = synth_scenario(3, hazard=True)
        assert (len(sc.obstacles) == 1)
        view = to_ego_frame(sc, 19)
        # the obstacle is no neighbor
        assert ('obstacle000' not in view.neighbor_ids)
        # the expert stops short of it
        ob = sc.obstacles[0]
        final = sc.ego.states[-1, :2]
        assert (np.linalg.norm(final - np.array([ob.x, ob.y])) > 4.0)
        assert (np.hypot(*sc.ego.states[-1, 3:5]) < 0.05)


class TestLaneGraph:

    def test_A(self):
        sc = straight_scenario(n_lanes=3, intersection_at=100.0)
        graph = LaneGraph(sc.lanes)
        assert (graph.successors.has_edge('l0_0', 'l0_1'))
        assert (graph.lanes_abreast('l1_0') == {'l0_0', 'l1_0', 'l2_0'})
        assert (graph.follow('l0_0', 200.0) == ['l0_0', 'l0_1'])
        assert (graph.lanes_at(np.array([10.0, 0.2])) == ['l0_0'])
