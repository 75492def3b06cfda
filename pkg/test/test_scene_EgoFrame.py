import math

import numpy as np
import pytest

from guidedplan.config import SceneLimits
from guidedplan.errors import TickOutOfRangeError
from guidedplan.scene import (build_navigation_instruction,
                              parse_navigation_instruction,
                              rigid_transform_scenario, route_instruction,
                              synth_scenario, to_ego_frame)
from guidedplan.scene.geometry import point_to_polyline_distance

from scene_factory import (moving_track, pose_tuple, quarter_circle,
                           rect_crosswalk, straight_scenario)


class TestToEgoFrame:

    def test_A(self):
        # ego at the origin heading 0 -> local equals global
        sc = straight_scenario([moving_track('a', 12.0, 3.5, 8.0)],
                               n_lanes=2,
                               ego_speed=0.0)
        view = to_ego_frame(sc, 19)
        assert (np.allclose(view.s_neighbor[0, -1, :2],
                            sc.agents[0].states[19, :2]))
        assert (np.allclose(view.s_ego[0, -1], sc.ego.states[19]))

    def test_B(self):
        # ego heading pi/2, agent at global (0, 1) -> local (1, 0)
        sc = straight_scenario([moving_track('a', 1.0, 0.0, 0.0)],
                               ego_speed=0.0)
        moved = rigid_transform_scenario(sc, 0.0, 0.0, math.pi / 2)
        assert (np.allclose(moved.agents[0].states[19, :2], [0.0, 1.0]))
        view = to_ego_frame(moved, 19)
        assert (np.allclose(view.s_neighbor[0, -1, :2], [1.0, 0.0],
                            atol=1e-12))

    def test_C(self):
        # 3 lanes, N_l = 5 -> rows 3 and 4 zero with mask false
        sc = straight_scenario(n_lanes=3)
        view = to_ego_frame(sc, 19, SceneLimits(n_lanes=5))
        assert (view.lane_mask.tolist() == [True, True, True, False, False])
        assert (np.all(view.m_lane[3:] == 0.0))

    def test_zero_padding(self):
        sc = synth_scenario(11, n_agents=3, n_lanes=2)
        view = to_ego_frame(sc, 30)
        for block, mask in ((view.s_neighbor, view.neighbor_mask),
                            (view.m_lane, view.lane_mask),
                            (view.m_crosswalk, view.crosswalk_mask)):
            for _row, _m in zip(block, mask):
                assert (bool(_m) == bool(np.any(_row != 0.0)))

    def test_nearest_lanes(self):
        sc = synth_scenario(12, n_agents=4, n_lanes=4)
        view = to_ego_frame(sc, 25, SceneLimits(n_lanes=6))
        origin = sc.ego.states[25, :2]
        dist = {
            _l.id: point_to_polyline_distance(origin, _l.centerline)
            for _l in sc.lanes
        }
        included = set(view.lane_ids)
        worst_in = max(dist[_] for _ in included)
        for _id, _d in dist.items():
            if _id not in included:
                assert (_d >= worst_in)

    def test_equivariance(self):
        sc = synth_scenario(13, n_agents=6, n_lanes=2, scenario_type='type0')
        base = to_ego_frame(sc, 25)
        for dx, dy, dth in ((10.0, -4.0, 0.3), (-250.0, 80.0, -2.9),
                            (0.0, 0.0, math.pi)):
            view = to_ego_frame(rigid_transform_scenario(sc, dx, dy, dth), 25)
            assert (view.lane_ids == base.lane_ids)
            assert (view.neighbor_ids == base.neighbor_ids)
            for _name in ('s_ego', 's_neighbor', 'm_lane', 'm_crosswalk',
                          'future_gt'):
                a, b = getattr(view, _name), getattr(base, _name)
                diff = a - b
                # headings may differ by a full turn at the wrap point
                if _name in ('s_ego', 's_neighbor', 'm_lane', 'future_gt'):
                    diff[..., 2] = (diff[..., 2] + math.pi) % (2 * math.pi) - math.pi
                assert (np.all(np.abs(diff) < 1e-9))

    def test_tick_range(self):
        sc = straight_scenario()
        with pytest.raises(TickOutOfRangeError):
            to_ego_frame(sc, 18)
        with pytest.raises(TickOutOfRangeError):
            to_ego_frame(sc, 110)

    def test_future(self):
        sc = straight_scenario(ego_speed=10.0)
        view = to_ego_frame(sc, 19)
        assert (view.future_gt.shape == (80, 3))
        assert (np.allclose(view.future_gt[-1], [80.0, 0.0, 0.0]))
        assert (to_ego_frame(sc, 100).future_gt is None)

    def test_crosswalk_selection(self):
        cws = [rect_crosswalk('far', 60.0, -2.0, 2.0),
               rect_crosswalk('near', 15.0, -2.0, 2.0)]
        sc = straight_scenario(crosswalks=cws, ego_speed=0.0)
        view = to_ego_frame(sc, 19, SceneLimits(n_crosswalks=1))
        assert (view.crosswalk_ids == ('near', ))


class TestNavigationInstruction:

    def test_A(self):
        future = np.zeros((80, 3))
        future[:, 0] = np.linspace(110.9 / 80, 110.9, 80)
        assert (build_navigation_instruction(future=future) ==
                'Go straight for 110.9m')

    def test_B(self):
        assert (build_navigation_instruction(future=np.zeros((80, 3))) ==
                'Remain stationary')

    def test_C(self):
        text = build_navigation_instruction(future=quarter_circle(20.0, 80))
        assert (text == 'Turn left for 31.4m')
        right = build_navigation_instruction(
            future=quarter_circle(20.0, 80, left=False))
        assert (right == 'Turn right for 31.4m')

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            future = np.cumsum(rng.uniform(0, 2, size=(80, 3)), axis=0)
            future[:, 2] = rng.uniform(-1, 1)
            text = build_navigation_instruction(future=future)
            maneuver, distance = parse_navigation_instruction(text)
            assert (f'{maneuver} for {distance:.1f}m' == text)

    def test_route(self):
        sc = straight_scenario(ego_speed=10.0)
        text = route_instruction(sc, pose_tuple(sc, 19), 10.0)
        assert (text == 'Go straight for 80.0m')
        assert (route_instruction(sc, pose_tuple(sc, 19), 0.0) ==
                'Remain stationary')
        turn = synth_scenario(3, scenario_type='type0', n_agents=0)
        assert (route_instruction(turn, pose_tuple(turn, 19), 7.0).startswith(
            'Turn left'))

    def test_no_source(self):
        with pytest.raises(ValueError):
            build_navigation_instruction()
