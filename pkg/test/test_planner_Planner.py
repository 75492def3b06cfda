import math

import numpy as np
import pytest

from guidedplan.config import ModelConfig
from guidedplan.errors import ConfigError, NonFiniteError, ShapeError
from guidedplan.numerics import Tensor, check_gradients, ops
from guidedplan.planner import (GatedDecoderLayer, Planner, gmm_plan_loss,
                                multimodal_plan_loss, nll_loss,
                                select_best_mode, trajectory_l1)
from guidedplan.planner.model import headings_from_positions

from scene_factory import view_for


class TestGateIdentity:

    def test_A(self):
        # g = 0 makes the guidance branch vanish bitwise
        cfg = ModelConfig.micro()
        rng = np.random.default_rng(0)
        planner = Planner(cfg, rng)
        for _seed in range(10):
            _, view = view_for(cfg, seed=_seed, n_agents=3)
            guidance = rng.normal(size=cfg.d_g)
            for _head in ('gmm', 'multimodal'):
                with_g, _ = planner.plan(view, guidance, _head)
                without, _ = planner.plan(view, None, _head)
                assert (np.abs(with_g.trajectory -
                               without.trajectory).max() <= 1e-12)

    def test_open_gate(self):
        cfg = ModelConfig.micro()
        rng = np.random.default_rng(1)
        planner = Planner(cfg, rng)
        for _layer in planner.layers:
            _layer.gate.values[...] = 0.7
        _, view = view_for(cfg, seed=3, n_agents=2)
        pred_g = planner(view, rng.normal(size=cfg.d_g))
        pred_0 = planner(view, None)
        assert (not np.allclose(pred_g.mu.values, pred_0.mu.values))

    def test_guidance_width(self):
        layer = GatedDecoderLayer(8, 8, 2, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            layer(Tensor(np.zeros((3, 8))), Tensor(np.zeros(5)))

    def test_gate_gradient(self):
        cfg = ModelConfig.micro()
        rng = np.random.default_rng(2)
        planner = Planner(cfg, rng)
        for _layer in planner.layers:
            _layer.gate.values[...] = 0.3
        _, view = view_for(cfg, seed=4, n_agents=2)
        guidance = Tensor(rng.normal(size=cfg.d_g))
        gates = [_l.gate for _l in planner.layers]
        assert (check_gradients(
            lambda: ops.sum(ops.square(planner(view, guidance).mu)),
            gates + [guidance]) < 1e-4)


class TestLosses:

    def test_A(self):
        t = 5
        gt = np.random.default_rng(0).normal(size=(t, 2))
        zero = nll_loss(Tensor(gt), Tensor(np.ones((t, 2))), 0.0, gt)
        assert (abs(zero.item()) < 1e-12)

    def test_sigma_e(self):
        t = 7
        gt = np.zeros((t, 2))
        loss = nll_loss(Tensor(gt), Tensor(np.full((t, 2), math.e)), 0.0, gt)
        assert (abs(loss.item() - 2 * t) < 1e-12)

    def test_uniform_cross_entropy(self):
        loss = ops.cross_entropy(Tensor(np.zeros(6)), 2)
        assert (abs(loss.item() - math.log(6)) < 1e-9)

    def test_non_finite(self):
        gt = np.zeros((3, 2))
        mu = np.zeros((3, 2))
        mu[1, 0] = np.nan
        with pytest.raises(NonFiniteError):
            nll_loss(Tensor(mu), Tensor(np.ones((3, 2))), 0.0, gt)

    def test_heading_wrap(self):
        pred = Tensor(np.array([[0.0, 0.0, math.pi - 0.1]]))
        gt = np.array([[0.0, 0.0, -math.pi + 0.1]])
        assert (abs(trajectory_l1(pred, gt).item() - 0.2) < 1e-12)

    def test_head_gradients(self):
        cfg = ModelConfig.micro()
        planner = Planner(cfg, np.random.default_rng(3))
        _, view = view_for(cfg, seed=5, n_agents=2)
        inputs = [planner.gmm_head.weight, planner.ego_head.bias,
                  planner.mode_queries]
        assert (check_gradients(
            lambda: gmm_plan_loss(planner(view), view.future_gt),
            inputs) < 1e-4)
        inputs = [planner.trajectory_head.weight, planner.neighbor_head.bias,
                  planner.score_head.weight]
        assert (check_gradients(
            lambda: multimodal_plan_loss(
                planner(view, head='multimodal'), view.future_gt,
                view.future_neighbors, view.future_neighbor_mask),
            inputs) < 1e-4)

    def test_full_graph(self):
        # every planner parameter and the guidance, gates open
        cfg = ModelConfig.micro()
        rng = np.random.default_rng(6)
        planner = Planner(cfg, rng)
        for _layer in planner.layers:
            _layer.gate.values[...] = 0.5
        _, view = view_for(cfg, seed=7, n_agents=2)
        guidance = Tensor(rng.normal(size=cfg.d_g))
        inputs = list(planner.parameters().values()) + [guidance]
        assert (check_gradients(
            lambda: gmm_plan_loss(planner(view, guidance), view.future_gt),
            inputs) < 1e-4)


class TestSelectBestMode:

    def _scan(self, traj, gt, alignment):
        best, best_err = 0, math.inf
        for _m in range(len(traj)):
            if alignment == 'fde':
                err = math.hypot(*(traj[_m, -1, :2] - gt[-1, :2]))
            else:
                err = sum(math.hypot(*(traj[_m, _t, :2] - gt[_t, :2]))
                          for _t in range(len(gt))) / len(gt)
            if err < best_err:
                best, best_err = _m, err
        return best

    def test_A(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            traj = rng.normal(size=(6, 8, 3))
            gt = rng.normal(size=(8, 3))
            for _a in ('fde', 'ade'):
                assert (select_best_mode(traj, gt, _a) == self._scan(
                    traj, gt, _a))

    def test_tie_lowest_index(self):
        traj = np.zeros((3, 4, 2))
        assert (select_best_mode(traj, np.ones((4, 2))) == 0)

    def test_bad_input(self):
        with pytest.raises(ConfigError):
            select_best_mode(np.zeros((2, 4, 2)), np.zeros((5, 2)))
        with pytest.raises(ConfigError):
            select_best_mode(np.zeros((2, 4, 2)), np.zeros((4, 2)), 'mid')


class TestPlanOutput:

    def test_A(self):
        cfg = ModelConfig.micro()
        planner = Planner(cfg, np.random.default_rng(4))
        _, view = view_for(cfg, seed=6, n_agents=2)
        out, pred = planner.plan(view)
        assert (out.trajectory.shape == (cfg.future, 3))
        assert (out.is_finite)
        assert (abs(out.probabilities.sum() - 1.0) < 1e-12)
        assert (out.mode == int(np.argmax(pred.probabilities)))

    def test_headings(self):
        xy = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        h = headings_from_positions(xy)
        assert (np.allclose(h, [0.0, math.pi / 2, math.pi]))

    def test_unknown_head(self):
        cfg = ModelConfig.micro()
        planner = Planner(cfg, np.random.default_rng(5))
        _, view = view_for(cfg, seed=7)
        with pytest.raises(ConfigError):
            planner(view, head='diffusion')
