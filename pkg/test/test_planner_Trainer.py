import math

import numpy as np
import pytest

from guidedplan.config import ModelConfig, TrainConfig
from guidedplan.errors import TrainingDivergedError
from guidedplan.interfaces import DrivingStack, StackConfig
from guidedplan.planner.training import Trainer, make_samples
from guidedplan.scene import StaticObstacle, synth_scenario

from scene_factory import straight_scenario


def _stack(seed=0):
    return DrivingStack(StackConfig(model=ModelConfig.micro()), seed=seed)


def _one_sample(cfg, seed=0):
    sc = synth_scenario(seed, n_agents=2, n_points=cfg.n_points)
    return make_samples([sc], cfg, ticks_per_scenario=1)[:1]


class TestTrainer:

    def test_A(self):
        # one repeated sample, lr 1e-3
        stack = _stack(0)
        samples = _one_sample(stack.model_cfg)
        trainer = Trainer(stack, TrainConfig(steps=50, batch_size=1, lr=1e-3,
                                             warmup_steps=1))
        losses = trainer.fit(samples)
        assert (len(losses) == 50)
        assert (all(math.isfinite(_l) for _l in losses))
        assert (losses[-1] < losses[0])
        assert (np.mean(losses[-10:]) < np.mean(losses[:10]))
        assert (trainer.history == losses)

    def test_train_step_diverged(self):
        stack = _stack(1)
        samples = _one_sample(stack.model_cfg)
        trainer = Trainer(stack, TrainConfig(steps=5, batch_size=1))
        stack.planner.score_head.weight.values[...] = np.nan
        with pytest.raises(TrainingDivergedError) as info:
            trainer.train_step(samples)
        diagnostics = info.value.diagnostics
        assert (diagnostics['step'] == 0)
        assert (diagnostics['lr'] == trainer.schedule(0))
        assert ('non-finite' in diagnostics['error'])
        assert (trainer.step_count == 0 and trainer.history == [])

    def test_zero_steps(self):
        stack = _stack(2)
        trainer = Trainer(stack, TrainConfig(steps=5, batch_size=1))
        assert (trainer.fit(_one_sample(stack.model_cfg), steps=0) == [])

    @pytest.mark.parametrize('head', ['gmm', 'multimodal'])
    def test_overfit(self, head):
        # a single tick is learned to well under half a meter at the horizon
        stack = _stack(3)
        sample = _one_sample(stack.model_cfg, seed=4)[0]
        trainer = Trainer(stack, TrainConfig(head=head, steps=400,
                                             batch_size=1, lr=1e-2,
                                             warmup_steps=10,
                                             use_guidance=False))
        trainer.fit([sample])
        out, _ = stack.planner.plan(sample.view, None, head)
        fde = np.linalg.norm(out.trajectory[-1, :2] -
                             sample.view.future_gt[-1, :2])
        assert (fde < 0.5)


class TestImageOnlyHazard:

    def test_A(self):
        # an obstacle only the cameras see changes the guided plan alone
        cone = StaticObstacle('cone', 10.0, 0.0, 0.0, 1.0, 1.0)
        clear, blocked = straight_scenario(), straight_scenario(
            obstacles=[cone])
        stack = _stack(5)
        for _layer in stack.planner.layers:
            _layer.gate.values[...] = 0.5
        tick = stack.model_cfg.history - 1
        obs_clear = stack.observe(clear, tick)
        obs_blocked = stack.observe(blocked, tick)
        assert (np.array_equal(obs_clear.view.m_lane,
                               obs_blocked.view.m_lane))
        assert (np.array_equal(obs_clear.view.s_neighbor,
                               obs_blocked.view.s_neighbor))
        bare_clear = stack.plan(obs_clear, None).trajectory
        bare_blocked = stack.plan(obs_blocked, None).trajectory
        assert (np.array_equal(bare_clear, bare_blocked))
        guided_clear = stack.plan(obs_clear,
                                  stack.guidance(obs_clear)).trajectory
        guided_blocked = stack.plan(obs_blocked,
                                    stack.guidance(obs_blocked)).trajectory
        assert (not np.allclose(guided_clear, guided_blocked))
