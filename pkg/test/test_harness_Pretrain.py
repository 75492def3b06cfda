import numpy as np
import pytest

from guidedplan.config import ModelConfig, PretrainConfig, VQAConfig
from guidedplan.errors import ConfigError
from guidedplan.harness import Pretrainer, as_pairs, encode_pair, \
    gen_drivevqa, mixed_epoch, pretrain
from guidedplan.interfaces import DrivingStack, StackConfig, \
    stack_from_checkpoint
from guidedplan.reasoner import Reasoner
from guidedplan.scene import synth_scenario


def _drive(n_scenarios=1):
    scenarios = [synth_scenario(_s, n_agents=2) for _s in range(n_scenarios)]
    return gen_drivevqa(scenarios, VQAConfig(ticks_per_scenario=1))


class TestMixedEpoch:

    def test_A(self):
        drive = [(f'dq{_i}', f'da{_i}') for _i in range(100)]
        reasoning = [(f'rq{_i}', f'ra{_i}') for _i in range(90)]
        epoch = mixed_epoch(drive, reasoning, 0.1, np.random.default_rng(0))
        assert (len(epoch) == 100)
        assert (sum(_q.startswith('dq') for _q, _ in epoch) == 10)
        assert (set(reasoning) <= set(epoch))

    def test_capped(self):
        drive = [('dq', 'da')] * 3
        reasoning = [(f'rq{_i}', 'ra') for _i in range(90)]
        epoch = mixed_epoch(drive, reasoning, 0.5, np.random.default_rng(1))
        assert (len(epoch) == 93)

    def test_drive_only(self):
        drive = [(f'dq{_i}', 'da') for _i in range(7)]
        epoch = mixed_epoch(drive, [('rq', 'ra')], 1.0,
                            np.random.default_rng(2))
        assert (sorted(epoch) == sorted(drive))

    def test_encode_truncates(self):
        q, a = encode_pair((' '.join(['w'] * 30), ' '.join(['x'] * 30)), 64, 8)
        assert (len(q) == 8 and len(a) == 8)


class TestPretrain:

    def test_A(self):
        cfg = ModelConfig.micro()
        reasoner = Reasoner(cfg, np.random.default_rng(0))
        records = _drive()
        pairs = as_pairs(records)
        pcfg = PretrainConfig(round1_steps=60, round2_steps=0, lr=1e-2,
                              warmup_steps=5, max_tokens=12)
        before = Pretrainer(reasoner, pcfg).eval_loss(pairs)
        result = pretrain(reasoner, records, [], pcfg)
        after = Pretrainer(reasoner, pcfg).eval_loss(pairs)
        assert (len(result.round1) == 60)
        assert (result.round2 == [])
        assert (after < before)

    def test_deterministic(self):
        cfg = ModelConfig.micro()
        records = _drive()
        pcfg = PretrainConfig(round1_steps=5, round2_steps=0, max_tokens=8)
        a = pretrain(Reasoner(cfg, np.random.default_rng(1)), records, [],
                     pcfg)
        b = pretrain(Reasoner(cfg, np.random.default_rng(1)), records, [],
                     pcfg)
        assert (a.round1 == b.round1)

    def test_reload(self, tmp_path):
        # a pretrained reasoner evaluates bitwise the same after a reload
        stack = DrivingStack(StackConfig(model=ModelConfig.micro()), seed=2)
        records = _drive()
        pcfg = PretrainConfig(round1_steps=8, round2_steps=4, max_tokens=8,
                              drivevqa_fraction=1.0)
        pretrain(stack.reasoner, records, [], pcfg)
        path = str(tmp_path / 'reasoner.gdck')
        stack.save(path)
        again = stack_from_checkpoint(path)
        pairs = as_pairs(records)
        assert (Pretrainer(stack.reasoner, pcfg).eval_loss(pairs) ==
                Pretrainer(again.reasoner, pcfg).eval_loss(pairs))

    def test_empty(self):
        reasoner = Reasoner(ModelConfig.micro(), np.random.default_rng(3))
        with pytest.raises(ConfigError):
            pretrain(reasoner, [], [])
        with pytest.raises(ConfigError):
            pretrain(reasoner, _drive(), [],
                     PretrainConfig(round1_steps=1, round2_steps=1,
                                    drivevqa_fraction=0.0))
        with pytest.raises(ConfigError):
            PretrainConfig(drivevqa_fraction=1.5)
