import math

import numpy as np
import pytest

from guidedplan.config import ModelConfig
from guidedplan.errors import PromptOrderError, ShapeError
from guidedplan.numerics import Tensor, check_gradients, ops
from guidedplan.reasoner import (SYSTEM_MESSAGE, AuxHeads, AuxLabels,
                                 GuidanceVector, PromptSequence, Reasoner,
                                 Tokenizer, assemble_prompt, aux_loss,
                                 derive_aux_labels, token_ids)
from guidedplan.reasoner.model import HiddenStates
from guidedplan.scene import synth_scenario


def _prompt(cfg, rng, nav='Go straight for 110.9m', reasoner=None):
    reasoner = reasoner or Reasoner(cfg, rng)
    map_tokens = Tensor(rng.normal(size=(cfg.n_map_tokens, cfg.d_llm)))
    image_tokens = Tensor(rng.normal(size=(cfg.n_ref_queries, cfg.d_llm)))
    return reasoner, assemble_prompt(reasoner.tokenizer, SYSTEM_MESSAGE,
                                     map_tokens, image_tokens, nav)


class TestTokenizer:

    def test_A(self):
        tok = Tokenizer(4096, 16, np.random.default_rng(0))
        a = tok('Go straight for 110.9m')
        b = tok('Go straight for 110.9m')
        assert (a.shape == (4, 16))
        assert (np.array_equal(a.values, b.values))

    def test_empty(self):
        assert (token_ids('', 4096) == [4095])
        assert (token_ids('   ', 4096) == [4095])
        assert (4095 not in token_ids('a b c d e', 4096))

    def test_collisions(self):
        # 1000 distinct words over 4095 buckets: about 888 distinct ids
        ids = {_i: token_ids(f'word{_i}', 4096)[0] for _i in range(1000)}
        distinct = len(set(ids.values()))
        expected = 4095 * (1.0 - (1.0 - 1.0 / 4095)**1000)
        assert (abs(distinct - expected) < 40)


class TestPrompt:

    def test_A(self):
        cfg = ModelConfig()
        _, prompt = _prompt(cfg, np.random.default_rng(0))
        l_sys = len(SYSTEM_MESSAGE.split())
        assert (prompt.length == l_sys + 41 + 32 + 4)

    def test_empty_nav(self):
        cfg = ModelConfig.micro()
        _, prompt = _prompt(cfg, np.random.default_rng(1), nav='')
        assert (prompt.segments[-1] == 'nav')
        assert (prompt.segments.count('nav') == 1)

    def test_contiguous_runs(self):
        cfg = ModelConfig.micro()
        _, prompt = _prompt(cfg, np.random.default_rng(2))
        spans = prompt.spans()
        assert (spans['system'][0] == 0)
        assert (spans['system'][1] == spans['map'][0])
        assert (spans['map'][1] == spans['image'][0])
        assert (spans['image'][1] == spans['nav'][0])
        assert (spans['nav'][1] == prompt.length)

    def test_order_rejected(self):
        emb = Tensor(np.zeros((4, 8)))
        with pytest.raises(PromptOrderError):
            PromptSequence(emb, ('system', 'image', 'map', 'nav'))
        with pytest.raises(PromptOrderError):
            PromptSequence(emb, ('system', 'map', 'nav', 'image'))

    def test_width_mismatch(self):
        cfg = ModelConfig.micro()
        tok = Tokenizer(cfg.vocab_size, cfg.d_llm, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            assemble_prompt(tok, 'sys', Tensor(np.zeros((3, cfg.d_llm + 1))),
                            Tensor(np.zeros((2, cfg.d_llm))), 'nav')


class TestReasoner:

    def test_A(self):
        cfg = ModelConfig.micro()
        reasoner, prompt = _prompt(cfg, np.random.default_rng(3))
        hidden = reasoner(prompt)
        assert (hidden.h.shape == (prompt.length, cfg.d_llm))

    def test_causal(self):
        cfg = ModelConfig.micro()
        reasoner, prompt = _prompt(cfg, np.random.default_rng(4))
        full = reasoner.run(reasoner.embed(prompt)).values
        for _k in (1, 5, prompt.length - 1):
            emb = ops.slice(reasoner.embed(prompt), slice(0, _k))
            part = reasoner.run(emb).values
            assert (np.allclose(part, full[:_k], atol=1e-12))

    def test_deterministic(self):
        cfg = ModelConfig.micro()
        reasoner, prompt = _prompt(cfg, np.random.default_rng(5))
        assert (np.array_equal(reasoner(prompt).h.values,
                               reasoner(prompt).h.values))

    def test_gradients(self):
        cfg = ModelConfig.micro()
        reasoner, prompt = _prompt(cfg, np.random.default_rng(6))
        block = reasoner.blocks[0]
        w = Tensor(np.random.default_rng(7).normal(size=(prompt.length,
                                                         cfg.d_llm)))
        inputs = [block.attention.k_proj.weight, block.mlp.fc1.weight,
                  block.norm1.bias, reasoner.segment_embedding]
        assert (check_gradients(
            lambda: ops.sum(ops.mul(reasoner(prompt).h, w)), inputs) < 1e-4)


class TestGuidance:

    def test_A(self):
        # only the last hidden row matters
        cfg = ModelConfig()
        reasoner = Reasoner(cfg, np.random.default_rng(0))
        h = np.random.default_rng(1).normal(size=(10, cfg.d_llm))
        base = reasoner.guidance(HiddenStates(Tensor(h))).values
        h[:-1] = 0.0
        assert (np.array_equal(
            reasoner.guidance(HiddenStates(Tensor(h))).values, base))
        assert (base.shape == (64, ))

    def test_snapshot(self):
        g = GuidanceVector.snapshot(Tensor(np.ones(4)), tick=7, grade=3)
        with pytest.raises(ValueError):
            g.h_tilde[0] = 2.0
        assert (g.tick == 7 and g.grade == 3)

    def test_gradients(self):
        cfg = ModelConfig.micro()
        reasoner = Reasoner(cfg, np.random.default_rng(2))
        h = Tensor(np.random.default_rng(3).normal(size=(5, cfg.d_llm)))
        adapter = reasoner.feature_adapter
        assert (check_gradients(
            lambda: ops.sum(ops.square(reasoner.guidance(HiddenStates(h)))),
            [h, adapter.fc1.weight, adapter.fc2.weight]) < 1e-4)


def _scalar_aux(out, labels):
    """ The auxiliary loss computed on plain floats """

    def bce(z, t):
        p = 1.0 / (1.0 + math.exp(-z))
        return -(t * math.log(p) + (1 - t) * math.log(1 - p))

    def ce(logits, k):
        top = max(logits)
        lse = top + math.log(sum(math.exp(_l - top) for _l in logits))
        return lse - logits[k]

    total = (out[0] - labels.ego_velocity)**2
    total += (out[1] - labels.ego_acceleration)**2
    total += ce(list(out[2:6]), labels.velocity_decision)
    total += ce(list(out[6:9]), labels.traffic_light)
    total += bce(out[9], labels.adjacent_lane[0])
    total += bce(out[10], labels.adjacent_lane[1])
    total += bce(out[11], labels.lane_change)
    return total


class TestAuxLoss:

    def _set_output(self, heads, values):
        heads.mlp.fc2.weight.values[...] = 0.0
        heads.mlp.fc2.bias.values[...] = values

    def test_A(self):
        heads = AuxHeads(8, np.random.default_rng(0))
        self._set_output(heads,
                         [3.0, -1.0, 30, -30, -30, -30, -30, 30, -30, 30,
                          -30, -30])
        labels = AuxLabels(3.0, -1.0, 0, 1, (1.0, 0.0), 0.0)
        loss = aux_loss(heads(Tensor(np.ones(8))), labels).item()
        assert (loss < 1e-9)

    def test_uniform_decision(self):
        heads = AuxHeads(8, np.random.default_rng(1))
        self._set_output(heads, np.zeros(12))
        loss = aux_loss(heads(Tensor(np.ones(8))),
                        AuxLabels(velocity_decision=2)).item()
        assert (abs(loss - math.log(4)) < 1e-12)

    def test_scalar_oracle(self):
        rng = np.random.default_rng(2)
        heads = AuxHeads(8, rng)
        for _ in range(10):
            h = Tensor(rng.normal(size=8))
            pred = heads(h)
            out = heads.mlp(h).values
            labels = AuxLabels(float(rng.normal()), float(rng.normal()),
                               int(rng.integers(4)), int(rng.integers(3)),
                               (float(rng.integers(2)), float(rng.integers(2))),
                               float(rng.integers(2)))
            assert (abs(aux_loss(pred, labels).item() -
                        _scalar_aux(out, labels)) < 1e-9)

    def test_missing_labels(self):
        heads = AuxHeads(8, np.random.default_rng(3))
        assert (aux_loss(heads(Tensor(np.ones(8))), AuxLabels()).item() == 0.0)

    def test_gradients(self):
        rng = np.random.default_rng(4)
        heads = AuxHeads(8, rng)
        h = Tensor(rng.normal(size=8))
        labels = AuxLabels(1.0, 0.5, 1, 2, (0.0, 1.0), 1.0)
        assert (check_gradients(lambda: aux_loss(heads(h), labels),
                                [h, heads.mlp.fc1.weight]) < 1e-4)


class TestAuxLabels:

    def test_A(self):
        sc = synth_scenario(0, scenario_type='type3', n_agents=4)
        labels = derive_aux_labels(sc, 19)
        assert (labels.ego_velocity is not None)
        assert (labels.adjacent_lane[1] == 0.0)
        # the log ends before the lookahead
        late = derive_aux_labels(sc, sc.num_ticks - 5)
        assert (late.ego_velocity is None and late.lane_change is None)

    def test_lane_change(self):
        sc = synth_scenario(0, scenario_type='type12', n_lanes=2)
        changes = [derive_aux_labels(sc, _t).lane_change
                   for _t in range(19, sc.num_ticks - 41, 5)]
        assert (1.0 in changes)
        keep = synth_scenario(0, scenario_type='type13', n_lanes=2)
        assert (derive_aux_labels(keep, 19).lane_change == 0.0)
