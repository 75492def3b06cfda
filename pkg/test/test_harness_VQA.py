import json
from collections import Counter

import numpy as np
import pytest

from guidedplan.config import VQAConfig
from guidedplan.errors import ResponseMismatchError
from guidedplan.harness import (CATEGORIES, TemplateResponder, gen_drivevqa,
                                gen_reasoningvqa_prompts, ingest_responses,
                                load_drivevqa, load_prompts, numbers_in,
                                save_records, serialize_scene,
                                write_responses)
from guidedplan.harness.vqa import REGULATION_BLOCK, sample_ticks, \
    trajectory_text
from guidedplan.reasoner import VELOCITY_DECISIONS
from guidedplan.scene import (parse_navigation_instruction, synth_batch,
                              synth_scenario, to_ego_frame)

from scene_factory import moving_track, straight_scenario


class TestDriveVQA:

    def test_A(self):
        sc = synth_scenario(0)
        records = gen_drivevqa([sc], VQAConfig(ticks_per_scenario=2))
        ticks = sample_ticks(sc, 2)
        assert (len(records) == 6 * len(ticks))
        for _t in ticks:
            pairs = [(_r.given, _r.category) for _r in records
                     if _r.tick == _t]
            assert (sorted(pairs) == sorted(
                (_a, _b) for _a in CATEGORIES for _b in CATEGORIES
                if _a != _b))
        assert (all(_r.feature_ref == f'{sc.id}@{_r.tick}' for _r in records))

    def test_subsample(self):
        scenarios = synth_batch(0, 2)
        full = gen_drivevqa(scenarios, VQAConfig(ticks_per_scenario=5))
        half = gen_drivevqa(scenarios,
                            VQAConfig(ticks_per_scenario=5, subsample=0.5))
        assert (len(half) == round(0.5 * len(full)))
        # kept records stay in their original order
        position = {_r: _i for _i, _r in enumerate(full)}
        order = [position[_r] for _r in half]
        assert (order == sorted(order))
        again = gen_drivevqa(scenarios,
                             VQAConfig(ticks_per_scenario=5, subsample=0.5))
        assert (again == half)

    def test_short_scenario(self):
        assert (gen_drivevqa([straight_scenario(n_ticks=90)]) == [])

    def test_waypoint_numbers(self):
        sc = synth_scenario(2)
        future = to_ego_frame(sc, 19, history=1, future=80).future_gt
        values = numbers_in(trajectory_text(future))
        assert (len(values) == 16)
        expected = future[9::10, :2].ravel()
        assert (np.abs(np.array(values) - expected).max() <= 0.05 + 1e-9)

    def test_numbers_in(self):
        assert (numbers_in('speed 12.5 m/s on lane l0_1') == [12.5])
        assert (numbers_in('(3.0, -1.5) then 12') == [3.0, -1.5, 12.0])
        assert (numbers_in('Go straight for 110.9m.') == [110.9])

    def test_instruction_numbers(self):
        # the navigation distance survives in both questions and answers
        sc = straight_scenario()
        records = gen_drivevqa([sc], VQAConfig(ticks_per_scenario=1))
        given = [_r for _r in records if _r.given == 'instruction']
        asked = [_r for _r in records if _r.category == 'instruction']
        assert (len(given) == 2 and len(asked) == 2)
        _, distance = parse_navigation_instruction(asked[0].answer)
        assert (distance > 0.0)
        assert (numbers_in(asked[0].answer) == [distance])
        for _r in given:
            assert (distance in numbers_in(_r.question))

    def test_storage(self, tmp_path):
        records = gen_drivevqa([synth_scenario(1)],
                               VQAConfig(ticks_per_scenario=1))
        path = str(tmp_path / 'drivevqa.jsonl')
        assert (save_records(path, records) == 6)
        assert (load_drivevqa(path) == records)


class TestReasoningVQA:

    def test_A(self):
        agents = [moving_track('near', 15.0, 0.0, 10.0),
                  moving_track('far', 40.0, 3.5, 8.0)]
        sc = straight_scenario(agents, n_lanes=2)
        text = serialize_scene(sc, 19)
        blocks = [_l for _l in text.splitlines() if _l.startswith('Agent ')]
        assert (len(blocks) == 2)
        assert (blocks[0].startswith('Agent near'))
        assert (text.endswith(REGULATION_BLOCK))
        assert (serialize_scene(sc, 19) == text)

    def test_prompts(self, tmp_path):
        scenarios = synth_batch(3, 2)
        prompts = gen_reasoningvqa_prompts(scenarios,
                                           VQAConfig(ticks_per_scenario=3))
        assert (Counter(_p.scenario_id for _p in prompts) ==
                {_s.id: 3 for _s in scenarios})
        path = str(tmp_path / 'prompts.jsonl')
        save_records(path, prompts)
        assert (load_prompts(path) == prompts)

    def test_template_responder(self, tmp_path):
        scenarios = synth_batch(5, 3)
        prompts = gen_reasoningvqa_prompts(scenarios,
                                           VQAConfig(ticks_per_scenario=2))
        path = str(tmp_path / 'responses.jsonl')
        write_responses(path, prompts, TemplateResponder(scenarios))
        records = ingest_responses(prompts, path)
        assert ([_r.prompt_id for _r in records] == [_p.id for _p in prompts])
        for _r in records:
            assert (_r.decision in VELOCITY_DECISIONS)
            assert (_r.rationale)
            assert (_r.answer.startswith(f'Decision: {_r.decision}.'))

    def test_mismatch(self, tmp_path):
        scenarios = synth_batch(7, 1)
        prompts = gen_reasoningvqa_prompts(scenarios,
                                           VQAConfig(ticks_per_scenario=2))
        path = tmp_path / 'responses.jsonl'
        write_responses(str(path), prompts, TemplateResponder(scenarios))
        lines = path.read_text().splitlines()

        path.write_text(lines[0] + '\n')
        with pytest.raises(ResponseMismatchError):
            ingest_responses(prompts, str(path))

        extra = json.dumps({'id': 'nowhere@0', 'decision': 'stop',
                            'rationale': 'none'})
        path.write_text('\n'.join(lines + [extra]) + '\n')
        with pytest.raises(ResponseMismatchError):
            ingest_responses(prompts, str(path))

        blank = json.loads(lines[1])
        blank['decision'] = ''
        path.write_text('\n'.join([lines[0], json.dumps(blank)]) + '\n')
        with pytest.raises(ResponseMismatchError):
            ingest_responses(prompts, str(path))
