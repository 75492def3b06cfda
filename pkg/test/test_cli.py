import os
import re

import pytest

from guidedplan.cli import build_parser, main
from guidedplan.config import (BenchmarkConfig, ModelConfig, PretrainConfig,
                               TrainConfig, VQAConfig, load_yaml)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', 'configs')

def _hash(out):
    return re.search(r'config hash ([0-9a-f]{64})', out).group(1)


class TestCli:

    def test_A(self, tmp_path, capsys):
        run_dir = str(tmp_path)
        argv = ['--run-dir', run_dir, 'gen-scenarios', '--count', '3',
                '--agents', '2']
        assert (main(argv) == 0)
        first = _hash(capsys.readouterr().out)
        files = sorted(os.listdir(os.path.join(run_dir, 'scenarios')))
        assert (len(files) == 3 and all(_f.endswith('.json') for _f in files))
        assert (main(argv) == 0)
        assert (_hash(capsys.readouterr().out) == first)

    def test_vqa(self, tmp_path, capsys):
        run_dir = str(tmp_path)
        assert (main(['--run-dir', run_dir, 'gen-scenarios', '--count', '2',
                      '--agents', '2']) == 0)
        assert (main(['--run-dir', run_dir, 'gen-drivevqa', '--ticks', '1'
                      ]) == 0)
        with open(os.path.join(run_dir, 'vqa', 'drivevqa.jsonl')) as r:
            assert (len(r.readlines()) == 12)
        assert (main(['--run-dir', run_dir, 'gen-reasoningvqa', '--ticks',
                      '1', '--offline']) == 0)
        with open(os.path.join(run_dir, 'vqa', 'reasoningvqa.jsonl')) as r:
            assert (len(r.readlines()) == 2)
        assert ('2 ReasoningVQA records' in capsys.readouterr().out)

    def test_error(self, tmp_path, capsys):
        missing = str(tmp_path / 'nowhere')
        assert (main(['--run-dir', str(tmp_path), 'gen-drivevqa',
                      '--scenarios', missing]) == 1)
        err = capsys.readouterr().err
        assert (err.startswith('guidedplan gen-drivevqa: '))
        assert (missing in err)

    @pytest.mark.parametrize('name, cls', [
        ('model_small.yaml', ModelConfig),
        ('vqa_default.yaml', VQAConfig),
        ('pretrain_smoke.yaml', PretrainConfig),
        ('train_smoke.yaml', TrainConfig),
        ('benchmark_smoke.yaml', BenchmarkConfig),
    ])
    def test_example_configs(self, name, cls):
        cfg = load_yaml(os.path.join(CONFIG_DIR, name), cls)
        assert (isinstance(cfg, cls))

    def test_parser(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])
        args = build_parser().parse_args(['run-benchmark', '--plots', 'all'])
        assert (args.plots == 'all' and args.seed is None)
        args = build_parser().parse_args(['select-hard20'])
        assert (args.family == 'both')
