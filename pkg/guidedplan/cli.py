"""
Command line entry point

    guidedplan gen-scenarios --count 140
    guidedplan gen-drivevqa
    guidedplan gen-reasoningvqa --offline
    guidedplan pretrain
    guidedplan finetune --pretrained runs/ckpt/reasoner.gdck
    guidedplan run-benchmark --checkpoint runs/ckpt/stack.gdck --plots all
    guidedplan report

Every command works inside a run directory (--run-dir, default
$GUIDEDPLAN_RUN_DIR or ./runs) and prints the hash of the configuration
it ran under.
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

from guidedplan.config import (BenchmarkConfig, GateConfig, ModelConfig,
                               PretrainConfig, TrainConfig, VQAConfig,
                               config_hash, default_run_dir, load_yaml,
                               replace, to_jsonable)
from guidedplan.errors import ConfigError, GuidedPlanError
from guidedplan.harness import (MAIN_VARIANT, BenchmarkRun, TemplateResponder,
                                build_hard20, finetune, gen_drivevqa,
                                gen_reasoningvqa_prompts, ingest_responses,
                                load_drivevqa, load_prompts, load_reasoningvqa,
                                pretrain, report, run_benchmark, save_records,
                                stratified_sample, write_responses)
from guidedplan.interfaces import DrivingStack, StackConfig, stack_from_checkpoint
from guidedplan.scene import Scenario, load_scenario_dir, save_scenario, synth_batch
from guidedplan.sim import Hard20Manifest

logger = logging.getLogger(__name__)

NO_PRETRAIN_VARIANT = 'w/o pretrain'


def _path(args, *parts: str) -> str:
    return os.path.join(args.run_dir, *parts)


def _config(path: Optional[str], cls, **overrides: Any):
    cfg = load_yaml(path, cls) if path else cls()
    changes = {_k: _v for _k, _v in overrides.items() if _v is not None}
    return replace(cfg, **changes) if changes else cfg


def _announce(command: str, snapshot: Dict[str, Any]) -> str:
    h = config_hash(snapshot)
    print(f'{command}: config hash {h}')
    return h


def _scenarios(args) -> List[Scenario]:
    path = args.scenarios or _path(args, 'scenarios')
    if not os.path.isdir(path):
        raise ConfigError(f'scenario directory {path} does not exist')
    out = load_scenario_dir(path)
    if not out:
        raise ConfigError(f'no scenarios in {path}')
    return out


def _stack(args, checkpoint: Optional[str],
           gate: Optional[GateConfig] = None) -> DrivingStack:
    if checkpoint:
        return stack_from_checkpoint(checkpoint, gate=gate)
    model = _config(args.model_config, ModelConfig)
    cfg = StackConfig(model=model, gate=gate or GateConfig(), head=args.head)
    logger.warning('no checkpoint given, using an untrained stack')
    return DrivingStack(cfg, seed=args.seed)


def cmd_gen_scenarios(args) -> int:
    out = args.out or _path(args, 'scenarios')
    seed = args.seed or 0
    _announce(
        'gen-scenarios', {
            'seed': seed,
            'count': args.count,
            'agents': args.agents,
            'lanes': args.lanes,
            'hazard_fraction': args.hazard_fraction
        })
    scenarios = synth_batch(seed,
                            args.count,
                            n_agents=args.agents,
                            n_lanes=args.lanes,
                            hazard_fraction=args.hazard_fraction)
    for _s in scenarios:
        save_scenario(_s, os.path.join(out, f'{_s.id}.json'))
    print(f'{len(scenarios)} scenarios written to {out}')
    return 0


def cmd_gen_drivevqa(args) -> int:
    cfg = _config(args.config,
                  VQAConfig,
                  ticks_per_scenario=args.ticks,
                  subsample=args.subsample,
                  seed=args.seed)
    _announce('gen-drivevqa', to_jsonable(cfg))
    records = gen_drivevqa(_scenarios(args), cfg)
    out = args.out or _path(args, 'vqa', 'drivevqa.jsonl')
    os.makedirs(os.path.dirname(out), exist_ok=True)
    save_records(out, records)
    print(f'{len(records)} DriveVQA records written to {out}')
    return 0


def cmd_gen_reasoningvqa(args) -> int:
    cfg = _config(args.config,
                  VQAConfig,
                  ticks_per_scenario=args.ticks,
                  seed=args.seed)
    _announce('gen-reasoningvqa', to_jsonable(cfg))
    vqa_dir = _path(args, 'vqa')
    os.makedirs(vqa_dir, exist_ok=True)
    prompts_path = os.path.join(vqa_dir, 'reasoningvqa_prompts.jsonl')
    responses = args.responses
    scenarios = _scenarios(args)
    prompts = gen_reasoningvqa_prompts(scenarios, cfg)
    save_records(prompts_path, prompts)
    print(f'{len(prompts)} prompts written to {prompts_path}')
    if args.offline:
        responses = os.path.join(vqa_dir, 'reasoningvqa_responses.jsonl')
        write_responses(responses, prompts, TemplateResponder(scenarios))
    if responses:
        records = ingest_responses(load_prompts(prompts_path), responses)
        out = os.path.join(vqa_dir, 'reasoningvqa.jsonl')
        save_records(out, records)
        print(f'{len(records)} ReasoningVQA records written to {out}')
    return 0


def cmd_pretrain(args) -> int:
    cfg = _config(args.config, PretrainConfig, seed=args.seed)
    stack = _stack(args, None)
    _announce('pretrain', {
        'pretrain': to_jsonable(cfg),
        'stack': to_jsonable(stack.cfg)
    })
    drive = load_drivevqa(args.drivevqa or
                          _path(args, 'vqa', 'drivevqa.jsonl'))
    reasoning_path = args.reasoningvqa or _path(args, 'vqa',
                                                'reasoningvqa.jsonl')
    reasoning = load_reasoningvqa(reasoning_path) \
        if os.path.exists(reasoning_path) else []
    result = pretrain(stack.reasoner, drive, reasoning, cfg, args.progress)
    out = args.out or _path(args, 'ckpt', 'reasoner.gdck')
    os.makedirs(os.path.dirname(out), exist_ok=True)
    sha = stack.save(out,
                     pretrain=to_jsonable(cfg),
                     round1_final=result.round1[-1] if result.round1 else None,
                     round2_final=result.round2[-1] if result.round2 else None)
    print(f'pretrained reasoner written to {out} (sha256 {sha})')
    return 0


def cmd_finetune(args) -> int:
    cfg = _config(args.config,
                  TrainConfig,
                  head=args.head,
                  steps=args.steps,
                  seed=args.seed)
    model = _config(args.model_config, ModelConfig)
    stack = DrivingStack(StackConfig(model=model, head=cfg.head), seed=args.seed)
    _announce('finetune', {
        'train': to_jsonable(cfg),
        'stack': to_jsonable(stack.cfg),
        'pretrained': args.pretrained
    })
    pool = _scenarios(args)
    picked = stratified_sample(pool, min(args.n or len(pool), len(pool)),
                               cfg.seed)
    losses = finetune(stack, picked, cfg, args.pretrained, args.progress)
    out = args.out or _path(args, 'ckpt', 'stack.gdck')
    os.makedirs(os.path.dirname(out), exist_ok=True)
    sha = stack.save(out,
                     train=to_jsonable(cfg),
                     pretrained=args.pretrained,
                     final_loss=losses[-1] if losses else None)
    print(f'fine-tuned stack written to {out} (sha256 {sha})')
    return 0


def _bench_config(args) -> BenchmarkConfig:
    return _config(args.config,
                   BenchmarkConfig,
                   per_type=args.per_type,
                   workers=args.workers,
                   seed=args.seed)


def cmd_select_hard20(args) -> int:
    cfg = _bench_config(args)
    _announce('select-hard20', {
        'benchmark': to_jsonable(cfg),
        'baseline': args.checkpoint
    })
    baseline = _stack(args, args.checkpoint, GateConfig(mode='never'))
    pool = _scenarios(args)
    families = ('open', 'closed') if args.family == 'both' else (args.family,)
    for _f in families:
        manifest = build_hard20(baseline, pool, _f, cfg, progress=args.progress)
        out = _path(args, f'hard20_{_f}.json')
        os.makedirs(args.run_dir, exist_ok=True)
        manifest.save(out)
        print(f'{_f} Hard20: {len(manifest.ids)} scenarios written to {out}')
    return 0


def cmd_run_benchmark(args) -> int:
    cfg = _bench_config(args)
    if args.plots:
        cfg = replace(cfg, plots=args.plots)
    _announce(
        'run-benchmark', {
            'benchmark': to_jsonable(cfg),
            'checkpoint': args.checkpoint,
            'no_pretrain': args.no_pretrain
        })
    variants = {MAIN_VARIANT: _stack(args, args.checkpoint)}
    if args.no_pretrain:
        variants[NO_PRETRAIN_VARIANT] = stack_from_checkpoint(args.no_pretrain)
    manifests = {}
    for _f in ('open', 'closed'):
        path = _path(args, f'hard20_{_f}.json')
        if os.path.exists(path):
            manifests[_f] = Hard20Manifest.load(path)
    pool = _scenarios(args)
    run = run_benchmark(variants,
                        pool,
                        cfg,
                        manifests=manifests,
                        progress=args.progress)
    run.save(args.run_dir)
    files = report(run, _path(args, 'report'), pool, cfg.plots, args.run_dir,
                   args.progress)
    print(f'tables written to {files.tables}')
    return 0


def cmd_report(args) -> int:
    run = BenchmarkRun.load(args.run_dir)
    _announce('report', run.config)
    pool = _scenarios(args) if args.plots == 'all' else []
    files = report(run, args.out or _path(args, 'report'), pool, args.plots,
                   args.run_dir, args.progress)
    print(f'tables written to {files.tables}, {len(files.plots)} plots')
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='guidedplan',
        description='Reasoner-guided planning: data, training, benchmark')
    parser.add_argument('--run-dir',
                        default=default_run_dir(),
                        help='run directory (default: $GUIDEDPLAN_RUN_DIR '
                        'or ./runs)')
    parser.add_argument('--log-level',
                        default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    parser.add_argument('--seed',
                        type=int,
                        help='overrides the seed of the loaded configs')
    parser.add_argument('--progress',
                        action='store_true',
                        help='show progress bars')
    sub = parser.add_subparsers(dest='command', required=True)

    def scenario_arg(p) -> None:
        p.add_argument('--scenarios',
                       help='scenario directory (default: <run-dir>/scenarios)')

    def model_args(p) -> None:
        p.add_argument('--model-config', help='ModelConfig YAML file')
        p.add_argument('--head',
                       default='gmm',
                       choices=['gmm', 'multimodal'],
                       help='planner output head (default: gmm)')

    p = sub.add_parser('gen-scenarios', help='write synthetic scenarios')
    p.add_argument('--count', type=int, default=140)
    p.add_argument('--agents', type=int, default=8)
    p.add_argument('--lanes', type=int, default=2)
    p.add_argument('--hazard-fraction', type=float, default=0.0)
    p.add_argument('--out', help='default: <run-dir>/scenarios')
    p.set_defaults(func=cmd_gen_scenarios)

    p = sub.add_parser('gen-drivevqa', help='build the DriveVQA corpus')
    scenario_arg(p)
    p.add_argument('--config', help='VQAConfig YAML file')
    p.add_argument('--ticks', type=int, help='sampled ticks per scenario')
    p.add_argument('--subsample', type=float, help='kept share of records')
    p.add_argument('--out', help='default: <run-dir>/vqa/drivevqa.jsonl')
    p.set_defaults(func=cmd_gen_drivevqa)

    p = sub.add_parser('gen-reasoningvqa',
                       help='write ReasoningVQA prompts, ingest responses')
    scenario_arg(p)
    p.add_argument('--config', help='VQAConfig YAML file')
    p.add_argument('--ticks', type=int, help='sampled ticks per scenario')
    group = p.add_mutually_exclusive_group()
    group.add_argument('--offline',
                       action='store_true',
                       help='answer with the template responder')
    group.add_argument('--responses', help='JSON-lines replies to ingest')
    p.set_defaults(func=cmd_gen_reasoningvqa)

    p = sub.add_parser('pretrain', help='two-round reasoner pretraining')
    model_args(p)
    p.add_argument('--config', help='PretrainConfig YAML file')
    p.add_argument('--drivevqa', help='default: <run-dir>/vqa/drivevqa.jsonl')
    p.add_argument('--reasoningvqa',
                   help='default: <run-dir>/vqa/reasoningvqa.jsonl')
    p.add_argument('--out', help='default: <run-dir>/ckpt/reasoner.gdck')
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser('finetune', help='fine-tune the whole stack')
    scenario_arg(p)
    model_args(p)
    p.add_argument('--config', help='TrainConfig YAML file')
    p.add_argument('--steps', type=int)
    p.add_argument('--n', type=int, help='scenarios sampled from the pool')
    p.add_argument('--pretrained', help='pretrained reasoner checkpoint')
    p.add_argument('--out', help='default: <run-dir>/ckpt/stack.gdck')
    p.set_defaults(func=cmd_finetune)

    for name, func, text in (('select-hard20', cmd_select_hard20,
                              'build the Hard20 sets'),
                             ('run-benchmark', cmd_run_benchmark,
                              'evaluate on the Hard20 sets')):
        p = sub.add_parser(name, help=text)
        scenario_arg(p)
        model_args(p)
        p.add_argument('--config', help='BenchmarkConfig YAML file')
        p.add_argument('--checkpoint', help='fine-tuned stack checkpoint')
        p.add_argument('--per-type', type=int)
        p.add_argument('--workers', type=int)
        p.set_defaults(func=func)
    p.add_argument('--no-pretrain',
                   help='stack fine-tuned without pretraining, reported '
                   f'as "{NO_PRETRAIN_VARIANT}"')
    p.add_argument('--plots', choices=['none', 'all'])
    sub.choices['select-hard20'].add_argument(
        '--family', default='both', choices=['open', 'closed', 'both'])

    p = sub.add_parser('report', help='tables and plots of a saved run')
    scenario_arg(p)
    p.add_argument('--plots', default='none', choices=['none', 'all'])
    p.add_argument('--out', help='default: <run-dir>/report')
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except GuidedPlanError as e:
        print(f'guidedplan {args.command}: {e}', file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
