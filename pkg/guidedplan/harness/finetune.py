"""
Fine-tuning driver

The fine-tuning set is drawn from a scenario pool with the pool's
scenario-type distribution, then the whole stack trains on supervised
ticks of those scenarios.
"""

from __future__ import annotations
import logging
from collections import Counter
from typing import Dict, List, Optional, Sequence

import numpy as np

from guidedplan.config import TrainConfig
from guidedplan.errors import ConfigError
from guidedplan.interfaces import DrivingStack
from guidedplan.planner import Trainer, make_samples
from guidedplan.scene import SCENARIO_TYPES, Scenario

logger = logging.getLogger(__name__)


def type_quotas(counts: Dict[str, int], n: int) -> Dict[str, int]:
    """ Split <n> over the types proportionally to <counts>

    Largest remainder rounding; ties go to the type listed first in
    SCENARIO_TYPES. No type gets more than it has.
    """

    total = sum(counts.values())
    if n > total:
        raise ConfigError(f'cannot sample {n} of {total} scenarios')
    order = [_t for _t in SCENARIO_TYPES if _t in counts] + sorted(
        set(counts) - set(SCENARIO_TYPES))
    exact = {_t: n * counts[_t] / total for _t in order}
    quotas = {_t: int(np.floor(exact[_t])) for _t in order}
    left = n - sum(quotas.values())
    by_remainder = sorted(order,
                          key=lambda _t: (-(exact[_t] - quotas[_t]),
                                          order.index(_t)))
    for _t in by_remainder[:left]:
        quotas[_t] += 1
    return quotas


def stratified_sample(pool: Sequence[Scenario],
                      n: int,
                      seed: int = 0) -> List[Scenario]:
    """ <n> scenarios of <pool> keeping its type distribution

    The result is ordered by scenario id.
    """

    by_type: Dict[str, List[Scenario]] = {}
    for _s in sorted(pool, key=lambda _s: _s.id):
        by_type.setdefault(_s.scenario_type, []).append(_s)
    quotas = type_quotas({_t: len(_v) for _t, _v in by_type.items()}, n)
    rng = np.random.default_rng(seed)
    out: List[Scenario] = []
    for _t, _q in quotas.items():
        members = by_type[_t]
        idx = rng.choice(len(members), size=_q, replace=False)
        out.extend(members[_i] for _i in idx)
    logger.info('stratified sample: %d scenarios over %d types', len(out),
                len([_q for _q in quotas.values() if _q]))
    return sorted(out, key=lambda _s: _s.id)


def type_counts(scenarios: Sequence[Scenario]) -> Dict[str, int]:
    return dict(Counter(_s.scenario_type for _s in scenarios))


def finetune(stack: DrivingStack,
             scenarios: Sequence[Scenario],
             cfg: Optional[TrainConfig] = None,
             pretrained: Optional[str] = None,
             progress: bool = False) -> List[float]:
    """ Train <stack> in place on ticks of <scenarios>

    Args:
        pretrained: reasoner checkpoint to start from, if any

    Returns:
        the loss of every step
    """

    cfg = cfg or TrainConfig(head=stack.cfg.head)
    if pretrained is not None:
        stack.load_component(pretrained, 'reasoner')
    samples = make_samples(scenarios, stack.cfg.model, cfg.ticks_per_scenario,
                           cfg.seed)
    trainer = Trainer(stack, cfg)
    return trainer.fit(samples, progress=progress)
