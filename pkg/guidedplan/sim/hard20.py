"""
Hard20 benchmark selection

Per scenario type the <per_type> lowest baseline scores are kept, ties
broken by ascending scenario id. The manifest stores the ids with the hash
of the configuration that produced the baseline scores.
"""

from __future__ import annotations
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

from guidedplan.errors import ConfigError, ScenarioParseError
from guidedplan.scene import SCENARIO_TYPES

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = 'gdh20'


def select_hard20(scores: Mapping[str, float],
                  types: Mapping[str, str],
                  per_type: int = 20) -> List[str]:
    """ The hardest <per_type> scenario ids of every type present

    Args:
        scores: baseline aggregate score by scenario id
        types: scenario type by scenario id

    Returns:
        ids grouped by type in type order, hardest first within a type

    Raises:
        ConfigError: a type has fewer than <per_type> scored scenarios
    """

    groups: Dict[str, List[Tuple[float, str]]] = {}
    for _id, _score in scores.items():
        if _id not in types:
            raise ConfigError(f'scenario {_id} has no type')
        groups.setdefault(types[_id], []).append((float(_score), _id))
    out: List[str] = []
    order = [_t for _t in SCENARIO_TYPES if _t in groups] + sorted(
        set(groups) - set(SCENARIO_TYPES))
    for _type in order:
        ranked = sorted(groups[_type])
        if len(ranked) < per_type:
            raise ConfigError(f'{_type}: {len(ranked)} scenarios, at least '
                              f'{per_type} needed')
        out.extend(_id for _, _id in ranked[:per_type])
    logger.info('hard20: %d ids over %d types', len(out), len(order))
    return out


@dataclass(frozen=True)
class Hard20Manifest:

    ids: Tuple[str, ...]
    config_hash: str
    per_type: int = 20

    def dumps(self) -> str:
        return json.dumps(
            {
                'schema': MANIFEST_SCHEMA,
                'config_hash': self.config_hash,
                'per_type': self.per_type,
                'ids': list(self.ids),
            },
            indent=1)

    @classmethod
    def loads(cls, text: str) -> 'Hard20Manifest':
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ScenarioParseError(f'bad manifest: {e.msg}', line=e.lineno) \
                from e
        if data.get('schema') != MANIFEST_SCHEMA:
            raise ScenarioParseError('not a hard20 manifest', field='schema')
        return cls(tuple(data['ids']), data['config_hash'],
                   int(data.get('per_type', 20)))

    def save(self, path: str) -> None:
        with open(path, 'w') as w:
            w.write(self.dumps())

    @classmethod
    def load(cls, path: str) -> 'Hard20Manifest':
        with open(path, 'r') as r:
            return cls.loads(r.read())
