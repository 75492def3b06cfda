"""
Map encoder

Every entity of a LocalSceneView (the ego, the neighbors, the lanes and
the crosswalks) becomes one token: a shared-per-block MLP runs over each
history step or polyline point, the results are mean-pooled per entity,
a block embedding is added, and one self-attention layer mixes the
tokens. Token order is ego, neighbors, lanes, crosswalks, so
M = 1 + N_n + N_l + N_c.

Masked entities produce zero tokens and are excluded as attention keys,
so their raw values never reach the output.
"""

from typing import Tuple

import numpy as np

from guidedplan.config import ModelConfig
from guidedplan.numerics import (LayerNorm, MLP, Module, MultiHeadAttention,
                                 Tensor, ops)
from guidedplan.numerics.modules import param
from guidedplan.scene import LocalSceneView

BLOCKS = ('ego', 'neighbor', 'lane', 'crosswalk')

# per-attribute input scaling, positions are in meters and speeds in m/s
_EGO_SCALE = np.array([50.0, 50.0, 1.0, 10.0, 10.0, 3.0, 3.0])
_NEIGHBOR_SCALE = np.array([50.0, 50.0, 1.0, 10.0, 10.0, 5.0, 2.0, 1.0])
_POINT_SCALE = np.array([50.0, 50.0, 1.0, 15.0])


def _entity_tokens(mlp: MLP, block: np.ndarray, scale: np.ndarray) -> Tensor:
    """ [E, P, d_attr] -> [E, d] by a pointwise MLP and a mean over P """

    e, p, d_attr = block.shape
    x = Tensor((block / scale).reshape(e * p, d_attr))
    h = mlp(x)
    return ops.mean(ops.reshape(h, (e, p, h.shape[-1])), axis=1)


class MapEncoder(Module):
    """ LocalSceneView -> pre-adapter map feature [M, D_enc] """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        d = cfg.d_enc
        self.d = d
        self.ego_mlp = MLP(7, d, d, rng)
        self.neighbor_mlp = MLP(8, d, d, rng)
        self.lane_mlp = MLP(4, d, d, rng)
        self.crosswalk_mlp = MLP(4, d, d, rng)
        self.block_embedding = param(rng.normal(0.0, 0.02, size=(4, d)))
        self.norm1 = LayerNorm(d)
        self.attention = MultiHeadAttention(d, cfg.encoder_heads, rng)
        self.norm2 = LayerNorm(d)
        self.ffn = MLP(d, 2 * d, d, rng)

    @staticmethod
    def entity_mask(view: LocalSceneView) -> np.ndarray:
        return np.concatenate([
            view.ego_mask, view.neighbor_mask, view.lane_mask,
            view.crosswalk_mask
        ]).astype(bool)

    def _raw_tokens(self, view: LocalSceneView) -> Tuple[Tensor, np.ndarray]:
        parts = [
            _entity_tokens(self.ego_mlp, view.s_ego, _EGO_SCALE),
            _entity_tokens(self.neighbor_mlp, view.s_neighbor,
                           _NEIGHBOR_SCALE),
            _entity_tokens(self.lane_mlp, view.m_lane, _POINT_SCALE),
            _entity_tokens(self.crosswalk_mlp, view.m_crosswalk,
                           _POINT_SCALE),
        ]
        block_ids = np.concatenate(
            [np.full(_p.shape[0], _i) for _i, _p in enumerate(parts)])
        x = ops.add(ops.concat(parts, axis=0),
                    ops.take_rows(self.block_embedding, block_ids))
        mask = self.entity_mask(view)
        return ops.masked_fill(x, ~mask[:, None], 0.0), mask

    def forward(self, view: LocalSceneView) -> Tensor:
        x, mask = self._raw_tokens(view)
        m = x.shape[0]
        # every query may attend to the live entities only
        attend = np.broadcast_to(mask[None, :], (m, m))
        if not mask.any():
            attend = np.ones((m, m), dtype=bool)
        h = self.norm1(x)
        x = ops.add(x, self.attention(h, h, h, mask=attend))
        x = ops.add(x, self.ffn(self.norm2(x)))
        return ops.masked_fill(x, ~mask[:, None], 0.0)


def map_adapter(cfg: ModelConfig, rng: np.random.Generator) -> MLP:
    """ Two-layer MLP D_enc -> D_llm """

    return MLP(cfg.d_enc, cfg.d_llm, cfg.d_llm, rng)
