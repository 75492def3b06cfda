"""
The real-time planner

The planner encodes the LocalSceneView with its own map encoder, prepends
m learnable mode queries and runs the gated decoder layers over the
stream. Two heads read the decoded mode rows:

    gmm         per mode a Gaussian sequence (mean, stddev) and a score,
                plus a separate ego trajectory read from the ego row
    multimodal  per mode a trajectory (x, y, heading) and a score, plus
                one trajectory per neighbor read from the neighbor rows

Positions are produced as per-tick displacements and summed over time,
so every trajectory starts at the ego (or neighbor) position.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from guidedplan.config import DT, ModelConfig
from guidedplan.encoders import MapEncoder
from guidedplan.errors import ConfigError
from guidedplan.numerics import LayerNorm, Linear, Module, Tensor, ops
from guidedplan.numerics.modules import param
from guidedplan.reasoner.model import as_guidance_tensor
from guidedplan.scene import LocalSceneView
from .decoder import GatedDecoderLayer

logger = logging.getLogger(__name__)

HEADS = ('gmm', 'multimodal')
# planned steps shorter than this keep the previous heading
STATIONARY_STEP = 1e-3


def cumulative(x: Tensor) -> Tensor:
    """ Running sum over the time axis (second to last) of [..., T, c] """

    t = x.shape[-2]
    perm = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    upper = Tensor(np.triu(np.ones((t, t))))
    return ops.transpose(ops.matmul(ops.transpose(x, perm), upper), perm)


def headings_from_positions(xy: np.ndarray, start: float = 0.0) -> np.ndarray:
    """ Heading of every step of a trajectory [T, 2] that starts at the origin """

    prev = np.vstack([np.zeros((1, 2)), xy[:-1]])
    step = xy - prev
    out = np.zeros(len(xy))
    heading = start
    for _i, (_dx, _dy) in enumerate(step):
        if np.hypot(_dx, _dy) > STATIONARY_STEP:
            heading = float(np.arctan2(_dy, _dx))
        out[_i] = heading
    return out


@dataclass(frozen=True, eq=False)
class GMMPrediction:
    """
    Attributes:
        mu (Tensor): [m, T, 2] means
        sigma (Tensor): [m, T, 2] standard deviations, > sigma_min
        logits (Tensor): [m] mode scores
        log_probs (Tensor): [m] log-softmax of the scores
        ego (Tensor): [T, 3] ego trajectory
    """

    mu: Tensor
    sigma: Tensor
    logits: Tensor
    log_probs: Tensor
    ego: Tensor

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probs.values)

    def mode_positions(self) -> np.ndarray:
        return self.mu.values


@dataclass(frozen=True, eq=False)
class MultiModalPrediction:
    """
    Attributes:
        trajectories (Tensor): [m, T, 3]
        logits (Tensor): [m] mode scores
        log_probs (Tensor): [m]
        neighbors (Tensor): [N_n, T, 2] predicted neighbor positions
    """

    trajectories: Tensor
    logits: Tensor
    log_probs: Tensor
    neighbors: Tensor

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probs.values)

    def mode_positions(self) -> np.ndarray:
        return self.trajectories.values[:, :, :2]


Prediction = Union[GMMPrediction, MultiModalPrediction]


@dataclass(frozen=True)
class PlanOutput:
    """ The chosen ego trajectory, in the frame of the view

    Attributes:
        trajectory (np.ndarray): [T_f, 3] x, y, heading at 10 Hz
        mode (int): index of the chosen mode
        probabilities (np.ndarray): [m] mode probabilities
        first_jump (float): distance of the first point from where the
            current velocity would put the ego after one tick
    """

    trajectory: np.ndarray
    mode: int
    probabilities: np.ndarray
    first_jump: float = 0.0

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.trajectory)))


def plan_from_prediction(pred: Prediction,
                         view: Optional[LocalSceneView] = None) -> PlanOutput:
    probs = pred.probabilities
    mode = int(np.argmax(probs))
    xy = pred.mode_positions()[mode]
    traj = np.zeros((len(xy), 3))
    traj[:, :2] = xy
    traj[:, 2] = headings_from_positions(xy)
    jump = 0.0
    if view is not None and len(xy):
        v = view.s_ego[0, -1, 3:5]
        jump = float(np.linalg.norm(xy[0] - v * DT))
    return PlanOutput(traj, mode, probs, jump)


class Planner(Module):
    """ Map-only trajectory network with optional guidance injection

    Attributes:
        cfg (ModelConfig): widths and counts
        map_encoder (MapEncoder): the planner's encoder, shared with the
            reasoner side when tied
    """

    def __init__(self,
                 cfg: ModelConfig,
                 rng: np.random.Generator,
                 map_encoder: Optional[MapEncoder] = None) -> None:
        d = cfg.d_planner
        t = cfg.future
        self.cfg = cfg
        self.map_encoder = map_encoder if map_encoder is not None else \
            MapEncoder(cfg, rng)
        self.input_proj = Linear(cfg.d_enc, d, rng)
        self.mode_queries = param(rng.normal(0.0, 1.0, size=(cfg.n_modes, d)))
        self.layers = [
            GatedDecoderLayer(d, cfg.d_g, cfg.decoder_heads, rng)
            for _ in range(cfg.decoder_layers)
        ]
        self.final_norm = LayerNorm(d)
        self.score_head = Linear(d, 1, rng)
        self.gmm_head = Linear(d, t * 4, rng)
        self.ego_head = Linear(d, t * 3, rng)
        self.trajectory_head = Linear(d, t * 3, rng)
        self.neighbor_head = Linear(d, t * 2, rng)

    def decode(self, view: LocalSceneView,
               guidance: Optional[Tensor] = None) -> Tensor:
        """ Decoded stream [m + M, D_p]: mode rows, then one row per entity """

        m = self.cfg.n_modes
        tokens = self.input_proj(self.map_encoder(view))
        stream = ops.concat([self.mode_queries, tokens], axis=0)
        keys = np.concatenate(
            [np.ones(m, dtype=bool),
             MapEncoder.entity_mask(view)])
        n = stream.shape[0]
        mask = np.broadcast_to(keys[None, :], (n, n))
        for _layer in self.layers:
            stream = _layer(stream, guidance, mask)
        return self.final_norm(stream)

    def _scores(self, modes: Tensor) -> Tuple[Tensor, Tensor]:
        logits = ops.reshape(self.score_head(modes), (self.cfg.n_modes, ))
        return logits, ops.log_softmax(logits)

    def _gmm(self, stream: Tensor) -> GMMPrediction:
        m, t = self.cfg.n_modes, self.cfg.future
        modes = ops.slice(stream, slice(0, m))
        raw = ops.reshape(self.gmm_head(modes), (m, t, 4))
        mu = cumulative(ops.slice(raw, (slice(None), slice(None), slice(0, 2))))
        sigma = ops.add(
            ops.softplus(ops.slice(raw, (slice(None), slice(None), slice(2, 4)))),
            self.cfg.sigma_min)
        ego_raw = ops.reshape(self.ego_head(ops.slice(stream, m)), (t, 3))
        ego = ops.concat([
            cumulative(ops.slice(ego_raw, (slice(None), slice(0, 2)))),
            ops.slice(ego_raw, (slice(None), slice(2, 3)))
        ], axis=1)
        logits, log_probs = self._scores(modes)
        return GMMPrediction(mu, sigma, logits, log_probs, ego)

    def _multimodal(self, stream: Tensor,
                    view: LocalSceneView) -> MultiModalPrediction:
        m, t = self.cfg.n_modes, self.cfg.future
        n_n = view.s_neighbor.shape[0]
        modes = ops.slice(stream, slice(0, m))
        raw = ops.reshape(self.trajectory_head(modes), (m, t, 3))
        trajectories = ops.concat([
            cumulative(ops.slice(raw, (slice(None), slice(None), slice(0, 2)))),
            ops.slice(raw, (slice(None), slice(None), slice(2, 3)))
        ], axis=2)
        rows = ops.slice(stream, slice(m + 1, m + 1 + n_n))
        steps = ops.reshape(self.neighbor_head(rows), (n_n, t, 2))
        start = np.repeat(view.s_neighbor[:, -1:, 0:2], t, axis=1)
        neighbors = ops.add(cumulative(steps), Tensor(start))
        logits, log_probs = self._scores(modes)
        return MultiModalPrediction(trajectories, logits, log_probs, neighbors)

    def forward(self,
                view: LocalSceneView,
                guidance=None,
                head: str = 'gmm') -> Prediction:
        if head not in HEADS:
            raise ConfigError(f'unknown head {head!r}')
        stream = self.decode(view, as_guidance_tensor(guidance))
        if head == 'gmm':
            return self._gmm(stream)
        return self._multimodal(stream, view)

    def plan(self,
             view: LocalSceneView,
             guidance=None,
             head: str = 'gmm') -> Tuple[PlanOutput, Prediction]:
        pred = self(view, guidance, head)
        out = plan_from_prediction(pred, view)
        if out.first_jump > 0.5:
            logger.debug('tick %d: first planned point %.2f m off the '
                         'current motion', view.tick, out.first_jump)
        return out, pred


def plan(view: LocalSceneView,
         planner: Planner,
         guidance=None,
         head: str = 'gmm') -> Tuple[PlanOutput, Prediction]:
    return planner.plan(view, guidance, head)
