"""
Interfaces for users

DrivingStack bundles the encoders, the reasoner, the planner and the
CAI-Gate behind the three calls the simulator makes (observe, guidance,
plan) and the per-sample loss the fine-tuning loop needs.

    stack = DrivingStack(StackConfig(), seed=0)
    trace = run(stack, scenario)
"""

from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np

from guidedplan.config import (COMPONENTS, GateConfig, ModelConfig, from_dict,
                               replace, to_jsonable)
from guidedplan.encoders import (Aggregator3D, ImageDescriptors,
                                 ImageFeaturizer, MapEncoder,
                                 PositionalEncoder3D, img_adapter, map_adapter,
                                 rasterize, select_views)
from guidedplan.errors import ConfigError
from guidedplan.gate import CAIGate, LearnedGrader
from guidedplan.numerics import Module, Tensor, load_checkpoint, save_checkpoint
from guidedplan.planner import (HEADS, Planner, PlanOutput, TrainingSample,
                                gmm_plan_loss, multimodal_plan_loss,
                                total_loss)
from guidedplan.planner.model import Prediction
from guidedplan.reasoner import (SYSTEM_MESSAGE, GuidanceVector, Reasoner,
                                 aux_loss, assemble_prompt)
from guidedplan.reasoner.model import HiddenStates
from guidedplan.scene import (CameraRig, LaneGraph, LocalSceneView, Scenario,
                              route_instruction, to_ego_frame)
from guidedplan.sim.simulator import Observation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StackConfig:
    """
    Attributes:
        model (ModelConfig): network widths and counts
        gate (GateConfig): reasoner scheduling
        head (str): gmm | multimodal
    """

    model: ModelConfig = ModelConfig()
    gate: GateConfig = GateConfig()
    head: str = 'gmm'

    def __post_init__(self) -> None:
        if self.head not in HEADS:
            raise ConfigError(f'unknown head {self.head!r}')


@dataclass(frozen=True, eq=False)
class LossTerms:
    plan: Tensor
    aux: Tensor
    total: Tensor


class Encoders(Module):
    """ Map and camera inputs to reasoner prompt tokens of width D_llm """

    def __init__(self,
                 cfg: ModelConfig,
                 rng: np.random.Generator,
                 map_encoder: Optional[MapEncoder] = None) -> None:
        self.map_encoder = map_encoder if map_encoder is not None else \
            MapEncoder(cfg, rng)
        self.map_adapter = map_adapter(cfg, rng)
        self.featurizer = ImageFeaturizer(cfg, rng)
        self.positional = PositionalEncoder3D(cfg, rng)
        self.aggregator = Aggregator3D(cfg, rng)
        self.img_adapter = img_adapter(cfg, rng)

    def map_tokens(self, view: LocalSceneView) -> Tensor:
        """ [M, D_llm] """

        return self.map_adapter(self.map_encoder(view))

    def image_tokens(self, desc: ImageDescriptors, rig: CameraRig) -> Tensor:
        """ [n_ref, D_llm] """

        volume = self.featurizer(desc)
        return self.img_adapter(self.aggregator(volume.feats,
                                                self.positional(rig)))


class DrivingStack(Module):
    """ The hybrid planner

    Attributes:
        cfg (StackConfig): model, gate and head
        encoders (Encoders): reasoner-side encoders and adapters
        reasoner (Reasoner): slow network producing the guidance
        planner (Planner): real-time network, sharing the map encoder
            with <encoders> when tie_map_encoder is set
        gate (CAIGate): decides when the reasoner runs
    """

    def __init__(self,
                 cfg: Optional[StackConfig] = None,
                 seed: Optional[int] = None,
                 grader: Optional[LearnedGrader] = None) -> None:
        cfg = cfg or StackConfig()
        model = cfg.model
        rng = np.random.default_rng(model.seed if seed is None else seed)
        self.cfg = cfg
        self.encoders = Encoders(model, rng)
        self.reasoner = Reasoner(model, rng)
        shared = self.encoders.map_encoder if model.tie_map_encoder else None
        self.planner = Planner(model, rng, map_encoder=shared)
        self.gate = CAIGate(cfg.gate, grader)

    @property
    def model_cfg(self) -> ModelConfig:
        return self.cfg.model

    @property
    def history(self) -> int:
        return self.cfg.model.history

    @property
    def head(self) -> str:
        return self.cfg.head

    def parameters(self, prefix: str = '') -> Dict[str, Tensor]:
        """ Every parameter once; a tied tensor keeps its first name """

        seen = set()
        out: Dict[str, Tensor] = {}
        for _k, _p in super().parameters(prefix).items():
            if id(_p) in seen:
                continue
            seen.add(id(_p))
            out[_k] = _p
        return out

    def component_parameters(self, name: str) -> Dict[str, Tensor]:
        if name not in COMPONENTS:
            raise ConfigError(f'unknown component {name!r}')
        return getattr(self, name).parameters(prefix=f'{name}.')

    def trainable_parameters(self,
                             freeze: Iterable[str] = ()) -> Dict[str, Tensor]:
        """ Parameters of the components not in <freeze>

        A tensor shared by several components is frozen as soon as one of
        its owners is.
        """

        frozen = set()
        for _c in freeze:
            frozen.update(id(_p) for _p in self.component_parameters(_c).values())
        return {
            _k: _p
            for _k, _p in self.parameters().items() if id(_p) not in frozen
        }

    # simulation

    def rig(self, scenario: Scenario) -> CameraRig:
        return select_views(scenario.camera_rig, self.cfg.model.n_views)

    def describe(self, scenario: Scenario, tick: int) -> ImageDescriptors:
        m = self.cfg.model
        return rasterize(scenario, tick, self.rig(scenario),
                         grid=(m.grid_h, m.grid_w))

    def observe(self, scenario: Scenario, tick: int,
                graph: Optional[LaneGraph] = None) -> Observation:
        m = self.cfg.model
        view = to_ego_frame(scenario, tick, m.limits, history=m.history,
                            future=0)
        return Observation(scenario, tick, view, graph,
                           lambda: self.describe(scenario, tick))

    def reason(self, view: LocalSceneView, desc: ImageDescriptors,
               rig: CameraRig, nav_text: str) -> HiddenStates:
        """ Reasoner hidden states over the assembled prompt """

        prompt = assemble_prompt(self.reasoner.tokenizer, SYSTEM_MESSAGE,
                                 self.encoders.map_tokens(view),
                                 self.encoders.image_tokens(desc, rig),
                                 nav_text)
        return self.reasoner(prompt)

    def nav_text(self, scenario: Scenario, view: LocalSceneView) -> str:
        return route_instruction(scenario, view.pose, view.ego_speed,
                                 self.cfg.model.future / 10.0)

    def guidance(self, obs: Observation,
                 grade: Optional[int] = None) -> GuidanceVector:
        desc = obs.descriptors
        if desc is None:
            desc = self.describe(obs.scenario, obs.tick)
        hidden = self.reason(obs.view, desc, self.rig(obs.scenario),
                             self.nav_text(obs.scenario, obs.view))
        return GuidanceVector.snapshot(self.reasoner.guidance(hidden),
                                       obs.tick, grade)

    def plan(self, obs: Observation,
             guidance: Optional[GuidanceVector] = None) -> PlanOutput:
        out, _ = self.planner.plan(obs.view, guidance, self.cfg.head)
        return out

    # training

    def plan_loss(self, pred: Prediction, view: LocalSceneView,
                  head: str) -> Tensor:
        m = self.cfg.model
        if head == 'gmm':
            return gmm_plan_loss(pred, view.future_gt, m.mode_alignment,
                                 m.sigma_min)
        return multimodal_plan_loss(pred, view.future_gt,
                                    view.future_neighbors,
                                    view.future_neighbor_mask,
                                    m.mode_alignment)

    def sample_loss(self,
                    sample: TrainingSample,
                    head: Optional[str] = None,
                    use_guidance: bool = True) -> LossTerms:
        """ Planning plus auxiliary loss of one sample

        The auxiliary heads read the reasoner's last hidden state, so their
        gradients reach the reasoner and its encoders but not the planner.
        """

        head = head or self.cfg.head
        hidden = self.reason(sample.view, sample.descriptors,
                             self.rig(sample.scenario), sample.nav_text)
        guidance = self.reasoner.guidance(hidden) if use_guidance else None
        pred = self.planner(sample.view, guidance, head)
        plan = self.plan_loss(pred, sample.view, head)
        aux = aux_loss(self.reasoner.aux(hidden.last), sample.aux_labels)
        return LossTerms(plan, aux, total_loss(plan, aux))

    # checkpoints

    def save(self, path: str, **meta) -> str:
        """ Write all parameters and the stack configuration; returns the
        sha256 of the file """

        meta.setdefault('stack', to_jsonable(self.cfg))
        return save_checkpoint(path, self.state_dict(), meta)

    def load(self, path: str, strict: bool = True) -> Dict[str, object]:
        state, meta = load_checkpoint(path)
        self.load_state_dict(state, strict=strict)
        logger.info('loaded %d tensors from %s', len(state), path)
        return meta

    def load_component(self, path: str, name: str) -> None:
        """ Load only the <name> tensors of a checkpoint, e.g. a pretrained
        reasoner into a fresh stack """

        if name not in COMPONENTS:
            raise ConfigError(f'unknown component {name!r}')
        state, _ = load_checkpoint(path)
        part = {_k: _v for _k, _v in state.items() if _k.startswith(f'{name}.')}
        if not part:
            raise ConfigError(f'{path}: no {name} tensors')
        self.load_state_dict(part, strict=False)
        logger.info('loaded %d %s tensors from %s', len(part), name, path)


def stack_from_checkpoint(path: str,
                          cfg: Optional[StackConfig] = None,
                          gate: Optional[GateConfig] = None) -> DrivingStack:
    """ Rebuild a stack from a checkpoint

    Without <cfg> the configuration stored in the checkpoint is used;
    <gate> replaces its gate settings.
    """

    if cfg is None:
        _, meta = load_checkpoint(path)
        stored = meta.get('stack')
        cfg = from_dict(StackConfig, stored) if stored else StackConfig()
    if gate is not None:
        cfg = replace(cfg, gate=gate)
    stack = DrivingStack(cfg)
    stack.load(path)
    return stack
