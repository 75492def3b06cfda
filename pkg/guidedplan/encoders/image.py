"""
Synthetic multi-view image features and the 3D-aware aggregator

The frozen image backbone is replaced by a deterministic rasterizer. Each
camera sees the scene on a coarse feature grid; every cell records what
the nearest object behind it is (vehicle, pedestrian, bicycle, static
obstacle or lane surface), how far away it is and how fast it moves
relative to the ego. A learned linear lift turns these descriptors into
C channels; cells that see nothing get a learned background vector.

Static obstacles are only ever visible here, never in the map tokens.

The aggregator reduces the N_view x H'W' cells to N learned reference
queries by cross-attention, keys carrying the 3D positional encoding.
"""

from __future__ import annotations
import hashlib
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from guidedplan.config import ModelConfig
from guidedplan.errors import ConfigError, ShapeError
from guidedplan.numerics import (LayerNorm, Linear, MLP, Module,
                                 MultiHeadAttention, Tensor, ops)
from guidedplan.numerics.modules import param
from guidedplan.scene import CameraRig, Scenario
from guidedplan.scene.geometry import box_corners, rotate_vectors, to_local
from .camera import cell_centers, check_camera, project

DESCRIPTOR_CLASSES = ('vehicle', 'pedestrian', 'bicycle', 'obstacle', 'lane')
DESCRIPTOR_DIM = len(DESCRIPTOR_CLASSES) + 3
MAX_DEPTH = 60.0
MIN_DEPTH = 0.1
BOX_HEIGHT = {'vehicle': 1.6, 'pedestrian': 1.8, 'bicycle': 1.5,
              'obstacle': 1.0}
VELOCITY_SCALE = 10.0


@dataclass(frozen=True, eq=False)
class ImageDescriptors:
    """ Raw rasterization of one tick

    Attributes:
        values (np.ndarray): [N_view, H'W', 8] class one-hot (5), normalized
            depth, relative velocity (longitudinal, lateral) / 10
        occupied (np.ndarray): [N_view, H'W'] True where a cell sees something
        pixel_centers (np.ndarray): [N_view, H'W', 2]
        grid (Tuple[int, int]): (H', W')
    """

    values: np.ndarray
    occupied: np.ndarray
    pixel_centers: np.ndarray
    grid: Tuple[int, int]

    @property
    def n_views(self) -> int:
        return int(self.values.shape[0])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.values, dtype='<f8').tobytes())
        h.update(self.occupied.tobytes())
        return h.hexdigest()

    def front_grid(self, view: int = 0) -> np.ndarray:
        """ One view as a [8, H', W'] channel-first grid """

        gh, gw = self.grid
        return self.values[view].reshape(gh, gw, -1).transpose(2, 0, 1)

    @classmethod
    def empty(cls, n_views: int, grid: Tuple[int, int],
              pixel_centers: Optional[np.ndarray] = None) -> 'ImageDescriptors':
        hw = grid[0] * grid[1]
        if pixel_centers is None:
            pixel_centers = np.zeros((n_views, hw, 2))
        return cls(np.zeros((n_views, hw, DESCRIPTOR_DIM)),
                   np.zeros((n_views, hw), dtype=bool), pixel_centers, grid)


@dataclass(frozen=True, eq=False)
class ImageFeatureVolume:
    """ feats [N_view, H'W', C] with the descriptors it was lifted from """

    feats: Tensor
    descriptors: ImageDescriptors

    @property
    def view_index(self) -> np.ndarray:
        v, hw = self.descriptors.occupied.shape
        return np.repeat(np.arange(v), hw)


def _scene_objects(scenario: Scenario, tick: int,
                   pose: Tuple[float, float, float],
                   ego_velocity: np.ndarray) -> List[Tuple[str, np.ndarray, np.ndarray]]:
    """ (class, ego-frame points [K, 3], relative velocity [2]) per object """

    origin = np.array(pose[:2])
    out = []

    def box_points(x, y, heading, length, width, height):
        corners = to_local(box_corners(x, y, heading, length, width), origin,
                           pose[2])
        center = to_local(np.array([[x, y]]), origin, pose[2])
        flat = np.concatenate([corners, center], axis=0)
        low = np.concatenate([flat, np.zeros((len(flat), 1))], axis=1)
        high = np.concatenate([flat, np.full((len(flat), 1), height)], axis=1)
        return np.concatenate([low, high], axis=0)

    for _a in sorted(scenario.agents, key=lambda _: _.id):
        if not _a.valid[tick]:
            continue
        st = _a.states[tick]
        rel = rotate_vectors(st[3:5] - ego_velocity, -pose[2])
        out.append((_a.agent_class,
                    box_points(st[0], st[1], st[2], _a.length, _a.width,
                               BOX_HEIGHT[_a.agent_class]), rel))
    for _o in sorted(scenario.obstacles, key=lambda _: _.id):
        rel = rotate_vectors(-ego_velocity, -pose[2])
        out.append(('obstacle',
                    box_points(_o.x, _o.y, _o.heading, _o.length, _o.width,
                               BOX_HEIGHT['obstacle']), rel))
    return out


def rasterize(scenario: Scenario,
              tick: int,
              rig: CameraRig,
              grid: Tuple[int, int] = (8, 8),
              pose: Optional[Tuple[float, float, float]] = None,
              include_lanes: bool = True) -> ImageDescriptors:
    """ Deterministic per-cell descriptors of the scene at <tick>

    Objects are splatted as the pixel rectangle spanned by their projected
    box corners; lane centerline points mark single cells. Each cell keeps
    the nearest thing it sees.

    Args:
        pose: ego pose (x, y, heading) to render from, the logged ego pose
            at <tick> by default
    """

    gh, gw = grid
    ego = scenario.ego.states[tick]
    if pose is None:
        pose = (float(ego[0]), float(ego[1]), float(ego[2]))
    ego_velocity = np.asarray(ego[3:5], dtype=np.float64)
    objects = _scene_objects(scenario, tick, pose, ego_velocity)

    lane_points = np.zeros((0, 3))
    if include_lanes:
        origin = np.array(pose[:2])
        flat = np.concatenate([
            to_local(_l.centerline[:, :2], origin, pose[2])
            for _l in sorted(scenario.lanes, key=lambda _: _.id)
        ], axis=0)
        lane_points = np.concatenate([flat, np.zeros((len(flat), 1))], axis=1)

    n_views = len(rig)
    values = np.zeros((n_views, gh * gw, DESCRIPTOR_DIM))
    occupied = np.zeros((n_views, gh * gw), dtype=bool)
    centers = np.zeros((n_views, gh * gw, 2))
    for _v, _cam in enumerate(rig):
        check_camera(_cam)
        centers[_v] = cell_centers(_cam, gh, gw)
        zbuf = np.full((gh, gw), np.inf)
        cell_w = _cam.width / gw
        cell_h = _cam.height / gh

        def write(i0, i1, j0, j1, depth, cls, rel):
            for _i in range(i0, i1 + 1):
                for _j in range(j0, j1 + 1):
                    if depth >= zbuf[_i, _j]:
                        continue
                    zbuf[_i, _j] = depth
                    row = np.zeros(DESCRIPTOR_DIM)
                    row[DESCRIPTOR_CLASSES.index(cls)] = 1.0
                    row[5] = depth / MAX_DEPTH
                    row[6:8] = rel / VELOCITY_SCALE
                    values[_v, _i * gw + _j] = row
                    occupied[_v, _i * gw + _j] = True

        for _cls, _pts, _rel in objects:
            u, v, d = project(_cam, _pts)
            front = (d > MIN_DEPTH) & (d < MAX_DEPTH)
            if not front.any():
                continue
            u, v, d = u[front], v[front], d[front]
            j0 = int(np.floor(u.min() / cell_w))
            j1 = int(np.floor(u.max() / cell_w))
            i0 = int(np.floor(v.min() / cell_h))
            i1 = int(np.floor(v.max() / cell_h))
            if j1 < 0 or i1 < 0 or j0 >= gw or i0 >= gh:
                continue
            write(max(i0, 0), min(i1, gh - 1), max(j0, 0), min(j1, gw - 1),
                  float(d.min()), _cls, _rel)

        if len(lane_points):
            u, v, d = project(_cam, lane_points)
            for _u, _vv, _d in zip(u, v, d):
                if not MIN_DEPTH < _d < MAX_DEPTH:
                    continue
                j, i = int(np.floor(_u / cell_w)), int(np.floor(_vv / cell_h))
                if 0 <= i < gh and 0 <= j < gw:
                    write(i, i, j, j, float(_d), 'lane',
                          rotate_vectors(-ego_velocity, -pose[2]))
    return ImageDescriptors(values, occupied, centers, (gh, gw))


class ImageFeaturizer(Module):
    """ Linear lift of the descriptors to C channels plus a background """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        self.grid = (cfg.grid_h, cfg.grid_w)
        self.lift = Linear(DESCRIPTOR_DIM, cfg.image_channels, rng)
        self.background = param(rng.normal(0.0, 0.02,
                                           size=cfg.image_channels))

    def forward(self, desc: ImageDescriptors) -> ImageFeatureVolume:
        lifted = self.lift(Tensor(desc.values))
        empty = np.broadcast_to(~desc.occupied[:, :, None], lifted.shape)
        feats = ops.add(ops.masked_fill(lifted, empty, 0.0),
                        ops.mul(Tensor(empty.astype(np.float64)),
                                self.background))
        return ImageFeatureVolume(feats, desc)


def synth_image_features(scenario: Scenario,
                         tick: int,
                         rig: CameraRig,
                         featurizer: ImageFeaturizer,
                         pose: Optional[Tuple[float, float, float]] = None
                         ) -> ImageFeatureVolume:
    return featurizer(rasterize(scenario, tick, rig, featurizer.grid, pose))


class RefQueries(Module):
    """ Learnable reference points in [0, 1]^3 and their query MLP """

    def __init__(self, n: int, channels: int,
                 rng: np.random.Generator) -> None:
        self.ref_points = param(rng.uniform(0.0, 1.0, size=(n, 3)))
        self.mlp = MLP(3, channels, channels, rng)

    def forward(self) -> Tensor:
        return self.mlp(self.ref_points)

    def after_step(self) -> None:
        np.clip(self.ref_points.values, 0.0, 1.0,
                out=self.ref_points.values)


class _CrossBlock(Module):

    def __init__(self, c: int, heads: int, rng: np.random.Generator) -> None:
        self.norm_q = LayerNorm(c)
        self.attention = MultiHeadAttention(c, heads, rng)
        self.norm_ffn = LayerNorm(c)
        self.ffn = MLP(c, 2 * c, c, rng)

    def forward(self, q: Tensor, keys: Tensor, values: Tensor) -> Tensor:
        q = ops.add(q, self.attention(self.norm_q(q), keys, values))
        return ops.add(q, self.ffn(self.norm_ffn(q)))


class Aggregator3D(Module):
    """ Reference queries attend over (feats + p3d) keys with feats values

    P_3D is added to the keys only.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        if cfg.n_ref_queries >= cfg.n_views * cfg.grid_h * cfg.grid_w:
            raise ConfigError(
                f'{cfg.n_ref_queries} reference queries do not reduce '
                f'{cfg.n_views} x {cfg.grid_h * cfg.grid_w} image cells')
        c = cfg.image_channels
        self.channels = c
        self.queries = RefQueries(cfg.n_ref_queries, c, rng)
        self.blocks = [
            _CrossBlock(c, cfg.aggregator_heads, rng)
            for _ in range(cfg.aggregator_depth)
        ]

    def forward(self, feats: Tensor, p3d: Tensor) -> Tensor:
        if feats.shape != p3d.shape or feats.ndim != 3 or \
                feats.shape[-1] != self.channels:
            raise ShapeError(
                f'aggregator: feats {feats.shape} and p3d {p3d.shape}')
        n = feats.shape[0] * feats.shape[1]
        values = ops.reshape(feats, (n, self.channels))
        keys = ops.add(values, ops.reshape(p3d, (n, self.channels)))
        q = self.queries()
        for _b in self.blocks:
            q = _b(q, keys, values)
        return q


def aggregate_3d_aware(feats: Tensor, p3d: Tensor,
                       aggregator: Aggregator3D) -> Tensor:
    return aggregator(feats, p3d)


def img_adapter(cfg: ModelConfig, rng: np.random.Generator) -> MLP:
    """ Two-layer MLP C -> D_llm """

    return MLP(cfg.image_channels, cfg.d_llm, cfg.d_llm, rng)
