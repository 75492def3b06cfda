"""
Pinhole camera geometry and the 3D positional encoding

Camera poses are given in the ego frame (x forward, y left, z up). The
optical frame has Z along the viewing direction, X to the right of the
image and Y down, so for a camera with yaw psi:

    Z_c = ( cos psi,  sin psi, 0)
    X_c = ( sin psi, -cos psi, 0)
    Y_c = (0, 0, -1)

The positional encoding unprojects the center of every feature-grid cell
at a set of depths, normalizes the ego-frame points by the scene bounds
and runs the flattened (bins x 3) coordinates through a shared MLP.
"""

import math
from typing import Sequence, Tuple

import numpy as np

from guidedplan.config import ModelConfig
from guidedplan.errors import CameraError
from guidedplan.numerics import MLP, Module, Tensor
from guidedplan.scene import Camera, CameraRig


def check_camera(cam: Camera) -> None:
    if not (cam.fx > 0 and cam.fy > 0) or not all(
            math.isfinite(_) for _ in (cam.fx, cam.fy, cam.cx, cam.cy)):
        raise CameraError(
            f'camera {cam.name}: degenerate intrinsics fx={cam.fx} fy={cam.fy}')
    if cam.height <= 0 or cam.width <= 0:
        raise CameraError(f'camera {cam.name}: empty image size')


def select_views(rig: CameraRig, n_views: int) -> CameraRig:
    """ The first <n_views> cameras of <rig>

    Raises:
        CameraError: the rig has fewer cameras
    """

    if len(rig) < n_views:
        raise CameraError(f'rig has {len(rig)} cameras, {n_views} needed')
    return CameraRig(rig.cameras[:n_views])


def optical_to_ego(cam: Camera) -> np.ndarray:
    """ Rotation [3, 3] whose columns are the optical axes in the ego frame """

    c, s = math.cos(cam.yaw), math.sin(cam.yaw)
    return np.array([[s, 0.0, c], [-c, 0.0, s], [0.0, -1.0, 0.0]])


def unproject(cam: Camera, u: np.ndarray, v: np.ndarray,
              depth: np.ndarray) -> np.ndarray:
    """ Ego-frame points [..., 3] of pixels (u, v) at optical depth <depth>

    Raises:
        CameraError: degenerate intrinsics
    """

    check_camera(cam)
    u, v, depth = np.broadcast_arrays(np.asarray(u, dtype=np.float64),
                                      np.asarray(v, dtype=np.float64),
                                      np.asarray(depth, dtype=np.float64))
    ray = np.stack([(u - cam.cx) / cam.fx * depth,
                    (v - cam.cy) / cam.fy * depth, depth],
                   axis=-1)
    return ray @ optical_to_ego(cam).T + np.array([cam.x, cam.y, cam.z])


def project(cam: Camera,
            points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ Pixel coordinates (u, v) and optical depth of ego-frame points [..., 3] """

    check_camera(cam)
    p = (np.asarray(points, dtype=np.float64) -
         np.array([cam.x, cam.y, cam.z])) @ optical_to_ego(cam)
    depth = p[..., 2]
    safe = np.where(np.abs(depth) < 1e-9, 1e-9, depth)
    u = cam.fx * p[..., 0] / safe + cam.cx
    v = cam.fy * p[..., 1] / safe + cam.cy
    return u, v, depth


def cell_centers(cam: Camera, grid_h: int, grid_w: int) -> np.ndarray:
    """ Pixel centers [grid_h * grid_w, 2] of the feature grid, row-major """

    us = (np.arange(grid_w) + 0.5) * cam.width / grid_w
    vs = (np.arange(grid_h) + 0.5) * cam.height / grid_h
    uu, vv = np.meshgrid(us, vs)
    return np.stack([uu.reshape(-1), vv.reshape(-1)], axis=1)


def unproject_grid(rig: CameraRig, grid_h: int, grid_w: int,
                   depth_bins: Sequence[float]) -> np.ndarray:
    """ Ego-frame points [N_view, H'W', n_bins, 3] of every cell at every depth """

    if len(depth_bins) < 2:
        raise CameraError(f'need at least 2 depth bins, got {len(depth_bins)}')
    bins = np.asarray(depth_bins, dtype=np.float64)
    out = []
    for _cam in rig:
        px = cell_centers(_cam, grid_h, grid_w)
        out.append(
            unproject(_cam, px[:, 0:1], px[:, 1:2], bins[None, :]))
    return np.stack(out, axis=0)


def normalize_points(points: np.ndarray,
                     bounds: Sequence[Tuple[float, float]]) -> np.ndarray:
    lo = np.array([_b[0] for _b in bounds])
    hi = np.array([_b[1] for _b in bounds])
    return (points - lo) / (hi - lo)


class PositionalEncoder3D(Module):
    """ Shared two-layer MLP from (bins x 3) normalized coordinates to C """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        self.depth_bins = tuple(cfg.depth_bins)
        self.bounds = tuple(cfg.scene_bounds)
        self.grid = (cfg.grid_h, cfg.grid_w)
        d_in = 3 * len(self.depth_bins)
        self.mlp = MLP(d_in, cfg.image_channels, cfg.image_channels, rng)

    def coordinates(self, rig: CameraRig) -> np.ndarray:
        pts = unproject_grid(rig, self.grid[0], self.grid[1], self.depth_bins)
        norm = normalize_points(pts, self.bounds)
        v, hw = norm.shape[:2]
        return norm.reshape(v, hw, -1)

    def forward(self, rig: CameraRig) -> Tensor:
        """ PositionalVolume p3d [N_view, H'W', C] """

        return self.mlp(Tensor(self.coordinates(rig)))


def build_3d_positional_encoding(rig: CameraRig,
                                 encoder: PositionalEncoder3D) -> Tensor:
    return encoder(rig)
