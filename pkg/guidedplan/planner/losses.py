"""
Planning losses

Both heads are trained against the mode closest to the expert future.
The Gaussian head pays a negative log-likelihood on that mode plus an L1
on its separate ego trajectory; the multimodal head pays an L1 on that
mode, a cross-entropy that pushes its score up, and an L1 on the
predicted neighbor trajectories. Headings are compared after wrapping
their difference to (-pi, pi].
"""

from __future__ import annotations
from typing import Optional

import numpy as np

from guidedplan.errors import ConfigError, NonFiniteError
from guidedplan.numerics import Tensor, as_tensor, ops
from .model import GMMPrediction, MultiModalPrediction

ALIGNMENTS = ('fde', 'ade')


def select_best_mode(trajectories: np.ndarray,
                     gt: np.ndarray,
                     alignment: str = 'fde') -> int:
    """ Index of the mode closest to the expert future

    Args:
        trajectories: [m, T, >=2] mode positions
        gt: [T, >=2] expert future
        alignment: fde (final point) or ade (mean over the horizon)

    Returns:
        the lowest index among the modes at minimal error
    """

    traj = np.asarray(trajectories, dtype=np.float64)[:, :, :2]
    gt = np.asarray(gt, dtype=np.float64)[:, :2]
    if traj.shape[1] != gt.shape[0]:
        raise ConfigError(
            f'horizon mismatch: modes {traj.shape[1]}, expert {gt.shape[0]}')
    if alignment == 'fde':
        err = np.linalg.norm(traj[:, -1] - gt[-1], axis=1)
    elif alignment == 'ade':
        err = np.linalg.norm(traj - gt[None], axis=2).mean(axis=1)
    else:
        raise ConfigError(f'unknown mode alignment {alignment!r}')
    return int(np.argmin(err))


def _check_finite(**arrays) -> None:
    for _k, _v in arrays.items():
        values = _v.values if isinstance(_v, Tensor) else np.asarray(_v)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError(f'{_k} contains non-finite values')


def nll_loss(mu: Tensor,
             sigma: Tensor,
             log_prob,
             gt: np.ndarray,
             sigma_min: float = 1e-3) -> Tensor:
    """ Negative log-likelihood of the expert positions under one mode

    sum_t [log sx + log sy + ((dx / sx)^2 + (dy / sy)^2) / 2] - log p,
    the 2 pi constants dropped.

    Args:
        mu: [T, 2] means
        sigma: [T, 2] standard deviations
        log_prob: log probability of the mode (scalar)
        gt: [T, 2] expert positions

    Raises:
        NonFiniteError: any input is NaN or infinite
    """

    mu, sigma, log_prob = as_tensor(mu), as_tensor(sigma), as_tensor(log_prob)
    gt = np.asarray(gt, dtype=np.float64)[:, :2]
    _check_finite(mu=mu, sigma=sigma, log_prob=log_prob, gt=gt)
    # the head emits sigma_min + softplus, so the loss is bounded below by
    # 2 T log(sigma_min) - log p
    assert (sigma.values.min() >= sigma_min * (1.0 - 1e-12)), \
        f'sigma {sigma.values.min()} below {sigma_min}'
    z = ops.div(ops.sub(mu, gt), sigma)
    per_tick = ops.add(ops.log(sigma), ops.scale(ops.square(z), 0.5))
    return ops.sub(ops.sum(per_tick), ops.sum(log_prob))


def trajectory_l1(pred: Tensor, gt: np.ndarray) -> Tensor:
    """ L1 over x, y and the wrapped heading difference of [T, 3] """

    gt = np.asarray(gt, dtype=np.float64)
    xy = ops.l1(ops.slice(pred, (slice(None), slice(0, 2))), gt[:, 0:2])
    dh = ops.wrap_angle(ops.sub(ops.slice(pred, (slice(None), 2)), gt[:, 2]))
    return ops.add(xy, ops.sum(ops.abs(dh)))


def gmm_plan_loss(pred: GMMPrediction,
                  gt: np.ndarray,
                  alignment: str = 'fde',
                  sigma_min: float = 1e-3) -> Tensor:
    """ NLL of the best mode plus the L1 of the ego trajectory """

    gt = np.asarray(gt, dtype=np.float64)
    best = select_best_mode(pred.mu.values, gt, alignment)
    nll = nll_loss(ops.slice(pred.mu, best), ops.slice(pred.sigma, best),
                   ops.slice(pred.log_probs, best), gt[:, 0:2], sigma_min)
    return ops.add(nll, trajectory_l1(pred.ego, gt))


def multimodal_plan_loss(pred: MultiModalPrediction,
                         gt: np.ndarray,
                         gt_neighbors: Optional[np.ndarray] = None,
                         neighbor_mask: Optional[np.ndarray] = None,
                         alignment: str = 'fde') -> Tensor:
    """ L1 of the best mode, cross-entropy towards it, and the L1 of the
    observed neighbors' predicted trajectories """

    gt = np.asarray(gt, dtype=np.float64)
    _check_finite(trajectories=pred.trajectories, gt=gt)
    best = select_best_mode(pred.trajectories.values, gt, alignment)
    loss = ops.add(trajectory_l1(ops.slice(pred.trajectories, best), gt),
                   ops.cross_entropy(pred.logits, best))
    if gt_neighbors is None:
        return loss
    mask = np.ones(len(gt_neighbors), dtype=bool) if neighbor_mask is None \
        else np.asarray(neighbor_mask, dtype=bool)
    rows = np.flatnonzero(mask)
    if not len(rows):
        return loss
    return ops.add(
        loss,
        ops.l1(ops.slice(pred.neighbors, rows),
               np.asarray(gt_neighbors, dtype=np.float64)[rows]))


def total_loss(plan_loss: Tensor, aux_loss: Tensor) -> Tensor:
    return ops.add(plan_loss, aux_loss)
