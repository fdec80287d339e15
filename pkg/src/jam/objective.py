"""Gaussian-mixture likelihood objective with best-mode selection.

The regression term charges only the mode indicated by (ground-truth
category, best in-category mode); the score term is a cross-entropy against
that same index, so every score logit receives gradient while non-selected
trajectory heads receive exactly none.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class ModeAssignment:
    y_gt: np.ndarray     # ground-truth category per agent (stage 1) or zeros (stage 2)
    k_star: np.ndarray   # selected flat mode index


@dataclass
class LossBreakdown:
    nll1: float
    ce1: float
    nll2: float
    ce2: float

    @property
    def total(self) -> float:
        return self.nll1 + self.ce1 + self.nll2 + self.ce2

    def row(self) -> dict:
        return {"nll1": self.nll1, "ce1": self.ce1, "nll2": self.nll2,
                "ce2": self.ce2, "total": self.total}


def select_best_mode(means: np.ndarray, gt: np.ndarray, scope: str = "marginal") -> int:
    """Index minimizing displacement against ground truth; ties pick the lowest index.

    marginal: means [M, T, 2] vs gt [T, 2] -> argmin of mean displacement.
    joint:    means [M, 2, T, 2] vs gt [2, T, 2] -> argmin of the sum of the
              two agents' mean displacements.
    """
    means = np.asarray(means, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    d = np.linalg.norm(means - gt[None], axis=-1)
    if scope == "marginal":
        cost = d.mean(axis=-1)
    elif scope == "joint":
        cost = d.mean(axis=-1).sum(axis=-1)
    else:
        raise ValueError(f"unknown scope {scope!r}")
    return int(np.argmin(cost))


def nll_gmm(traj, scores, gt, k_star: int) -> Tensor:
    """Negative log likelihood of the selected Gaussian mode.

    traj  : [M, T, 4] (or [M, 2, T, 4] for a joint mode set) mu_x, mu_y, sigma_x, sigma_y
    scores: [M] probabilities of the modes
    gt    : [T, 2] (or [2, T, 2]) target positions

    Sum over steps (and agents, in the joint layout) of
    log(sx) + log(sy) + 0.5 ((dx/sx)^2 + (dy/sy)^2), minus log scores[k_star]
    realized as cross-entropy against the selected index.
    """
    traj = ad._wrap(traj)
    scores = ad._wrap(scores)
    gt = np.asarray(gt, dtype=np.float64)
    sel = traj[k_star]
    mu, sigma = sel[..., 0:2], sel[..., 2:4]
    d = (ad.tensor(gt) - mu) / sigma
    reg = (ad.log(sigma).sum() + 0.5 * (d * d).sum())
    ce = -ad.log(scores[k_star])
    return reg + ce


def _gather_modes(t: Tensor, batch_idx: np.ndarray, agent_idx, mode_idx: np.ndarray) -> Tensor:
    if agent_idx is None:
        return t[batch_idx, mode_idx]
    return t[batch_idx, agent_idx, mode_idx]


def marginal_loss(stage1: dict, gt_local: np.ndarray, y_gt: np.ndarray, k_m: int):
    """Stage-1 loss over the interacting pair, batch-averaged.

    stage1: model outputs with mu [B, 2, M1, T, 2], sigma alike, logits [B, 2, M1].
    y_gt:   [B, 2] ground-truth category per agent.
    Returns (nll Tensor, ce Tensor, ModeAssignment).
    """
    mu, sigma, logits = stage1["mu"], stage1["sigma"], stage1["logits"]
    b, _, m1 = logits.shape
    dist = np.linalg.norm(mu.data - gt_local[:, :, None], axis=-1).mean(axis=-1)  # [B, 2, M1]
    window = y_gt[..., None] * k_m + np.arange(k_m)                # [B, 2, Km]
    in_cat = np.take_along_axis(dist, window, axis=-1)
    k_star = (y_gt * k_m + np.argmin(in_cat, axis=-1)).astype(np.intp)  # [B, 2]

    bi = np.arange(b, dtype=np.intp)[:, None]
    ai = np.arange(2, dtype=np.intp)[None, :]
    mu_s = _gather_modes(mu, bi, ai, k_star)                       # [B, 2, T, 2]
    sg_s = _gather_modes(sigma, bi, ai, k_star)
    d = (ad.tensor(gt_local) - mu_s) / sg_s
    per_agent = ad.log(sg_s).sum(axis=(-1, -2)) + 0.5 * (d * d).sum(axis=(-1, -2))
    nll = per_agent.sum(axis=1).mean()
    logp = ad.log_softmax(logits, axis=-1)
    ce = -_gather_modes(logp, bi, ai, k_star).sum(axis=1).mean()
    return nll, ce, ModeAssignment(y_gt=y_gt, k_star=k_star)


def joint_loss(stage2: dict, gt_local: np.ndarray):
    """Stage-2 loss: one category, best joint mode over summed displacement."""
    mu, sigma, logits = stage2["mu"], stage2["sigma"], stage2["logits"]
    b, k_j = logits.shape
    dist = np.linalg.norm(mu.data - gt_local[:, None], axis=-1).mean(axis=-1).sum(axis=-1)
    k_star = np.argmin(dist, axis=-1).astype(np.intp)              # [B]

    bi = np.arange(b, dtype=np.intp)
    mu_s = mu[bi, k_star]                                          # [B, 2, T, 2]
    sg_s = sigma[bi, k_star]
    d = (ad.tensor(gt_local) - mu_s) / sg_s
    per_agent = ad.log(sg_s).sum(axis=(-1, -2)) + 0.5 * (d * d).sum(axis=(-1, -2))
    nll = per_agent.sum(axis=1).mean()
    logp = ad.log_softmax(logits, axis=-1)
    ce = -logp[bi, k_star].mean()
    return nll, ce, ModeAssignment(y_gt=np.zeros(b, dtype=np.intp), k_star=k_star)


def total_loss(outputs: dict, gt_local: np.ndarray, y_gt: np.ndarray, k_m: int):
    """Equal-weight sum of the stage losses present in `outputs`.

    Returns (loss Tensor, LossBreakdown, assignments dict).
    """
    zero = ad.tensor(0.0)
    assignments = {}
    nll1 = ce1 = nll2 = ce2 = zero
    if "stage1" in outputs:
        nll1, ce1, assignments["stage1"] = marginal_loss(outputs["stage1"], gt_local, y_gt, k_m)
    if "stage2" in outputs:
        nll2, ce2, assignments["stage2"] = joint_loss(outputs["stage2"], gt_local)
    loss = nll1 + ce1 + nll2 + ce2
    breakdown = LossBreakdown(nll1=float(nll1.data), ce1=float(ce1.data),
                              nll2=float(nll2.data), ce2=float(ce2.data))
    return loss, breakdown, assignments
