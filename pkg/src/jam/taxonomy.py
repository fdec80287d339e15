"""Trajectory classification schemes.

Two ways to bucket a future trajectory, both operating in the agent's local
frame (initial heading along +x):

  behavior8   eight rule-based maneuver categories
  anchor64    nearest of 64 endpoint anchors fitted with k-means, per agent type

`gt_category` dispatches on the scheme name; scheme "none" collapses to a
single category (used by stages that define no categories).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .geometry import wrap_angle


class BehaviorCategory(IntEnum):
    STATIONARY = 0
    STRAIGHT = 1
    STRAIGHT_LEFT = 2
    STRAIGHT_RIGHT = 3
    LEFT_TURN = 4
    RIGHT_TURN = 5
    LEFT_U_TURN = 6
    RIGHT_U_TURN = 7


BEHAVIOR8 = tuple(BehaviorCategory)

# rule thresholds
_STATIONARY_DISP = 2.0          # m net displacement below which nothing else matters
_TURN_MIN = np.pi / 6.0         # |net heading change| lower bound for a turn
_UTURN_MIN = 5.0 * np.pi / 6.0  # and for a U-turn
_LATERAL_BAND = 1.0             # m of final lateral offset separating straight-left/right

SCHEMES = ("behavior8", "anchor64", "none")


def heading_changes(traj: np.ndarray, headings=None, min_step: float = 0.25) -> np.ndarray:
    """Per-step heading deltas along a trajectory.

    With explicit headings, deltas are wrapped differences. Otherwise headings
    come from displacement directions; steps shorter than `min_step` are
    ignored (direction is noise when nearly stopped).
    """
    if headings is not None:
        h = np.asarray(headings, dtype=np.float64)
        return wrap_angle(np.diff(h))
    pts = np.asarray(traj, dtype=np.float64)
    d = np.diff(pts, axis=0)
    keep = np.linalg.norm(d, axis=1) >= min_step
    dirs = np.arctan2(d[keep, 1], d[keep, 0])
    if len(dirs) < 2:
        return np.zeros(0)
    return wrap_angle(np.diff(dirs))


def classify_trajectory(traj: np.ndarray, headings=None,
                        min_step: float = 0.25) -> BehaviorCategory:
    """Map a local-frame trajectory (T x 2, initial heading = +x) to a category."""
    pts = np.asarray(traj, dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise ValueError("trajectory contains non-finite values")
    disp = float(np.linalg.norm(pts[-1] - pts[0]))
    if disp < _STATIONARY_DISP:
        return BehaviorCategory.STATIONARY
    total_turn = float(np.sum(heading_changes(pts, headings, min_step)))
    if abs(total_turn) >= _UTURN_MIN:
        return (BehaviorCategory.LEFT_U_TURN if total_turn > 0
                else BehaviorCategory.RIGHT_U_TURN)
    if abs(total_turn) >= _TURN_MIN:
        return (BehaviorCategory.LEFT_TURN if total_turn > 0
                else BehaviorCategory.RIGHT_TURN)
    lateral = float(pts[-1, 1] - pts[0, 1])
    if lateral > _LATERAL_BAND:
        return BehaviorCategory.STRAIGHT_LEFT
    if lateral < -_LATERAL_BAND:
        return BehaviorCategory.STRAIGHT_RIGHT
    return BehaviorCategory.STRAIGHT


# -- k-means endpoint anchors ------------------------------------------------


@dataclass
class AnchorSet:
    """Per-agent-type endpoint anchors plus the k-means inertia reached."""

    anchors: dict[int, np.ndarray]   # type code -> [k, 2]
    inertia: dict[int, float]
    k: int = 64


def kmeans_fit(points: np.ndarray, k: int, seed: int, max_iter: int = 100):
    """Plain k-means with k-means++ seeding.

    Iterates to an assignment fixpoint or `max_iter` rounds; inertia is
    non-increasing across iterations. Returns (centers [k, 2], inertia).
    """
    pts = np.asarray(points, dtype=np.float64)
    uniq = np.unique(pts, axis=0)
    if len(uniq) < k:
        raise ValueError(f"need at least {k} distinct points, got {len(uniq)}")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(len(pts))]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(len(pts), 1.0 / len(pts))
        centers[i] = pts[rng.choice(len(pts), p=probs)]
        d2 = np.minimum(d2, np.sum((pts - centers[i]) ** 2, axis=1))

    assign = np.full(len(pts), -1)
    for _ in range(max_iter):
        dist = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dist, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = pts[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    dist = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    inertia = float(np.min(dist, axis=1).sum())
    return centers, inertia


def fit_anchors(endpoints_by_type: dict[int, np.ndarray], k: int = 64,
                seed: int = 0) -> AnchorSet:
    """Fit endpoint anchors separately per agent type."""
    anchors, inertia = {}, {}
    for tc in sorted(endpoints_by_type):
        centers, inert = kmeans_fit(endpoints_by_type[tc], k, seed + tc)
        anchors[tc] = centers
        inertia[tc] = inert
    return AnchorSet(anchors=anchors, inertia=inertia, k=k)


def assign_anchor(traj: np.ndarray, anchor_set: AnchorSet, type_code: int) -> int:
    """Index of the anchor nearest the trajectory endpoint; ties pick the lowest index."""
    if type_code not in anchor_set.anchors:
        raise KeyError(f"no anchors fitted for agent type {type_code}")
    end = np.asarray(traj, dtype=np.float64)[-1]
    d2 = np.sum((anchor_set.anchors[type_code] - end) ** 2, axis=1)
    return int(np.argmin(d2))


def gt_category(traj: np.ndarray, scheme: str, anchor_set: AnchorSet | None = None,
                type_code: int = 0, headings=None, min_step: float = 0.25) -> int:
    """Ground-truth category index of a local-frame trajectory under `scheme`."""
    if scheme == "none":
        return 0
    if scheme == "behavior8":
        return int(classify_trajectory(traj, headings, min_step))
    if scheme == "anchor64":
        if anchor_set is None:
            raise ValueError("anchor64 scheme requires a fitted AnchorSet")
        return assign_anchor(traj, anchor_set, type_code)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def scheme_size(scheme: str, k_anchors: int = 64) -> int:
    return {"behavior8": 8, "anchor64": k_anchors, "none": 1}[scheme]


# -- anchor file format --------------------------------------------------------

_ANCHOR_MAGIC = b"JAMA"
_ANCHOR_VERSION = 1


def save_anchors(path, anchor_set: AnchorSet) -> None:
    chunks = [_ANCHOR_MAGIC, struct.pack("<III", _ANCHOR_VERSION, anchor_set.k,
                                         len(anchor_set.anchors))]
    for tc in sorted(anchor_set.anchors):
        arr = np.ascontiguousarray(anchor_set.anchors[tc], dtype="<f8")
        chunks.append(struct.pack("<Id", tc, anchor_set.inertia[tc]))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_anchors(path) -> AnchorSet:
    blob = Path(path).read_bytes()
    if blob[:4] != _ANCHOR_MAGIC:
        raise IOError(f"{path}: bad anchor-file magic")
    version, k, n_types = struct.unpack_from("<III", blob, 4)
    if version != _ANCHOR_VERSION:
        raise IOError(f"{path}: unsupported anchor-file version {version}")
    offset = 16
    anchors, inertia = {}, {}
    for _ in range(n_types):
        tc, inert = struct.unpack_from("<Id", blob, offset)
        offset += 12
        arr = np.frombuffer(blob, dtype="<f8", count=2 * k, offset=offset).reshape(k, 2)
        offset += 16 * k
        anchors[tc] = np.array(arr)
        inertia[tc] = inert
    return AnchorSet(anchors=anchors, inertia=inertia, k=k)
