"""Local coordinate frames and origin encodings.

Every scene element (agent history, map polyline, predicted future) is
expressed in a frame anchored at one of its own points; the frame origin is
then encoded relative to a scene-level anchor so the model sees only
rigid-motion-invariant quantities.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np


def wrap_angle(theta):
    """Normalize angles into (-pi, pi]; values already in range pass through exactly."""
    t = np.asarray(theta, dtype=np.float64)
    two_pi = 2.0 * np.pi
    k = np.floor((t + np.pi) / two_pi)
    out = t - two_pi * k
    out = np.where(out == -np.pi, np.pi, out)
    if np.ndim(theta) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Pose2:
    """Planar pose: position in meters, heading in radians, (-pi, pi]."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation followed by translation: p -> R(rotation) p + translation."""

    rotation: float
    tx: float
    ty: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        x = pts[..., 0] * c - pts[..., 1] * s + self.tx
        y = pts[..., 0] * s + pts[..., 1] * c + self.ty
        return np.stack([x, y], axis=-1)

    def apply_pose(self, pose: Pose2) -> Pose2:
        xy = self.apply(np.array([pose.x, pose.y]))
        return Pose2(float(xy[0]), float(xy[1]), pose.heading + self.rotation)

    def inverse(self) -> "RigidTransform":
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        return RigidTransform(-self.rotation, -(self.tx * c + self.ty * s),
                              -(-self.tx * s + self.ty * c))


def to_local(points, origin: Pose2) -> np.ndarray:
    """Express global points in the frame whose origin/heading is `origin`.

    The origin maps to (0, 0) and its heading direction to the +x axis.
    """
    pts = np.asarray(points, dtype=np.float64)
    c, s = np.cos(origin.heading), np.sin(origin.heading)
    dx = pts[..., 0] - origin.x
    dy = pts[..., 1] - origin.y
    return np.stack([dx * c + dy * s, -dx * s + dy * c], axis=-1)


def to_global(points, origin: Pose2) -> np.ndarray:
    """Exact inverse of to_local for the same origin."""
    pts = np.asarray(points, dtype=np.float64)
    c, s = np.cos(origin.heading), np.sin(origin.heading)
    x = pts[..., 0] * c - pts[..., 1] * s + origin.x
    y = pts[..., 0] * s + pts[..., 1] * c + origin.y
    return np.stack([x, y], axis=-1)


def rotate_vectors(vectors, angle) -> np.ndarray:
    """Rotate 2-vectors (velocities, directions) by `angle`; no translation."""
    v = np.asarray(vectors, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([v[..., 0] * c - v[..., 1] * s,
                     v[..., 0] * s + v[..., 1] * c], axis=-1)


def relative_pose_features(origin: Pose2, anchor: Pose2) -> np.ndarray:
    """(x, y, cos dh, sin dh) of `origin` seen from `anchor`'s frame."""
    xy = to_local(np.array([origin.x, origin.y]), anchor)
    dh = origin.heading - anchor.heading
    return np.array([xy[0], xy[1], np.cos(dh), np.sin(dh)])


def sinusoid_encode(features: np.ndarray, dim: int) -> np.ndarray:
    """Interleaved sin/cos encoding of a feature vector.

    Channel pair p uses feature p % n_feat at octave p // n_feat with
    frequency 10000^(-octave / n_octaves); every channel lies in [-1, 1].
    """
    if dim % 2 != 0:
        raise ValueError("encoding dim must be even")
    feats = np.asarray(features, dtype=np.float64)
    n_feat = feats.shape[-1]
    pairs = dim // 2
    idx = np.arange(pairs)
    feat_idx = idx % n_feat
    octave = idx // n_feat
    n_oct = max(1, (pairs + n_feat - 1) // n_feat)
    freq = 10000.0 ** (-octave / n_oct)
    angle = feats[..., feat_idx] * freq
    out = np.empty(feats.shape[:-1] + (dim,))
    out[..., 0::2] = np.sin(angle)
    out[..., 1::2] = np.cos(angle)
    return out


def encode_origin(origin: Pose2, anchor: Pose2, dim: int) -> np.ndarray:
    """Positional encoding of a frame origin relative to the scene anchor."""
    return sinusoid_encode(relative_pose_features(origin, anchor), dim)


def rigid_transform_scene(scene, g: RigidTransform):
    """Apply a rigid motion to every position/heading/velocity of a scene.

    Validity flags, agent types, the interacting pair and the kind tag are
    untouched. Works on the SceneSample dataclass by field name.
    """
    hist = np.array(scene.histories, dtype=np.float64)
    valid = hist[..., 5:6]
    xy = g.apply(hist[..., 0:2])
    heading = wrap_angle(hist[..., 2] + g.rotation)
    vel = rotate_vectors(hist[..., 3:5], g.rotation)
    # zero-padded invalid steps stay zero-padded
    new_hist = np.concatenate([xy, heading[..., None], vel, valid], axis=-1) * valid

    mp = np.array(scene.map, dtype=np.float64)
    point_valid = (mp[..., 4:5] != 0).astype(np.float64)
    mxy = g.apply(mp[..., 0:2])
    mdir = rotate_vectors(mp[..., 2:4], g.rotation)
    new_map = np.concatenate([mxy, mdir, mp[..., 4:5]], axis=-1) * point_valid

    new_futures = g.apply(np.array(scene.futures, dtype=np.float64))
    fvalid = np.asarray(scene.futures_valid, dtype=np.float64)[..., None]
    new_futures = new_futures * fvalid

    return dataclasses.replace(scene, histories=new_hist, map=new_map, futures=new_futures)
