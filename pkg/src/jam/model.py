"""Two-stage interactive prediction network.

Stage 1 (marginal proposals): classification-tagged mode queries cross-attend
to the scene context and decode one Gaussian trajectory per (category, mode)
slot for each interacting agent, so every category is represented on every
input. Keypoints (3 s / 5 s / 8 s waypoints with velocities) are read off each
proposal.

Stage 2 (joint refinement): proposal embeddings (future encoding + keypoint
encoding + decoder content) self-attend across the mode axis, collapse to one
token per agent, interact agent-to-agent, and join the scene tokens as
context for shared joint mode queries; one head emits both agents'
trajectories and a single score per joint mode.

Everything internal lives in local frames; only `decode` maps back to global
coordinates, which keeps the pipeline equivariant under rigid motions of the
input scene.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .config import RunConfig
from .geometry import sinusoid_encode, wrap_angle
from .scenes import SceneSample

logger = logging.getLogger(__name__)

LOG_SIGMA_MIN = float(np.log(1e-3))
LOG_SIGMA_MAX = float(np.log(1e3))

KEYPOINT_SECONDS = (3.0, 5.0, 8.0)


def keypoint_steps(t: int, hz: float) -> np.ndarray:
    """Future-step indices nearest 3/5/8 s (>=1 so a velocity difference exists)."""
    idx = np.round(np.asarray(KEYPOINT_SECONDS) * hz).astype(int) - 1
    return np.clip(idx, 1, t - 1)


# -- parameter-free preprocessing ------------------------------------------------


@dataclass
class Prep:
    """Batched, model-input view of scenes: local features plus frame bookkeeping."""

    hist_feats: np.ndarray    # [B, Na, Th, 7] scaled local history
    hist_valid: np.ndarray    # [B, Na, Th]
    agent_valid: np.ndarray   # [B, Na]
    map_feats: np.ndarray     # [B, Na, Nm, Np, 7]
    elem_valid: np.ndarray    # [B, Na, Nm]
    agent_origin_enc: np.ndarray  # [B, Na, D]
    map_origin_enc: np.ndarray    # [B, Na, Nm, D]
    types: np.ndarray         # [B, Na]
    origins: np.ndarray       # [B, Na, 3] (x, y, heading) of each agent frame
    gt_local: np.ndarray | None   # [B, 2, T, 2] pair futures in agent frames, meters
    gt_global: np.ndarray | None  # [B, 2, T, 2]

    @property
    def batch(self) -> int:
        return self.hist_feats.shape[0]

    def subset(self, idx) -> "Prep":
        pick = lambda a: None if a is None else a[idx]
        return Prep(*[pick(getattr(self, f)) for f in
                      ("hist_feats", "hist_valid", "agent_valid", "map_feats", "elem_valid",
                       "agent_origin_enc", "map_origin_enc", "types", "origins",
                       "gt_local", "gt_global")])


def _rot_about(xy, angle):
    """Rotate [..., 2] by per-row angles (broadcast over trailing point axes)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([xy[..., 0] * c - xy[..., 1] * s,
                     xy[..., 0] * s + xy[..., 1] * c], axis=-1)


def prep_scenes(samples: list[SceneSample], cfg: RunConfig,
                with_futures: bool = True) -> Prep:
    """Vectorized local-frame feature extraction for a list of scenes."""
    hist = np.stack([s.histories for s in samples])          # [B, Na, Th, 6]
    smap = np.stack([s.map for s in samples])                # [B, Na, Nm, Np, 5]
    types = np.stack([s.types for s in samples])
    for s in samples:
        if s.pair[0] != 0 or s.pair[1] != 1:
            raise ValueError("interacting pair must occupy agent slots 0 and 1")
    b, na, th, _ = hist.shape
    scale = cfg.length_scale

    valid = hist[..., 5]
    agent_valid = valid.any(axis=-1)
    if not agent_valid[:, :2].all():
        raise ValueError("interacting agents must have valid histories")
    if (~agent_valid).any():
        logger.debug("batch contains %d absent agents (null-token path)", int((~agent_valid).sum()))
    last = th - 1 - np.argmax(valid[..., ::-1], axis=-1)     # [B, Na] last valid step
    last_state = np.take_along_axis(hist, last[..., None, None].repeat(6, -1), axis=2)[:, :, 0]
    ox, oy, oh = last_state[..., 0], last_state[..., 1], last_state[..., 2]
    origins = np.stack([ox, oy, oh], axis=-1)

    rel = _rot_about(hist[..., 0:2] - origins[..., None, 0:2], -oh[..., None])
    rel_h = wrap_angle(hist[..., 2] - oh[..., None])
    rel_v = _rot_about(hist[..., 3:5], -oh[..., None])
    hist_feats = np.concatenate([rel / scale, np.cos(rel_h)[..., None],
                                 np.sin(rel_h)[..., None], rel_v / scale,
                                 valid[..., None]], axis=-1)
    hist_feats[valid == 0] = 0.0

    # scene anchor: midpoint of the interacting pair, heading of agent 0
    anchor_xy = 0.5 * (origins[:, 0, 0:2] + origins[:, 1, 0:2])
    anchor_h = origins[:, 0, 2]
    rel_origin = _rot_about(origins[..., 0:2] - anchor_xy[:, None], -anchor_h[:, None])
    rel_oh = origins[..., 2] - anchor_h[:, None]
    agent_origin_feats = np.concatenate([rel_origin / scale, np.cos(rel_oh)[..., None],
                                         np.sin(rel_oh)[..., None]], axis=-1)
    agent_origin_enc = sinusoid_encode(agent_origin_feats, cfg.d_dim)

    point_code = smap[..., 4]
    point_valid = point_code != 0
    elem_valid = point_valid[..., 0]                         # first point flags the element
    e_xy = smap[..., 0, 0:2]                                 # [B, Na, Nm, 2]
    e_h = np.arctan2(smap[..., 0, 3], smap[..., 0, 2])
    p_rel = _rot_about(smap[..., 0:2] - e_xy[..., None, :], -e_h[..., None])
    d_rel = _rot_about(smap[..., 2:4], -e_h[..., None])
    map_feats = np.concatenate([p_rel / scale, d_rel,
                                (point_code == 1)[..., None].astype(float),
                                (point_code == 2)[..., None].astype(float),
                                point_valid[..., None].astype(float)], axis=-1)
    map_feats[~point_valid] = 0.0

    rel_exy = _rot_about(e_xy - anchor_xy[:, None, None], -anchor_h[:, None, None])
    rel_eh = e_h - anchor_h[:, None, None]
    map_origin_feats = np.concatenate([rel_exy / scale, np.cos(rel_eh)[..., None],
                                       np.sin(rel_eh)[..., None]], axis=-1)
    map_origin_enc = sinusoid_encode(map_origin_feats, cfg.d_dim)

    gt_local = gt_global = None
    if with_futures:
        fut = np.stack([s.futures[:2] for s in samples])     # [B, 2, T, 2]
        gt_global = fut
        gt_local = _rot_about(fut - origins[:, :2, None, 0:2], -origins[:, :2, None, 2])

    return Prep(hist_feats=hist_feats, hist_valid=valid, agent_valid=agent_valid,
                map_feats=map_feats, elem_valid=elem_valid,
                agent_origin_enc=agent_origin_enc, map_origin_enc=map_origin_enc,
                types=types, origins=origins, gt_local=gt_local, gt_global=gt_global)


# -- typed outputs ---------------------------------------------------------------


@dataclass
class GaussianTrajectory:
    steps: np.ndarray   # [T, 4] mu_x, mu_y, sigma_x, sigma_y
    score: float


@dataclass
class Proposal:
    trajectory: GaussianTrajectory
    keypoints: np.ndarray       # [3, 4] x, y, vx, vy
    content: np.ndarray         # [D]
    category: int
    mode: int
    agent: int


@dataclass
class JointPrediction:
    """K joint modes over the interacting pair, in global coordinates."""

    means: np.ndarray    # [K, 2, T, 2]
    sigmas: np.ndarray   # [K, 2, T, 2]
    scores: np.ndarray   # [K]

    @property
    def k(self) -> int:
        return len(self.scores)

    def mode(self, i: int) -> tuple[GaussianTrajectory, GaussianTrajectory]:
        return tuple(GaussianTrajectory(np.concatenate([self.means[i, a], self.sigmas[i, a]], -1),
                                        float(self.scores[i])) for a in (0, 1))


# -- the network -------------------------------------------------------------------


class JamModel(nn.Module):
    def __init__(self, cfg: RunConfig, rng: np.random.Generator | int = 0):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.cfg = cfg
        d, heads, mult = cfg.d_dim, cfg.heads, cfg.ffn_mult
        self.has_stage1 = cfg.variant in ("jam", "marginal-free", "marginal-aware")
        self.has_stage2 = cfg.variant in ("jam", "joint-onestep")
        self.kp_steps = keypoint_steps(cfg.t, cfg.hz)

        self.hist_lstm = nn.LSTM(rng, 7, d)
        self.null_token = ad.parameter(np.zeros(d))
        self.type_emb = nn.Embedding(rng, 3, d)
        self.map_mlp = nn.MLP(rng, [7, d, d])
        self.enc_layers = [nn.SelfAttentionBlock(rng, d, heads, mult) for _ in range(cfg.e)]

        if self.has_stage1:
            self.mode_emb = nn.Embedding(rng, cfg.m1, d)
            self.agent_emb = nn.Embedding(rng, 2, d)
            self.m2s = nn.CrossAttentionBlock(rng, d, heads, mult)
            self.am2m = nn.SelfAttentionBlock(rng, d, heads, mult)
            self.gmm_head = nn.MLP(rng, [d, 2 * d, cfg.t * 4])
            self.score_head = nn.MLP(rng, [d, d, 1])

        if self.has_stage2:
            if cfg.variant == "jam":
                self.future_mlp = nn.MLP(rng, [2, d, d])
                self.kp_mlp = nn.MLP(rng, [4, d, d])
                self.before_m2m = nn.SelfAttentionBlock(rng, d, heads, mult)
                self.a2a = nn.SelfAttentionBlock(rng, d, heads, mult)
            self.jmode_emb = nn.Embedding(rng, cfg.k_j, d)
            self.m2s2 = nn.CrossAttentionBlock(rng, d, heads, mult)
            self.am2m2 = nn.SelfAttentionBlock(rng, d, heads, mult)
            self.joint_head = nn.MLP(rng, [d, 2 * d, 2 * cfg.t * 4])
            self.joint_score_head = nn.MLP(rng, [d, d, 1])

    # -- persistence ------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: np.array(p.data, copy=True) for k, p in self.named_parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        if set(params) != set(state):
            missing = set(params) ^ set(state)
            raise ValueError(f"checkpoint/config parameter mismatch: {sorted(missing)[:4]}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"parameter {k}: checkpoint shape {arr.shape} != model {p.data.shape}")
            p.data = arr.copy()

    # -- encoders ---------------------------------------------------------------

    def encode_scene(self, prep: Prep):
        cfg = self.cfg
        b, na, th, _ = prep.hist_feats.shape
        xs = ad.tensor(prep.hist_feats.reshape(b * na, th, 7))
        h = self.hist_lstm(xs, prep.hist_valid.reshape(b * na, th))
        h = h.reshape(b, na, cfg.d_dim)
        any_valid = prep.agent_valid.astype(float)[..., None]
        h = h * any_valid + self.null_token.reshape(1, 1, cfg.d_dim) * (1.0 - any_valid)
        hist_tok = h + self.type_emb(prep.types) + ad.tensor(prep.agent_origin_enc)

        pts = self.map_mlp(ad.tensor(prep.map_feats))            # [B, Na, Nm, Np, D]
        pv = prep.map_feats[..., 6:7]
        pooled = (pts * pv + (-1e4) * (1.0 - pv)).max(axis=-2)    # masked max over points
        map_tok = (pooled + ad.tensor(prep.map_origin_enc)) * prep.elem_valid[..., None]
        map_tok = map_tok.reshape(b, na * cfg.n_m, cfg.d_dim)

        tokens = ad.concat([hist_tok, map_tok], axis=1)
        mask = np.concatenate([prep.agent_valid, prep.elem_valid.reshape(b, -1)], axis=1)
        for layer in self.enc_layers:
            tokens = layer(tokens, mask)
        return tokens, mask

    # -- stage 1 ------------------------------------------------------------------

    def propose(self, prep: Prep, tokens: Tensor, mask: np.ndarray) -> dict:
        """Classification-aware marginal proposals for the interacting pair."""
        cfg = self.cfg
        b = prep.batch
        his = tokens[:, :2]                                       # [B, 2, D]
        q = (self.mode_emb.table.reshape(1, 1, cfg.m1, cfg.d_dim)
             + self.agent_emb.table.reshape(1, 2, 1, cfg.d_dim)
             + his.reshape(b, 2, 1, cfg.d_dim))
        kv = tokens.reshape(b, 1, tokens.shape[1], cfg.d_dim)
        content = self.m2s(q, kv, mask[:, None, :])
        content = self.am2m(content)                              # [B, 2, M1, D]

        raw = self.gmm_head(content).reshape(b, 2, cfg.m1, cfg.t, 4)
        mu = raw[..., 0:0 + 2] * cfg.length_scale
        sigma = ad.exp(ad.clip(raw[..., 2:4], LOG_SIGMA_MIN, LOG_SIGMA_MAX))
        logits = self.score_head(content).reshape(b, 2, cfg.m1)

        ks = self.kp_steps
        kp_pos = mu[:, :, :, ks, :]
        kp_vel = (mu[:, :, :, ks, :] - mu[:, :, :, ks - 1, :]) * cfg.hz
        keypoints = ad.concat([kp_pos, kp_vel], axis=-1)          # [B, 2, M1, 3, 4]
        return {"mu": mu, "sigma": sigma, "logits": logits,
                "content": content, "keypoints": keypoints}

    # -- stage 2 ------------------------------------------------------------------

    def refine(self, prep: Prep, tokens: Tensor, mask: np.ndarray,
               stage1: dict | None, zero_proposals: bool = False) -> dict:
        """Keypoint-guided joint decoding over shared mode queries."""
        cfg = self.cfg
        b = prep.batch
        his = tokens[:, :2]
        base_q = (self.jmode_emb.table.reshape(1, cfg.k_j, cfg.d_dim)
                  + (his[:, 0] + his[:, 1]).reshape(b, 1, cfg.d_dim))

        use_props = stage1 is not None and cfg.variant == "jam"
        if use_props:
            fut_in = stage1["mu"] * (1.0 / cfg.length_scale)
            fut_tok = self.future_mlp(fut_in).max(axis=-2)        # [B, 2, M1, D]
            kp_tok = self.kp_mlp(stage1["keypoints"] * (1.0 / cfg.length_scale)).mean(axis=-2)
            if not cfg.use_keypoints:
                kp_tok = kp_tok * 0.0
            t_emb = self.type_emb(prep.types[:, :2]).reshape(b, 2, 1, cfg.d_dim)
            # weight each proposal embedding by its marginal mode probability:
            # early on this damps unsettled proposals, later it spotlights winners
            w = ad.masked_softmax(stage1["logits"], axis=-1).reshape(b, 2, cfg.m1, 1)
            prop = (fut_tok + kp_tok + stage1["content"] + t_emb) * (w * cfg.m1)
            if zero_proposals:
                prop = prop * 0.0
            flat = prop.reshape(b, 2 * cfg.m1, cfg.d_dim)
            modes = self.before_m2m(flat)                         # [B, 2*M1, D]
            inter = modes.reshape(b, 2, cfg.m1, cfg.d_dim).mean(axis=2)
            inter = self.a2a(inter)                               # [B, 2, D]
            extra = flat.mean(axis=1)
            if zero_proposals:
                extra = extra * 0.0
            q = base_q + extra.reshape(b, 1, cfg.d_dim)
            # joint queries see the pair interaction tokens, every proposal
            # token, and the scene context
            kv = ad.concat([inter, modes, tokens], axis=1)
            n_prop = 2 + 2 * cfg.m1
            prop_mask = np.zeros((b, n_prop), bool) if zero_proposals else np.ones((b, n_prop), bool)
            kv_mask = np.concatenate([prop_mask, mask], axis=1)
        else:
            q = base_q
            kv = tokens
            kv_mask = mask

        dec = self.m2s2(q, kv, kv_mask)
        dec = self.am2m2(dec)                                     # [B, Kj, D]
        raw = self.joint_head(dec).reshape(b, cfg.k_j, 2, cfg.t, 4)
        mu = raw[..., 0:2] * cfg.length_scale
        sigma = ad.exp(ad.clip(raw[..., 2:4], LOG_SIGMA_MIN, LOG_SIGMA_MAX))
        logits = self.joint_score_head(dec).reshape(b, cfg.k_j)
        return {"mu": mu, "sigma": sigma, "logits": logits}

    # -- full forward --------------------------------------------------------------

    def forward(self, prep: Prep, zero_proposals: bool = False) -> dict:
        tokens, mask = self.encode_scene(prep)
        out = {}
        if self.has_stage1:
            out["stage1"] = self.propose(prep, tokens, mask)
        if self.has_stage2:
            s1 = out.get("stage1") if self.cfg.variant == "jam" else None
            out["stage2"] = self.refine(prep, tokens, mask, s1, zero_proposals)
        return out

    # -- inference ------------------------------------------------------------------

    def _to_global(self, mu: np.ndarray, origins: np.ndarray) -> np.ndarray:
        """mu [B, ..., 2, T, 2] local per pair agent -> global. origins [B, Na, 3]."""
        oh = origins[:, :2, 2]
        oxy = origins[:, :2, 0:2]
        shape_mid = mu.shape[1:-3]
        oh_b = oh.reshape(oh.shape[0], *(1,) * len(shape_mid), 2, 1)
        oxy_b = oxy.reshape(oh.shape[0], *(1,) * len(shape_mid), 2, 1, 2)
        return _rot_about(mu, oh_b) + oxy_b

    def decode(self, prep: Prep) -> list[JointPrediction]:
        """Joint modes in global coordinates, scores normalized per scene."""
        out = self.forward(prep)
        cfg = self.cfg
        if self.has_stage2:
            s2 = out["stage2"]
            mu = self._to_global(s2["mu"].data, prep.origins)     # [B, Kj, 2, T, 2]
            sig = s2["sigma"].data
            scores = _softmax_np(s2["logits"].data, axis=-1)
            return [JointPrediction(means=mu[i], sigmas=sig[i], scores=scores[i])
                    for i in range(prep.batch)]
        # marginal-only variants: rank-pair the per-agent top-k modes
        s1 = out["stage1"]
        mu_l = s1["mu"].data                                      # [B, 2, M1, T, 2]
        mu = np.empty_like(mu_l)
        mu[:, 0] = _rot_about(mu_l[:, 0], prep.origins[:, 0:1, None, 2]) \
            + prep.origins[:, 0:1, None, 0:2]
        mu[:, 1] = _rot_about(mu_l[:, 1], prep.origins[:, 1:2, None, 2]) \
            + prep.origins[:, 1:2, None, 0:2]
        sig = s1["sigma"].data
        scores = _softmax_np(s1["logits"].data, axis=-1)          # [B, 2, M1]
        k = min(cfg.k, cfg.m1)
        preds = []
        for i in range(prep.batch):
            order = np.argsort(-scores[i], axis=-1, kind="stable")[:, :k]   # [2, k]
            means = np.stack([mu[i, 0, order[0]], mu[i, 1, order[1]]], axis=1)
            sigs = np.stack([sig[i, 0, order[0]], sig[i, 1, order[1]]], axis=1)
            joint = scores[i, 0, order[0]] * scores[i, 1, order[1]]
            joint = joint / joint.sum()
            preds.append(JointPrediction(means=means, sigmas=sigs, scores=joint))
        return preds

    def proposals(self, prep: Prep) -> list[list[Proposal]]:
        """Tagged stage-1 proposals per scene (both interacting agents)."""
        if not self.has_stage1:
            raise ValueError(f"variant {self.cfg.variant!r} has no marginal stage")
        tokens, mask = self.encode_scene(prep)
        s1 = self.propose(prep, tokens, mask)
        cfg = self.cfg
        mu, sig = s1["mu"].data, s1["sigma"].data
        kp, content = s1["keypoints"].data, s1["content"].data
        scores = _softmax_np(s1["logits"].data, axis=-1)
        result = []
        for i in range(prep.batch):
            rows = []
            for a in range(2):
                origin = prep.origins[i, a]
                for m in range(cfg.m1):
                    g = _rot_about(mu[i, a, m], origin[2]) + origin[0:2]
                    traj = GaussianTrajectory(np.concatenate([g, sig[i, a, m]], -1),
                                              float(scores[i, a, m]))
                    rows.append(Proposal(trajectory=traj, keypoints=kp[i, a, m],
                                         content=content[i, a, m],
                                         category=m // cfg.k_m, mode=m % cfg.k_m, agent=a))
            result.append(rows)
        return result


def _softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)
