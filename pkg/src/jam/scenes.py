"""Synthetic interactive driving scenes.

Each scene contains two labeled interacting agents (always at slots 0 and 1)
plus background agents, a small vectorized map, kinematically consistent
histories, and ground-truth futures. Scenario kinds script the interaction:

  crossing       two paths intersect; one agent crosses first (latent order)
  merge          two lanes join; one agent slots in behind the other
  yield          one agent stops short of the conflict until the other clears
  follow         leader/follower on a shared lane with gap control
  turn-conflict  one agent arcs across the other's straight corridor

A configurable fraction of scenes re-routes one vehicle of the pair into a
U-turn near the conflict point, injecting a low-probability maneuver. The
latent choices (who goes first, whether a U-turn happens) are drawn after
the observation window, so histories stay ambiguous about them.

All positions are meters, speeds m/s, headings radians. Scene arrays are
float64 holding exactly float32-representable values, so the on-disk float32
format round-trips bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import wrap_angle

KINDS = ("crossing", "merge", "yield", "follow", "turn-conflict")
KIND_CODES = {k: i for i, k in enumerate(KINDS)}

AGENT_TYPES = ("vehicle", "pedestrian", "cyclist")
TYPE_CODES = {t: i for i, t in enumerate(AGENT_TYPES)}

SPEED_CAPS = {0: 30.0, 1: 3.0, 2: 12.0}     # per type code, m/s
ACCEL_CAPS = {0: 4.0, 1: 2.0, 2: 3.0}       # m/s^2, well under the 8 bound

D_S = 6   # x, y, heading, vx, vy, valid
D_P = 5   # x, y, unit dx, unit dy, lane-type code (0 pad, 1 lane, 2 crosswalk)


@dataclass(frozen=True)
class GenProfile:
    """Sampling geometry of one dataset."""

    hz: float
    t_h: int          # history steps, current pose included
    t: int            # future steps
    n_a: int          # agent slots (2 interacting + background)
    n_m: int          # map elements per agent
    n_p: int          # points per map element

    @property
    def dt(self) -> float:
        return 1.0 / self.hz


# Mirrors the benchmark setup: 10 Hz, 1.1 s history, 8 s horizon.
FULL_PROFILE = GenProfile(hz=10.0, t_h=11, t=80, n_a=34, n_m=8, n_p=20)
# Fast profile for tests and desk experiments: 2 Hz, same 8 s horizon.
MICRO_PROFILE = GenProfile(hz=2.0, t_h=4, t=16, n_a=4, n_m=4, n_p=10)


@dataclass
class SceneSample:
    histories: np.ndarray      # [n_a, t_h, 6]
    map: np.ndarray            # [n_a, n_m, n_p, 5]
    futures: np.ndarray        # [n_a, t, 2]
    futures_valid: np.ndarray  # [n_a, t]
    pair: np.ndarray           # [2] agent slots of the interacting pair
    types: np.ndarray          # [n_a] type codes
    kind: int                  # scenario kind code

    @property
    def n_agents(self) -> int:
        return self.histories.shape[0]


@dataclass(frozen=True)
class DatasetHeader:
    version: int
    scenes: int
    n_a: int
    t_h: int
    t: int
    n_m: int
    n_p: int
    d_s: int
    d_p: int
    hz: float
    seed: int


@dataclass
class Dataset:
    header: DatasetHeader
    samples: list[SceneSample]

    def __len__(self):
        return len(self.samples)

    @property
    def profile(self) -> GenProfile:
        h = self.header
        return GenProfile(hz=h.hz, t_h=h.t_h, t=h.t, n_a=h.n_a, n_m=h.n_m, n_p=h.n_p)


@dataclass(frozen=True)
class DatasetSpec:
    scenes: int
    kind_mix: dict[str, float]
    u_turn_rate: float = 0.0
    profile: GenProfile = MICRO_PROFILE


# -- lane paths ----------------------------------------------------------------


@dataclass
class _Seg:
    x: float
    y: float
    heading: float
    length: float
    curvature: float  # 0 for a line; else signed 1/R


class Path:
    """Piecewise line/arc path, parameterized by arc length.

    Samples before 0 or past the end extrapolate straight along the boundary
    tangent, so histories and long futures never fall off the path.
    """

    def __init__(self, segs: list[_Seg]):
        self.segs = segs
        self.ends = np.cumsum([s.length for s in segs])

    @classmethod
    def build(cls, start_xy, heading: float, plan) -> "Path":
        """plan: iterable of ("line", length) or ("arc", signed_angle, radius)."""
        x, y, h = float(start_xy[0]), float(start_xy[1]), float(heading)
        segs = []
        for item in plan:
            if item[0] == "line":
                length = float(item[1])
                segs.append(_Seg(x, y, h, length, 0.0))
                x += length * np.cos(h)
                y += length * np.sin(h)
            elif item[0] == "arc":
                angle, radius = float(item[1]), float(item[2])
                k = np.sign(angle) / radius
                length = abs(angle) * radius
                segs.append(_Seg(x, y, h, length, k))
                h2 = h + angle
                x += (np.sin(h2) - np.sin(h)) / k
                y += -(np.cos(h2) - np.cos(h)) / k
                h = wrap_angle(h2)
            else:
                raise ValueError(f"unknown segment {item[0]!r}")
        return cls(segs)

    def translate(self, dx: float, dy: float) -> "Path":
        return Path([_Seg(s.x + dx, s.y + dy, s.heading, s.length, s.curvature)
                     for s in self.segs])

    @property
    def total(self) -> float:
        return float(self.ends[-1])

    def pose_at(self, s):
        """Vectorized position+tangent lookup: s -> (xy [..., 2], heading [...])."""
        s = np.asarray(s, dtype=np.float64)
        starts = self.ends - np.array([g.length for g in self.segs])
        idx = np.clip(np.searchsorted(self.ends, s, side="left"), 0, len(self.segs) - 1)
        xs = np.empty_like(s)
        ys = np.empty_like(s)
        hs = np.empty_like(s)
        for i, seg in enumerate(self.segs):
            m = idx == i
            if not m.any():
                continue
            ds = s[m] - starts[i]
            if seg.curvature == 0.0:
                xs[m] = seg.x + ds * np.cos(seg.heading)
                ys[m] = seg.y + ds * np.sin(seg.heading)
                hs[m] = seg.heading
            else:
                k = seg.curvature
                # straight extrapolation before the first / after the last segment
                inside = np.clip(ds, 0.0, seg.length)
                h2 = seg.heading + k * inside
                px = seg.x + (np.sin(h2) - np.sin(seg.heading)) / k
                py = seg.y - (np.cos(h2) - np.cos(seg.heading)) / k
                over = ds - inside
                xs[m] = px + over * np.cos(h2)
                ys[m] = py + over * np.sin(h2)
                hs[m] = h2
        return np.stack([xs, ys], axis=-1), wrap_angle(hs)

    def curve_speed_limit(self, s0: float, s1: float, hz: float) -> float:
        """Max comfortable speed over [s0, s1]: lateral accel and sample-chord limits."""
        limit = np.inf
        starts = self.ends - np.array([g.length for g in self.segs])
        for i, seg in enumerate(self.segs):
            if seg.curvature == 0.0:
                continue
            if starts[i] <= s1 and self.ends[i] >= s0:
                r = 1.0 / abs(seg.curvature)
                limit = min(limit, 0.85 * np.sqrt(6.0 * r), 0.38 * r * hz)
        return limit


# -- speed integration -----------------------------------------------------------


def _simulate_speed(rng, path: Path, v0: float, n_steps: int, dt: float, hz: float,
                    type_code: int, target_fn: Callable[[int, float, float], float],
                    s0: float = 0.0):
    """Integrate speed/arc-length with acceleration clamp and curve limits.

    target_fn(step, s, v) gives the desired speed; change per step is clamped
    to the type's acceleration cap; curve limits are enforced with a braking
    lookahead. Returns (s[n], v[n]) starting from arc length s0.
    """
    a_max = ACCEL_CAPS[type_code]
    v_cap = SPEED_CAPS[type_code]
    v = np.empty(n_steps)
    s = np.empty(n_steps)
    v[0] = min(v0, v_cap, path.curve_speed_limit(s0, s0 + v0 * dt + 1.0, hz))
    s[0] = s0
    for j in range(1, n_steps):
        vj = v[j - 1]
        lookahead = vj * vj / (2.0 * a_max) + 2.0 * vj * dt + 1.0
        tgt = target_fn(j, s[j - 1], vj)
        tgt = min(tgt, path.curve_speed_limit(s[j - 1], s[j - 1] + lookahead, hz), v_cap)
        tgt = max(tgt, 0.0)
        v[j] = vj + np.clip(tgt - vj, -a_max * dt, a_max * dt)
        s[j] = s[j - 1] + v[j] * dt
    return s, v


@dataclass
class _Actor:
    path: Path
    s: np.ndarray          # arc length per sim step
    v: np.ndarray
    type_code: int

    def states(self):
        xy, heading = self.path.pose_at(self.s)
        vel = self.v[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=-1)
        return xy, heading, vel


def _first_crossing_time(s: np.ndarray, s_c: float, dt: float) -> float:
    """Linear-interpolated time at which arc length passes s_c."""
    idx = np.nonzero(s >= s_c)[0]
    if len(idx) == 0:
        return (len(s) - 1) * dt
    i = int(idx[0])
    if i == 0:
        return 0.0
    frac = (s_c - s[i - 1]) / max(s[i] - s[i - 1], 1e-9)
    return (i - 1 + frac) * dt


# -- scenario construction -------------------------------------------------------


def _uturn_path(theta: float, s_c: float, rng) -> tuple[Path, float]:
    """Approach along theta, U-turn just short of the conflict point, head back.

    Returns the path (translated so the virtual straight-through point at
    arc length s_c is the conflict point) and the approach length.
    """
    d_u = rng.uniform(1.0, 5.0)
    r = rng.uniform(4.0, 7.0)
    side = 1.0 if rng.random() < 0.5 else -1.0
    approach = s_c - d_u
    path = Path.build((0.0, 0.0), theta, [("line", approach),
                                          ("arc", side * np.pi, r),
                                          ("line", 120.0)])
    ref = np.array([s_c * np.cos(theta), s_c * np.sin(theta)])
    return path.translate(-ref[0], -ref[1]), approach


def _through_path(theta: float, s_c: float) -> Path:
    path = Path.build((0.0, 0.0), theta, [("line", s_c + 200.0)])
    return path.translate(-s_c * np.cos(theta), -s_c * np.sin(theta))


def _const_target(v: float):
    return lambda j, s, vj: v


def _build_pair(kind: str, rng, prof: GenProfile, u_turn: bool):
    """Script the two interacting agents. Returns (actors, lanes, pair_types)."""
    dt, hz = prof.dt, prof.hz
    n_steps = prof.t_h + prof.t
    hist_span = (prof.t_h - 1) * dt
    theta = rng.uniform(-np.pi, np.pi)

    # agent types for the pair
    ped_ok = kind in ("crossing", "yield")
    roll = rng.random()
    if ped_ok and roll < 0.22:
        pair_types = [0, 1]
    elif roll < 0.38:
        pair_types = [0, 2]
    else:
        pair_types = [0, 0]
    if u_turn:
        pair_types = [0, pair_types[1] if pair_types[1] != 1 else 0]

    def speed_for(tc):
        lo, hi = {0: (3.5, 10.0), 1: (0.8, 1.8), 2: (2.5, 6.0)}[tc]
        return rng.uniform(lo, hi)

    v_a, v_b = speed_for(pair_types[0]), speed_for(pair_types[1])

    # time-to-conflict from "now"; U-turn scenes turn a bit earlier so the
    # half-circle completes inside the horizon
    t_hi = 3.2 if u_turn else 4.2
    t_ca = rng.uniform(2.2, t_hi)
    t_cb = rng.uniform(2.2, t_hi)

    def s_conflict(v, t_c):
        return v * hist_span + v * t_c

    if kind == "follow":
        if pair_types[1] == 1:
            pair_types[1] = 0
            v_b = speed_for(0)
        gap0 = rng.uniform(6.0, 12.0)
        s_cl = s_conflict(v_a, t_ca)
        straight = _through_path(theta, s_cl)
        lead_path = _uturn_path(theta, s_cl, rng)[0] if u_turn else straight
        follow_path = _through_path(theta, s_cl + gap0)
        # leader: cruise, sometimes easing off
        ease = rng.random() < 0.5 and not u_turn
        v_low = v_a * rng.uniform(0.35, 0.7)
        t_ease = rng.uniform(1.0, 4.0) + hist_span

        def lead_tgt(j, s, vj):
            return v_low if (ease and j * dt >= t_ease) else v_a

        s_l, v_l = _simulate_speed(rng, lead_path, v_a, n_steps, dt, hz, pair_types[0], lead_tgt)
        gap_des = rng.uniform(5.0, 8.0)

        def follow_tgt(j, s, vj):
            gap = (s_l[j] + gap0) - s
            return max(0.0, v_l[j] + 0.7 * (gap - gap_des))

        s_f, v_f = _simulate_speed(rng, follow_path, v_a, n_steps, dt, hz, pair_types[1], follow_tgt)
        actors = [_Actor(lead_path, s_l, v_l, pair_types[0]),
                  _Actor(follow_path, s_f, v_f, pair_types[1])]
        return actors, [straight]

    # all other kinds: two distinct approach directions
    if kind == "merge":
        phi = rng.choice([-1.0, 1.0]) * rng.uniform(np.deg2rad(15), np.deg2rad(40))
    elif kind == "turn-conflict":
        phi = rng.choice([-1.0, 1.0]) * rng.uniform(np.deg2rad(70), np.deg2rad(110))
    else:
        phi = rng.choice([-1.0, 1.0]) * rng.uniform(np.deg2rad(60), np.deg2rad(120))
    theta_b = wrap_angle(theta + phi)

    s_ca = s_conflict(v_a, t_ca)
    s_cb = s_conflict(v_b, t_cb)
    path_a = _through_path(theta, s_ca)

    if kind == "merge":
        r = rng.uniform(10.0, 18.0)
        turn = wrap_angle(theta - theta_b)
        la = abs(turn) * r
        trial = Path.build((0.0, 0.0), theta_b,
                           [("line", max(s_cb - la, 4.0)), ("arc", turn, r), ("line", 150.0)])
        s_cb = max(s_cb - la, 4.0) + la
        anchor_xy, _ = trial.pose_at(np.array([s_cb]))
        path_b = trial.translate(-anchor_xy[0, 0], -anchor_xy[0, 1])
    elif kind == "turn-conflict":
        r = rng.uniform(8.0, 14.0)
        turn = wrap_angle(theta - theta_b)
        la = abs(turn) * r
        trial = Path.build((0.0, 0.0), theta_b,
                           [("line", max(s_cb - la / 2, 4.0)), ("arc", turn, r), ("line", 150.0)])
        s_cb = max(s_cb - la / 2, 4.0) + la / 2
        anchor_xy, _ = trial.pose_at(np.array([s_cb]))
        path_b = trial.translate(-anchor_xy[0, 0], -anchor_xy[0, 1])
    else:
        path_b = _through_path(theta_b, s_cb)

    if u_turn:
        # re-route one vehicle of the pair into a U-turn near the conflict
        turner = 0 if pair_types[1] == 1 else int(rng.random() < 0.5)
        if turner == 0:
            path_a, _ = _uturn_path(theta, s_ca, rng)
        else:
            path_b, _ = _uturn_path(theta_b, s_cb, rng)

    # latent pass order, decided after the observation window
    first = int(rng.random() < 0.5)
    t_first = min(t_ca, t_cb)
    clearance = rng.uniform(0.4, 1.0)

    if kind == "yield":
        d_stop = rng.uniform(2.0, 4.0)
        passer_idx, yielder_idx = first, 1 - first
        v_p = (v_a, v_b)[passer_idx]
        path_p = (path_a, path_b)[passer_idx]
        s_cp = (s_ca, s_cb)[passer_idx]
        s_p, v_parr = _simulate_speed(rng, path_p, v_p, n_steps, dt, hz,
                                      pair_types[passer_idx], _const_target(v_p))
        t_pass = _first_crossing_time(s_p, s_cp, dt)
        v_y = (v_a, v_b)[yielder_idx]
        path_y = (path_a, path_b)[yielder_idx]
        s_cy = (s_ca, s_cb)[yielder_idx]
        a_br = ACCEL_CAPS[pair_types[yielder_idx]]
        v_resume = v_y * rng.uniform(0.7, 1.0)

        def yield_tgt(j, s, vj):
            if j * dt > t_pass + clearance:
                return v_resume
            remaining = s_cy - d_stop - s
            if remaining <= max(vj * vj / (2.0 * 0.8 * a_br), 1.0):
                return 0.0
            return v_y

        s_y, v_yarr = _simulate_speed(rng, path_y, v_y, n_steps, dt, hz,
                                      pair_types[yielder_idx], yield_tgt)
        out = [None, None]
        out[passer_idx] = _Actor(path_p, s_p, v_parr, pair_types[passer_idx])
        out[yielder_idx] = _Actor(path_y, s_y, v_yarr, pair_types[yielder_idx])
        return out, [path_a, path_b]

    # crossing / merge / turn-conflict: the later agent eases off mid-approach
    second = 1 - first
    v_list = [v_a, v_b]
    paths = [path_a, path_b]
    s_cs = [s_ca, s_cb]
    actors = [None, None]
    sp, vp = _simulate_speed(rng, paths[first], v_list[first], n_steps, dt, hz,
                             pair_types[first], _const_target(v_list[first]))
    actors[first] = _Actor(paths[first], sp, vp, pair_types[first])
    t_pass = _first_crossing_time(sp, s_cs[first], dt)
    slow = rng.uniform(0.45, 0.8)
    t_slow = hist_span + rng.uniform(0.4, 1.2)

    def second_tgt(j, s, vj):
        if kind == "merge" and s >= s_cs[second]:
            return vp[j]  # fall in behind the first agent on the shared lane
        if s < s_cs[second] and t_slow <= j * dt <= t_pass + clearance:
            return v_list[second] * slow
        return v_list[second]

    ss, vs = _simulate_speed(rng, paths[second], v_list[second], n_steps, dt, hz,
                             pair_types[second], second_tgt)
    actors[second] = _Actor(paths[second], ss, vs, pair_types[second])
    return actors, [path_a, path_b]


def _lane_points(path: Path, s_lo: float, s_hi: float, n_p: int) -> np.ndarray:
    s = np.linspace(s_lo, s_hi, n_p)
    xy, heading = path.pose_at(s)
    d = np.stack([np.cos(heading), np.sin(heading)], axis=-1)
    code = np.full((n_p, 1), 1.0)
    return np.concatenate([xy, d, code], axis=-1)


def _crosswalk_points(center: np.ndarray, theta: float, n_p: int) -> np.ndarray:
    """Rectangle outline across the road at `center`, long axis along theta."""
    half_l, half_w = 6.0, 1.8
    u = np.array([np.cos(theta), np.sin(theta)])
    w = np.array([-np.sin(theta), np.cos(theta)])
    corners = np.array([center + half_l * u + half_w * w,
                        center + half_l * u - half_w * w,
                        center - half_l * u - half_w * w,
                        center - half_l * u + half_w * w,
                        center + half_l * u + half_w * w])
    seglen = np.linalg.norm(np.diff(corners, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    s = np.linspace(0.0, cum[-1], n_p)
    pts = np.stack([np.interp(s, cum, corners[:, 0]), np.interp(s, cum, corners[:, 1])], axis=-1)
    d = np.diff(pts, axis=0)
    d = np.concatenate([d, d[-1:]], axis=0)
    norm = np.maximum(np.linalg.norm(d, axis=-1, keepdims=True), 1e-9)
    code = np.full((n_p, 1), 2.0)
    return np.concatenate([pts, d / norm, code], axis=-1)


def _offset_path(path: Path, offset: float) -> Path | None:
    """Parallel curve at `offset` (left positive); None if an arc degenerates."""
    segs = []
    for seg in path.segs:
        nx, ny = -np.sin(seg.heading), np.cos(seg.heading)
        if seg.curvature == 0.0:
            segs.append(_Seg(seg.x + offset * nx, seg.y + offset * ny,
                             seg.heading, seg.length, 0.0))
        else:
            r = 1.0 / seg.curvature
            r2 = r - offset
            if r2 * r <= 0 or abs(r2) < 1.5:
                return None
            segs.append(_Seg(seg.x + offset * nx, seg.y + offset * ny,
                             seg.heading, abs(seg.length / r * r2), 1.0 / r2))
    return Path(segs)


def _parallel_line(base: Path, offset: float) -> Path:
    """Straight lane parallel to the base path's approach segment."""
    seg = base.segs[0]
    nx, ny = -np.sin(seg.heading), np.cos(seg.heading)
    return Path.build((seg.x + offset * nx - 150.0 * np.cos(seg.heading),
                       seg.y + offset * ny - 150.0 * np.sin(seg.heading)),
                      seg.heading, [("line", 400.0)])


def generate_scene(kind: str, seed: int, profile: GenProfile = MICRO_PROFILE,
                   u_turn: bool = False) -> SceneSample:
    """Build one scene deterministically from (kind, seed)."""
    if kind not in KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected one of {KINDS}")
    rng = np.random.default_rng([seed, KIND_CODES[kind]])
    prof = profile
    n_steps = prof.t_h + prof.t

    actors, lanes = _build_pair(kind, rng, prof, u_turn)

    # background agents on offset lanes
    n_bg = int(rng.integers(0, prof.n_a - 2 + 1))
    bg_actors: list[_Actor | None] = []
    bg_starts = []
    for _ in range(prof.n_a - 2):
        if len(bg_actors) >= n_bg:
            bg_actors.append(None)
            bg_starts.append(0)
            continue
        base = lanes[int(rng.integers(0, len(lanes)))]
        off = rng.choice([-1.0, 1.0]) * rng.uniform(3.5, 9.0)
        bg_path = _parallel_line(base, off)
        tc = int(rng.choice([0, 0, 2]))
        v_bg = rng.uniform(*{0: (2.0, 9.0), 2: (1.5, 5.0)}[tc])
        shift = 150.0 + rng.uniform(-25.0, 25.0)
        s_bg, v_arr = _simulate_speed(rng, bg_path, v_bg, n_steps, prof.dt, prof.hz,
                                      tc, _const_target(v_bg), s0=shift)
        bg_actors.append(_Actor(bg_path, s_bg, v_arr, tc))
        bg_starts.append(int(rng.integers(0, prof.t_h)) if rng.random() < 0.3 else 0)

    # map element pool
    elements = []
    for lane in lanes:
        elements.append(_lane_points(lane, -10.0, lane.total + 10.0, prof.n_p))
        for off in (-3.5, 3.5):
            side = _offset_path(lane, off)
            if side is not None:
                elements.append(_lane_points(side, -10.0, side.total + 10.0, prof.n_p))
    has_ped = any(a is not None and a.type_code == 1 for a in actors)
    if has_ped or rng.random() < 0.3:
        ped = next((a for a in actors if a.type_code == 1), None)
        theta_cw = ped.path.segs[0].heading if ped is not None else rng.uniform(-np.pi, np.pi)
        elements.append(_crosswalk_points(np.zeros(2), theta_cw, prof.n_p))

    # assemble agent arrays
    all_actors = list(actors) + bg_actors
    histories = np.zeros((prof.n_a, prof.t_h, D_S))
    futures = np.zeros((prof.n_a, prof.t, 2))
    futures_valid = np.zeros((prof.n_a, prof.t))
    types = np.zeros(prof.n_a, dtype=np.int64)
    hist_starts = [0, 0] + bg_starts

    for i, actor in enumerate(all_actors):
        if actor is None:
            continue
        xy, heading, vel = actor.states()
        types[i] = actor.type_code
        start = hist_starts[i]
        rows = np.concatenate([xy, heading[:, None], vel,
                               np.ones((n_steps, 1))], axis=-1)
        hist = rows[:prof.t_h].copy()
        hist[:start] = 0.0
        histories[i] = hist
        futures[i] = xy[prof.t_h:]
        futures_valid[i] = 1.0

    # per-agent nearest map elements
    scene_map = np.zeros((prof.n_a, prof.n_m, prof.n_p, D_P))
    for i, actor in enumerate(all_actors):
        if actor is None:
            continue
        pos = histories[i, prof.t_h - 1, :2]
        dists = [np.min(np.linalg.norm(el[:, :2] - pos, axis=1)) for el in elements]
        order = np.argsort(dists)[:prof.n_m]
        for slot, j in enumerate(order):
            scene_map[i, slot] = elements[j]

    # drop the whole scene into a random global frame
    rot = rng.uniform(-np.pi, np.pi)
    off = rng.uniform(-120.0, 120.0, size=2)
    c, s = np.cos(rot), np.sin(rot)

    def rotxy(a):
        return np.stack([a[..., 0] * c - a[..., 1] * s,
                         a[..., 0] * s + a[..., 1] * c], axis=-1)

    hvalid = histories[..., 5] > 0
    histories[..., 0:2] = rotxy(histories[..., 0:2]) + off
    histories[..., 2] = wrap_angle(histories[..., 2] + rot)
    histories[..., 3:5] = rotxy(histories[..., 3:5])
    histories[~hvalid] = 0.0
    futures = rotxy(futures) + off
    futures[futures_valid == 0] = 0.0
    mvalid = scene_map[..., 4] != 0
    scene_map[..., 0:2] = rotxy(scene_map[..., 0:2]) + off
    scene_map[..., 2:4] = rotxy(scene_map[..., 2:4])
    scene_map[~mvalid] = 0.0

    def f32(a):
        return np.asarray(a, dtype=np.float32).astype(np.float64)

    return SceneSample(histories=f32(histories), map=f32(scene_map), futures=f32(futures),
                       futures_valid=f32(futures_valid), pair=np.array([0, 1], dtype=np.int64),
                       types=types, kind=KIND_CODES[kind])


def generate_dataset(spec: DatasetSpec, seed: int) -> Dataset:
    """Draw scenes with the requested kind mix; per-scene seeds derive from `seed`."""
    if spec.scenes < 1:
        raise ValueError("dataset needs at least one scene")
    weight_sum = sum(spec.kind_mix.values())
    if abs(weight_sum - 1.0) > 1e-9:
        raise ValueError(f"kind mix weights sum to {weight_sum}, expected 1.0")
    for k in spec.kind_mix:
        if k not in KINDS:
            raise ValueError(f"unknown scenario kind {k!r}")
    kinds = sorted(spec.kind_mix)
    probs = np.array([spec.kind_mix[k] for k in kinds])
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(spec.scenes):
        kind = kinds[int(rng.choice(len(kinds), p=probs))]
        u_turn = bool(rng.random() < spec.u_turn_rate)
        scene_seed = int(rng.integers(0, 2 ** 62))
        samples.append(generate_scene(kind, scene_seed, spec.profile, u_turn=u_turn))
    p = spec.profile
    header = DatasetHeader(version=1, scenes=spec.scenes, n_a=p.n_a, t_h=p.t_h, t=p.t,
                           n_m=p.n_m, n_p=p.n_p, d_s=D_S, d_p=D_P, hz=p.hz, seed=seed)
    return Dataset(header=header, samples=samples)


def closest_pair_approach(scene: SceneSample) -> float:
    """Min distance between the two interacting futures over all timestep pairs."""
    a = scene.futures[scene.pair[0]]
    b = scene.futures[scene.pair[1]]
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    return float(d.min())
