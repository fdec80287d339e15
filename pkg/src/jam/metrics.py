"""Joint-prediction evaluation metrics.

All metrics treat a prediction as K scored joint modes over the two
interacting agents. Displacement metrics take the min over modes; miss rate
and (soft) mAP use per-horizon position thresholds; mAP buckets scenes by
behavior category, one entry per interacting agent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import JointPrediction
from .taxonomy import BehaviorCategory

HORIZONS = (3.0, 5.0, 8.0)


@dataclass(frozen=True)
class ThresholdTable:
    """Position thresholds (meters) per evaluation horizon (seconds)."""

    thresholds: dict = field(default_factory=lambda: {3.0: 2.0, 5.0: 3.6, 8.0: 6.0})

    def __post_init__(self):
        items = sorted(self.thresholds.items())
        vals = [v for _, v in items]
        if any(v <= 0 for v in vals) or any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError("thresholds must be positive and non-decreasing with horizon")

    def horizons(self):
        return tuple(sorted(self.thresholds))

    def restrict(self, horizon: float) -> "ThresholdTable":
        return ThresholdTable({horizon: self.thresholds[horizon]})


DEFAULT_THRESHOLDS = ThresholdTable()


@dataclass
class MetricsRow:
    agent_type: str
    horizon: float
    min_ade: float
    min_fde: float
    miss_rate: float
    map: float
    soft_map: float

    def values(self):
        return (self.min_ade, self.min_fde, self.miss_rate, self.map, self.soft_map)


def _step_of(horizon_s: float, hz: float, t: int) -> int:
    idx = int(round(horizon_s * hz)) - 1
    if idx < 0 or idx >= t:
        raise ValueError(f"horizon {horizon_s}s has no step at {hz} Hz with T={t}")
    return idx


def min_ade_joint(pred: JointPrediction, gt: np.ndarray, horizon_step: int | None = None,
                  gt_valid: np.ndarray | None = None) -> float:
    """Min over modes of the mean displacement over both agents and valid steps."""
    gt = np.asarray(gt, dtype=np.float64)
    t = gt.shape[-2]
    stop = t if horizon_step is None else horizon_step + 1
    valid = np.ones(gt.shape[:-1], bool) if gt_valid is None else np.asarray(gt_valid, bool)
    valid = valid[..., :stop]
    if not valid.any():
        raise ValueError("no valid ground-truth steps inside the horizon")
    d = np.linalg.norm(pred.means[..., :stop, :] - gt[None, :, :stop, :], axis=-1)
    per_mode = (d * valid[None]).sum(axis=(1, 2)) / valid.sum()
    return float(per_mode.min())


def min_fde_joint(pred: JointPrediction, gt: np.ndarray, horizon_step: int) -> float:
    """Min over modes of the displacement at the horizon step, agent-averaged."""
    gt = np.asarray(gt, dtype=np.float64)
    d = np.linalg.norm(pred.means[:, :, horizon_step, :] - gt[None, :, horizon_step, :], axis=-1)
    return float(d.mean(axis=1).min())


def _mode_hits(pred: JointPrediction, gt: np.ndarray, thresholds: ThresholdTable,
               hz: float) -> np.ndarray:
    """[K] bool: mode places BOTH agents inside the threshold at EVERY horizon."""
    gt = np.asarray(gt, dtype=np.float64)
    t = gt.shape[-2]
    ok = np.ones(pred.k, dtype=bool)
    for h in thresholds.horizons():
        step = _step_of(h, hz, t)
        d = np.linalg.norm(pred.means[:, :, step, :] - gt[None, :, step, :], axis=-1)
        ok &= (d <= thresholds.thresholds[h]).all(axis=1)
    return ok


def miss_rate_joint(preds: list[JointPrediction], gts: list[np.ndarray],
                    thresholds: ThresholdTable, hz: float) -> float:
    """Fraction of scenes where no single mode is a joint hit at all horizons."""
    if not preds:
        raise ValueError("empty evaluation set")
    misses = sum(0 if _mode_hits(p, g, thresholds, hz).any() else 1
                 for p, g in zip(preds, gts))
    return misses / len(preds)


def _interpolated_ap(tp_flags: np.ndarray, n_gt: int) -> float:
    """11-point interpolated average precision over a ranked detection list."""
    if n_gt == 0:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        mask = recall >= r - 1e-12
        ap += precision[mask].max() if mask.any() else 0.0
    return ap / 11.0


def map_score(preds: list[JointPrediction], gts: list[np.ndarray],
              categories: list[tuple[int, int]], thresholds: ThresholdTable,
              hz: float) -> tuple[float, float]:
    """Mean average precision over behavior categories, plus the soft variant.

    `categories[i]` holds the behavior category of each interacting agent's
    ground truth in scene i; each agent contributes one entry to its bucket.
    A detection (scene, mode) is a true positive for an entry when the mode
    is a joint hit and no higher-scored mode already matched that entry; the
    soft variant drops (rather than penalizes) extra hits of a matched entry.
    """
    hits = [_mode_hits(p, g, thresholds, hz) for p, g in zip(preds, gts)]
    buckets: dict[int, list] = {}
    for i, (p, cats) in enumerate(zip(preds, categories)):
        for a, cat in enumerate(cats):
            entry = (i, a)
            for m in range(p.k):
                buckets.setdefault(int(cat), []).append(
                    (-float(p.scores[m]), i, a, m, bool(hits[i][m]), entry))
    n_gt = {}
    for i, cats in enumerate(categories):
        for a, cat in enumerate(cats):
            n_gt[int(cat)] = n_gt.get(int(cat), 0) + 1

    ap_values, soft_values = [], []
    for cat, dets in sorted(buckets.items()):
        dets.sort()
        matched: set = set()
        flags, soft_flags = [], []
        for _, i, a, m, hit, entry in dets:
            if hit and entry not in matched:
                matched.add(entry)
                flags.append(True)
                soft_flags.append(True)
            elif hit:
                flags.append(False)   # duplicate hit: FP in strict mAP
            else:
                flags.append(False)
                soft_flags.append(False)
        ap_values.append(_interpolated_ap(np.array(flags, bool), n_gt[cat]))
        soft_values.append(_interpolated_ap(np.array(soft_flags, bool), n_gt[cat]))
    if not ap_values:
        return 0.0, 0.0
    return float(np.mean(ap_values)), float(np.mean(soft_values))


def metric_rows(preds: list[JointPrediction], gts: list[np.ndarray],
                pair_types: list[tuple[int, int]], categories: list[tuple[int, int]],
                hz: float, thresholds: ThresholdTable = DEFAULT_THRESHOLDS) -> list[MetricsRow]:
    """Per-(agent type, horizon) metric rows over an evaluation set.

    Each scene contributes one entry per interacting agent, bucketed by that
    agent's type; displacement/miss values of an entry are the joint values
    of its scene. Per-horizon rows restrict the threshold table to that
    horizon.
    """
    from .scenes import AGENT_TYPES

    t = gts[0].shape[-2]
    rows = []
    type_entries: dict[int, list[int]] = {}
    for i, types in enumerate(pair_types):
        for a, tc in enumerate(types):
            type_entries.setdefault(int(tc), []).append(i)
    for tc, scene_ids in sorted(type_entries.items()):
        for h in thresholds.horizons():
            step = _step_of(h, hz, t)
            sub_preds = [preds[i] for i in scene_ids]
            sub_gts = [gts[i] for i in scene_ids]
            sub_cats = [categories[i] for i in scene_ids]
            restricted = thresholds.restrict(h)
            ade = float(np.mean([min_ade_joint(p, g, step) for p, g in zip(sub_preds, sub_gts)]))
            fde = float(np.mean([min_fde_joint(p, g, step) for p, g in zip(sub_preds, sub_gts)]))
            miss = miss_rate_joint(sub_preds, sub_gts, restricted, hz)
            mp, smp = map_score(sub_preds, sub_gts, sub_cats, restricted, hz)
            rows.append(MetricsRow(agent_type=AGENT_TYPES[tc], horizon=h, min_ade=ade,
                                   min_fde=fde, miss_rate=miss, map=mp, soft_map=smp))
    return rows


@dataclass
class ResultsTable:
    """Rows keyed by (variant, agent type, horizon) plus run-level stats."""

    rows: dict = field(default_factory=dict)        # (variant, type, horizon) -> MetricsRow
    n_params: dict = field(default_factory=dict)    # variant -> int
    latency_ms: dict = field(default_factory=dict)  # variant -> float
    incomplete: bool = False

    def add(self, variant: str, rows: list[MetricsRow]):
        for r in rows:
            key = (variant, r.agent_type, r.horizon)
            if key in self.rows:
                raise ValueError(f"duplicate results row {key}")
            self.rows[key] = r

    def variants(self):
        return sorted({k[0] for k in self.rows})


def aggregate_table(rows: list[MetricsRow]) -> dict[str, MetricsRow]:
    """Per-type averages over horizons plus the all-types average row."""
    if not rows:
        raise ValueError("no metric rows to aggregate")
    groups: dict[str, list[MetricsRow]] = {}
    for r in rows:
        groups.setdefault(r.agent_type, []).append(r)

    def avg(name: str, members: list[MetricsRow]) -> MetricsRow:
        vals = np.array([m.values() for m in members])
        mean = vals.mean(axis=0)
        return MetricsRow(agent_type=name, horizon=0.0, min_ade=mean[0], min_fde=mean[1],
                          miss_rate=mean[2], map=mean[3], soft_map=mean[4])

    out = {f"{t}(Avg)": avg(f"{t}(Avg)", members) for t, members in sorted(groups.items())}
    out["All(Avg)"] = avg("All(Avg)", rows)
    return out
