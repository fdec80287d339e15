"""Training loop, evaluation runner, and the framework-comparison experiment.

Everything is deterministic under the run seed: parameter init, batch
shuffling, and the optimizer do not consume entropy from anywhere else, so
repeated runs give bitwise-identical checkpoints and metric CSVs.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint, load_checkpoint
from .config import RunConfig
from .metrics import (DEFAULT_THRESHOLDS, MetricsRow, ResultsTable, aggregate_table,
                      metric_rows)
from .model import JamModel, Prep, prep_scenes
from .objective import LossBreakdown, total_loss
from .scenes import Dataset
from .taxonomy import AnchorSet, gt_category, load_anchors

logger = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ("step", "epoch", "lr", "nll1", "ce1", "nll2", "ce2", "total")


def lr_schedule(epoch: int, base_lr: float = 1e-4, halve_every: int = 2,
                halve_from: int = 20) -> float:
    """Closed form of the halving schedule for 1-indexed epochs.

    rate(e) = base * 2^(-max(0, floor((e - (halve_from - 2)) / halve_every)))
    which keeps the base rate through epoch halve_from - 1 and halves every
    `halve_every` epochs starting at `halve_from`.
    """
    return base_lr * 2.0 ** (-max(0, (epoch - (halve_from - 2)) // halve_every))


class Adam:
    """Adam with bias correction; state keyed by parameter name."""

    def __init__(self, params: dict, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            p.data = p.data - lr * (self.m[k] / corr1) / (np.sqrt(self.v[k] / corr2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def clip_gradients(params: dict, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
        logger.debug("gradient clip active: norm %.2f -> %.2f", norm, max_norm)
    return norm


def ground_truth_categories(prep: Prep, cfg: RunConfig,
                            anchors: AnchorSet | None = None) -> np.ndarray:
    """[B, 2] category index of each interacting agent's local-frame future."""
    min_step = 0.5 / cfg.hz
    out = np.zeros((prep.batch, 2), dtype=np.intp)
    for b in range(prep.batch):
        for a in range(2):
            out[b, a] = gt_category(prep.gt_local[b, a], cfg.scheme, anchors,
                                    int(prep.types[b, a]), min_step=min_step)
    return out


@dataclass
class TrainResult:
    model: JamModel
    history: list[dict] = field(default_factory=list)
    checkpoint_path: str | None = None
    log_path: str | None = None
    aborted: bool = False


def _format_row(values) -> str:
    out = []
    for v in values:
        if isinstance(v, float):
            out.append(f"{v:.10g}")
        else:
            out.append(str(v))
    return ",".join(out)


def train(cfg: RunConfig, train_ds: Dataset, out_dir=None,
          anchors: AnchorSet | None = None) -> TrainResult:
    """Train a model from scratch; deterministic under cfg.seed."""
    if cfg.scheme == "anchor64" and anchors is None:
        if not cfg.anchors_path:
            raise ValueError("anchor64 scheme needs fitted anchors (anchors_path)")
        anchors = load_anchors(cfg.anchors_path)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    model = JamModel(cfg, rng=np.random.default_rng(cfg.seed))
    params = model.named_parameters()
    opt = Adam(params)
    prep_all = prep_scenes(train_ds.samples, cfg)
    y_all = ground_truth_categories(prep_all, cfg, anchors)

    n = len(train_ds.samples)
    rng = np.random.default_rng([cfg.seed, 0xBA7C4])
    history: list[dict] = []
    log_lines = [",".join(TRAIN_LOG_COLUMNS)]
    step = 0
    result = TrainResult(model=model)
    last_good: dict[str, np.ndarray] | None = None

    for epoch in range(1, cfg.epochs + 1):
        lr = lr_schedule(epoch, cfg.base_lr, cfg.lr_halve_every, cfg.lr_halve_from)
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            prep = prep_all.subset(idx)
            out = model.forward(prep)
            loss, breakdown, _ = total_loss(out, prep.gt_local, y_all[idx], cfg.k_m)
            if not np.isfinite(loss.data):
                logger.error("non-finite loss at step %d; aborting with last good checkpoint", step)
                if last_good is not None:
                    model.load_state(last_good)
                result.aborted = True
                break
            opt.zero_grad()
            loss.backward()
            clip_gradients(params, cfg.grad_clip)
            opt.step(lr)
            step += 1
            row = {"step": step, "epoch": epoch, "lr": lr, **breakdown.row()}
            history.append(row)
            log_lines.append(_format_row([row[c] for c in TRAIN_LOG_COLUMNS]))
        if result.aborted:
            break
        last_good = model.state_dict()
        if out_dir is not None:
            save_checkpoint(out_dir / f"epoch_{epoch:03d}.ckpt", last_good)

    result.history = history
    if out_dir is not None:
        final = out_dir / "model.ckpt"
        save_checkpoint(final, model.state_dict())
        log_path = out_dir / "train_log.csv"
        log_path.write_text("\n".join(log_lines) + "\n")
        result.checkpoint_path = str(final)
        result.log_path = str(log_path)
    return result


def load_model(cfg: RunConfig, checkpoint_path) -> JamModel:
    model = JamModel(cfg, rng=np.random.default_rng(cfg.seed))
    model.load_state(load_checkpoint(checkpoint_path))
    return model


@dataclass
class Evaluation:
    rows: list[MetricsRow]
    aggregates: dict
    latency_ms: float

    @property
    def overall(self) -> MetricsRow:
        return self.aggregates["All(Avg)"]


def evaluate(model: JamModel, dataset: Dataset, cfg: RunConfig,
             thresholds=DEFAULT_THRESHOLDS, chunk: int = 64) -> Evaluation:
    """Full metrics suite over a dataset; deterministic."""
    prep_all = prep_scenes(dataset.samples, cfg)
    preds = []
    elapsed = 0.0
    for lo in range(0, prep_all.batch, chunk):
        sub = prep_all.subset(np.arange(lo, min(lo + chunk, prep_all.batch)))
        t0 = time.perf_counter()
        preds.extend(model.decode(sub))
        elapsed += time.perf_counter() - t0
    gts = [prep_all.gt_global[i] for i in range(prep_all.batch)]
    min_step = 0.5 / cfg.hz
    cats = [tuple(int(gt_category(prep_all.gt_local[i, a], "behavior8", min_step=min_step))
                  for a in range(2)) for i in range(prep_all.batch)]
    pair_types = [tuple(int(t) for t in prep_all.types[i, :2]) for i in range(prep_all.batch)]
    rows = metric_rows(preds, gts, pair_types, cats, cfg.hz, thresholds)
    return Evaluation(rows=rows, aggregates=aggregate_table(rows),
                      latency_ms=1000.0 * elapsed / max(prep_all.batch, 1))


def variant_config(base: RunConfig, variant: str) -> RunConfig:
    """Framework-comparison variants derived from a jam base config."""
    if variant == "jam":
        return base.replace(variant="jam")
    if variant == "joint-onestep":
        return base.replace(variant="joint-onestep", scheme="none", y_m=1, k_m=1)
    if variant == "marginal-aware":
        return base.replace(variant="marginal-aware", scheme="behavior8", y_m=8, k_m=3)
    if variant == "marginal-free":
        return base.replace(variant="marginal-free", scheme="none", y_m=1, k_m=64)
    raise ValueError(f"unknown variant {variant!r}")


def compare_frameworks(base: RunConfig, train_ds: Dataset, val_ds: Dataset,
                       seeds=(0, 1, 2), variants=None, out_dir=None,
                       anchors: AnchorSet | None = None):
    """Train and evaluate every framework variant on shared data.

    Returns (ResultsTable with seed-averaged rows, per-seed overall summaries:
    dict variant -> list of MetricsRow, one per seed).
    """
    variants = list(variants) if variants is not None else \
        ["marginal-free", "marginal-aware", "joint-onestep", "jam"]
    table = ResultsTable()
    per_seed: dict[str, list[MetricsRow]] = {}
    for variant in variants:
        cfg_v = variant_config(base, variant)
        seed_rows: list[list[MetricsRow]] = []
        overall: list[MetricsRow] = []
        latencies = []
        n_params = None
        for seed in seeds:
            cfg_s = cfg_v.replace(seed=int(seed))
            run_dir = None if out_dir is None else Path(out_dir) / f"{variant}_seed{seed}"
            try:
                result = train(cfg_s, train_ds, out_dir=run_dir, anchors=anchors)
                if result.aborted:
                    raise RuntimeError(f"variant {variant} seed {seed}: training aborted")
                ev = evaluate(result.model, val_ds, cfg_s)
            except Exception:
                table.incomplete = True
                logger.exception("variant %s seed %s failed; table flagged incomplete", variant, seed)
                raise
            seed_rows.append(ev.rows)
            overall.append(ev.overall)
            latencies.append(ev.latency_ms)
            n_params = result.model.n_params()
        per_seed[variant] = overall
        table.n_params[variant] = n_params
        table.latency_ms[variant] = float(np.mean(latencies))
        table.add(variant, _average_rows(seed_rows))
    return table, per_seed


def _average_rows(seed_rows: list[list[MetricsRow]]) -> list[MetricsRow]:
    """Average metric rows across seeds, keyed by (type, horizon)."""
    keyed: dict[tuple, list[MetricsRow]] = {}
    for rows in seed_rows:
        for r in rows:
            keyed.setdefault((r.agent_type, r.horizon), []).append(r)
    out = []
    for (atype, h), members in sorted(keyed.items()):
        vals = np.array([m.values() for m in members]).mean(axis=0)
        out.append(MetricsRow(agent_type=atype, horizon=h, min_ade=vals[0], min_fde=vals[1],
                              miss_rate=vals[2], map=vals[3], soft_map=vals[4]))
    return out
