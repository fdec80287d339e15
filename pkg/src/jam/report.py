"""CSV tables and static SVG plots.

Outputs are deterministic: CSV floats use a fixed format and the SVG backend
runs with a pinned hash salt and no date metadata, so identical runs produce
identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsRow, ResultsTable
from .model import JointPrediction
from .scenes import SceneSample

METRIC_COLUMNS = ("min_ade", "min_fde", "miss_rate", "map", "soft_map")

_SVG_RC = {"svg.hashsalt": "jam-lab", "svg.fonttype": "none", "path.simplify": False}


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def write_metrics_csv(path, rows: list[MetricsRow], model: str = "model") -> None:
    """One row per (model, agent type, horizon) with a fixed column order."""
    if not rows:
        raise ValueError("no metric rows to write")
    lines = ["model,agent_type,horizon_s,min_ade,min_fde,miss_rate,map,soft_map"]
    for r in rows:
        lines.append(",".join([model, r.agent_type, _fmt(float(r.horizon))]
                              + [_fmt(float(v)) for v in r.values()]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def write_results_table_csv(path, table: ResultsTable) -> None:
    """Framework-comparison table: metrics plus parameter count and latency."""
    if not table.rows:
        raise ValueError("results table is empty")
    lines = ["variant,agent_type,horizon_s,min_ade,min_fde,miss_rate,map,soft_map,"
             "n_params,latency_ms,incomplete"]
    for (variant, atype, horizon), r in sorted(table.rows.items()):
        lines.append(",".join([variant, atype, _fmt(float(horizon))]
                              + [_fmt(float(v)) for v in r.values()]
                              + [str(table.n_params.get(variant, "")),
                                 _fmt(float(table.latency_ms.get(variant, 0.0))),
                                 str(table.incomplete)]))
    Path(path).write_text("\n".join(lines) + "\n")


def plot_variant_bars(table: ResultsTable, path, horizon: float = 8.0) -> None:
    """Bar chart of each metric across framework variants."""
    variants = table.variants()
    if not variants:
        raise ValueError("results table is empty")
    fig, axes = plt.subplots(1, len(METRIC_COLUMNS), figsize=(3.2 * len(METRIC_COLUMNS), 3.2))
    with plt.rc_context(_SVG_RC):
        for ax, metric in zip(axes, METRIC_COLUMNS):
            vals = []
            for v in variants:
                rows = [r for (vv, _, h), r in table.rows.items() if vv == v and h == horizon]
                vals.append(np.mean([getattr(r, metric) for r in rows]) if rows else np.nan)
            ax.bar(range(len(variants)), vals, color="#4878a8")
            ax.set_xticks(range(len(variants)))
            ax.set_xticklabels(variants, rotation=45, ha="right", fontsize=7)
            ax.set_title(f"{metric} @{horizon:g}s", fontsize=9)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_scene(scene: SceneSample, pred: JointPrediction | None, path) -> None:
    """Scene overlay: map elements, histories, ground truth, predicted modes."""
    fig, ax = plt.subplots(figsize=(6, 6))
    with plt.rc_context(_SVG_RC):
        for agent_elems in scene.map[:2]:
            for el in agent_elems:
                pts = el[el[:, 4] != 0][:, :2]
                if len(pts):
                    style = dict(color="0.8", lw=0.8) if el[0, 4] == 1 else dict(color="#88a", lw=0.8, ls="--")
                    ax.plot(pts[:, 0], pts[:, 1], **style)
        colors = ["#d62728", "#1f77b4"]
        for a in range(scene.n_agents):
            h = scene.histories[a]
            hv = h[:, 5] > 0
            if not hv.any():
                continue
            c = colors[a] if a < 2 else "#808000"
            ax.plot(h[hv, 0], h[hv, 1], color=c, lw=1.5)
            ax.plot(h[hv, 0][-1], h[hv, 1][-1], "o", color=c, ms=4)
        for a in range(2):
            f = scene.futures[a][scene.futures_valid[a] > 0]
            ax.plot(f[:, 0], f[:, 1], "k--", lw=1.0)
        if pred is not None:
            order = np.argsort(-pred.scores)
            for rank, m in enumerate(order):
                alpha = 0.9 - 0.12 * rank
                for a in range(2):
                    ax.plot(pred.means[m, a, :, 0], pred.means[m, a, :, 1],
                            color=colors[a], lw=0.8, alpha=max(alpha, 0.15))
        ax.set_aspect("equal")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(table: ResultsTable, out_dir, scenes=None, preds=None) -> list[str]:
    """Write the comparison CSV, bar plot, and optional qualitative overlays."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / "framework_comparison.csv"
    write_results_table_csv(csv_path, table)
    written.append(str(csv_path))
    bars = out / "framework_comparison.svg"
    plot_variant_bars(table, bars)
    written.append(str(bars))
    if scenes and preds:
        for i, (sc, pr) in enumerate(zip(scenes, preds)):
            p = out / f"scene_{i:02d}.svg"
            plot_scene(sc, pr, p)
            written.append(str(p))
    return written
