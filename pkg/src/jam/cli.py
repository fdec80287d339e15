"""Command-line interface: datagen, anchors, train, eval, compare, report.

JAM_THREADS (if set) caps numeric worker threads; it is applied before the
numeric stack loads, so heavy imports stay inside the command handlers.
"""

from __future__ import annotations

import argparse
import os
import sys

if os.environ.get("JAM_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["JAM_THREADS"])


def _parse_kind_mix(text: str) -> dict:
    mix = {}
    for part in text.split(","):
        name, _, weight = part.partition("=")
        mix[name.strip()] = float(weight)
    return mix


def cmd_datagen(args) -> int:
    from .scenes import DatasetSpec, FULL_PROFILE, MICRO_PROFILE, generate_dataset
    from .scene_io import write_dataset

    profile = MICRO_PROFILE if args.profile == "micro" else FULL_PROFILE
    spec = DatasetSpec(scenes=args.scenes, kind_mix=_parse_kind_mix(args.kind_mix),
                       u_turn_rate=args.u_turn_rate, profile=profile)
    ds = generate_dataset(spec, seed=args.seed)
    write_dataset(args.out, ds)
    print(f"wrote {args.scenes} scenes ({args.profile} profile) to {args.out}")
    return 0


def cmd_anchors(args) -> int:
    import numpy as np
    from .model import prep_scenes
    from .config import RunConfig
    from .scene_io import read_dataset
    from .taxonomy import fit_anchors, save_anchors

    ds = read_dataset(args.dataset)
    h = ds.header
    cfg = RunConfig(n_a=h.n_a, t_h=h.t_h, t=h.t, n_m=h.n_m, n_p=h.n_p, hz=h.hz)
    prep = prep_scenes(ds.samples, cfg)
    endpoints: dict[int, list] = {}
    for i in range(prep.batch):
        for a in range(2):
            endpoints.setdefault(int(prep.types[i, a]), []).append(prep.gt_local[i, a, -1])
    endpoints = {tc: np.asarray(v) for tc, v in endpoints.items()
                 if len(np.unique(np.asarray(v), axis=0)) >= args.k}
    if not endpoints:
        print("error: no agent type has enough distinct endpoints", file=sys.stderr)
        return 1
    anchors = fit_anchors(endpoints, k=args.k, seed=args.seed)
    save_anchors(args.out, anchors)
    kinds = ", ".join(f"type{tc}: inertia {anchors.inertia[tc]:.1f}" for tc in sorted(anchors.anchors))
    print(f"fitted {args.k} anchors per type ({kinds}) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    from .config import load_config
    from .scene_io import read_dataset
    from .training import train

    cfg = load_config(args.config)
    if args.dataset:
        cfg = cfg.replace(train_dataset=args.dataset)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if not cfg.train_dataset:
        print("error: no training dataset (config [data] train_dataset or --dataset)", file=sys.stderr)
        return 1
    ds = read_dataset(cfg.train_dataset)
    result = train(cfg, ds, out_dir=args.out)
    status = "aborted (non-finite loss)" if result.aborted else "done"
    print(f"training {status}; checkpoint: {result.checkpoint_path}; log: {result.log_path}")
    return 1 if result.aborted else 0


def cmd_eval(args) -> int:
    from .config import load_config
    from .report import write_metrics_csv
    from .scene_io import read_dataset
    from .training import evaluate, load_model

    cfg = load_config(args.config)
    ds = read_dataset(args.dataset)
    model = load_model(cfg, args.checkpoint)
    ev = evaluate(model, ds, cfg)
    write_metrics_csv(args.out, ev.rows, model=cfg.variant)
    o = ev.overall
    print(f"{cfg.variant}: minADE {o.min_ade:.4f}  minFDE {o.min_fde:.4f}  "
          f"miss {o.miss_rate:.4f}  mAP {o.map:.4f}  soft-mAP {o.soft_map:.4f}")
    print(f"rows -> {args.out}")
    return 0


def cmd_compare(args) -> int:
    from .config import load_config
    from .report import emit_report
    from .scene_io import read_dataset
    from .training import compare_frameworks

    cfg = load_config(args.config)
    train_ds = read_dataset(args.train_dataset or cfg.train_dataset)
    val_ds = read_dataset(args.val_dataset or cfg.val_dataset)
    seeds = [int(s) for s in args.seeds.split(",")]
    table, per_seed = compare_frameworks(cfg, train_ds, val_ds, seeds=seeds, out_dir=args.out)
    files = emit_report(table, args.out)
    for variant in table.variants():
        ades = [r.min_ade for r in per_seed[variant]]
        print(f"{variant:>16}: minADE {sum(ades)/len(ades):.4f} over seeds {seeds} "
              f"({table.n_params[variant]} params, {table.latency_ms[variant]:.1f} ms/scene)")
    print("report files:", *files, sep="\n  ")
    return 0


def cmd_report(args) -> int:
    from .config import load_config
    from .report import plot_scene
    from .scene_io import read_dataset
    from .model import prep_scenes
    from .training import load_model
    from pathlib import Path

    cfg = load_config(args.config)
    ds = read_dataset(args.dataset)
    model = load_model(cfg, args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = min(args.scenes, len(ds.samples))
    prep = prep_scenes(ds.samples[:n], cfg)
    preds = model.decode(prep)
    for i in range(n):
        plot_scene(ds.samples[i], preds[i], out / f"scene_{i:02d}.svg")
    print(f"wrote {n} qualitative overlays to {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="jam",
                                     description="Two-stage interactive trajectory prediction lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic interactive dataset")
    p.add_argument("--kind-mix", default="crossing=0.25,merge=0.2,yield=0.2,follow=0.2,turn-conflict=0.15")
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=("micro", "full"), default="micro")
    p.add_argument("--u-turn-rate", type=float, default=0.0)
    p.set_defaults(fn=cmd_datagen)

    p = sub.add_parser("anchors", help="fit k-means endpoint anchors per agent type")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=64)
    p.set_defaults(fn=cmd_anchors)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", default=None, help="override the config's training dataset")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("compare", help="train/evaluate all framework variants")
    p.add_argument("--config", required=True)
    p.add_argument("--train-dataset", default=None)
    p.add_argument("--val-dataset", default=None)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("report", help="qualitative prediction overlays")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=6)
    p.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
