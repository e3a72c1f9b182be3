"""Command line entry points: run, sweep, report."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np
import yaml

from .config import apply_overrides, load_config
from .loop import run_experiment
from .plots import emit_plots, sweep_grid_plot
from .sweep import save_table, sweep


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.override:
        cfg = apply_overrides(cfg, args.override)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = Path(args.out) if args.out else \
        Path("runs") / f"{cfg.dataset}-{cfg.method}-mkd_{cfg.mkd}-s{cfg.seed}"
    record = run_experiment(cfg, out_dir=out)
    if args.plots:
        emit_plots(record, out)
    bt = "n/a" if record.bt is None else f"{record.bt:.4f}"
    print(f"run complete: faa={record.faa:.4f} bt={bt} "
          f"steps={record.metric_log[-1][0] + 1} -> {out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    grid = yaml.safe_load(Path(args.grid).read_text())
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise SystemExit("grid file must map config keys to value lists")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    out = Path(args.out) if args.out else Path("runs") / "sweep"
    rows = sweep(cfg, grid, seeds=seeds, out_dir=out)
    if "alpha" in grid and "lambda_override" in grid:
        sweep_grid_plot(rows, out / "grid.png")
    for row in rows:
        print(row)
    print(f"sweep table -> {out / 'sweep.tsv'}")
    return 0


_GROUP_KEYS = ("dataset", "method", "mkd", "snapshot_kd", "inference_mode",
               "aug_strategy", "n_tasks", "memory_size", "alpha", "lambda_alpha")


def _cmd_report(args) -> int:
    summaries = sorted(Path(args.runs).glob("**/summary.json"))
    if not summaries:
        raise SystemExit(f"no summary.json files under {args.runs}")
    groups: dict[tuple, list[dict]] = {}
    for path in summaries:
        rec = json.loads(path.read_text())
        groups.setdefault(tuple(rec.get(k) for k in _GROUP_KEYS), []).append(rec)
    rows = []
    for key, recs in sorted(groups.items(), key=str):
        faa = [r["faa"] for r in recs]
        bt = [r["bt"] for r in recs if r["bt"] is not None]
        row = dict(zip(_GROUP_KEYS, key))
        row.update(n_seeds=len(recs), faa_mean=float(np.mean(faa)),
                   faa_std=float(np.std(faa, ddof=1)) if len(faa) > 1 else 0.0,
                   bt_mean=float(np.mean(bt)) if bt else None,
                   bt_std=float(np.std(bt, ddof=1)) if len(bt) > 1 else None)
        rows.append(row)
    save_table(rows, Path(args.runs) / "report.tsv")
    width = max(len(str(k)) for k in groups) if groups else 0
    for row in rows:
        label = f"{row['method']}+mkd_{row['mkd']}" \
            + (f"+snap_{row['snapshot_kd']}" if row["snapshot_kd"] != "off" else "")
        bt_txt = "n/a" if row["bt_mean"] is None else f"{row['bt_mean']:+.4f}"
        print(f"{label:<{max(24, width)}} n={row['n_seeds']} "
              f"faa={row['faa_mean']:.4f}±{row['faa_std']:.4f} bt={bt_txt}")
    print(f"report table -> {Path(args.runs) / 'report.tsv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamkd",
                                     description="Online continual learning runs "
                                                 "with momentum-teacher distillation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train once from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--override", nargs="*", default=[], metavar="KEY=VAL")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--plots", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid sweep over config keys")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--grid", required=True)
    p_sweep.add_argument("--seeds", default=None, help="comma-separated, e.g. 0,1,2")
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_rep = sub.add_parser("report", help="aggregate summaries under a directory")
    p_rep.add_argument("--runs", required=True)
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
