"""Grid sweeps over run configs with per-cell seed replication."""

from __future__ import annotations

import itertools
import traceback
from pathlib import Path

import numpy as np

from .config import RunConfig
from .loop import run_experiment


def _aggregate(values: list[float | None]) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return mean, std


def sweep(base_cfg: RunConfig, grid: dict[str, list], seeds: list[int] | None = None,
          out_dir: str | Path | None = None) -> list[dict]:
    """Run the cartesian product of `grid`, each cell once per seed.

    Returns one row per cell with mean/std of FAA and BT. A failing cell is
    recorded with its error and the sweep moves on.
    """
    if "seed" in grid:
        raise ValueError("put replication seeds in the `seeds` argument, not the grid")
    seeds = list(seeds) if seeds else [base_cfg.seed]
    keys = sorted(grid)
    rows = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cell = dict(zip(keys, combo))
        faas, bts, lam = [], [], None
        error = None
        for seed in seeds:
            try:
                record = run_experiment(base_cfg.replace(**cell, seed=seed))
            except Exception as err:  # noqa: BLE001 - cell isolation is the point
                error = f"{type(err).__name__}: {err}"
                traceback.print_exc()
                break
            faas.append(record.faa)
            bts.append(record.bt)
            lam = record.lambda_alpha
        faa_mean, faa_std = _aggregate(faas)
        bt_mean, bt_std = _aggregate(bts)
        rows.append({**cell, "lambda_alpha": lam, "n_seeds": len(faas),
                     "faa_mean": faa_mean, "faa_std": faa_std,
                     "bt_mean": bt_mean, "bt_std": bt_std, "error": error})
    if out_dir is not None:
        save_table(rows, Path(out_dir) / "sweep.tsv")
    return rows


def save_table(rows: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0])
    with open(path, "w") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write("\t".join("" if row.get(c) is None else str(row.get(c))
                               for c in cols) + "\n")
