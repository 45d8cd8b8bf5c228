"""Method x physics comparison grid with replicate seeds."""
from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics, uq
from .config import ExperimentConfig
from .errors import CarsKitError
from .spectrum import make_grid
from .synth import generate_dataset
from .uq.config import UqMethod

log = logging.getLogger(__name__)

RUN_COLUMNS = ["method", "physics", "replicate", "ll", "ece", "rmse", "wall_time_s", "error"]
REPORT_COLUMNS = ["method", "physics", "ll_mean", "ll_std", "ece_mean", "ece_std",
                  "rmse_mean", "rmse_std", "wall_time_s", "replicates", "error"]


@dataclass(frozen=True)
class RunResult:
    method: UqMethod
    physics: bool
    replicate: int
    ll: float = float("nan")
    ece: float = float("nan")
    rmse: float = float("nan")
    wall_time_s: float = 0.0
    error: str = ""


@dataclass(frozen=True)
class ReportRow:
    method: UqMethod
    physics: bool
    ll_mean: float
    ll_std: float
    ece_mean: float
    ece_std: float
    rmse_mean: float
    rmse_std: float
    wall_time_s: float
    replicates: int
    error: str = ""


def worker_count() -> int:
    raw = os.environ.get("CARSKIT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer CARSKIT_THREADS=%r", raw)
    return os.cpu_count() or 1


def replicate_data(cfg: ExperimentConfig, replicate: int):
    synth_cfg = replace(cfg.synth, seed=cfg.synth.seed + replicate)
    ds = generate_dataset(cfg.n_pairs, synth_cfg, make_grid(cfg.n_channels))
    return ds.train, ds.eval


def run_cell(cfg: ExperimentConfig, method: UqMethod, physics: bool, replicate: int, data=None) -> RunResult:
    """Train and score one (method, physics, replicate) cell; failures become an error marker."""
    start = time.perf_counter()
    try:
        (xtr, ytr, _), (xev, yev, _) = data if data is not None else replicate_data(cfg, replicate)
        tcfg = cfg.train.with_(method=method, physics_on=physics, seed=cfg.train.seed + replicate)
        predictor = uq.train(tcfg, xtr, ytr)
        pred = uq.predict_dist(predictor, xev)
        s = metrics.score(pred, yev, np.asarray(cfg.levels))
        return RunResult(method, physics, replicate, s["ll"], s["ece"], s["rmse"], time.perf_counter() - start)
    except (CarsKitError, ValueError, ArithmeticError, np.linalg.LinAlgError) as err:
        log.error("cell %s physics=%s replicate=%d failed: %s", method.value, physics, replicate, err)
        return RunResult(method, physics, replicate, wall_time_s=time.perf_counter() - start,
                         error=f"{type(err).__name__}: {err}")


def _run_replicate(cfg: ExperimentConfig, replicate: int, cells) -> list[RunResult]:
    data = replicate_data(cfg, replicate)
    out = []
    for method, physics in cells:
        res = run_cell(cfg, method, physics, replicate, data)
        log.info("replicate %d %s physics=%s: ll=%.4f ece=%.4f rmse=%.4f (%.1fs)", replicate,
                 method.value, physics, res.ll, res.ece, res.rmse, res.wall_time_s)
        out.append(res)
    return out


def run_benchmark(cfg: ExperimentConfig, workers: int | None = None) -> list[RunResult]:
    """Every requested cell for every replicate.

    Replicate ``r`` shifts both the data seed and the training seed by ``r``;
    all cells of one replicate see the same dataset. Each (cell, replicate)
    task is self-contained, so tasks may run in separate processes.
    """
    cells = cfg.benchmark.cells()
    workers = workers or worker_count()
    tasks = [(r, [c]) for r in range(cfg.replicates) for c in cells]
    if workers <= 1:
        results = []
        for r in range(cfg.replicates):
            results.extend(_run_replicate(cfg, r, cells))
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_replicate, cfg, r, c) for r, c in tasks]
        return [res for f in futures for res in f.result()]


def aggregate(results: list[RunResult], cells) -> list[ReportRow]:
    rows = []
    for method, physics in cells:
        runs = [r for r in results if r.method is method and r.physics == physics]
        ok = [r for r in runs if not r.error]
        errors = "; ".join(sorted({r.error for r in runs if r.error}))
        if not ok:
            nan = float("nan")
            rows.append(ReportRow(method, physics, nan, nan, nan, nan, nan, nan,
                                  sum(r.wall_time_s for r in runs), 0, errors or "no runs"))
            continue

        def ms(attr):
            v = np.array([getattr(r, attr) for r in ok])
            return float(v.mean()), float(v.std())

        ll, ece, rm = ms("ll"), ms("ece"), ms("rmse")
        rows.append(ReportRow(method, physics, *ll, *ece, *rm,
                              sum(r.wall_time_s for r in runs), len(ok), errors))
    return rows


def _fmt(v):
    if isinstance(v, UqMethod):
        return v.value
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v


def write_runs(path, results: list[RunResult]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for r in results:
            w.writerow([_fmt(getattr(r, c)) for c in RUN_COLUMNS])


def write_report(path, rows: list[ReportRow]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])


def format_table(rows: list[ReportRow]) -> str:
    """Plain-text table in the layout of a with/without-physics comparison."""
    lines = [f"{'method':<15}{'physics':<9}{'LL':>20}{'ECE':>20}{'RMSE':>20}"]
    for r in rows:
        if r.error and not r.replicates:
            lines.append(f"{r.method.value:<15}{str(r.physics):<9}  ERROR: {r.error}")
            continue
        lines.append(
            f"{r.method.value:<15}{str(r.physics):<9}"
            f"{r.ll_mean:>12.3f}±{r.ll_std:<7.3f}{r.ece_mean:>12.3f}±{r.ece_std:<7.3f}"
            f"{r.rmse_mean:>12.3f}±{r.rmse_std:<7.3f}"
        )
    return "\n".join(lines)
