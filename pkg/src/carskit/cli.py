"""Command-line entry point: ``carskit {synth,train,eval,benchmark,plot}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import benchmark, config as cfgmod, io, metrics, plotting, uq
from .errors import CarsKitError, ConfigError, DataError
from .nn.network import NetworkConfig
from .spectrum import PredictiveDistribution, make_grid
from .synth import generate_dataset
from .uq.neural import TrainingAborted

log = logging.getLogger("carskit")

LOG_COLUMNS = ["member", "epoch", "data_term", "kk_term", "smooth_term", "total"]


def _apply_overrides(cfg: cfgmod.ExperimentConfig, args) -> cfgmod.ExperimentConfig:
    synth, train = cfg.synth, cfg.train
    if getattr(args, "seed", None) is not None:
        synth = replace(synth, seed=args.seed)
        train = train.with_(seed=args.seed)
    if getattr(args, "method", None) is not None:
        method = uq.UqMethod.parse(args.method)
        physics = train.physics_on and method.is_neural
        train = train.with_(method=method, physics_on=physics)
    if getattr(args, "physics", None) is not None:
        train = train.with_(physics_on=args.physics)
    if getattr(args, "epochs", None) is not None:
        train = train.with_(epochs=args.epochs)
    if getattr(args, "batch_size", None) is not None:
        train = train.with_(batch_size=args.batch_size)
    if getattr(args, "width", None) is not None:
        train = train.with_(network=NetworkConfig(**{**train.network.to_dict(), "width": args.width}))
    changes = {"synth": synth, "train": train}
    if getattr(args, "n_pairs", None) is not None:
        changes["n_pairs"] = args.n_pairs
    if getattr(args, "n_channels", None) is not None:
        changes["n_channels"] = args.n_channels
    if getattr(args, "replicates", None) is not None:
        changes["replicates"] = args.replicates
    return replace(cfg, **changes)


def cmd_synth(args) -> int:
    cfg = _apply_overrides(cfgmod.load(args.config), args)
    ds = generate_dataset(cfg.n_pairs, cfg.synth, make_grid(cfg.n_channels))
    io.write_dataset(args.out, ds, cfg.synth)
    print(f"wrote {len(ds)} pairs ({len(ds.train_idx)} train / {len(ds.eval_idx)} eval) to {args.out}")
    return 0


def _manifest(tcfg: uq.TrainConfig, n_channels: int, extra: dict | None = None) -> dict:
    return {
        "method": tcfg.method.value,
        "physics_on": tcfg.physics_on,
        "train_config": tcfg.to_dict(),
        "n_channels": n_channels,
        "metric_of_record": None,
        **(extra or {}),
    }


def save_predictor(path, predictor, tcfg: uq.TrainConfig, n_channels: int, extra: dict | None = None) -> None:
    io.write_checkpoint(path, _manifest(tcfg, n_channels, extra), predictor.state())


def load_predictor(path):
    manifest, tensors = io.read_checkpoint(path)
    tcfg = uq.TrainConfig.from_dict(manifest["train_config"])
    return uq.predictor_from_state(tcfg, tensors, manifest["n_channels"]), manifest


def cmd_train(args) -> int:
    cfg = _apply_overrides(cfgmod.load(args.config), args)
    tcfg = cfg.train
    if tcfg.physics_on and tcfg.method is uq.UqMethod.GP_BASELINE:
        raise ConfigError("the GP baseline cannot be trained with physics terms")
    ds, header = io.read_dataset(args.data)
    xtr, ytr, _ = ds.train if len(ds.train_idx) else ds.stack()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    extra = {"dataset": {"path": str(args.data), "seed": header["seed"]}}
    try:
        predictor = uq.train(tcfg, xtr, ytr, log=rows.append)
    except TrainingAborted as err:
        if err.predictor is not None:
            save_predictor(out, err.predictor, tcfg, xtr.shape[1], {**extra, "aborted": str(err)})
        _write_log(args.log or out / "training_log.csv", rows)
        raise
    if rows:
        extra["metric_of_record"] = {"final_total_loss": rows[-1]["total"]}
    save_predictor(out, predictor, tcfg, xtr.shape[1], extra)
    _write_log(args.log or out / "training_log.csv", rows)
    print(f"trained {tcfg.method.value} (physics={'on' if tcfg.physics_on else 'off'}) -> {out}")
    return 0


def _write_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})


def _write_predictions(path, names, omega, cars, truth, pred: PredictiveDistribution) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(plotting.REQUIRED_COLUMNS)
        nrb = pred.nrb if pred.nrb is not None else np.full_like(pred.mean, np.nan)
        for i, name in enumerate(names):
            for c in range(len(omega)):
                t = "" if truth[i] is None else repr(float(truth[i][c]))
                n = "" if not np.isfinite(nrb[i, c]) else repr(float(nrb[i, c]))
                w.writerow([name, repr(float(omega[c])), repr(float(cars[i, c])), t,
                            repr(float(pred.mean[i, c])), repr(float(pred.variance[i, c])), n])


def cmd_eval(args) -> int:
    predictor, manifest = load_predictor(args.checkpoint)
    grid = make_grid(manifest["n_channels"])
    if args.real_dir:
        samples = io.load_real_directory(args.real_dir, grid)
        names = [s.name for s in samples]
        cars = np.stack([s.cars for s in samples])
        truth = [s.raman for s in samples]
    else:
        ds, header = io.read_dataset(args.data)
        if header["n_channels"] != manifest["n_channels"]:
            raise DataError(
                f"dataset grid ({header['n_channels']}) differs from checkpoint grid ({manifest['n_channels']})"
            )
        idx = {"eval": ds.eval_idx, "train": ds.train_idx, "all": np.arange(len(ds))}[args.split]
        if len(idx) == 0:
            raise DataError(f"the {args.split!r} split of {args.data} is empty")
        cars, raman, _ = ds.stack(idx)
        names = [f"pair{int(i):05d}" for i in idx]
        truth = list(raman)
    pred = uq.predict_dist(predictor, cars)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_predictions(out / "predictions.csv", names, grid.omega, cars, truth, pred)
    scored = [i for i, t in enumerate(truth) if t is not None]
    result = {"method": manifest["method"], "physics_on": manifest["physics_on"],
              "n_spectra": len(names), "n_scored": len(scored)}
    if scored:
        y = np.stack([truth[i] for i in scored])
        sub = pred[np.array(scored)]
        result.update(metrics.score(sub, y))
        per = metrics.per_spectrum_scores(sub, y)
        result["per_spectrum"] = {
            k: {"mean": float(v.mean()), "std": float(v.std())} for k, v in per.items()
        }
        _, curve = metrics.ece(sub, y)
        curve.to_csv(out / "calibration.csv")
    (out / "metrics.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(json.dumps({k: result[k] for k in ("ll", "ece", "rmse", "n_spectra") if k in result}))
    return 0


def cmd_benchmark(args) -> int:
    cfg = _apply_overrides(cfgmod.load(args.config), args)
    results = benchmark.run_benchmark(cfg, args.threads)
    cells = cfg.benchmark.cells()
    rows = benchmark.aggregate(results, cells)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    benchmark.write_report(out, rows)
    benchmark.write_runs(out.with_name(out.stem + "_runs.csv"), results)
    print(benchmark.format_table(rows))
    return 0


def cmd_plot(args) -> int:
    paths = plotting.plot_predictions(args.predictions, args.out_dir)
    print(f"wrote {len(paths)} figures to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carskit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic CARS/Raman dataset file")
    s.add_argument("--config", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--n-pairs", type=int)
    s.add_argument("--n-channels", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train one (method, physics) cell")
    t.add_argument("--config", type=Path)
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True, help="checkpoint directory")
    t.add_argument("--log", type=Path, help="training log CSV (default: <out>/training_log.csv)")
    t.add_argument("--method", choices=[m.value for m in uq.UqMethod])
    t.add_argument("--physics", dest="physics", action="store_true", default=None)
    t.add_argument("--no-physics", dest="physics", action="store_false")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--width", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset split or real spectra")
    e.add_argument("--checkpoint", type=Path, required=True)
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path)
    src.add_argument("--real-dir", type=Path)
    e.add_argument("--split", choices=["eval", "train", "all"], default="eval")
    e.add_argument("--out-dir", type=Path, required=True)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("benchmark", help="run the method x physics comparison grid")
    b.add_argument("--config", type=Path)
    b.add_argument("--out", type=Path, required=True, help="report CSV")
    b.add_argument("--replicates", type=int)
    b.add_argument("--threads", type=int, help="worker processes (default: $CARSKIT_THREADS or CPU count)")
    b.set_defaults(func=cmd_benchmark)

    pl = sub.add_parser("plot", help="render SVG figures from eval predictions")
    pl.add_argument("--predictions", type=Path, required=True)
    pl.add_argument("--out-dir", type=Path, required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CarsKitError as err:
        print(f"carskit {args.command}: error: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"carskit {args.command}: error: {err}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
