"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``python3
tests/test_acceptance.py``). The scaled benchmark run takes about half an
hour on one CPU core; deselect it with ``-m "not slow"``.
"""
import json
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from carskit import benchmark, cli, io, uq
from carskit.config import BenchmarkGrid, ExperimentConfig
from carskit.nn import NetworkConfig
from carskit.nn import tensor as T
from carskit.physics import DEFAULT_WEIGHTS, LossWeights, kk_loss, smoothness_loss, total_loss
from carskit.signal_ops import hilbert_imag
from carskit.spectrum import PredictiveDistribution, make_grid
from carskit.synth import NoiseConfig, SynthConfig, draw_pair, generate_dataset, pair_rng
from carskit.metrics import avg_log_likelihood, ece
from carskit.uq.gp import gp_posterior
from gradcheck import check, op_cases


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return emit


def test_criterion_1_hilbert_oracle(report):
    start = time.perf_counter()
    n, om, gam, amp = 1024, 0.5, 0.02, 1.0
    w = make_grid(n).omega
    d = om - w
    re = amp * d / (d**2 + gam**2)
    # with cos -> sin, the real part maps onto +Im chi = A*gamma / (d^2 + gamma^2)
    expected = amp * gam / (d**2 + gam**2)
    interior = (w >= 10 * gam) & (w <= 1 - 10 * gam)
    lor_err = float(np.abs(hilbert_imag(re) - expected)[interior].max())
    t = np.arange(256)
    tone_err = float(np.abs(hilbert_imag(np.cos(2 * np.pi * 3 * t / 256)) - np.sin(2 * np.pi * 3 * t / 256)).max())
    elapsed = time.perf_counter() - start
    ok = lor_err < 1e-2 and tone_err < 1e-10 and elapsed < 1.0
    report(1, ok, f"lorentzian interior max err {lor_err:.3g} (< 1e-2), pure tone {tone_err:.2e} (< 1e-10), {elapsed:.3f}s")
    assert tone_err < 1e-10
    assert lor_err < 1e-2
    assert elapsed < 1.0


def test_criterion_2_gradient_suite(report):
    start = time.perf_counter()
    worst = {}
    failures = []
    for name, build, factory, tol in op_cases():
        errs = [check(build, factory(np.random.default_rng(seed))) for seed in range(20)]
        worst[name] = max(errs)
        if worst[name] >= tol:
            failures.append(name)
    w = LossWeights(*DEFAULT_WEIGHTS)
    errs = []
    for seed in range(20):
        r = np.random.default_rng(100 + seed)
        x = r.random((2, 32))

        def build(raman, nrb):
            data = T.mean(T.square(raman - x * 0.5))
            return total_loss(data, kk_loss(raman, nrb, x), smoothness_loss(nrb), w)[0]

        errs.append(check(build, [r.random((2, 32)), 0.5 * r.random((2, 32))]))
    worst["physics_total"] = max(errs)
    if worst["physics_total"] >= 1e-4:
        failures.append("physics_total")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30
    report(2, ok, f"{len(worst)} ops x 20 instances, worst rel err {max(worst.values()):.2e}, "
                  f"failures {failures or 'none'}, {elapsed:.1f}s")
    assert not failures
    assert elapsed < 30


def test_criterion_3_metric_oracles(report):
    start = time.perf_counter()
    r = np.random.default_rng(0)
    y = r.normal(size=(10, 100))
    ll_exact = avg_log_likelihood(PredictiveDistribution(y, np.ones_like(y)), y)
    z = r.normal(size=100_000)
    unit = PredictiveDistribution(np.zeros_like(z), np.ones_like(z))
    ll_mc = avg_log_likelihood(unit, z)
    ece_cal, _ = ece(unit, z)
    mu = np.zeros(1000)
    ece_deg, _ = ece(PredictiveDistribution(mu, np.zeros_like(mu)), mu + 1.0)
    elapsed = time.perf_counter() - start
    checks = [abs(ll_exact + 0.9189385) < 1e-6, abs(ll_mc + 1.4189) < 0.02, ece_cal < 0.01,
              abs(ece_deg - 0.5) < 1e-6, elapsed < 10]
    report(3, all(checks), f"LL exact {ll_exact:.7f}, LL MC {ll_mc:.4f}, ECE calibrated {ece_cal:.4f}, "
                           f"ECE degenerate {ece_deg:.6f}, {elapsed:.2f}s")
    assert all(checks)


def test_criterion_4_gp_equivalence(report):
    X = np.array([[0.1, 0.9], [0.4, 0.2], [0.8, 0.5]])
    Y = np.array([[1.0, -0.3], [0.2, 0.5], [-0.7, 0.9]])
    Xs = np.array([[0.4, 0.2], [0.0, 0.0], [0.6, 0.6]])
    ls, sv, nv = 0.5, 0.8, 0.01

    def k(a, b):
        return sv * np.exp(-0.5 * np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1) / ls**2)

    Kinv = np.linalg.inv(k(X, X) + nv * np.eye(3))
    mean_ref = k(Xs, X) @ Kinv @ Y
    var_ref = np.diag(k(Xs, Xs) - k(Xs, X) @ Kinv @ k(X, Xs))
    mean, var = gp_posterior(X, Y, Xs, ls, sv, nv)
    err = max(np.abs(mean - mean_ref).max(), np.abs(var - var_ref).max())
    report(4, err < 1e-10, f"max abs deviation from matrix-inverse oracle {err:.2e} (< 1e-10)")
    assert err < 1e-10


def test_criterion_5_physics_sanity(report):
    start = time.perf_counter()
    grid = make_grid(640)
    cfg = SynthConfig(noise=NoiseConfig(0.0), seed=0)
    interior = (grid.omega >= 0.1) & (grid.omega <= 0.9)
    sq = []
    for i in range(50):
        pair = draw_pair(cfg, pair_rng(cfg.seed, i), grid).pair
        resid = pair.raman_true - hilbert_imag(pair.cars - pair.nrb_true)
        sq.append(resid[interior] ** 2)
    rmse = float(np.sqrt(np.mean(sq)))
    elapsed = time.perf_counter() - start
    ok = rmse < 0.05 and elapsed < 10
    report(5, ok, f"interior RMSE of raman_true - Im H(x - nrb_true) over 50 pairs {rmse:.4f} (< 0.05), {elapsed:.2f}s")
    assert rmse < 0.05
    assert elapsed < 10


SCALED_RUN = ExperimentConfig(
    synth=SynthConfig(seed=0),
    train=uq.TrainConfig(epochs=60, batch_size=32, seed=0, network=NetworkConfig(width=8)),
    n_pairs=625,  # 500 train / 125 eval after the 80/20 split
    n_channels=256,
    replicates=3,
    benchmark=BenchmarkGrid(
        (uq.UqMethod.MC_DROPOUT, uq.UqMethod.DEEP_ENSEMBLE, uq.UqMethod.FULL_BNN, uq.UqMethod.PARTIAL_BNN),
        (False, True),
    ),
)


@pytest.mark.slow
def test_criterion_6_directional_reproduction(report):
    start = time.perf_counter()
    results = benchmark.run_benchmark(SCALED_RUN)
    elapsed = time.perf_counter() - start
    by = {(r.method, r.physics, r.replicate): r for r in results}
    errors = [r.error for r in results if r.error]
    wins = {}
    for m in (uq.UqMethod.DEEP_ENSEMBLE, uq.UqMethod.FULL_BNN):
        wins[m.value] = sum(by[(m, True, k)].ece <= by[(m, False, k)].ece for k in range(SCALED_RUN.replicates))
    rows = benchmark.aggregate(results, SCALED_RUN.benchmark.cells())
    best = min(rows, key=lambda r: r.ece_mean)
    table = benchmark.format_table(rows)
    ok_dir = all(v >= 2 for v in wins.values())
    ok_best = best.method is uq.UqMethod.FULL_BNN
    ok = ok_dir and ok_best and not errors and elapsed < 1800
    report(6, ok, f"physics ECE <= no-physics in {wins} of 3 replicates (need >= 2); lowest mean ECE "
                  f"{best.method.value} physics={best.physics} {best.ece_mean:.4f}; {elapsed / 60:.1f} min (< 30)\n{table}")
    assert not errors
    assert ok_dir
    assert ok_best
    assert elapsed < 1800


def test_criterion_7_determinism(report, tmp_path):
    cfg = {"n_pairs": 40, "n_channels": 32, "synth": {"seed": 11},
           "train": {"method": "full_bnn", "epochs": 2, "seed": 5,
                     "network": {"n_blocks": 2, "width": 4, "kernel_size": 3},
                     "method_params": {"bnn_samples": 5}}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outputs = []
    for run in ("a", "b"):
        data = tmp_path / f"{run}.bin"
        assert cli.main(["synth", "--config", str(path), "--out", str(data)]) == 0
        assert cli.main(["train", "--config", str(path), "--data", str(data), "--out", str(tmp_path / f"ck_{run}")]) == 0
        assert cli.main(["eval", "--checkpoint", str(tmp_path / f"ck_{run}"), "--data", str(data),
                         "--out-dir", str(tmp_path / f"ev_{run}")]) == 0
        outputs.append((data.read_bytes(), (tmp_path / f"ck_{run}" / "params.bin").read_bytes(),
                        (tmp_path / f"ev_{run}" / "predictions.csv").read_bytes()))
    same = [x == y for x, y in zip(*outputs)]
    report(7, all(same), f"dataset bytes identical {same[0]}, parameters identical {same[1]}, "
                         f"predictions identical {same[2]}")
    assert all(same)


def test_criterion_8_round_trips(report, tmp_path):
    ds = generate_dataset(20, SynthConfig(seed=8), make_grid(64))
    io.write_dataset(tmp_path / "a.bin", ds, SynthConfig(seed=8))
    back, header = io.read_dataset(tmp_path / "a.bin")
    io.write_dataset(tmp_path / "b.bin", back, SynthConfig.from_dict(header["synth"]))
    ds_ok = (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    cfg = uq.TrainConfig(method="deep_ensemble", epochs=1, network=NetworkConfig(n_blocks=1, width=4, kernel_size=3),
                         method_params=uq.MethodParams(ensemble_size=2))
    xtr, ytr, _ = back.train
    pred = uq.train(cfg, xtr, ytr)
    cli.save_predictor(tmp_path / "ck", pred, cfg, 64)
    loaded, _ = cli.load_predictor(tmp_path / "ck")
    state_ok = all(loaded.state()[k].tobytes() == v.tobytes() for k, v in pred.state().items())
    xev = back.eval[0]
    pred_ok = loaded.predict(xev).mean.tobytes() == pred.predict(xev).mean.tobytes()
    ok = ds_ok and state_ok and pred_ok
    report(8, ok, f"dataset write-read-write byte-identical {ds_ok}, checkpoint parameters bit-exact {state_ok}, "
                  f"reloaded predictions bit-exact {pred_ok}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", *sys.argv[1:]]))
