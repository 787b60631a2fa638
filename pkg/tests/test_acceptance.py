"""Acceptance criteria 1-10; each test records one PASS/FAIL line before asserting.

Synthetic fixture for criteria 3-7: labels from the sigma^2 = 0.1 Gaussian
kernel (dictionary entry 7) on 5 random centers in [0, 1]^2, noise std
0.01, raw (unnormalized) labels, a 5-learner ring and T rounds per learner.
"""

import io
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import record
from oracles import gaussian_kernel, gradient_descent_solution, local_objective_dense
from domkl import cli, learner as lrn, metrics as M, simulator as sim
from domkl.data import synth_rkhs
from domkl.kernels import KernelSpec, dictionary_variances, sample_feature_map
from domkl.topology import preset

J = 5
SEEDS = range(10)
P_STAR = 7


def synthetic_streams(seed, T):
    ds = synth_rkhs(2, T * J, KernelSpec(0.1), 5, 0.01, seed)
    return sim.partition_data(ds, J, seed + 100)


def config(seed, **kw):
    return sim.SimulationConfig(preset("ring", J), seed=seed, **kw)


_runs = {}


def domkl_run(seed, T):
    """Cached (result, streams, metrics) for one fixture run."""
    if (seed, T) not in _runs:
        streams = synthetic_streams(seed, T)
        cfg = config(seed)
        start = time.perf_counter()
        res = sim.run(cfg, streams)
        elapsed = time.perf_counter() - start
        tm = M.trial_metrics(res, streams, cfg.build_dictionary(2), cfg.reg)
        _runs[seed, T] = (res, streams, tm, elapsed)
    return _runs[seed, T]


def test_ac1_rf_fidelity():
    rng = np.random.default_rng(0)
    pairs = rng.uniform(-1, 1, (100, 2, 5)) * 0.5
    start = time.perf_counter()
    errs = {}
    for D in (20, 2000):
        fmap = sample_feature_map(KernelSpec(1.0), 5, D, 1)
        errs[D] = np.mean([abs(fmap.approx_kernel(a, b) - gaussian_kernel(a, b, 1.0)) for a, b in pairs])
    elapsed = time.perf_counter() - start
    ok = errs[2000] <= 0.05 and errs[2000] < errs[20] and elapsed < 5
    record("AC 1", ok, f"mean err D=2000 {errs[2000]:.4f} (<= 0.05), D=20 {errs[20]:.4f}, {elapsed:.2f}s")
    assert ok


def test_ac2_closed_form():
    rng = np.random.default_rng(1)
    D = 50
    worst_dense = worst_gd = 0.0
    start = time.perf_counter()
    for _ in range(50):
        deg = int(rng.integers(1, 4))
        rho, eta, reg = rng.uniform(0.5, 5, 3)
        x = rng.normal(size=3)
        z = sample_feature_map(KernelSpec(rng.uniform(0.1, 2)), 3, D, int(rng.integers(1 << 30))).features(x)
        y = rng.normal()
        theta = rng.normal(size=(1, 2 * D))
        dual = rng.normal(size=(1, 2 * D))
        nbr = [rng.normal(size=(1, 2 * D)) for _ in range(deg)]
        state = lrn.LearnerState(0, tuple(range(1, deg + 1)), theta, dual, np.zeros(1), np.ones(1))
        snap = lrn.NeighborSnapshot({i + 1: nbr[i] for i in range(deg)})
        got = lrn.local_update_quadratic(state, z[None, :], y, snap, rho, eta, reg)[0]
        args = (theta[0], dual[0], z, y, [n[0] for n in nbr], rho, eta, reg)
        M_, b = local_objective_dense(*args)
        worst_dense = max(worst_dense, np.max(np.abs(got - np.linalg.solve(M_, b))))
        worst_gd = max(worst_gd, np.max(np.abs(got - gradient_descent_solution(*args))))
    elapsed = time.perf_counter() - start
    ok = worst_dense <= 1e-10 and worst_gd <= 1e-6 and elapsed < 10
    record("AC 2", ok, f"max dev dense {worst_dense:.1e} (<= 1e-10), GD {worst_gd:.1e} (<= 1e-6), {elapsed:.2f}s")
    assert ok


def test_ac3_structural_invariants():
    res, _, _, elapsed = domkl_run(0, 500)
    simplex = np.max(np.abs(res.weights.sum(axis=-1) - 1.0))
    nonneg = bool(np.all(res.weights >= 0))
    dual_sum = float(res.max_dual_sum.max())
    final_dual = np.max(np.linalg.norm(sum(s.dual for s in res.final_states), axis=-1))
    ok = (res.checks_passed and simplex <= 1e-9 and nonneg and dual_sum <= 1e-9 and final_dual <= 1e-9
          and res.weights.shape == (J, 500, 17) and elapsed < 60)
    record("AC 3", ok, f"max |sum q - 1| {simplex:.1e}, max |sum dual| {dual_sum:.1e} over 500 rounds, "
                       f"{elapsed:.1f}s")
    assert ok


def test_ac4_consensus_trend():
    res, _, _, _ = domkl_run(0, 500)
    disc = M.discrepancy_terms(res) ** 2
    n = 50
    first, last = disc[:, :n].mean(), disc[:, -n:].mean()
    # checkpoints of regret_d(t)/t inside one T=1000 run
    _, _, tm1000, _ = domkl_run(0, 1000)
    ck = [tm1000.regret_d[:, t - 1].mean() / t for t in (250, 500, 1000)]
    # separately tuned runs of horizon 250, 500, 1000
    sep = [domkl_run(0, T)[2].cv.mean() for T in (250, 500, 1000)]
    dec = lambda v: all(a > b for a, b in zip(v, v[1:]))  # noqa: E731
    ok = last <= 0.5 * first and dec(ck) and dec(sep)
    record("AC 4", ok, f"CV last/first 10% = {last / first:.3f} (<= 0.5); regret_d/T checkpoints "
                       f"{', '.join(f'{v:.2e}' for v in ck)}; separate runs {', '.join(f'{v:.2e}' for v in sep)}")
    assert ok


def test_ac5_accuracy_regret_growth():
    ra = {T: np.mean([domkl_run(s, T)[2].regret_a[:, -1].mean() for s in SEEDS]) for T in (500, 1000)}
    ratio = ra[1000] / ra[500]
    ok = ratio <= 1.6 and ra[500] > 0
    record("AC 5", ok, f"regret_a(1000)/regret_a(500) = {ratio:.3f} (<= 1.6) over {len(SEEDS)} seeds")
    assert ok


def test_ac6_best_kernel_competitiveness():
    T = 500
    domkl, best, median, below, best_idx = [], [], [], [], []
    for s in SEEDS:
        res, streams, _, _ = domkl_run(s, T)
        single = np.array([sim.run(config(s, mode="dokl", kernel_index=p), streams).losses.mean()
                           for p in range(1, 18)])
        m = res.losses.mean()
        domkl.append(m)
        best.append(single.min())
        median.append(np.median(single))
        below.append(m < np.median(single))
        best_idx.append(int(single.argmin()) + 1)
    ratio = np.mean(domkl) / np.mean(best)
    ok = ratio <= 1.5 and np.mean(domkl) < np.mean(median) and all(below)
    record("AC 6", ok, f"DOMKL/best DOKL MSE = {ratio:.3f} (<= 1.5); below median in {sum(below)}/{len(below)} "
                       f"seeds; best kernel per seed {best_idx} (generating kernel {P_STAR})")
    assert ok


def test_ac7_single_kernel_equivalence():
    streams = synthetic_streams(3, 200)
    v = tuple(dictionary_variances())
    dokl = config(3, mode="dokl", kernel_index=P_STAR, variances=v)
    single = config(3, variances=(v[P_STAR - 1],))
    # both learners see the feature map drawn for dictionary entry P_STAR under seed 3
    dictionary = dokl.build_dictionary(2)
    a = sim.run(dokl, streams, record_theta=True)
    b = sim.run(single, streams, dictionary, record_theta=True)
    # entry 1 needs no explicit dictionary: both configs draw it with the same seed path
    c = sim.run(config(3, mode="dokl", kernel_index=1, variances=v), streams, record_theta=True)
    d = sim.run(config(3, variances=v[:1]), streams, record_theta=True)
    ok = (a.theta_history.tobytes() == b.theta_history.tobytes()
          and a.predictions.tobytes() == b.predictions.tobytes()
          and c.theta_history.tobytes() == d.theta_history.tobytes())
    record("AC 7", ok, f"theta trajectories {a.theta_history.shape} bitwise identical for kernels {P_STAR} and 1: {ok}")
    assert ok


def test_ac8_determinism_across_threads(tmp_path):
    payloads = []
    for workers in (1, 4):
        out = tmp_path / "run"
        cfg = {"dataset": {"synthetic": {"samples": 500}}, "network": {"topology": "ring", "learners": J},
               "trials": 2, "seed": 11, "output": {"dir": str(out), "format": "json"},
               "simulation": {"workers": workers}}
        cli.run_experiment(cli.resolve(cfg), io.StringIO())
        files = {}
        for root, _, names in os.walk(out):
            for name in names:
                if name != "timing.json":
                    path = os.path.join(root, name)
                    files[os.path.relpath(path, out)] = open(path, "rb").read()
        payloads.append(files)
        for root, _, names in os.walk(out, topdown=False):
            for name in names:
                os.remove(os.path.join(root, name))
            os.rmdir(root)
    a, b = payloads
    # workers is part of the echoed config; everything else must match byte for byte
    b = {k: v.replace(b'"workers": 4', b'"workers": 1') for k, v in b.items()}
    ok = a.keys() == b.keys() and all(a[k] == b[k] for k in a) and len(a) > 2
    record("AC 8", ok, f"{len(a)} payload files byte-identical for 1 vs 4 workers: {ok}")
    assert ok


WAVE = os.environ.get("DOMKL_WAVE_DATA")


@pytest.mark.skipif(not WAVE or not os.path.exists(WAVE), reason="set DOMKL_WAVE_DATA to the UCI Wave energy CSV")
def test_ac9_wave_ballpark():
    from domkl.data import load_csv, normalize

    ds = normalize(load_csv(WAVE).take(slice(0, 9500)), "minmax")
    streams = sim.partition_data(ds, 3, 0)
    cfg = sim.SimulationConfig(preset("complete", 3), seed=0)
    domkl = sim.run(cfg, streams).losses.mean()
    p100 = int(np.argmin(np.abs(np.array(dictionary_variances()) - 100.0))) + 1
    dokl = sim.run(replace(cfg, mode="dokl", kernel_index=p100), streams).losses.mean()
    target = 0.047e-2
    ok = target / 5 <= domkl <= target * 5 and domkl <= dokl
    record("AC 9", ok, f"DOMKL MSE {domkl:.3e} vs reference {target:.3e} (factor 5); "
                       f"DOKL(sigma^2=100) {dokl:.3e}")
    assert ok


def test_ac10_hedge_example():
    eta_g = 2.0
    q = lrn.combine_weights([0.0, eta_g * np.log(3.0)], [], eta_g)
    # the same losses split between a learner and two neighbors
    q2 = lrn.combine_weights([0.0, 0.5 * eta_g * np.log(3.0)], [[0.0, 0.25 * eta_g * np.log(3.0)]] * 2, eta_g)
    err = max(np.max(np.abs(q - [0.75, 0.25])), np.max(np.abs(q2 - [0.75, 0.25])))
    ok = err <= 1e-12
    record("AC 10", ok, f"weights {q.tolist()} (max dev {err:.1e})")
    assert ok
