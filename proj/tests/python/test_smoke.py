import json
import math
import os
import subprocess

import numpy as np
import pytest

import kernelmix as km


def make_series(T=8, n=40, seed=0):
    rng = np.random.default_rng(seed)
    times, points, weights = [], [], []
    for t in range(T):
        centers = np.where(rng.random(n) < 0.5, -4.0, 4.0)
        x = centers + 0.4 * rng.standard_normal(n)
        times.append(float(t))
        points.append(x.reshape(-1, 1))
        weights.append(np.ones(n))
    return km.CytoSeries(times, points, weights)


def test_kernel_weight_values():
    spec = km.KernelSpec(km.KernelFamily.gaussian, 2.0, 4.0)
    assert km.kernel_weight(spec, 0.0) == 1.0
    assert km.kernel_weight(spec, 2.0) == pytest.approx(math.exp(-0.5))
    assert km.kernel_weight(spec, 9.0) == 0.0


def test_mvn_logpdf_standard_normal():
    lp = km.mvn_logpdf(np.zeros(1), np.zeros(1), np.eye(1))
    assert lp == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_fit_recovers_separated_clusters():
    series = make_series()
    init_cfg = km.InitConfig()
    init_cfg.seed = 3
    init = km.constant_init(series, 2, init_cfg)

    cfg = km.FitConfig()
    cfg.K = 2
    cfg.bandwidths = km.Bandwidths(3.0, 3.0, 5.0)
    result = km.fit(series, init, cfg)

    assert len(result.loglik_trace) >= 1
    mus = sorted(result.params.states[0].mu.ravel().tolist())
    assert mus[0] == pytest.approx(-4.0, abs=0.3)
    assert mus[1] == pytest.approx(4.0, abs=0.3)
    for t in range(len(series)):
        gamma = result.resp.gamma[t]
        assert np.allclose(gamma.sum(axis=1), 1.0, atol=1e-10)


def test_make_folds_interleave():
    folds = km.make_folds(12, 5)
    assert folds.indices_of(1) == [1, 6, 11]


def test_hungarian_solve():
    cost = np.array([[1.0, 2.0], [2.0, 1.0]])
    a = km.hungarian_solve(cost)
    assert a.perm == [0, 1]
    assert a.cost == 2.0


def test_rand_index():
    assert km.rand_index([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(1.0 / 3.0)


def test_simulation_and_theory():
    truth = km.gen_disappearance(20, 30, 4, 0.5, 11)
    assert truth.scenario == "disappearance"
    assert len(truth.labels) == 20

    sc = km.TheoryScenario()
    sc.T = 11
    sc.n = 5
    sc.reps = 60
    sc.seed = 1
    report = km.check_theorem1(sc)
    assert len(report.rows) == 11
    assert report.rows[5].t == 0.0


def test_series_round_trip(tmp_path):
    series = make_series(T=3, n=10, seed=5)
    path = tmp_path / "series.csv"
    km.write_series(series, str(path))
    loaded = km.load_series(str(path))
    assert len(loaded.series) == 3
    assert np.allclose(loaded.series.points(0), series.points(0))


def test_cli_binary_pipeline(tmp_path):
    cli = os.environ.get("KERNELMIX_CLI")
    if not cli:
        pytest.skip("KERNELMIX_CLI not set")
    series = tmp_path / "series.csv"
    fit_json = tmp_path / "fit.json"
    subprocess.run(
        [cli, "simulate", "--scenario", "intersection", "--t", "10", "--n-per-time", "20",
         "--overlap-level", "0.2", "--seed", "4", "--output", str(series)],
        check=True,
    )
    subprocess.run(
        [cli, "fit", "--input", str(series), "--k", "2", "--h-pi", "3", "--h-mu", "3",
         "--h-sigma", "5", "--seed", "1", "--output", str(fit_json), "--max-iters", "15"],
        check=True,
    )
    doc = json.loads(fit_json.read_text())
    assert doc["format_version"] == "1"
    assert len(doc["states"]) == 10
