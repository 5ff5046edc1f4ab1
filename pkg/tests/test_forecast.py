import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from pvar_irga.forecast import (
    ForecastDistribution,
    ar_benchmark,
    cumulative_lps,
    expanding_origins,
    lps,
    lps_gaussian,
    lps_mixture,
    normal_logpdf,
    recursive_exercise,
    rmse,
    simulate_forecast,
)
from pvar_irga.panel_data import PanelDataset
from pvar_irga.pvar import SystemDraw
from pvar_irga.simulate import SimulationSpec, simulate_panel


def test_zero_coefficient_system_has_iid_draws():
    U = np.array([[1.0, 0, 0], [0.5, 1, 0], [-0.3, 0.2, 1]])
    sd = SystemDraw(np.zeros((3, 3)), U, np.ones(3))
    fd = simulate_forecast([sd] * 10_000, np.ones((1, 3)), 3, np.random.default_rng(0))
    target = U @ U.T
    for h in range(3):
        cov = np.cov(fd.draws[:, h].T)
        assert np.max(np.abs(cov - target)) < 0.05 * np.max(np.abs(target))


def test_noiseless_system_is_linear_iteration(rng):
    Phi = rng.standard_normal((2, 4)) * 0.3
    sd = SystemDraw(Phi, np.eye(2), np.zeros(2))
    hist = rng.standard_normal((2, 2))
    fd = simulate_forecast([sd], hist, 5, rng)
    y = [hist[0], hist[1]]
    for h in range(5):
        y.append(Phi @ np.r_[y[-1], y[-2]])
        np.testing.assert_allclose(fd.draws[0, h], y[-1], atol=1e-14)


def test_ar1_predictive_variance():
    sd = SystemDraw(np.array([[0.5]]), np.eye(1), np.ones(1))
    fd = simulate_forecast([sd] * 40_000, [[0.0]], 4, np.random.default_rng(1))
    for h in range(1, 5):
        exact = sum(0.25 ** s for s in range(h))
        assert fd.draws[:, h - 1, 0].var() == pytest.approx(exact, rel=0.03)


# --- scores ------------------------------------------------------------------

def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(np.sqrt(12.5))
    assert rmse(np.arange(5) + 0.7, np.arange(5)) == pytest.approx(0.7)
    with pytest.raises(ValueError, match="empty"):
        rmse([], [])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(-100, 100))
def test_rmse_scales(errors, alpha):
    e = np.array(errors)
    assert rmse(alpha * e, np.zeros_like(e)) == pytest.approx(abs(alpha) * rmse(e, np.zeros_like(e)), rel=1e-9, abs=1e-12)


def test_lps_examples():
    assert lps_mixture([0.0], [1.0], 0.0) == pytest.approx(-0.918939, abs=1e-6)
    assert lps_mixture([0.0], [1.0], 10.0) == pytest.approx(-0.918939 - 50, abs=1e-6)
    assert lps_mixture([-1.0, 1.0], [1.0, 1.0], 0.0) == pytest.approx(-1.418939, abs=1e-6)


def test_lps_zero_variance_is_floored():
    assert np.isfinite(lps_mixture([1.0], [0.0], 1.0))
    assert lps_mixture([1.0], [0.0], 1.0) == pytest.approx(-0.5 * (np.log(2 * np.pi) + np.log(1e-10)))


@given(st.integers(0, 10_000))
def test_lps_order_invariant_and_matches_naive(seed):
    g = np.random.default_rng(seed)
    m, v = g.standard_normal(50), g.uniform(0.1, 3, 50)
    a = lps_mixture(m, v, 0.3)
    perm = g.permutation(50)
    assert lps_mixture(m[perm], v[perm], 0.3) == pytest.approx(a, abs=1e-12)
    naive = np.log(np.mean(stats.norm.pdf(0.3, m, np.sqrt(v))))
    assert a == pytest.approx(naive, abs=1e-10)


def test_lps_gaussian_fit():
    s = np.random.default_rng(0).standard_normal(1000)
    assert lps_gaussian(s, 0.5) == pytest.approx(stats.norm.logpdf(0.5, s.mean(), s.std(ddof=1)))


def test_lps_dispatch_by_horizon():
    draws = np.random.default_rng(0).standard_normal((100, 2, 1))
    fd = ForecastDistribution(draws, np.zeros((100, 1)), np.ones((100, 1)))
    assert lps(fd, 0, 1, 0.0) == pytest.approx(normal_logpdf(0.0, 0.0, 1.0))
    assert lps(fd, 0, 2, 0.0) == pytest.approx(lps_gaussian(draws[:, 1, 0], 0.0))


# --- recursive exercise ------------------------------------------------------

def _panel(T=80, seed=0):
    ds, truth = simulate_panel(SimulationSpec(N=2, M=1, T=T, seed=seed))
    return ds, truth


def test_expanding_windows_are_nested():
    o = expanding_origins(100, 60)
    assert o == list(range(60, 100))
    ds, _ = _panel()
    for a, b in zip(o[:-1], o[1:]):
        if b > ds.T:
            break
        np.testing.assert_array_equal(ds.head(b).series[:a], ds.head(a).series)
        assert ds.head(b).T == ds.head(a).T + 1
    with pytest.raises(ValueError):
        expanding_origins(100, 100)


def true_model_runner(truth, n_draws=400):
    def runner(train, H, rng):
        return simulate_forecast([truth.system] * n_draws, train.series[-1:], H, rng)
    return runner


def test_benchmark_against_itself():
    ds, _ = _panel()
    ar = ar_benchmark(1)
    res = recursive_exercise(ds, range(60, 75), {"ar": ar, "ar-copy": ar}, 3, "ar", seed=1)
    bench = res.table[res.table.model == "ar"]
    assert np.all(bench.relative_rmse == 1.0)
    assert np.all(bench.relative_lps == 0.0)
    assert list(res.table2.columns) == ["model", "variable", "horizon", "rmse", "lps", "relative_rmse", "relative_lps"]
    assert set(res.table2.model) == {"ar", "ar-copy"}


def test_true_model_one_step_rmse():
    ds, truth = _panel(T=320, seed=5)
    res = recursive_exercise(ds, range(120, 320), {"true": true_model_runner(truth), "ar": ar_benchmark(1)}, 1, "ar")
    s = res.scores[(res.scores.model == "true") & (res.scores.horizon == 1)]
    assert len(s) == 200 * ds.n
    sd = np.sqrt(np.diag(truth.system.Sigma))
    z = (s.point - s.actual).to_numpy().reshape(200, ds.n) / sd
    assert abs(np.sqrt(np.mean(z ** 2)) - 1.0) < 0.1


def test_cumulative_lps_is_prefix_sum():
    ds, truth = _panel()
    res = recursive_exercise(ds, range(60, 70), {"true": true_model_runner(truth), "ar": ar_benchmark(1)}, 2, "ar")
    wide = res.scores.pivot_table(index=["origin", "country", "variable", "horizon"], columns="model", values="lps")
    diff = (wide["true"] - wide["ar"]).reset_index()
    for h, frame in res.cumlps.items():
        for _, row in frame.iterrows():
            sub = diff[(diff.horizon == h) & (diff.country == row.country) & (diff.variable == row.variable)]
            sub = sub.sort_values("origin")
            origins = [c for c in frame.columns if c not in ("model", "country", "variable")]
            np.testing.assert_allclose(row[origins].to_numpy(float), np.cumsum(sub[0].to_numpy()), atol=1e-12)


def test_runner_failure_is_recorded():
    ds, _ = _panel()

    def flaky(train, H, rng):
        if train.T == 65:
            raise RuntimeError("boom")
        return ar_benchmark(1)(train, H, rng)

    res = recursive_exercise(ds, range(63, 68), {"flaky": flaky, "ar": ar_benchmark(1)}, 2, "ar")
    assert len(res.failures) == 1 and res.failures[0][0] == "flaky"
    missing = res.scores[(res.scores.model == "flaky") & res.scores.lps.isna()]
    assert set(missing.origin) == {str(ds.time_index[64])}


def test_exercise_is_deterministic():
    ds, truth = _panel()
    runners = {"true": true_model_runner(truth), "ar": ar_benchmark(1)}
    a = recursive_exercise(ds, range(60, 66), runners, 2, "ar", seed=3)
    b = recursive_exercise(ds, range(60, 66), runners, 2, "ar", seed=3, threads=3)
    pd.testing.assert_frame_equal(a.scores, b.scores)


def test_point_forecast_choice():
    draws = np.array([[[0.0]], [[1.0]], [[5.0]]])
    fd = ForecastDistribution(draws, np.zeros((3, 1)), np.ones((3, 1)))
    assert fd.point("median")[0, 0] == 1.0
    assert fd.point("mean")[0, 0] == 2.0
