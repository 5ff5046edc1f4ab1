"""Predictive simulation, RMSE / log predictive scores and the recursive exercise."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .panel_data import PanelDataset
from .rng import derive_rng

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-10
LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class ForecastDistribution:
    """Simulated paths plus the draw-conditional one-step moments.

    ``draws`` is (n_draws, H, n); ``mean1`` / ``var1`` are (n_draws, n).
    """

    draws: np.ndarray
    mean1: np.ndarray
    var1: np.ndarray
    origin: object = None

    def __post_init__(self):
        if self.draws.ndim != 3 or self.draws.shape[1] < 1:
            raise ValueError("draws must be (n_draws, H >= 1, n)")
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("non-finite forecast draws")

    @property
    def H(self) -> int:
        return self.draws.shape[1]

    def point(self, how: str = "median") -> np.ndarray:
        """(H, n) point forecasts."""
        if how == "median":
            return np.median(self.draws, axis=0)
        if how == "mean":
            return self.draws.mean(axis=0)
        raise ValueError(f"unknown point forecast {how!r}")


def simulate_forecast(system_draws, last_obs, H: int, rng: np.random.Generator, origin=None) -> ForecastDistribution:
    """Iterate each system draw forward ``H`` steps with fresh Gaussian shocks.

    ``last_obs`` holds at least the last p observations, oldest first.
    """
    if H < 1:
        raise ValueError("H must be >= 1")
    system_draws = list(system_draws)
    n, p = system_draws[0].n, system_draws[0].p
    hist = np.asarray(last_obs, dtype=float)[-p:]
    D = len(system_draws)
    out = np.empty((D, H, n))
    mean1 = np.empty((D, n))
    var1 = np.empty((D, n))
    for d, sd in enumerate(system_draws):
        window = list(hist[::-1])
        impact = sd.impact
        for h in range(H):
            mu = sd.Phi @ np.concatenate(window[:p])
            if h == 0:
                mean1[d] = mu
                var1[d] = np.diag(sd.Sigma)
            y = mu + impact @ rng.standard_normal(n)
            out[d, h] = y
            window.insert(0, y)
    return ForecastDistribution(out, mean1, var1, origin)


def rmse(point, actual) -> float:
    point = np.asarray(point, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if point.shape != actual.shape:
        raise ValueError("point forecasts and actuals differ in shape")
    if point.size == 0:
        raise ValueError("empty hold-out")
    return float(np.sqrt(np.mean((point - actual) ** 2)))


def normal_logpdf(x, mean, var):
    var = np.maximum(var, VAR_FLOOR)
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def lps_mixture(means, variances, actual) -> float:
    """log of (1/D) sum_d N(actual | means[d], variances[d])."""
    means = np.atleast_1d(np.asarray(means, dtype=float))
    variances = np.broadcast_to(np.asarray(variances, dtype=float), means.shape)
    return float(logsumexp(normal_logpdf(actual, means, variances)) - np.log(means.size))


def lps_gaussian(samples, actual) -> float:
    """log density of a Gaussian fitted to simulated predictive draws."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ValueError("need at least two draws to fit a predictive Gaussian")
    return float(normal_logpdf(actual, samples.mean(), samples.var(ddof=1)))


def lps(fd: ForecastDistribution, var_index: int, horizon: int, actual: float) -> float:
    """Log predictive score; ``horizon`` is 1-based."""
    if horizon == 1:
        return lps_mixture(fd.mean1[:, var_index], fd.var1[:, var_index], actual)
    return lps_gaussian(fd.draws[:, horizon - 1, var_index], actual)


Runner = Callable[[PanelDataset, int, np.random.Generator], ForecastDistribution]


@dataclass
class ExerciseResult:
    scores: pd.DataFrame
    table: pd.DataFrame
    table2: pd.DataFrame
    cumlps: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def expanding_origins(T: int, initial: int, last: int | None = None) -> list:
    """Training-sample sizes initial, initial + 1, ..., last (default T - 1)."""
    last = T - 1 if last is None else last
    if not 1 <= initial <= last < T:
        raise ValueError("initial window must leave at least one hold-out observation")
    return list(range(initial, last + 1))


def score_origin(ds: PanelDataset, stop: int, model: str, fd: ForecastDistribution, point: str = "median") -> list:
    rows = []
    pt = fd.point(point)
    label = str(ds.time_index[stop - 1])
    for h in range(1, fd.H + 1):
        target = stop - 1 + h
        if target >= ds.T:
            break
        for a, var in enumerate(ds.variables):
            actual = float(ds.series[target, a])
            rows.append(dict(origin=label, country=var.country, variable=var.code, horizon=h, model=model,
                             point=float(pt[h - 1, a]), actual=actual,
                             rmse=abs(float(pt[h - 1, a]) - actual), lps=lps(fd, a, h, actual)))
    return rows


def _missing_rows(ds, stop, model, H):
    label = str(ds.time_index[stop - 1])
    return [dict(origin=label, country=v.country, variable=v.code, horizon=h, model=model,
                 point=np.nan, actual=float(ds.series[stop - 1 + h, a]), rmse=np.nan, lps=np.nan)
            for h in range(1, H + 1) if stop - 1 + h < ds.T for a, v in enumerate(ds.variables)]


def score_table(scores: pd.DataFrame, benchmark: str) -> pd.DataFrame:
    """Per (model, country, variable, horizon): RMSE over origins, mean LPS, and both relative to ``benchmark``."""
    g = scores.groupby(["model", "country", "variable", "horizon"], sort=False)
    table = g.agg(rmse=("rmse", lambda e: float(np.sqrt(np.nanmean(np.square(e))))),
                  lps=("lps", "mean")).reset_index()
    bench = table[table.model == benchmark].set_index(["country", "variable", "horizon"])
    if bench.empty:
        raise ValueError(f"benchmark model {benchmark!r} has no scores")
    keyed = table.set_index(["country", "variable", "horizon"])
    table["relative_rmse"] = (keyed["rmse"] / bench["rmse"].reindex(keyed.index)).to_numpy()
    table["relative_lps"] = (keyed["lps"] - bench["lps"].reindex(keyed.index)).to_numpy()
    return table


def table2(table: pd.DataFrame) -> pd.DataFrame:
    """Averages across countries, one row per (model, variable, horizon)."""
    return (table.groupby(["model", "variable", "horizon"], sort=False)
            [["rmse", "lps", "relative_rmse", "relative_lps"]].mean().reset_index())


def cumulative_lps(scores: pd.DataFrame, benchmark: str) -> dict:
    """Horizon -> frame indexed by (model, country, variable), one column per origin."""
    wide = scores.pivot_table(index=["origin", "country", "variable", "horizon"], columns="model",
                              values="lps", dropna=False, sort=False)
    out = {}
    for model in wide.columns:
        if model == benchmark:
            continue
        diff = (wide[model] - wide[benchmark]).rename("diff").reset_index()
        for h, sub in diff.groupby("horizon"):
            mat = sub.pivot_table(index=["country", "variable"], columns="origin", values="diff",
                                  dropna=False, sort=False)
            mat = mat.reindex(columns=sorted(mat.columns)).cumsum(axis=1)
            mat.insert(0, "model", model)
            out.setdefault(int(h), []).append(mat.reset_index())
    return {h: pd.concat(frames, ignore_index=True) for h, frames in out.items()}


def recursive_exercise(ds: PanelDataset, origins, runners: dict, H: int, benchmark: str,
                       seed: int = 0, point: str = "median", threads: int = 1) -> ExerciseResult:
    """Re-estimate every model on each expanding window and score its forecasts.

    ``runners`` maps a model name to ``runner(train, H, rng) -> ForecastDistribution``.
    A runner that raises at an origin leaves missing scores there.
    """
    if benchmark not in runners:
        raise ValueError(f"benchmark {benchmark!r} is not among the models")
    origins = list(origins)
    if not origins or origins[-1] >= ds.T:
        raise ValueError("every origin must leave at least one hold-out observation")
    tasks = [(stop, name) for stop in origins for name in runners]

    def run(task):
        stop, name = task
        try:
            fd = runners[name](ds.head(stop), H, derive_rng(seed, "forecast", name, stop))
            return score_origin(ds, stop, name, fd, point), None
        except Exception as exc:  # recorded, exercise continues
            log.warning("model %s failed at origin %s: %s", name, ds.time_index[stop - 1], exc)
            return _missing_rows(ds, stop, name, H), (name, str(ds.time_index[stop - 1]), str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    rows = [r for rs, _ in results for r in rs]
    failures = [f for _, f in results if f is not None]
    scores = pd.DataFrame(rows)
    table = score_table(scores, benchmark)
    return ExerciseResult(scores, table, table2(table), cumulative_lps(scores, benchmark), failures)


def ar_benchmark(p: int = 1) -> Runner:
    """Univariate AR(p) with intercept per variable, OLS plug-in Gaussian predictive."""

    def runner(train: PanelDataset, H: int, rng: np.random.Generator, n_draws: int = 500) -> ForecastDistribution:
        Y = np.asarray(train.series)
        T, n = Y.shape
        coefs, sig2 = [], []
        for a in range(n):
            X = np.column_stack([np.ones(T - p)] + [Y[p - l:T - l, a] for l in range(1, p + 1)])
            y = Y[p:, a]
            b, *_ = np.linalg.lstsq(X, y, rcond=None)
            r = y - X @ b
            coefs.append(b)
            sig2.append(max(r @ r / max(len(y) - X.shape[1], 1), VAR_FLOOR))
        coefs, sig2 = np.array(coefs), np.array(sig2)
        draws = np.empty((n_draws, H, n))
        hist = np.repeat(Y[-p:][None], n_draws, axis=0)
        for h in range(H):
            mu = coefs[:, 0] + sum(coefs[:, l] * hist[:, -l] for l in range(1, p + 1))
            if h == 0:
                mean1 = np.broadcast_to(mu, (n_draws, n)).copy()
            y = mu + np.sqrt(sig2) * rng.standard_normal((n_draws, n))
            draws[:, h] = y
            hist = np.concatenate([hist[:, 1:], y[:, None]], axis=1)
        return ForecastDistribution(draws, mean1, np.broadcast_to(sig2, (n_draws, n)).copy())

    return runner
