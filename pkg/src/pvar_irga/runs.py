"""Run directories: persisted fits, the manifest, and the three pipelines.

Layout of a run directory::

    manifest.json                 config echo, fingerprint, per-command summaries
    fits/T<nobs>/fit.json         key of the fit (data fingerprint + estimation config)
    fits/T<nobs>/eq_<i>_<j>.npz   draws and approximation of equation (i, j)
    scores.csv, table2.csv, cumlps_<h>.csv, forecast_final.csv     (forecast)
    dy_total.csv, dy_by_variable.csv, dy_by_country.csv            (spillover)

A fit on the first ``nobs`` observations is reused by every command whose
data and estimation settings produce the same key, so ``estimate`` followed
by ``forecast`` does not re-estimate the full-sample model.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import RunConfig
from .forecast import ar_benchmark, recursive_exercise, simulate_forecast
from .gibbs import ChainDraws
from .panel_data import PanelDataset, load_panel
from .pvar import EquationPosterior, PvarPosterior, estimate_pvar, system_draws
from .rng import derive_rng
from .spillover import spillover_recursion
from .vamp import ApproxPosterior


def fingerprint(ds: PanelDataset) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([v.column for v in ds.variables]).encode())
    h.update(json.dumps([str(t) for t in ds.time_index]).encode())
    h.update(np.ascontiguousarray(ds.series, dtype="<f8").tobytes())
    return h.hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(frame: pd.DataFrame, path, index: bool = False) -> None:
    atomic_write(path, frame.to_csv(index=index, float_format="%.10g", lineterminator="\n"))


def update_manifest(run_dir, section: str, payload: dict, cfg: RunConfig, ds: PanelDataset) -> dict:
    path = Path(run_dir) / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest.update({"tool_version": __version__, "config": cfg.echo(), "seed": cfg.seed,
                     "data_fingerprint": fingerprint(ds)})
    manifest[section] = payload
    atomic_write(path, json.dumps(manifest, indent=1, sort_keys=True, default=str))
    return manifest


# --- posterior persistence -------------------------------------------------

def save_posterior(post: PvarPosterior, directory, key: str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for eq in post.equations:
        hs = eq.approx.horseshoe
        np.savez(
            directory / f"eq_{eq.country}_{eq.equation}.npz",
            A_draws=eq.chain.A_draws, psi2_draws=eq.chain.psi2_draws, lambda2_draws=eq.chain.lambda2_draws,
            ess=eq.chain.ess, B_mean=eq.approx.mean,
            approx=np.array([eq.approx.var_scalar, eq.approx.sigma2_hat, eq.approx.converged,
                             eq.approx.n_iter, eq.approx.n_clamped, eq.seconds]),
            x_lag=eq.x_lag, x_var=eq.x_var, z_lag=eq.z_lag, z_var=eq.z_var,
            meta=np.array([eq.country, eq.equation, eq.target]),
            psi2_B=hs.psi2 if hs is not None else np.zeros(0),
        )
    atomic_write(directory / "fit.json", json.dumps({"key": key, "n": post.n, "p": post.p, "M": list(post.M),
                                                     "equations": [[e.country, e.equation] for e in post.equations]}))


def load_posterior(directory) -> PvarPosterior:
    directory = Path(directory)
    info = json.loads((directory / "fit.json").read_text())
    eqs = []
    for i, j in info["equations"]:
        z = np.load(directory / f"eq_{i}_{j}.npz")
        var_scalar, sigma2, converged, n_iter, n_clamped, seconds = z["approx"]
        approx = ApproxPosterior(z["B_mean"], float(var_scalar), float(sigma2), bool(converged),
                                 int(n_iter), int(n_clamped), None)
        chain = ChainDraws(z["A_draws"], z["psi2_draws"], z["lambda2_draws"], z["ess"])
        c, e, target = (int(v) for v in z["meta"])
        eqs.append(EquationPosterior(c, e, target, chain, approx, z["x_lag"], z["x_var"], z["z_lag"], z["z_var"],
                                     float(seconds)))
    return PvarPosterior(info["n"], info["p"], tuple(info["M"]), eqs)


def fit_key(ds: PanelDataset, cfg: RunConfig) -> str:
    estimation = {"p": cfg.p, "vamp": {k: v for k, v in asdict(cfg.vamp).items() if k != "xi_init"},
                  "mcmc": asdict(cfg.mcmc), "data": fingerprint(ds)}
    return hashlib.sha256(json.dumps(estimation, sort_keys=True).encode()).hexdigest()


def cached_fit(run_dir, ds: PanelDataset, cfg: RunConfig) -> tuple:
    """Returns ``(posterior, reused)``."""
    directory = Path(run_dir) / "fits" / f"T{ds.T}"
    key = fit_key(ds, cfg)
    info = directory / "fit.json"
    if info.exists() and json.loads(info.read_text()).get("key") == key:
        return load_posterior(directory), True
    post = estimate_pvar(ds, cfg.p, cfg.vamp, cfg.mcmc, cfg.threads)
    save_posterior(post, directory, key)
    return post, False


def equation_summary(post: PvarPosterior) -> list:
    return [{"country": e.country, "equation": e.equation, "k": e.k, "K": e.K,
             "vamp_converged": e.approx.converged, "vamp_iterations": e.approx.n_iter,
             "clamped": e.approx.n_clamped, "sigma2_hat": e.approx.sigma2_hat,
             "min_ess": float(np.min(e.chain.ess)) if e.k else None, "seconds": round(e.seconds, 3)}
            for e in post.equations]


# --- pipelines --------------------------------------------------------------

def resolve_stop(ds: PanelDataset, value, default: int) -> int:
    """Window size from an int (number of observations) or a YYYY-MM end date."""
    if value is None:
        return default
    if isinstance(value, str):
        period = pd.Period(value, freq="M")
        hits = np.flatnonzero(ds.time_index == period)
        if hits.size == 0:
            raise ValueError(f"date {value} is outside the sample {ds.time_index[0]}..{ds.time_index[-1]}")
        return int(hits[0]) + 1
    return int(value)


def run_estimate(cfg: RunConfig, ds: PanelDataset | None = None) -> dict:
    ds = ds or load_panel(cfg.data_path, cfg.variables_path)
    start = time.perf_counter()
    post, reused = cached_fit(cfg.out, ds, cfg)
    payload = {"nobs": ds.T, "reused": reused, "seconds": round(time.perf_counter() - start, 3),
               "equations": equation_summary(post)}
    update_manifest(cfg.out, "estimate", payload, cfg, ds)
    return payload


def irga_runner(cfg: RunConfig):
    def runner(train, H, rng):
        post, _ = cached_fit(cfg.out, train, cfg)
        draws = system_draws(post, rng, cfg.forecast.propagate_B, cfg.forecast.n_draws)
        return simulate_forecast(draws, train.series[-cfg.p:], H, rng)
    return runner


def model_runners(cfg: RunConfig) -> dict:
    available = {"pvar-irga": lambda: irga_runner(cfg), "ar": lambda: ar_benchmark(cfg.p)}
    unknown = set(cfg.forecast.models) - set(available)
    if unknown:
        raise ValueError(f"unknown forecast model(s): {sorted(unknown)}; available: {sorted(available)}")
    return {name: available[name]() for name in cfg.forecast.models}


def run_forecast(cfg: RunConfig, ds: PanelDataset | None = None) -> dict:
    ds = ds or load_panel(cfg.data_path, cfg.variables_path)
    fc = cfg.forecast
    runners = model_runners(cfg)
    out = Path(cfg.out)
    start = time.perf_counter()

    # forecast from the end of the sample, reusing the full-sample fit if present
    if "pvar-irga" in runners:
        post, reused = cached_fit(out, ds, cfg)
        rng = derive_rng(cfg.seed, "forecast", "final")
        fd = simulate_forecast(system_draws(post, rng, fc.propagate_B, fc.n_draws), ds.series[-cfg.p:], fc.horizon, rng)
        dates = pd.period_range(ds.time_index[-1] + 1, periods=fc.horizon, freq="M").strftime("%Y-%m")
        rows = []
        for h in range(fc.horizon):
            q = np.quantile(fd.draws[:, h], [0.05, 0.16, 0.5, 0.84, 0.95], axis=0)
            for a, v in enumerate(ds.variables):
                rows.append(dict(date=dates[h], horizon=h + 1, country=v.country, variable=v.code,
                                 mean=float(fd.draws[:, h, a].mean()), q05=q[0, a], q16=q[1, a],
                                 median=q[2, a], q84=q[3, a], q95=q[4, a]))
        write_csv(pd.DataFrame(rows), out / "forecast_final.csv")
    else:
        reused = False

    payload = {"final_fit_reused": reused}
    if fc.initial is not None:
        initial = resolve_stop(ds, fc.initial, ds.T - 1)
        last = resolve_stop(ds, fc.last, ds.T - 1)
        origins = list(range(initial, min(last, ds.T - 1) + 1))
        result = recursive_exercise(ds, origins, runners, fc.horizon, fc.benchmark, cfg.seed, fc.point, threads=1)
        write_csv(result.scores[["origin", "country", "variable", "horizon", "model", "point", "actual", "rmse", "lps"]],
                  out / "scores.csv")
        write_csv(result.table2, out / "table2.csv")
        write_csv(result.table, out / "score_table.csv")
        for h, frame in result.cumlps.items():
            write_csv(frame, out / f"cumlps_{h}.csv")
        payload.update(origins=[str(ds.time_index[s - 1]) for s in origins],
                       failures=[list(f) for f in result.failures])
    payload["seconds"] = round(time.perf_counter() - start, 3)
    update_manifest(out, "forecast", payload, cfg, ds)
    return payload


def run_spillover(cfg: RunConfig, ds: PanelDataset | None = None) -> dict:
    ds = ds or load_panel(cfg.data_path, cfg.variables_path)
    sc = cfg.spillover
    out = Path(cfg.out)
    initial = resolve_stop(ds, sc.initial, ds.T)
    last = resolve_stop(ds, sc.last, ds.T)
    windows = list(range(initial, last + 1, max(sc.step, 1)))

    def runner(train, rng):
        post, _ = cached_fit(out, train, cfg)
        return system_draws(post, rng, cfg.forecast.propagate_B, sc.n_draws)

    start = time.perf_counter()
    series = spillover_recursion(ds, runner, sc.horizon, windows, cfg.seed)
    names = {"total": "dy_total.csv", "by_variable": "dy_by_variable.csv", "by_country": "dy_by_country.csv"}
    for variant, s in series.items():
        write_csv(s.summary(), out / names[variant])
    payload = {"windows": [str(ds.time_index[w - 1]) for w in windows], "horizon": sc.horizon,
               "missing": series["total"].missing, "seconds": round(time.perf_counter() - start, 3)}
    update_manifest(out, "spillover", payload, cfg, ds)
    return payload

