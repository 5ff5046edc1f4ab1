"""Forecast error variance decompositions and cross-country spillover indices.

Shocks are orthogonalised with the model's own recursive ordering, i.e. the
impact matrix U H^{1/2}.  Three index variants are provided:

* total: mean over all variables of the FEVD share coming from other countries;
* by variable type: the same, restricted to one variable type (rows and
  columns), with the restricted rows renormalised to sum to one;
* by country: mean over a country's variables of the foreign share.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

from .panel_data import PanelDataset
from .rng import derive_rng

log = logging.getLogger(__name__)

QUANTILES = {"q05": 0.05, "q16": 0.16, "q84": 0.84, "q95": 0.95}


class FevdOverflow(ArithmeticError):
    pass


@dataclass(frozen=True)
class FevdMatrix:
    shares: np.ndarray
    horizon: int


def ma_coefficients(Phi: np.ndarray, H_f: int, dtype=float) -> np.ndarray:
    """Psi_0 = I, Psi_h = sum_l Phi_l Psi_{h-l}; returns (H_f, n, n)."""
    n = Phi.shape[0]
    p = Phi.shape[1] // n
    blocks = [np.asarray(Phi[:, l * n:(l + 1) * n], dtype=dtype) for l in range(p)]
    psi = np.zeros((H_f, n, n), dtype=dtype)
    psi[0] = np.eye(n, dtype=dtype)
    for h in range(1, H_f):
        for l in range(1, min(h, p) + 1):
            psi[h] += blocks[l - 1] @ psi[h - l]
    return psi


def fevd(sd, H_f: int = 12) -> FevdMatrix:
    """Share of each variable's H_f-step forecast error variance due to each orthogonal shock."""
    if H_f < 1:
        raise ValueError("H_f must be >= 1")
    for dtype in (np.float64, np.longdouble):
        with np.errstate(over="ignore", invalid="ignore"):
            psi = ma_coefficients(sd.Phi, H_f, dtype)
            theta = psi @ np.asarray(sd.impact, dtype=dtype)
            contrib = np.sum(theta ** 2, axis=0)
            total = contrib.sum(axis=1, keepdims=True)
            shares = contrib / total
        if np.all(np.isfinite(shares)) and np.all(total > 0):
            return FevdMatrix(np.asarray(shares, dtype=float), H_f)
    raise FevdOverflow("moving-average terms overflow")


def _as_array(labels) -> np.ndarray:
    return np.asarray(labels)


def dy_total_cross_country(f: FevdMatrix, country_of) -> float:
    c = _as_array(country_of)
    foreign = c[:, None] != c[None, :]
    return float(np.mean(np.sum(f.shares * foreign, axis=1)))


def dy_by_country(f: FevdMatrix, country_of) -> dict:
    c = _as_array(country_of)
    foreign = np.sum(f.shares * (c[:, None] != c[None, :]), axis=1)
    return {k: float(foreign[c == k].mean()) for k in dict.fromkeys(c.tolist())}


def dy_by_variable(f: FevdMatrix, country_of, type_of) -> dict:
    c, t = _as_array(country_of), _as_array(type_of)
    out = {}
    for kind in dict.fromkeys(t.tolist()):
        idx = np.flatnonzero(t == kind)
        sub = f.shares[np.ix_(idx, idx)]
        cc = c[idx]
        mass = sub.sum(axis=1)
        cross = np.sum(sub * (cc[:, None] != cc[None, :]), axis=1)
        out[kind] = float(np.mean(np.divide(cross, mass, out=np.zeros_like(cross), where=mass > 0)))
    return out


def summarize(values) -> dict:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return {"median": np.nan, **{k: np.nan for k in QUANTILES}}
    return {"median": float(np.median(values)), **{k: float(np.quantile(values, q)) for k, q in QUANTILES.items()}}


@dataclass
class SpilloverSeries:
    """Index draws per window end (and per label for the by-type / by-country variants)."""

    variant: str
    draws: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)
    missing: list = field(default_factory=list)

    def summary(self) -> pd.DataFrame:
        rows = []
        for (date, label), vals in self.draws.items():
            row = {"date": date}
            if self.variant != "total":
                row["label"] = label
            row.update(summarize(vals))
            row["excluded"] = self.excluded.get(date, 0)
            rows.append(row)
        for date in self.missing:
            rows.append({"date": date, **summarize([]), "excluded": np.nan})
        cols = ["date"] + (["label"] if self.variant != "total" else []) + ["median", "q16", "q84", "q05", "q95", "excluded"]
        frame = pd.DataFrame(rows, columns=cols)
        # windows in date order; labels keep their system order within a window
        return frame.sort_values("date", kind="stable", ignore_index=True)


def window_indices(draws, country_of, type_of, H_f: int):
    """All three variants for every system draw; overflowing draws are skipped and counted."""
    total, by_var, by_cty = [], [], []
    excluded = 0
    for sd in draws:
        try:
            f = fevd(sd, H_f)
        except FevdOverflow:
            excluded += 1
            continue
        total.append(dy_total_cross_country(f, country_of))
        by_var.append(dy_by_variable(f, country_of, type_of))
        by_cty.append(dy_by_country(f, country_of))
    return total, by_var, by_cty, excluded


def spillover_recursion(ds: PanelDataset, runner: Callable, H_f: int, windows, seed: int = 0) -> dict:
    """Re-estimate on each expanding window and collect the index draws.

    ``runner(train, rng)`` returns a list of system draws.  Returns a dict
    with keys ``total``, ``by_variable`` and ``by_country``.
    """
    windows = list(windows)
    if not windows:
        raise ValueError("empty window schedule")
    country_of = [v.country for v in ds.variables]
    type_of = [v.code for v in ds.variables]
    out = {k: SpilloverSeries(k) for k in ("total", "by_variable", "by_country")}
    for stop in windows:
        date = str(ds.time_index[stop - 1])
        try:
            draws = runner(ds.head(stop), derive_rng(seed, "spillover", stop))
        except Exception as exc:
            log.warning("estimation failed for window ending %s: %s", date, exc)
            for s in out.values():
                s.missing.append(date)
            continue
        total, by_var, by_cty, excluded = window_indices(draws, country_of, type_of, H_f)
        out["total"].draws[(date, None)] = np.array(total)
        for key, per_draw in (("by_variable", by_var), ("by_country", by_cty)):
            for label in dict.fromkeys(type_of if key == "by_variable" else country_of):
                out[key].draws[(date, label)] = np.array([d[label] for d in per_draw])
        for s in out.values():
            s.excluded[date] = excluded
    return out
