"""Panel ingestion, transformation and per-equation regression designs.

Countries and the variables inside each country enter the system in the order
in which they first appear in the variable-spec file.  That order is also the
recursive (Cholesky) ordering used by the estimator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)


class Transform(IntEnum):
    LEVEL = 0
    YOY = 1
    MOM = 2


_LAG = {Transform.LEVEL: 0, Transform.YOY: 12, Transform.MOM: 1}


class TransformError(ValueError):
    pass


class IngestionError(ValueError):
    pass


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class VariableSpec:
    code: str
    country: str
    transform: Transform = Transform.LEVEL
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "transform", Transform(int(self.transform)))

    @property
    def column(self) -> str:
        return f"{self.country}.{self.code}"


def transform_series(raw, transform, name: str = "series", periods=None) -> np.ndarray:
    """Apply a Level / year-on-year / month-on-month transformation.

    Growth rates are in percent.  The output is shorter than the input by
    12 (YoY), 1 (MoM) or 0 (Level) observations.
    """
    x = np.asarray(raw, dtype=float)
    transform = Transform(int(transform))
    lag = _LAG[transform]
    if transform is Transform.LEVEL:
        return x.copy()
    if x.size < lag + 1:
        raise TransformError(
            f"{name}: need at least {lag + 1} observations for {transform.name}, got {x.size}"
        )
    bad = np.flatnonzero(~(x > 0))
    if bad.size:
        where = periods[bad[0]] if periods is not None else int(bad[0])
        raise TransformError(
            f"{name}: non-positive level {x[bad[0]]!r} at {where} under {transform.name}"
        )
    return 100.0 * (x[lag:] / x[:-lag] - 1.0)


def reconstruct_levels(growth, transform, initial) -> np.ndarray:
    """Invert :func:`transform_series` given the first ``lag`` raw levels."""
    transform = Transform(int(transform))
    g = np.asarray(growth, dtype=float)
    if transform is Transform.LEVEL:
        return g.copy()
    lag = _LAG[transform]
    out = np.empty(g.size + lag)
    out[:lag] = np.asarray(initial, dtype=float)[:lag]
    for t in range(g.size):
        out[t + lag] = out[t] * (1.0 + g[t] / 100.0)
    return out


@dataclass(frozen=True)
class PanelDataset:
    """Aligned T x n panel; columns are grouped in country blocks."""

    countries: tuple
    variables: tuple
    series: np.ndarray
    time_index: pd.PeriodIndex

    def __post_init__(self):
        series = np.asarray(self.series, dtype=float)
        series.setflags(write=False)
        object.__setattr__(self, "series", series)
        if series.ndim != 2 or series.shape[1] != len(self.variables):
            raise IngestionError("series must be T x n with one column per variable")
        if len(self.time_index) != series.shape[0]:
            raise IngestionError("time_index length does not match series")
        if not np.all(np.isfinite(series)):
            raise IngestionError("aligned panel contains missing or non-finite values")
        seen = [v.country for v in self.variables]
        blocks = list(dict.fromkeys(seen))
        if tuple(blocks) != tuple(self.countries):
            raise IngestionError("variables must be grouped by country in country order")
        # contiguous blocks
        order = [blocks.index(c) for c in seen]
        if order != sorted(order):
            raise IngestionError("variables of a country must be contiguous")

    @property
    def T(self) -> int:
        return self.series.shape[0]

    @property
    def n(self) -> int:
        return self.series.shape[1]

    @property
    def N(self) -> int:
        return len(self.countries)

    @property
    def M(self) -> tuple:
        return tuple(sum(v.country == c for v in self.variables) for c in self.countries)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.M)]).astype(int)

    @property
    def country_of(self) -> np.ndarray:
        """Country index of every column."""
        return np.repeat(np.arange(self.N), self.M)

    @property
    def codes(self) -> list:
        return [v.code for v in self.variables]

    @property
    def columns(self) -> list:
        return [v.column for v in self.variables]

    def head(self, stop: int) -> "PanelDataset":
        """The first ``stop`` observations (an expanding-window sample)."""
        if not 1 <= stop <= self.T:
            raise ValueError(f"stop must be in [1, {self.T}], got {stop}")
        return PanelDataset(self.countries, self.variables, self.series[:stop], self.time_index[:stop])

    def to_frame(self) -> pd.DataFrame:
        idx = self.time_index.strftime("%Y-%m")
        return pd.DataFrame(np.asarray(self.series), index=pd.Index(idx, name="date"), columns=self.columns)

    @classmethod
    def from_array(cls, series, M: Sequence[int], countries=None, codes=None, start="2000-01"):
        """Build a dataset from a plain array; used by simulations and tests."""
        series = np.asarray(series, dtype=float)
        countries = list(countries) if countries is not None else [f"C{i + 1}" for i in range(len(M))]
        variables = []
        for c, m in zip(countries, M):
            for j in range(m):
                code = codes[len(variables)] if codes is not None else f"V{j + 1}"
                variables.append(VariableSpec(code, c, Transform.LEVEL))
        idx = pd.period_range(start=start, periods=series.shape[0], freq="M")
        return cls(tuple(countries), tuple(variables), series, idx)


def align_panel(raw: pd.DataFrame, specs: Iterable[VariableSpec]) -> PanelDataset:
    """Transform each raw series and cut all of them to their common window.

    ``raw`` has a monthly PeriodIndex and ``COUNTRY.CODE`` columns; NaN marks
    missing coverage.  Series with missing values between their first and last
    observation are dropped with a warning.
    """
    specs = list(specs)
    raw = raw.reindex(pd.period_range(raw.index.min(), raw.index.max(), freq="M"))
    kept = []
    for spec in specs:
        if spec.column not in raw.columns:
            log.warning("%s: not present in the data, dropped", spec.column)
            continue
        s = raw[spec.column]
        valid = s.notna().to_numpy()
        if not valid.any():
            log.warning("%s: no observations, dropped", spec.column)
            continue
        first, last = np.flatnonzero(valid)[[0, -1]]
        if not valid[first:last + 1].all():
            log.warning("%s: missing values inside its sample, dropped", spec.column)
            continue
        segment = s.iloc[first:last + 1]
        values = transform_series(segment.to_numpy(), spec.transform, spec.column, segment.index)
        lag = _LAG[spec.transform]
        if values.size == 0:
            log.warning("%s: too short for its transformation, dropped", spec.column)
            continue
        kept.append((spec, pd.Series(values, index=segment.index[lag:])))

    if not kept:
        raise IngestionError("no series survived alignment")
    start = max(s.index[0] for _, s in kept)
    stop = min(s.index[-1] for _, s in kept)
    if start > stop:
        raise IngestionError(f"empty common window ({start} > {stop})")

    countries = list(dict.fromkeys(spec.country for spec in specs))
    survivors = {c: [(sp, s) for sp, s in kept if sp.country == c] for c in countries}
    empty = [c for c in countries if not survivors[c]]
    if empty:
        raise IngestionError(f"no variable survived alignment for: {', '.join(empty)}")

    variables, columns = [], []
    for c in countries:
        for sp, s in survivors[c]:
            variables.append(sp)
            columns.append(s.loc[start:stop].to_numpy())
    idx = pd.period_range(start=start, end=stop, freq="M")
    return PanelDataset(tuple(countries), tuple(variables), np.column_stack(columns), idx)


def read_variable_specs(path) -> list:
    table = pd.read_csv(path, dtype={"code": str, "country": str})
    missing = {"code", "country", "transform"} - set(table.columns)
    if missing:
        raise IngestionError(f"{path}: missing columns {sorted(missing)}")
    names = table["name"] if "name" in table.columns else [""] * len(table)
    out = []
    for code, country, tr, name in zip(table["code"], table["country"], table["transform"], names):
        if int(tr) not in (0, 1, 2):
            raise IngestionError(f"{country}.{code}: transform must be 0, 1 or 2, got {tr}")
        out.append(VariableSpec(code, country, Transform(int(tr)), "" if pd.isna(name) else str(name)))
    return out


def read_raw_csv(path) -> pd.DataFrame:
    """Wide CSV: first column YYYY-MM, other columns COUNTRY.CODE."""
    frame = pd.read_csv(path, dtype={0: str})
    first = frame.columns[0]
    frame.index = pd.PeriodIndex(frame.pop(first), freq="M")
    return frame.astype(float)


def write_raw_csv(frame: pd.DataFrame, path) -> None:
    out = frame.copy()
    out.index = pd.Index(pd.PeriodIndex(out.index, freq="M").strftime("%Y-%m"), name="date")
    out.to_csv(path, float_format="%.17g")


def write_variable_specs(specs, path) -> None:
    pd.DataFrame(
        [{"code": s.code, "country": s.country, "transform": int(s.transform), "name": s.name} for s in specs]
    ).to_csv(path, index=False)


def load_panel(data_path, spec_path) -> PanelDataset:
    return align_panel(read_raw_csv(Path(data_path)), read_variable_specs(Path(spec_path)))


@dataclass(frozen=True)
class EquationDesign:
    """Regression design for equation ``equation`` of country ``country`` (0-based).

    ``Z_other`` columns are, in order: other-country variables at lag 1, ...,
    lag p (countries in system order, own country skipped), then the
    contemporaneous values of the preceding variables of the same country,
    then the contemporaneous values of all preceding countries.
    ``z_lag`` / ``z_var`` record the lag (0 = contemporaneous) and the system
    column index of every Z column; ``x_lag`` / ``x_var`` do the same for X.
    """

    country: int
    equation: int
    p: int
    y: np.ndarray
    X_own: np.ndarray
    Z_other: np.ndarray
    x_lag: np.ndarray
    x_var: np.ndarray
    z_lag: np.ndarray
    z_var: np.ndarray
    target: int = field(default=0)

    @property
    def k(self) -> int:
        return self.X_own.shape[1]

    @property
    def K(self) -> int:
        return self.Z_other.shape[1]

    @property
    def column_class(self) -> np.ndarray:
        """'B' for lagged other-country columns, 'U' for contemporaneous ones."""
        return np.where(self.z_lag > 0, "B", "U")


def other_block_size(M: Sequence[int], i: int, j: int, p: int) -> int:
    """Closed-form column count of Z for 0-based country ``i``, equation ``j``."""
    n = sum(M)
    return (n - M[i]) * p + j + sum(M[:i])


def build_equation_design(ds: PanelDataset, i: int, j: int, p: int) -> EquationDesign:
    if p < 1:
        raise DesignError("lag order p must be >= 1")
    if not 0 <= i < ds.N:
        raise DesignError(f"country index {i} out of range")
    M = ds.M
    if not 0 <= j < M[i]:
        raise DesignError(f"equation index {j} out of range for country {ds.countries[i]}")
    off = ds.offsets
    own = np.arange(off[i], off[i + 1])
    others = np.concatenate([np.arange(off[v], off[v + 1]) for v in range(ds.N) if v != i]).astype(int) \
        if ds.N > 1 else np.zeros(0, dtype=int)
    T_eff = ds.T - p
    k = own.size * p
    if T_eff <= k:
        raise DesignError(
            f"insufficient observations for rotation: T - p = {T_eff} <= k = {k} "
            f"(country {ds.countries[i]})"
        )
    Y = ds.series
    rows = slice(p, ds.T)

    x_lag = np.repeat(np.arange(1, p + 1), own.size)
    x_var = np.tile(own, p)
    contemporaneous = np.concatenate([own[:j], np.arange(0, off[i])]).astype(int)
    z_lag = np.concatenate([np.repeat(np.arange(1, p + 1), others.size), np.zeros(contemporaneous.size, int)])
    z_var = np.concatenate([np.tile(others, p), contemporaneous]).astype(int)

    X = np.column_stack([Y[p - l:ds.T - l, v] for l, v in zip(x_lag, x_var)])
    if z_var.size:
        Z = np.column_stack([Y[p - l:ds.T - l, v] for l, v in zip(z_lag, z_var)])
    else:
        Z = np.zeros((T_eff, 0))
    target = off[i] + j
    return EquationDesign(i, j, p, Y[rows, target].copy(), X, Z, x_lag, x_var, z_lag, z_var, int(target))
