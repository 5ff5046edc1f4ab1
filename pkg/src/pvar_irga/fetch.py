"""Download monthly series from the DBnomics REST API into the wide CSV layout."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import pandas as pd
import yaml

from .panel_data import Transform, VariableSpec, write_raw_csv, write_variable_specs

log = logging.getLogger(__name__)

API = "https://api.db.nomics.world/v22"
ATTEMPTS = 3


class FetchError(RuntimeError):
    pass


@dataclass
class SeriesRequest:
    series: str
    country: str
    code: str
    transform: int = 0
    provider: str | None = None
    dataset: str | None = None
    name: str = ""


@dataclass
class FetchSpec:
    provider: str
    dataset: str
    series: list = field(default_factory=list)
    api: str = API

    @classmethod
    def load(cls, path) -> "FetchSpec":
        tree = yaml.safe_load(Path(path).read_text())
        try:
            reqs = [SeriesRequest(**s) for s in tree.pop("series")]
            return cls(series=reqs, **tree)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: invalid fetch spec ({exc})") from exc


def _slug(*parts) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", "__".join(parts))


def series_url(api: str, provider: str, dataset: str, series: str) -> str:
    return f"{api}/series/{provider}/{dataset}/{series}"


def get_with_retry(client: httpx.Client, url: str, params: dict, sleep=time.sleep, base_delay: float = 0.5):
    last = None
    for attempt in range(ATTEMPTS):
        try:
            resp = client.get(url, params=params)
            if resp.status_code < 500 and resp.status_code != 429:
                resp.raise_for_status()
                return resp.json()
            last = FetchError(f"HTTP {resp.status_code} for {url}")
        except httpx.HTTPStatusError as exc:
            raise FetchError(f"HTTP {exc.response.status_code} for {url}") from exc
        except httpx.TransportError as exc:
            last = FetchError(f"{type(exc).__name__} for {url}: {exc}")
        if attempt < ATTEMPTS - 1:
            sleep(base_delay * 2 ** attempt)
    raise last


def parse_series(payload: dict) -> dict:
    docs = payload.get("series", {}).get("docs", [])
    if not docs:
        raise FetchError("no series in response")
    doc = docs[0]
    values = [None if v in ("NA", None) else float(v) for v in doc["value"]]
    return {"period": [str(p) for p in doc["period"]], "value": values}


def fetch(spec: FetchSpec, out_dir, client: httpx.Client | None = None, sleep=time.sleep) -> list:
    """Fetch every series; returns the list of ``(series, error)`` failures.

    Raw series are cached under ``out_dir/raw`` together with their SHA-256;
    a cached file whose hash matches is used without touching the network.
    """
    out = Path(out_dir)
    raw_dir = out / "raw"
    raw_dir.mkdir(parents=True, exist_ok=True)
    index_path = raw_dir / "index.json"
    index = json.loads(index_path.read_text()) if index_path.exists() else {}
    own_client = client is None
    client = client or httpx.Client(timeout=30.0, follow_redirects=True)

    columns, specs, errors = {}, [], []
    try:
        for req in spec.series:
            provider = req.provider or spec.provider
            dataset = req.dataset or spec.dataset
            key = _slug(provider, dataset, req.series)
            path = raw_dir / f"{key}.json"
            try:
                if path.exists() and index.get(key) == hashlib.sha256(path.read_bytes()).hexdigest():
                    data = json.loads(path.read_text())
                else:
                    payload = get_with_retry(client, series_url(spec.api, provider, dataset, req.series),
                                             {"observations": 1, "format": "json"}, sleep)
                    data = parse_series(payload)
                    text = json.dumps(data, sort_keys=True)
                    path.write_text(text)
                    index[key] = hashlib.sha256(text.encode()).hexdigest()
            except (FetchError, ValueError, KeyError) as exc:
                log.warning("%s: %s", req.series, exc)
                errors.append((req.series, str(exc)))
                continue
            col = f"{req.country}.{req.code}"
            columns[col] = pd.Series(data["value"], index=pd.PeriodIndex(data["period"], freq="M"), dtype=float)
            specs.append(VariableSpec(req.code, req.country, Transform(int(req.transform)), req.name))
    finally:
        if own_client:
            client.close()
        index_path.write_text(json.dumps(index, indent=1, sort_keys=True))

    if columns:
        frame = pd.DataFrame(columns).sort_index()
        frame = frame.reindex(pd.period_range(frame.index.min(), frame.index.max(), freq="M"))
        write_raw_csv(frame, out / "data.csv")
        write_variable_specs(specs, out / "variables.csv")
    pd.DataFrame(errors, columns=["series", "error"]).to_csv(out / "fetch_errors.csv", index=False)
    return errors
