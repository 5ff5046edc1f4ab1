"""Run configuration: a YAML (or JSON) file, nested or with dotted keys.

Any key can be overridden through the environment as
``PVAR_IRGA__SECTION__KEY=value`` (values are parsed as YAML scalars), e.g.
``PVAR_IRGA__VAMP__TOL=1e-8``.  Command-line flags override both.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .gibbs import McmcConfig
from .vamp import VampConfig

ENV_PREFIX = "PVAR_IRGA__"


class ConfigError(ValueError):
    pass


@dataclass
class ForecastConfig:
    horizon: int = 12
    initial: int | str | None = None
    last: int | str | None = None
    models: list = field(default_factory=lambda: ["pvar-irga", "ar"])
    benchmark: str = "ar"
    point: str = "median"
    n_draws: int = 500
    propagate_B: bool = True


@dataclass
class SpilloverConfig:
    horizon: int = 12
    initial: int | str | None = None
    last: int | str | None = None
    step: int = 1
    n_draws: int = 500


@dataclass
class RunConfig:
    data_path: Path
    variables_path: Path
    p: int
    vamp: VampConfig = field(default_factory=VampConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    spillover: SpilloverConfig = field(default_factory=SpilloverConfig)
    seed: int = 0
    out: Path = Path("run")
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)

    def echo(self) -> dict:
        d = asdict(self)
        d["data_path"] = str(self.data_path)
        d["variables_path"] = str(self.variables_path)
        d["out"] = str(self.out)
        d["vamp"].pop("xi_init", None)
        return d


# YAML 1.1 reads "1e-6" (no decimal point) as a string
_EXP_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)[eE][+-]?\d+$")


def _scalar(value):
    if isinstance(value, str) and _EXP_NUMBER.match(value.strip()):
        return float(value)
    return value


def flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, path + "."))
        else:
            out[path] = _scalar(value)
    return out


def unflatten(flat: dict) -> dict:
    tree: dict = {}
    for path, value in flat.items():
        node = tree
        *parents, leaf = path.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return tree


def read_tree(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    tree = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return flatten(tree)


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            path = key[len(ENV_PREFIX):].lower().replace("__", ".")
            out[path] = _scalar(yaml.safe_load(value))
    return out


def _section(cls, tree: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(tree) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(sorted(f'{name}.{u}' for u in unknown))}")
    try:
        return cls(**tree)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def build_config(flat: dict, base_dir: Path = Path("."), check_paths: bool = True) -> RunConfig:
    tree = unflatten(flat)
    for key in ("data.path", "data.variables", "p"):
        node = tree
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"missing required config key: {key}")
            node = node[part]
    data = tree.pop("data")
    resolve = lambda p: (base_dir / Path(p)) if not Path(p).is_absolute() else Path(p)
    cfg = RunConfig(
        data_path=resolve(data["path"]),
        variables_path=resolve(data["variables"]),
        p=int(tree.pop("p")),
        vamp=_section(VampConfig, tree.pop("vamp", {}), "vamp"),
        mcmc=_section(McmcConfig, tree.pop("mcmc", {}), "mcmc"),
        forecast=_section(ForecastConfig, tree.pop("forecast", {}), "forecast"),
        spillover=_section(SpilloverConfig, tree.pop("spillover", {}), "spillover"),
        seed=int(tree.pop("seed", 0)),
        out=resolve(tree.pop("out", "run")),
        threads=int(tree.pop("threads", os.cpu_count() or 1)),
    )
    # single root seed; the sampler derives per-equation streams from it
    cfg.mcmc.seed = cfg.seed
    if tree:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(flatten(tree)))}")
    if cfg.p < 1:
        raise ConfigError("p must be >= 1")
    if check_paths:
        for path in (cfg.data_path, cfg.variables_path):
            if not path.exists():
                raise ConfigError(f"path does not exist: {path}")
    return cfg


def load_config(path, overrides: dict | None = None, environ=None) -> RunConfig:
    """File < environment < explicit overrides (dotted keys)."""
    flat = read_tree(path)
    flat.update(env_overrides(environ))
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(flat, Path(path).parent)
