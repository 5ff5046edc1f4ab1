"""Command-line entry point: ``pvar-irga {fetch,simulate,estimate,forecast,spillover}``.

Exit codes: 0 success, 1 invalid input (config, data, arguments), 2 failure
during computation or download.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .config import ConfigError, load_config
from .panel_data import load_panel, write_raw_csv, write_variable_specs
from .runs import atomic_write, model_runners, resolve_stop, run_estimate, run_forecast, run_spillover
from .simulate import SimulationSpec, simulate_panel, spec_dict

log = logging.getLogger("pvar_irga")

EXIT_OK, EXIT_INVALID, EXIT_COMPUTE = 0, 1, 2


class _Invalid(Exception):
    """Wraps anything raised while validating inputs, before any compute."""


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pvar-irga", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", type=Path)

    f = sub.add_parser("fetch", parents=[common], help="download series from DBnomics")
    f.add_argument("--spec", type=Path, help="fetch spec (defaults to --config)")

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic panel and its true coefficients")
    for name, kind in (("N", int), ("M", int), ("p", int), ("T", int), ("sparsity", float)):
        s.add_argument(f"--{name}", type=kind)

    for name, text in (("estimate", "fit the model on the full sample"),
                       ("forecast", "final forecast and the recursive evaluation"),
                       ("spillover", "spillover indices over expanding windows")):
        sub.add_parser(name, parents=[common], help=text)
    return ap


def _run_config(args):
    if args.config is None:
        raise _Invalid("--config is required")
    overrides = {"seed": args.seed, "threads": args.threads,
                 "out": str(args.out.resolve()) if args.out else None}
    cfg = load_config(args.config, overrides)
    ds = load_panel(cfg.data_path, cfg.variables_path)
    return cfg, ds


def _validate(command: str, cfg, ds) -> None:
    if command == "forecast":
        model_runners(cfg)
        if cfg.forecast.benchmark not in cfg.forecast.models:
            raise ConfigError(f"forecast.benchmark {cfg.forecast.benchmark!r} is not in forecast.models")
        if cfg.forecast.initial is not None:
            resolve_stop(ds, cfg.forecast.initial, ds.T - 1)
            resolve_stop(ds, cfg.forecast.last, ds.T - 1)
    elif command == "spillover":
        for value in (cfg.spillover.initial, cfg.spillover.last):
            resolve_stop(ds, value, ds.T)


def cmd_simulate(args) -> int:
    try:
        fields = yaml.safe_load(args.config.read_text()) if args.config else {}
        fields = {k: v for k, v in (fields or {}).items() if k in SimulationSpec.__dataclass_fields__}
        for name in ("N", "M", "p", "T", "sparsity", "seed"):
            if getattr(args, name, None) is not None:
                fields[name] = getattr(args, name)
        spec = SimulationSpec(**fields)
    except (TypeError, ValueError, OSError) as exc:
        raise _Invalid(str(exc)) from exc
    out = args.out or Path("sim")
    ds, truth = simulate_panel(spec)
    out.mkdir(parents=True, exist_ok=True)
    frame = ds.to_frame()
    write_raw_csv(frame, out / "data.csv")
    write_variable_specs(list(ds.variables), out / "variables.csv")
    atomic_write(out / "truth.json", truth.to_json())
    atomic_write(out / "simulation.json", json.dumps(spec_dict(spec), indent=1))
    config = {"data": {"path": "data.csv", "variables": "variables.csv"}, "p": spec.p, "seed": spec.seed,
              "out": "run"}
    atomic_write(out / "config.yaml", yaml.safe_dump(config, sort_keys=False))
    print(f"wrote {ds.T} x {ds.n} panel to {out}")
    return EXIT_OK


def cmd_fetch(args) -> int:
    from .fetch import FetchSpec, fetch

    path = args.spec or args.config
    if path is None:
        raise _Invalid("--spec or --config is required")
    try:
        spec = FetchSpec.load(path)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        raise _Invalid(str(exc)) from exc
    errors = fetch(spec, args.out or Path("data"))
    for series, err in errors:
        print(f"failed: {series}: {err}", file=sys.stderr)
    return EXIT_COMPUTE if errors else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "fetch":
            return cmd_fetch(args)
        try:
            cfg, ds = _run_config(args)
            _validate(args.command, cfg, ds)
        except (ValueError, OSError) as exc:
            raise _Invalid(str(exc)) from exc
        runner = {"estimate": run_estimate, "forecast": run_forecast, "spillover": run_spillover}[args.command]
        payload = runner(cfg, ds)
        print(json.dumps({k: v for k, v in payload.items() if k != "equations"}, default=str))
        return EXIT_OK
    except _Invalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001  any failure after validation
        log.debug("compute failure", exc_info=True)
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
