"""Command-line entry point.

    tvpolicy validate --data F
    tvpolicy simulate --config F [--threads K] [--out D] [--replicates N] [--seed S]
    tvpolicy metrics --raw F [--out D]
    tvpolicy expand --data F --n-states N --seed S [--out F]
    tvpolicy plot --metrics F [F ...] [--svg] [--out D]

Errors go to stderr with exit status 1; results go to files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dgp import synthesize_states
from .harness import STANDIN, SimulationConfig, metrics_filename, metrics_from_raw, read_raw_csv, run_study
from .metrics import write_metrics_csv
from .panel import PanelLoadError, load_panel_csv, validate_panel, write_panel_csv
from .plotting import emit_plot_data
from .standin import make_standin_panel

log = logging.getLogger("tvpolicy")

CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(SimulationConfig))


class ConfigError(ValueError):
    pass


def parse_config(path=None, overrides: Optional[dict] = None) -> SimulationConfig:
    """Read a flat JSON config, apply non-``None`` ``overrides`` and validate.

    ``seed`` must be given explicitly; ``data`` defaults to the built-in stand-in panel.
    """
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: not valid JSON: {err}") from err
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}; valid keys: {', '.join(CONFIG_KEYS)}")
    if "seed" not in raw:
        raise ConfigError("config must set 'seed' explicitly")
    raw.setdefault("data", STANDIN)
    for key in ("scenarios", "n_treated", "estimators"):
        if key in raw and not isinstance(raw[key], list):
            raw[key] = [raw[key]]
    try:
        return SimulationConfig(**raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def config_to_json(config: SimulationConfig) -> str:
    return json.dumps(config.to_dict(), indent=2) + "\n"


def _load_data(source: str):
    return make_standin_panel() if source == STANDIN else load_panel_csv(source)


def cmd_validate(args) -> int:
    data = _load_data(args.data)
    report = validate_panel(data)
    if not report.ok:
        for v in report.violations:
            print(v, file=sys.stderr)
        return 1
    print(f"ok: {data.n_states} states, {data.years[0]}-{data.years[-1]}")
    return 0


def cmd_simulate(args) -> int:
    cfg = parse_config(
        args.config, {"threads": args.threads, "out": args.out, "replicates": args.replicates, "seed": args.seed}
    )
    res = run_study(cfg)
    print(f"wrote {res.raw_path}, {', '.join(str(p) for p in res.metrics_paths.values())}, {res.manifest_path}")
    return 0


def cmd_metrics(args) -> int:
    raw = Path(args.raw)
    out = Path(args.out) if args.out else raw.parent
    out.mkdir(parents=True, exist_ok=True)
    for nt, rows in metrics_from_raw(read_raw_csv(raw)).items():
        write_metrics_csv(rows, out / metrics_filename(nt))
        print(f"wrote {out / metrics_filename(nt)}")
    return 0


def cmd_expand(args) -> int:
    data = _load_data(args.data)
    if args.n_states < 1:
        raise ValueError("--n-states must be at least 1")
    big = synthesize_states(data, args.n_states, np.random.default_rng(args.seed))
    out = Path(args.out) if args.out else Path(f"{Path(args.data).stem}_plus{args.n_states}.csv")
    write_panel_csv(big, out)
    print(f"wrote {out} ({big.n_states} states)")
    return 0


def cmd_plot(args) -> int:
    out = Path(args.out) if args.out else Path(args.metrics[0]).parent
    for name, path in emit_plot_data(args.metrics, out, svg=args.svg).items():
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvpolicy", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a panel CSV for structural problems")
    v.add_argument("--data", required=True, help=f"panel CSV or '{STANDIN}'")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", help="run a simulation study from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--threads", type=int)
    s.add_argument("--out")
    s.add_argument("--replicates", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("metrics", help="recompute metrics tables from a raw results CSV")
    m.add_argument("--raw", required=True)
    m.add_argument("--out", help="output directory (default: next to the raw file)")
    m.set_defaults(func=cmd_metrics)

    e = sub.add_parser("expand", help="append synthetic states to a panel")
    e.add_argument("--data", required=True)
    e.add_argument("--n-states", type=int, required=True)
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_expand)

    pl = sub.add_parser("plot", help="emit per-figure plot data from metrics CSVs")
    pl.add_argument("--metrics", nargs="+", required=True)
    pl.add_argument("--svg", action="store_true")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PanelLoadError, ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
