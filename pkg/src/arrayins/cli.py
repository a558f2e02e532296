"""
Command-line interface.

Exit codes: 0 success, 2 configuration or validation error, 3 campaign
failure, 4 dataset schema error or missing dataset file, 5 Jacobian
validation failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from .array_model import PRESETS, RankDeficientError, geometry_from_dict, stability_eigenvalues
from .harness import (
    CAMPAIGN_PRESETS,
    CampaignConfig,
    CampaignError,
    ConfigError,
    ReplayConfig,
    SchemaError,
    atomic_write_text,
    load_campaign_config,
    load_dataset,
    load_replay_config,
    run_replay_campaign,
    run_simulation_campaign,
)
from .jacobian_check import validate_jacobians

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAMPAIGN = 3
EXIT_SCHEMA = 4
EXIT_JACOBIAN = 5


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _summary(result, quiet: bool) -> None:
    if quiet:
        return
    for name, curve in result.curves.items():
        t_end = float(curve.t_offset[-1])
        print(f"{name:14s} rmse@{t_end:g}s={curve.rmse_combined[-1]:.4f} m  (runs={curve.n_runs})")


def _campaign_overrides(cfg: CampaignConfig, args: argparse.Namespace) -> CampaignConfig:
    d = cfg.to_dict()
    for key in ("seed", "runs", "fs", "dynamics", "variants", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    if args.dynamics is not None:
        d["profile"] = None
    return CampaignConfig.from_dict(d)


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cfg = _campaign_overrides(load_campaign_config(args.config), args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(f"# seed={cfg.seed}")
    print(f"# config_hash={cfg.config_hash}")
    try:
        result = run_simulation_campaign(cfg)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except CampaignError as exc:
        _err(f"campaign failed: {exc}")
        return EXIT_CAMPAIGN
    result.write_csv(args.out)
    _summary(result, args.quiet)
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        cfg, pairs = load_replay_config(args.config)
        if args.variants is not None or args.seed is not None:
            d = cfg.to_dict()
            if args.variants is not None:
                d["variants"] = args.variants
            if args.seed is not None:
                d["seed"] = args.seed
            cfg = ReplayConfig.from_dict(d)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    meas = args.measurements or []
    refs = args.reference or []
    if len(meas) != len(refs):
        _err("give one --reference per --measurements")
        return EXIT_CONFIG
    pairs = list(zip(meas, refs)) or pairs
    if not pairs:
        _err("no datasets given")
        return EXIT_CONFIG
    print(f"# seed={cfg.seed}")
    print(f"# config_hash={cfg.config_hash}")
    try:
        datasets = [load_dataset(m, r) for m, r in pairs]
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_SCHEMA
    except SchemaError as exc:
        _err(f"schema error: {exc}")
        return EXIT_SCHEMA
    try:
        result = run_replay_campaign(datasets, cfg)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except CampaignError as exc:
        _err(f"replay failed: {exc}")
        return EXIT_CAMPAIGN
    result.write_csv(args.out)
    _summary(result, args.quiet)
    return EXIT_OK


def _load_geometry_spec(args: argparse.Namespace) -> dict:
    if args.config is None:
        return {"preset": args.geometry}
    try:
        with open(args.config) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {args.config}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("geometry config must be a mapping")
    spec = data.get("geometry", data)
    if isinstance(spec, str):
        spec = {"preset": spec}
    return spec


def cmd_analyze_stability(args: argparse.Namespace) -> int:
    try:
        spec = _load_geometry_spec(args)
        geometry = geometry_from_dict(spec)
        ev = stability_eigenvalues(geometry, np.asarray(args.omega, dtype=float),
                                   np.diag(np.asarray(args.gain, dtype=float)))
    except RankDeficientError as exc:
        _err(f"geometry rank failure: {exc}")
        return EXIT_CONFIG
    except (ConfigError, ValueError, TypeError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    lines = [
        f"# geometry={geometry.name} K={geometry.K}",
        f"# omega0={' '.join(f'{x:g}' for x in args.omega)} L=diag({' '.join(f'{x:g}' for x in args.gain)})",
        "real,imag",
        *(f"{e.real:.12e},{e.imag:.12e}" for e in ev),
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    print(text, end="")
    return EXIT_OK


def cmd_validate_jacobians(args: argparse.Namespace) -> int:
    print(f"# seed={args.seed}")
    report = validate_jacobians(seed=args.seed, n_states=args.states)
    text = report.format()
    print(text)
    if args.out:
        atomic_write_text(args.out, text + "\n")
    if not report.passed:
        _err(f"Jacobian validation failed in block {report.worst.name}")
        return EXIT_JACOBIAN
    return EXIT_OK


def _variants(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arrayins", description=__doc__.splitlines()[1])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="suppress the summary")

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo simulation campaign")
    p.add_argument("--config", default="paper-sim-low-500",
                   help=f"campaign YAML file or preset ({', '.join(sorted(CAMPAIGN_PRESETS))})")
    p.add_argument("--out", required=True, type=Path, help="output CSV")
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--fs", type=float, help="sampling rate in Hz")
    p.add_argument("--dynamics", choices=("low", "high"))
    p.add_argument("--variants", type=_variants, help="comma-separated variant names")
    p.add_argument("--workers", type=int, help="worker processes")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", parents=[common], help="replay recorded datasets")
    p.add_argument("--config", required=True, help="replay YAML file")
    p.add_argument("--measurements", action="append", help="measurement CSV (repeatable)")
    p.add_argument("--reference", action="append", help="reference CSV (repeatable, paired in order)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--variants", type=_variants)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("analyze-stability", parents=[common], help="eigenvalues of the angular-rate dynamics")
    p.add_argument("--config", help="geometry YAML file")
    p.add_argument("--geometry", default="paper32", choices=sorted(PRESETS), help="geometry preset")
    p.add_argument("--omega", type=float, nargs=3, default=(1.0, 1.0, 1.0), metavar=("WX", "WY", "WZ"))
    p.add_argument("--gain", type=float, nargs=3, default=(0.0, 0.0, 0.0), metavar=("L1", "L2", "L3"),
                   help="diagonal of the feedback gain L")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_analyze_stability)

    p = sub.add_parser("validate-jacobians", parents=[common], help="finite-difference Jacobian check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--states", type=int, default=10, help="random states per variant")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_validate_jacobians)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
