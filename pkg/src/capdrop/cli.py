"""Command-line entry point: ``capdrop <subcommand> [options]``.

Every subcommand starts from a JSON config (``--config`` file or ``--preset``
name), applies flag overrides, validates the result and runs it.  Numeric
flags accept fractions such as ``0.3/49``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, SIMULATION_KINDS, config_from_dict, load_preset, preset_names, set_path
from .experiments import run_experiment, run_sweep

OUTPUT_ENV = "CAPDROP_OUTPUT_DIR"
DEFAULT_OUTPUT = "capdrop-output"

# subcommand -> (default preset, experiment kinds it accepts)
COMMANDS = {
    "riemann": ("lane_drop_riemann", ("riemann",)),
    "simulate": ("ring_bistability", SIMULATION_KINDS),
    "ring-bistability": ("ring_bistability", ("ring-bistability",)),
    "mfd": ("ring_mfd", ("mfd",)),
    "statics": ("lane_drop_statics", ("statics",)),
    "estimate-drop": (None, ("estimate-drop",)),
    "sweep": ("epsilon_sweep", None),
}

# flag dest -> dotted config path
OVERRIDES = {
    "k1": "params.k1",
    "k2": "params.k2",
    "epsilon": "params.epsilon",
    "duration": "numerics.duration",
    "dx": "numerics.dx",
    "dt": "numerics.dt",
    "resolution": "params.resolution",
    "d0": "params.d0",
    "s0": "params.s0",
    "input": "params.input",
    "g": "params.g",
    "window": "params.window",
    "cv_threshold": "params.cv_threshold",
    "speed_ratio": "params.speed_ratio",
    "role": "params.role",
    "station_id": "params.station_id",
    "lanes": "params.lanes",
    "parameter": "sweep.parameter",
    "start": "sweep.start",
    "stop": "sweep.stop",
    "count": "sweep.count",
}


def _common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="experiment config (JSON)")
    src.add_argument("--preset", help=f"shipped preset: {', '.join(preset_names())}")
    p.add_argument("--out", help=f"output directory (env {OUTPUT_ENV} overrides the config value)")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="PATH=VALUE",
        help="override any config field, e.g. --set numerics.duration=300",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capdrop", description="Kinematic-wave simulation with capacity-drop bottlenecks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("riemann", help="solve a lane-drop Riemann problem and print the solution as JSON")
    _common(p)
    p.add_argument("--k1", help="upstream density (veh/m)")
    p.add_argument("--k2", help="downstream density (veh/m)")
    p.add_argument("--c-star", dest="c_star", help="dropped capacity (veh/s)")

    for name in ("simulate", "ring-bistability"):
        p = sub.add_parser(name, help="run a corridor or ring simulation" if name == "simulate" else "ring preset shortcut")
        _common(p)
        p.add_argument("--epsilon", help="ring perturbation amplitude (veh/m)")
        p.add_argument("--duration", help="simulated time (s)")
        p.add_argument("--dx", help="cell length (m)")
        p.add_argument("--dt", help="time step (s)")

    p = sub.add_parser("mfd", help="analytic ring macroscopic fundamental diagram as CSV")
    _common(p)
    p.add_argument("--resolution", type=int, help="samples per branch")
    p.add_argument("--c-star", dest="c_star", help="dropped capacity (veh/s)")

    p = sub.add_parser("statics", help="stationary states of an open lane-drop road")
    _common(p)
    p.add_argument("--d0", help="entry demand (veh/s)")
    p.add_argument("--s0", help="exit supply (veh/s)")
    p.add_argument("--c-star", dest="c_star", help="dropped capacity (veh/s)")
    p.add_argument("--simulate", dest="simulate", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--duration", help="simulation check duration (s)")

    p = sub.add_parser("estimate-drop", help="estimate the capacity drop from detector CSV data")
    _common(p)
    p.add_argument("--input", help="CSV with timestamp,station_id,role,flow_vph,occupancy")
    p.add_argument("--g", help="g-factor (ft)")
    p.add_argument("--window", help="stationarity window (s)")
    p.add_argument("--cv-threshold", dest="cv_threshold")
    p.add_argument("--speed-ratio", dest="speed_ratio")
    p.add_argument("--role")
    p.add_argument("--station-id", dest="station_id")
    p.add_argument("--lanes", type=int)

    p = sub.add_parser("sweep", help="run one experiment per value of a parameter")
    _common(p)
    p.add_argument("--parameter", help="dotted config path, e.g. params.epsilon")
    p.add_argument("--start")
    p.add_argument("--stop")
    p.add_argument("--count", type=int)
    return parser


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def assemble_config(args: argparse.Namespace) -> dict:
    """Config dict from the chosen source plus all flag overrides."""
    default_preset, _ = COMMANDS[args.command]
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([("$", f"syntax error: {exc.msg} at line {exc.lineno} column {exc.colno}")]) from None
    elif args.preset or default_preset:
        raw = json.loads(load_preset(args.preset or default_preset))
    else:
        raw = {"experiment": "estimate-drop", "params": {}}
    if not isinstance(raw, dict):
        raise ConfigError([("$", "expected an object")])

    values = vars(args)
    if args.command == "sweep" and any(values.get(k) is not None for k in ("start", "stop", "count")):
        raw = set_path(raw, "sweep", {k: v for k, v in raw.get("sweep", {}).items() if k != "values"})
    for dest, path in OVERRIDES.items():
        if values.get(dest) is not None:
            raw = set_path(raw, path, values[dest])
    if values.get("c_star") is not None:
        drop = [i for i, n in enumerate(raw.get("nodes", [])) if n.get("type") == "capacity-drop"]
        if not drop:
            raise ConfigError([("$.nodes", "--c-star given but the config has no capacity-drop node")])
        node = {k: v for k, v in raw["nodes"][drop[0]].items() if k != "delta"}
        node["c_star"] = values["c_star"]
        raw = set_path(raw, f"nodes.{drop[0]}", node)
    if values.get("simulate") is not None:
        raw = set_path(raw, "params.simulate", values["simulate"])
    for item in args.set:
        if "=" not in item:
            raise ConfigError([("--set", f"expected PATH=VALUE, got {item!r}")])
        path, text = item.split("=", 1)
        raw = set_path(raw, path.strip(), _parse_value(text))
    return raw


def output_dir(args: argparse.Namespace, raw: dict) -> str | None:
    if args.out:
        return args.out
    if os.environ.get(OUTPUT_ENV):
        return os.environ[OUTPUT_ENV]
    configured = raw.get("output", {}).get("dir") if isinstance(raw.get("output"), dict) else None
    if configured:
        return configured
    # riemann results go to stdout unless a directory is requested
    return None if args.command == "riemann" else DEFAULT_OUTPUT


def _brief(result) -> dict:
    if isinstance(result, list):
        return {"runs": result}
    return {k: v for k, v in result.items() if k != "config"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = assemble_config(args)
        cfg = config_from_dict(raw)
        kinds = COMMANDS[args.command][1]
        if kinds is not None and cfg.experiment not in kinds:
            raise ConfigError([("$.experiment", f"'{args.command}' runs {', '.join(kinds)}, got {cfg.experiment!r}")])
        out = output_dir(args, raw)
        if args.command == "sweep":
            result = run_sweep(cfg, out)
        else:
            result = run_experiment(cfg, out)
    except ConfigError as exc:
        print(f"capdrop: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"capdrop: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_brief(result), indent=2, sort_keys=True))
    if out is not None:
        print(f"outputs written to {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
