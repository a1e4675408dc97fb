"""Experiment configuration: JSON parsing, validation and corridor construction.

Numbers anywhere in a config may be written as fractions ("81/49") to keep
exact rational parameters; plain decimals are accepted too.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Any

import numpy as np

from .flux import CapacityDrop, ExternalDemand, ExternalSupply, MergeCapacityDrop, NodeModel, Standard
from .fundamental import TriangularFD
from .sim import Corridor, Link

EXPERIMENTS = (
    "riemann",
    "perturbed-riemann",
    "ring-bistability",
    "mfd",
    "statics",
    "estimate-drop",
    "custom-corridor",
)
SIMULATION_KINDS = ("perturbed-riemann", "ring-bistability", "custom-corridor")

TOP_KEYS = {"experiment", "fd", "links", "nodes", "topology", "boundary", "initial", "numerics", "params", "output", "sweep", "record"}
FD_KEYS = {"v_star", "tau", "k_star"}
LINK_KEYS = {"name", "length", "lanes", "fd"}
NODE_KEYS = {
    "standard": set(),
    "capacity-drop": {"c_star", "delta"},
    "merge-capacity-drop": {"alpha", "delta", "c3", "ramp_demand"},
}
NUMERICS_KEYS = {"dx", "dt", "duration"}
BOUNDARY_KEYS = {"demand", "supply"}
INITIAL_KEYS = {
    "uniform": {"density"},
    "ring-perturbation": {"base", "epsilon", "bump"},
    "piecewise": {"segments"},
}
OUTPUT_KEYS = {"dir", "prefix"}
RECORD_KEYS = {"snapshot_every", "tags", "average_fraction"}
SWEEP_KEYS = {"parameter", "start", "stop", "count", "values"}
PARAM_KEYS = {
    "riemann": ({"k1", "k2"}, {"k1", "k2"}),
    "perturbed-riemann": ({"k1", "k0", "k2", "perturbation_length"}, {"k1", "k0", "k2", "perturbation_length"}),
    "ring-bistability": ({"epsilon"}, set()),
    "mfd": ({"resolution", "link1_length", "length"}, set()),
    "statics": ({"d0", "s0", "simulate", "duration"}, {"d0", "s0"}),
    "estimate-drop": (
        {"input", "g", "window", "cv_threshold", "speed_ratio", "free_percentile", "role", "station_id", "lanes", "min_samples"},
        {"input"},
    ),
    "custom-corridor": (set(), set()),
}
NON_NUMERIC_PARAMS = {"input", "role", "station_id", "simulate"}


class ConfigError(ValueError):
    """One or more configuration problems, each with a JSON path."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("invalid configuration:\n" + "\n".join(f"  {p}: {m}" for p, m in errors))


def parse_number(value: Any) -> float:
    """Float from a number or a string such as "0.3/49" or "1.5"."""
    if isinstance(value, bool):
        raise ValueError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            num, den = text.split("/", 1)
            return float(Fraction(num.strip()) / Fraction(den.strip()))
        return float(Fraction(text))
    raise ValueError(f"expected a number, got {value!r}")


@dataclass
class ExperimentConfig:
    """A validated experiment description; ``raw`` keeps the JSON document for provenance."""

    experiment: str
    raw: dict
    fd: dict = field(default_factory=dict)
    links: list[dict] = field(default_factory=list)
    nodes: list[dict] = field(default_factory=list)
    topology: str = "open"
    boundary: dict = field(default_factory=dict)
    initial: dict | None = None
    numerics: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    record: dict = field(default_factory=dict)
    sweep: dict | None = None

    @property
    def duration(self) -> float:
        return self.numerics.get("duration", 0.0)


class _Collector:
    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def add(self, path, message):
        self.errors.append((path, message))

    def keys(self, obj, allowed, path):
        if not isinstance(obj, dict):
            self.add(path, f"expected an object, got {type(obj).__name__}")
            return False
        for key in obj:
            if key not in allowed:
                self.add(f"{path}.{key}", "unknown field")
        return True

    def number(self, obj, key, path, positive=False, nonneg=False, required=True):
        if key not in obj:
            if required:
                self.add(f"{path}.{key}", "missing required field")
            return None
        try:
            value = parse_number(obj[key])
        except (ValueError, ZeroDivisionError) as exc:
            self.add(f"{path}.{key}", str(exc))
            return None
        if not math.isfinite(value):
            self.add(f"{path}.{key}", "must be finite")
        elif positive and value <= 0:
            self.add(f"{path}.{key}", f"must be positive, got {value}")
        elif nonneg and value < 0:
            self.add(f"{path}.{key}", f"must be non-negative, got {value}")
        return value


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config, reporting every violation at once."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("$", f"syntax error: {exc.msg} at line {exc.lineno} column {exc.colno}")]) from None
    return config_from_dict(raw)


def config_from_dict(raw: Any) -> ExperimentConfig:
    c = _Collector()
    if not c.keys(raw, TOP_KEYS, "$"):
        raise ConfigError(c.errors)
    raw = copy.deepcopy(raw)
    kind = raw.get("experiment")
    if kind not in EXPERIMENTS:
        c.add("$.experiment", f"must be one of {', '.join(EXPERIMENTS)}; got {kind!r}")
        raise ConfigError(c.errors)
    cfg = ExperimentConfig(experiment=kind, raw=raw)

    base_fd = raw.get("fd", {})
    cfg.fd = _parse_fd(c, base_fd, "$.fd", {"v_star": 30.0, "tau": 1.4, "k_star": 1 / 7})

    for i, link in enumerate(raw.get("links", [])):
        path = f"$.links[{i}]"
        if not c.keys(link, LINK_KEYS, path):
            continue
        length = c.number(link, "length", path, positive=True, required=kind not in ("riemann", "statics", "mfd"))
        lanes = link.get("lanes")
        if not isinstance(lanes, int) or isinstance(lanes, bool) or lanes < 1:
            c.add(f"{path}.lanes", f"must be an integer >= 1, got {lanes!r}")
        fd = _parse_fd(c, link.get("fd", {}), f"{path}.fd", cfg.fd)
        cfg.links.append({"name": link.get("name", f"link{i + 1}"), "length": length, "lanes": lanes, "fd": fd})

    for i, node in enumerate(raw.get("nodes", [])):
        path = f"$.nodes[{i}]"
        if not isinstance(node, dict):
            c.add(path, "expected an object")
            continue
        ntype = node.get("type")
        if ntype not in NODE_KEYS:
            c.add(f"{path}.type", f"must be one of {', '.join(NODE_KEYS)}; got {ntype!r}")
            continue
        c.keys(node, NODE_KEYS[ntype] | {"type"}, path)
        parsed = {"type": ntype}
        for key in NODE_KEYS[ntype]:
            if key in node:
                parsed[key] = c.number(node, key, path, nonneg=True)
        if ntype == "capacity-drop" and ("c_star" in parsed) == ("delta" in parsed):
            c.add(path, "capacity-drop needs exactly one of c_star or delta")
        if ntype == "merge-capacity-drop":
            for key in ("alpha", "delta"):
                if key not in parsed:
                    c.add(f"{path}.{key}", "missing required field")
        cfg.nodes.append(parsed)

    topology = raw.get("topology", "ring" if kind in ("ring-bistability", "mfd") else "open")
    if topology not in ("ring", "open"):
        c.add("$.topology", f"must be 'ring' or 'open', got {topology!r}")
    cfg.topology = topology

    if "boundary" in raw and c.keys(raw["boundary"], BOUNDARY_KEYS, "$.boundary"):
        for key in BOUNDARY_KEYS:
            if key in raw["boundary"]:
                cfg.boundary[key] = c.number(raw["boundary"], key, "$.boundary", nonneg=True)

    if "initial" in raw:
        init = raw["initial"]
        itype = init.get("type") if isinstance(init, dict) else None
        if itype not in INITIAL_KEYS:
            c.add("$.initial.type", f"must be one of {', '.join(INITIAL_KEYS)}; got {itype!r}")
        else:
            c.keys(init, INITIAL_KEYS[itype] | {"type"}, "$.initial")
            parsed = {"type": itype}
            if itype == "piecewise":
                segs = init.get("segments")
                if not isinstance(segs, list) or not segs:
                    c.add("$.initial.segments", "must be a non-empty list of [start, end, density]")
                else:
                    parsed["segments"] = []
                    for j, seg in enumerate(segs):
                        try:
                            a, b, v = (parse_number(x) for x in seg)
                            parsed["segments"].append((a, b, v))
                        except (TypeError, ValueError, ZeroDivisionError):
                            c.add(f"$.initial.segments[{j}]", "expected [start, end, density]")
            else:
                for key in INITIAL_KEYS[itype]:
                    if key in init:
                        parsed[key] = c.number(init, key, "$.initial", nonneg=True)
                if itype == "uniform" and "density" not in parsed:
                    c.add("$.initial.density", "missing required field")
            cfg.initial = parsed

    if "numerics" in raw and c.keys(raw["numerics"], NUMERICS_KEYS, "$.numerics"):
        num = raw["numerics"]
        for key in ("dx", "dt"):
            if key in num:
                cfg.numerics[key] = c.number(num, key, "$.numerics", positive=True)
        if "duration" in num:
            cfg.numerics["duration"] = c.number(num, "duration", "$.numerics", nonneg=True)

    allowed, required = PARAM_KEYS[kind]
    params = raw.get("params", {})
    if c.keys(params, allowed, "$.params"):
        for key in required - set(params):
            c.add(f"$.params.{key}", "missing required field")
        for key, value in params.items():
            if key not in allowed:
                continue
            if key in NON_NUMERIC_PARAMS:
                cfg.params[key] = value
            else:
                cfg.params[key] = c.number(params, key, "$.params", nonneg=True)

    if "output" in raw and c.keys(raw["output"], OUTPUT_KEYS, "$.output"):
        cfg.output = dict(raw["output"])
    if "record" in raw and c.keys(raw["record"], RECORD_KEYS, "$.record"):
        rec = raw["record"]
        if "snapshot_every" in rec:
            value = rec["snapshot_every"]
            if not isinstance(value, int) or value < 0:
                c.add("$.record.snapshot_every", "must be a non-negative integer")
        if "tags" in rec and not (
            isinstance(rec["tags"], dict) and all(isinstance(v, int) for v in rec["tags"].values())
        ):
            c.add("$.record.tags", "must map labels to interface indices")
        cfg.record = dict(rec)

    if "sweep" in raw and c.keys(raw["sweep"], SWEEP_KEYS, "$.sweep"):
        cfg.sweep = _parse_sweep(c, raw["sweep"])

    _check_kind(c, cfg)
    if c.errors:
        raise ConfigError(c.errors)
    return cfg


def _parse_fd(c, obj, path, defaults):
    out = dict(defaults)
    if c.keys(obj, FD_KEYS, path):
        for key in FD_KEYS:
            if key in obj:
                value = c.number(obj, key, path, positive=True)
                if value is not None:
                    out[key] = value
    return out


def _parse_sweep(c, sw):
    out = {"parameter": sw.get("parameter")}
    if not isinstance(out["parameter"], str) or not out["parameter"]:
        c.add("$.sweep.parameter", "must name a parameter, e.g. 'params.epsilon'")
    if "values" in sw:
        values = sw["values"]
        if not isinstance(values, list) or not values:
            c.add("$.sweep.values", "sweep range must be non-empty")
        else:
            try:
                out["values"] = [parse_number(v) for v in values]
            except (ValueError, ZeroDivisionError) as exc:
                c.add("$.sweep.values", str(exc))
        return out
    start = c.number(sw, "start", "$.sweep")
    stop = c.number(sw, "stop", "$.sweep")
    count = sw.get("count")
    if not isinstance(count, int) or count < 1:
        c.add("$.sweep.count", f"sweep range must be non-empty: count must be an integer >= 1, got {count!r}")
    elif start is not None and stop is not None:
        out["values"] = [float(v) for v in np.linspace(start, stop, count)]
    return out


def _check_kind(c, cfg):
    kind = cfg.experiment
    two_link = kind in ("riemann", "perturbed-riemann", "ring-bistability", "mfd", "statics")
    if two_link and len(cfg.links) != 2:
        c.add("$.links", f"{kind} needs exactly two links, got {len(cfg.links)}")
    if kind == "estimate-drop":
        return
    if kind in ("riemann", "perturbed-riemann", "statics"):
        if len(cfg.nodes) != 1 or cfg.nodes[0]["type"] != "capacity-drop":
            c.add("$.nodes", f"{kind} needs a single capacity-drop node between the two links")
    if kind in ("ring-bistability", "mfd"):
        if cfg.topology != "ring":
            c.add("$.topology", f"{kind} runs on a ring")
        if len(cfg.nodes) != 2 or cfg.nodes[1].get("type") != "capacity-drop":
            c.add("$.nodes", f"{kind} needs two nodes, the second (link 2 -> link 1) a capacity drop")
    if kind in SIMULATION_KINDS:
        for key in ("dx", "dt", "duration"):
            if key not in cfg.numerics:
                c.add(f"$.numerics.{key}", "missing required field")
    if kind == "custom-corridor":
        if not cfg.links:
            c.add("$.links", "custom corridor needs at least one link")
        if cfg.topology == "open":
            for key in BOUNDARY_KEYS:
                if key not in cfg.boundary:
                    c.add(f"$.boundary.{key}", "open corridor needs entry demand and exit supply")
        if cfg.initial is None:
            c.add("$.initial", "missing required field")
    if c.errors:
        return
    # geometry and CFL only once the pieces are individually valid
    if kind in SIMULATION_KINDS:
        try:
            build_corridor(cfg)
        except ValueError as exc:
            for part in str(exc).split("; "):
                path = "$.numerics.dt" if part.startswith("CFL") else "$"
                c.add(path, part)


def build_fds(cfg: ExperimentConfig) -> list[TriangularFD]:
    return [TriangularFD(link["lanes"], **link["fd"]) for link in cfg.links]


def node_from_dict(node: dict, c_down: float) -> NodeModel:
    ntype = node["type"]
    if ntype == "standard":
        return Standard()
    if ntype == "capacity-drop":
        if "c_star" in node:
            return CapacityDrop(node["c_star"])
        return CapacityDrop.from_ratio(node["delta"], c_down)
    return MergeCapacityDrop(node["alpha"], node["delta"], node.get("c3", c_down), node.get("ramp_demand", 0.0))


def c_star_of(cfg: ExperimentConfig) -> float:
    """Dropped capacity of the (single) capacity-drop node."""
    fds = build_fds(cfg)
    for i, node in enumerate(cfg.nodes):
        if node["type"] == "capacity-drop":
            down = fds[(i + 1) % len(fds)]
            return node_from_dict(node, down.capacity).c_star
    raise ValueError("config has no capacity-drop node")


def build_corridor(cfg: ExperimentConfig) -> Corridor:
    fds = build_fds(cfg)
    links = [Link(link["length"], fd, link["name"]) for link, fd in zip(cfg.links, fds)]
    ring = cfg.topology == "ring"
    nodes = [node_from_dict(node, fds[(i + 1) % len(fds)].capacity) for i, node in enumerate(cfg.nodes)]
    entry = exit = None
    if not ring:
        if cfg.experiment == "perturbed-riemann":
            demand = fds[0].demand(cfg.params["k1"])
            supply = fds[-1].supply(cfg.params["k2"])
        else:
            demand = cfg.boundary.get("demand", 0.0)
            supply = cfg.boundary.get("supply", fds[-1].capacity)
        entry, exit = ExternalDemand(demand), ExternalSupply(supply)
    return Corridor(links, nodes, cfg.numerics["dx"], cfg.numerics["dt"], ring=ring, entry=entry, exit=exit)


def initial_density(cfg: ExperimentConfig, corridor: Corridor) -> np.ndarray:
    L = corridor.length
    if cfg.experiment == "perturbed-riemann":
        p = cfg.params
        x0 = cfg.links[0]["length"]
        segs = [(0.0, x0 - p["perturbation_length"], p["k1"]), (x0 - p["perturbation_length"], x0, p["k0"]), (x0, L, p["k2"])]
        return corridor.piecewise_density(segs)
    init = cfg.initial or {"type": "uniform", "density": 0.0}
    if init["type"] == "uniform":
        return corridor.piecewise_density([(0.0, L, init["density"])])
    if init["type"] == "ring-perturbation":
        eps = cfg.params.get("epsilon", init.get("epsilon", 0.0))
        bump = init.get("bump", 70.0)
        base = init.get("base", 0.0)
        return corridor.piecewise_density([(0.0, L, base), (L - bump, L, eps), (L - 2 * bump, L - bump, -eps)])
    return corridor.piecewise_density(init["segments"])


def set_path(raw: dict, dotted: str, value) -> dict:
    """Copy of ``raw`` with ``a.b.c`` set to ``value``; list indices are allowed (``links.0.length``)."""
    out = copy.deepcopy(raw)
    parts = dotted.split(".")
    node = out
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node.setdefault(part, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return out


def load_preset(name: str) -> str:
    """Text of a shipped preset, by file name with or without ``.json``."""
    fname = name if name.endswith(".json") else f"{name.replace('-', '_')}.json"
    return resources.files("capdrop.presets").joinpath(fname).read_text()


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("capdrop.presets").iterdir() if p.name.endswith(".json"))
