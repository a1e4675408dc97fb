"""Run configured experiments and write their artifacts (CSV/JSON) to disk."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from .analysis.detector import estimate_capacity_drop, read_detector_csv
from .analysis.mfd import mfd_rows, ring_mfd
from .analysis.statics import open_road_statics
from .config import (
    SIMULATION_KINDS,
    ExperimentConfig,
    build_corridor,
    build_fds,
    c_star_of,
    config_from_dict,
    initial_density,
    set_path,
)
from .flux import CapacityDrop, ExternalDemand, ExternalSupply
from .riemann import solve_riemann_densities
from .sim import Corridor, Link, RecordSpec, run

log = logging.getLogger(__name__)


def dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def vehicle_audit(record, corridor: Corridor) -> dict:
    n0 = float(record.vehicles[0])
    if corridor.ring:
        drift = np.abs(record.vehicles - n0)
        return {
            "initial_vehicles": n0,
            "final_vehicles": float(record.vehicles[-1]),
            "max_abs_drift": float(drift.max()),
            "max_rel_drift": float(drift.max() / n0) if n0 > 0 else 0.0,
        }
    net = np.concatenate([[0.0], np.cumsum(record.dt * (record.inflow - record.outflow))])
    err = np.abs(record.vehicles - n0 - net)
    scale = max(float(np.max(np.abs(record.vehicles))), 1.0)
    return {
        "initial_vehicles": n0,
        "final_vehicles": float(record.vehicles[-1]),
        "max_balance_error": float(err.max()),
        "max_rel_balance_error": float(err.max() / scale),
    }


def _record_spec(cfg: ExperimentConfig, corridor: Corridor) -> RecordSpec:
    rec = cfg.record
    tags = dict(rec.get("tags", {}))
    if not tags:
        tags = {f"node{i}": j for i, j in enumerate(corridor.node_interfaces)}
    bad = [name for name, j in tags.items() if not 0 <= j < corridor.n_interfaces]
    if bad:
        raise ValueError(f"tagged interfaces out of range: {bad}")
    return RecordSpec(snapshot_every=rec.get("snapshot_every", 1), tags=tags)


def run_simulation(cfg: ExperimentConfig, out: Path | None) -> dict:
    corridor = build_corridor(cfg)
    k0 = initial_density(cfg, corridor)
    spec = _record_spec(cfg, corridor)
    record = run(corridor, k0, cfg.duration, spec)
    fraction = cfg.record.get("average_fraction", 0.2)
    summary = {
        "experiment": cfg.experiment,
        "duration": float(record.times[-1]),
        "steps": int(record.mean_flux.size),
        "average_flow": record.average_flow(fraction),
        "tagged_average_flow": {tag: record.tagged_average(tag, fraction) for tag in spec.tags},
        "converged": record.converged,
        "convergence_time": record.convergence_time,
        "vehicle_audit": vehicle_audit(record, corridor),
        "config": cfg.raw,
    }
    if out is not None:
        prefix = cfg.output.get("prefix", "")
        if spec.snapshot_every:
            with open(out / f"{prefix}density.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["time"] + [f"cell_{i}" for i in range(corridor.n_cells)])
                for t, row in zip(record.snapshot_times, record.densities):
                    w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        with open(out / f"{prefix}flux.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            tags = list(spec.tags)
            w.writerow(["time", "mean_flux"] + tags)
            for j in range(record.mean_flux.size):
                w.writerow(
                    [repr(float(record.times[j])), repr(float(record.mean_flux[j]))]
                    + [repr(float(record.tagged_fluxes[t][j])) for t in tags]
                )
        dump_json(out / f"{prefix}summary.json", summary)
    return summary


def run_riemann(cfg: ExperimentConfig, out: Path | None) -> dict:
    fd_up, fd_down = build_fds(cfg)
    sol = solve_riemann_densities(cfg.params["k1"], cfg.params["k2"], fd_up, fd_down, c_star_of(cfg))
    result = {"experiment": "riemann", "solution": sol.to_dict(), "config": cfg.raw}
    if out is not None:
        dump_json(out / f"{cfg.output.get('prefix', '')}riemann.json", result)
    return result


def run_mfd(cfg: ExperimentConfig, out: Path | None) -> dict:
    fd1, fd2 = build_fds(cfg)
    l1 = cfg.params.get("link1_length", cfg.links[0]["length"])
    length = cfg.params.get("length", (cfg.links[0]["length"] or 0) + (cfg.links[1]["length"] or 0))
    resolution = int(cfg.params.get("resolution", 200))
    mfd = ring_mfd(fd1, fd2, l1, length, c_star_of(cfg), resolution)
    result = {"experiment": "mfd", "breakpoints": mfd.breakpoints, "config": cfg.raw}
    if out is not None:
        prefix = cfg.output.get("prefix", "")
        with open(out / f"{prefix}mfd.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["branch", "k_veh_per_m", "q_veh_per_s"])
            for label, k, q in mfd_rows(mfd):
                w.writerow([label, repr(k), repr(q)])
        dump_json(out / f"{prefix}mfd_summary.json", result)
    return result


def simulate_statics(cfg: ExperimentConfig, d0: float, s0: float, duration: float) -> dict:
    """Run the lane-drop road from empty with constant boundaries and report the long-run state."""
    fd1, fd2 = build_fds(cfg)
    links = [Link(cfg.links[0]["length"], fd1), Link(cfg.links[1]["length"], fd2)]
    dx = cfg.numerics.get("dx", 7.0)
    dt = cfg.numerics.get("dt", dx / max(fd1.max_wave_speed, fd2.max_wave_speed))
    corridor = Corridor(
        links, [CapacityDrop(c_star_of(cfg))], dx, dt, entry=ExternalDemand(d0), exit=ExternalSupply(s0)
    )
    j = corridor.node_interfaces[0]
    record = run(corridor, np.zeros(corridor.n_cells), duration, RecordSpec(snapshot_every=0, tags={"drop": j}))
    k = record.final_state.densities
    mid1 = corridor.link_slices[0].start + (corridor.link_slices[0].stop - corridor.link_slices[0].start) // 2
    mid2 = corridor.link_slices[1].start + (corridor.link_slices[1].stop - corridor.link_slices[1].start) // 2
    return {
        "flux": record.tagged_average("drop"),
        "up_density": float(k[mid1]),
        "down_density": float(k[mid2]),
        "vehicle_audit": vehicle_audit(record, corridor),
    }


def run_statics(cfg: ExperimentConfig, out: Path | None) -> dict:
    fd1, fd2 = build_fds(cfg)
    d0, s0 = cfg.params["d0"], cfg.params["s0"]
    sol = open_road_statics(d0, s0, fd1, fd2, c_star_of(cfg))
    result = {"experiment": "statics", "solution": sol.to_dict(), "config": cfg.raw}
    result["solution"]["up_density"] = fd1.density_from_state(sol.up_state)
    result["solution"]["down_density"] = fd2.density_from_state(sol.down_state)
    if cfg.params.get("simulate"):
        sim = simulate_statics(cfg, d0, s0, cfg.params.get("duration", 1500.0))
        sim["relative_flux_error"] = abs(sim["flux"] - sol.q) / sol.q if sol.q > 0 else abs(sim["flux"])
        result["simulation"] = sim
    if out is not None:
        dump_json(out / f"{cfg.output.get('prefix', '')}statics.json", result)
    return result


def run_estimate(cfg: ExperimentConfig, out: Path | None) -> dict:
    p = cfg.params
    records = read_detector_csv(p["input"])
    kwargs = {k: p[k] for k in ("g", "window", "cv_threshold", "speed_ratio", "free_percentile") if k in p}
    if "lanes" in p:
        kwargs["lanes"] = int(p["lanes"])
    if "min_samples" in p:
        kwargs["min_samples"] = int(p["min_samples"])
    est = estimate_capacity_drop(records, role=p.get("role", "upstream-mainline"), station_id=p.get("station_id"), **kwargs)
    result = {"experiment": "estimate-drop", "estimate": est.to_dict(), "config": cfg.raw}
    if out is not None:
        dump_json(out / f"{cfg.output.get('prefix', '')}estimate.json", result)
    return result


RUNNERS = {
    "riemann": run_riemann,
    "mfd": run_mfd,
    "statics": run_statics,
    "estimate-drop": run_estimate,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> dict:
    """Run one experiment; artifacts go to ``out_dir`` when given."""
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    if cfg.experiment in SIMULATION_KINDS:
        return run_simulation(cfg, out)
    return RUNNERS[cfg.experiment](cfg, out)


def run_sweep(cfg: ExperimentConfig, out_dir: str | Path) -> list[dict]:
    """Expand the sweep into one run per value; writes ``index.csv`` and a subdirectory per run."""
    if not cfg.sweep or "values" not in cfg.sweep:
        raise ValueError("config has no sweep specification")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = cfg.sweep["parameter"]
    base = {k: v for k, v in cfg.raw.items() if k != "sweep"}
    rows = []
    for i, value in enumerate(cfg.sweep["values"]):
        run_dir = out / f"run_{i:03d}"
        member = config_from_dict(set_path(base, name, value))
        log.info("sweep run %d: %s = %r", i, name, value)
        result = run_experiment(member, run_dir)
        rows.append(
            {
                "run": i,
                "parameter": name,
                "value": value,
                "average_flow": result.get("average_flow", math.nan),
                "converged": result.get("converged", ""),
                "directory": run_dir.name,
            }
        )
    with open(out / "index.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["run", "parameter", "value", "average_flow", "converged", "directory"])
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    dump_json(out / "sweep_config.json", cfg.raw)
    return rows
