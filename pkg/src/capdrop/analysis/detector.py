"""Capacity-drop estimation from loop-detector flow/occupancy series.

Occupancy is converted to density with the g-factor convention: with
occupancy in percent and g in feet, density = occupancy / (100 g) vehicles
per foot per lane.  Records here carry occupancy as a fraction, so the
per-foot density is simply ``occupancy / g``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FEET_PER_MILE = 5280.0
METERS_PER_FOOT = 0.3048
ROLES = ("upstream-mainline", "onramp", "downstream-mainline")
CSV_FIELDS = ("timestamp", "station_id", "role", "flow_vph", "occupancy")


class EstimationError(RuntimeError):
    """Not enough near-stationary data in one of the regimes."""

    def __init__(self, message: str, counts: dict):
        super().__init__(f"{message} (counts: {counts})")
        self.counts = counts


@dataclass(frozen=True)
class DetectorRecord:
    timestamp: float  # s
    flow: float  # veh/h, summed over lanes
    occupancy: float  # fraction in [0, 1], averaged over lanes
    role: str = "upstream-mainline"
    station_id: str = ""

    def __post_init__(self):
        if self.flow < 0:
            raise ValueError(f"flow must be non-negative, got {self.flow}")
        if not 0 <= self.occupancy <= 1:
            raise ValueError(f"occupancy must be a fraction in [0, 1], got {self.occupancy}")
        if self.role not in ROLES:
            raise ValueError(f"unknown station role {self.role!r}; expected one of {ROLES}")


def occupancy_to_density(occupancy, g_ft: float = 22.0, lanes: int = 1, unit: str = "si"):
    """Density from occupancy fraction; ``unit`` is "si" (veh/m), "mile" (veh/mi) or "foot"."""
    if g_ft <= 0:
        raise ValueError("g-factor must be positive")
    per_foot = 100.0 * np.asarray(occupancy, dtype=float) / (100.0 * g_ft) * lanes
    if unit == "foot":
        return per_foot
    if unit == "mile":
        return per_foot * FEET_PER_MILE
    if unit == "si":
        return per_foot / METERS_PER_FOOT
    raise ValueError(f"unknown unit {unit!r}")


def density_to_occupancy(density_si, g_ft: float = 22.0, lanes: int = 1):
    """Inverse of :func:`occupancy_to_density` for SI density."""
    return np.asarray(density_si, dtype=float) * METERS_PER_FOOT * g_ft / lanes


@dataclass
class CapacityDropEstimate:
    q_free_max: float  # veh/h
    q_queue: float  # veh/h
    delta: float
    v_free: float  # mph, speed proxy
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "q_free_max_vph": self.q_free_max,
            "q_queue_vph": self.q_queue,
            "delta": self.delta,
            "v_free_mph": self.v_free,
            "counts": dict(self.counts),
        }


def near_stationary_windows(
    times: np.ndarray,
    flow: np.ndarray,
    occupancy: np.ndarray,
    window: float = 300.0,
    cv_threshold: float = 0.1,
    min_window_samples: int = 3,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trailing windows of length ``window`` seconds whose flow and occupancy both vary little.

    Returns (end times, mean flow, mean occupancy) of the accepted windows.
    A window is accepted when the coefficient of variation of both series is
    below ``cv_threshold``.
    """
    start = np.searchsorted(times, times - window, side="right")
    cf = np.concatenate([[0.0], np.cumsum(flow)])
    cf2 = np.concatenate([[0.0], np.cumsum(flow**2)])
    co = np.concatenate([[0.0], np.cumsum(occupancy)])
    co2 = np.concatenate([[0.0], np.cumsum(occupancy**2)])
    end = np.arange(1, times.size + 1)
    n = end - start
    with np.errstate(invalid="ignore", divide="ignore"):
        mf = (cf[end] - cf[start]) / n
        mo = (co[end] - co[start]) / n
        vf = np.maximum((cf2[end] - cf2[start]) / n - mf**2, 0.0)
        vo = np.maximum((co2[end] - co2[start]) / n - mo**2, 0.0)
        cv_f = np.where(mf > 0, np.sqrt(vf) / mf, np.inf)
        cv_o = np.where(mo > 0, np.sqrt(vo) / mo, np.inf)
    ok = (n >= min_window_samples) & (cv_f < cv_threshold) & (cv_o < cv_threshold)
    return times[ok], mf[ok], mo[ok]


def estimate_capacity_drop(
    records: Sequence[DetectorRecord],
    g: float = 22.0,
    window: float = 300.0,
    cv_threshold: float = 0.1,
    speed_ratio: float = 0.8,
    free_percentile: float = 95.0,
    role: str | None = "upstream-mainline",
    station_id: str | None = None,
    min_samples: int = 3,
    min_window_samples: int = 3,
    lanes: int = 1,
) -> CapacityDropEstimate:
    """Estimate the drop ratio from one station's near-stationary states.

    Windows are split into free and queued regimes by their speed proxy
    flow / density: queued when below ``speed_ratio`` times the free speed,
    itself taken as the ``free_percentile`` percentile of all window speeds.
    The result compares the largest free-flow rate with the median queued
    discharge rate: delta = 1 - q_queue / q_free_max.
    """
    if g <= 0:
        raise ValueError("g-factor must be positive")
    selected = [
        r for r in records if (role is None or r.role == role) and (station_id is None or r.station_id == station_id)
    ]
    counts = {"records": len(selected), "stationary": 0, "free": 0, "queued": 0}
    if len(selected) < min_window_samples:
        raise EstimationError("too few detector records", counts)
    times = np.array([r.timestamp for r in selected], dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("detector records must be sorted by timestamp")
    flow = np.array([r.flow for r in selected], dtype=float)
    occ = np.array([r.occupancy for r in selected], dtype=float)

    _, mf, mo = near_stationary_windows(times, flow, occ, window, cv_threshold, min_window_samples)
    counts["stationary"] = int(mf.size)
    if mf.size == 0:
        raise EstimationError("no near-stationary windows", counts)
    density = occupancy_to_density(mo, g, lanes=lanes, unit="mile")
    speed = mf / density
    v_free = float(np.percentile(speed, free_percentile))
    queued = speed < speed_ratio * v_free
    counts["free"] = int(np.count_nonzero(~queued))
    counts["queued"] = int(np.count_nonzero(queued))
    if counts["free"] < min_samples or counts["queued"] < min_samples:
        raise EstimationError("insufficient near-stationary samples in a regime", counts)
    q_free_max = float(np.max(mf[~queued]))
    q_queue = float(np.median(mf[queued]))
    return CapacityDropEstimate(q_free_max, q_queue, 1.0 - q_queue / q_free_max, v_free, counts)


def read_detector_csv(path) -> list[DetectorRecord]:
    """Read ``timestamp,station_id,role,flow_vph,occupancy`` rows, sorted by time."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"detector CSV is missing columns: {sorted(missing)}")
        rows = [
            DetectorRecord(
                timestamp=float(row["timestamp"]),
                flow=float(row["flow_vph"]),
                occupancy=float(row["occupancy"]),
                role=row["role"],
                station_id=row["station_id"],
            )
            for row in reader
        ]
    return sorted(rows, key=lambda r: r.timestamp)


def write_detector_csv(path, records: Iterable[DetectorRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in records:
            writer.writerow([repr(float(r.timestamp)), r.station_id, r.role, repr(float(r.flow)), repr(float(r.occupancy))])


def virtual_detector(
    record,
    corridor,
    interface: int,
    tag: str,
    aggregation: float = 30.0,
    g: float = 22.0,
    role: str = "upstream-mainline",
    station_id: str = "virtual",
) -> list[DetectorRecord]:
    """Turn a simulation record into detector records at one interface.

    Flow is the tagged interface flux; occupancy comes from the per-lane density
    of the cell just upstream of the interface.  Both are averaged over
    ``aggregation`` seconds.  The run must keep a snapshot every step.
    """
    flux = record.tagged_fluxes[tag]
    if record.densities.shape[0] != flux.size + 1:
        raise ValueError("virtual detectors need a density snapshot at every step")
    cell = (interface - 1) % corridor.n_cells
    lanes = corridor.links[corridor.link_of_cell(cell)].fd.lanes
    # density held during step j is the snapshot at its start
    k_lane = record.densities[:-1, cell] / lanes
    per_bin = max(int(round(aggregation / record.dt)), 1)
    n_bins = flux.size // per_bin
    out = []
    for b in range(n_bins):
        sl = slice(b * per_bin, (b + 1) * per_bin)
        occupancy = float(density_to_occupancy(np.mean(k_lane[sl]), g))
        out.append(
            DetectorRecord(
                timestamp=float(record.times[(b + 1) * per_bin]),
                flow=float(np.mean(flux[sl]) * 3600.0),
                occupancy=min(occupancy, 1.0),
                role=role,
                station_id=station_id,
            )
        )
    return out

