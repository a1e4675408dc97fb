"""Godunov (cell transmission) stepper on ring and open corridors.

Every cell interface carries a node model.  Inside a link it is the min rule;
at link boundaries it may be a capacity drop or an on-ramp merge; an open
corridor has an external demand at its entry and an external supply at its
exit.  All fluxes of a step are computed from the state at the start of the
step and then applied at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .flux import CapacityDrop, ExternalDemand, ExternalSupply, MergeCapacityDrop, NodeModel, Standard
from .fundamental import DENSITY_TOL, FundamentalDiagram, TriangularFD

CONVERGENCE_TOL = 1e-8
CONVERGENCE_STEPS = 100


class SimulationFault(RuntimeError):
    """The stepper produced a state outside the admissible density box."""


class CorridorError(ValueError):
    """Inconsistent corridor geometry, numerics or node placement."""


@dataclass(frozen=True)
class Link:
    length: float
    fd: FundamentalDiagram
    name: str = ""


class Corridor:
    """Links in series, either closed into a ring or open with boundary nodes.

    ``nodes[i]`` sits at the downstream end of ``links[i]``.  A ring needs one
    node per link (the last one wraps around to link 0); an open corridor needs
    one fewer plus ``entry`` and ``exit`` boundaries.
    """

    def __init__(
        self,
        links: Sequence[Link],
        nodes: Sequence[NodeModel],
        dx: float,
        dt: float,
        ring: bool = False,
        entry: ExternalDemand | None = None,
        exit: ExternalSupply | None = None,
    ):
        self.links = list(links)
        self.nodes = list(nodes)
        self.dx = float(dx)
        self.dt = float(dt)
        self.ring = ring
        self.entry = entry
        self.exit = exit
        self._validate()

        counts = [int(round(link.length / self.dx)) for link in self.links]
        starts = np.concatenate([[0], np.cumsum(counts)])
        self.link_slices = [slice(int(a), int(b)) for a, b in zip(starts[:-1], starts[1:])]
        self.n_cells = int(starts[-1])
        self.jam = np.concatenate([np.full(c, link.fd.jam_density) for c, link in zip(counts, self.links)])
        self.length = float(sum(link.length for link in self.links))

        # interface j separates cell j-1 and cell j; on a ring interface 0 is the wrap
        self.n_interfaces = self.n_cells if ring else self.n_cells + 1
        self.special: dict[int, NodeModel] = {}
        for i, node in enumerate(self.nodes):
            j = int(starts[i + 1]) % self.n_cells if ring else int(starts[i + 1])
            if not isinstance(node, Standard):
                self.special[j] = node
        self.node_interfaces = [
            int(starts[i + 1]) % self.n_cells if ring else int(starts[i + 1]) for i in range(len(self.nodes))
        ]

    def _validate(self):
        errors = []
        if not self.links:
            errors.append("corridor needs at least one link")
        if not (self.dx > 0 and self.dt > 0):
            errors.append(f"dx and dt must be positive, got dx={self.dx}, dt={self.dt}")
        else:
            for i, link in enumerate(self.links):
                ratio = link.length / self.dx
                if link.length <= 0 or abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1):
                    errors.append(f"link {i} length {link.length} is not a positive multiple of dx={self.dx}")
            v_max = max((link.fd.max_wave_speed for link in self.links), default=0.0)
            if v_max * self.dt > self.dx * (1 + 1e-12):
                errors.append(
                    f"CFL violated: max wave speed {v_max} * dt {self.dt} = {v_max * self.dt} exceeds dx {self.dx}"
                )
        expected = len(self.links) if self.ring else len(self.links) - 1
        if len(self.nodes) != expected:
            errors.append(f"expected {expected} link-end nodes, got {len(self.nodes)}")
        if not self.ring and (self.entry is None or self.exit is None):
            errors.append("open corridor needs an entry demand and an exit supply")
        for i, node in enumerate(self.nodes[: expected]):
            downstream = self.links[(i + 1) % len(self.links)]
            if isinstance(node, (ExternalDemand, ExternalSupply)):
                errors.append(f"node {i}: external boundaries are only allowed at corridor ends")
                continue
            try:
                node.validate(downstream.fd.capacity)
            except ValueError as exc:
                errors.append(f"node {i}: {exc}")
        if errors:
            raise CorridorError("; ".join(errors))

    @property
    def cell_edges(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.dx

    @property
    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def link_of_cell(self, i: int) -> int:
        for n, sl in enumerate(self.link_slices):
            if sl.start <= i < sl.stop:
                return n
        raise IndexError(i)

    def demand_supply(self, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = np.empty_like(k)
        s = np.empty_like(k)
        for link, sl in zip(self.links, self.link_slices):
            d[sl] = link.fd.demand(k[sl])
            s[sl] = link.fd.supply(k[sl])
        return d, s

    def piecewise_density(self, segments: Sequence[tuple[float, float, float]]) -> np.ndarray:
        """Cell averages of a piecewise-constant profile given as (start, end, density) triples."""
        k = np.zeros(self.n_cells)
        edges = self.cell_edges
        for a, b, value in segments:
            overlap = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
            k += value * overlap / self.dx
        return k


@dataclass
class SimulationState:
    densities: np.ndarray
    time: float = 0.0
    ramp_queues: dict[int, float] = field(default_factory=dict)

    def vehicles(self, dx: float) -> float:
        return float(np.sum(self.densities) * dx)


@dataclass
class StepResult:
    state: SimulationState
    fluxes: np.ndarray  # per interface, veh/s (flux into the downstream cell)
    inflow: float  # entry plus served on-ramp flow, veh/s
    outflow: float


def advance(state: SimulationState, corridor: Corridor) -> StepResult:
    """One Godunov step; returns the new state together with the fluxes used."""
    k = state.densities
    t = state.time
    dt, dx = corridor.dt, corridor.dx
    d, s = corridor.demand_supply(k)
    n = corridor.n_cells

    if corridor.ring:
        q = np.minimum(np.roll(d, 1), s)
    else:
        q = np.empty(n + 1)
        q[1:n] = np.minimum(d[:-1], s[1:])
        q[0] = corridor.entry.flux(0.0, s[0], t)
        q[n] = corridor.exit.flux(d[-1], 0.0, t)

    q_in = q[:n].copy()
    q_out = np.roll(q, -1) if corridor.ring else q[1:].copy()
    queues = dict(state.ramp_queues)
    ramp_served = 0.0
    for j, node in corridor.special.items():
        up = (j - 1) % n
        if isinstance(node, MergeCapacityDrop):
            arrivals = node.ramp_arrivals(t)
            queue = queues.get(j, 0.0)
            q1, q2, q3 = node.fluxes(d[up], queue / dt + arrivals, s[j])
            q[j] = q3
            q_in[j] = q3
            q_out[up] = q1
            queues[j] = queue + dt * (arrivals - q2)
            ramp_served += q2
        else:
            q[j] = node.flux(d[up], s[j], t)
            q_in[j] = q[j]
            q_out[up] = q[j]

    new_k = k + (dt / dx) * (q_in - q_out)
    jam = corridor.jam
    if np.any(new_k < -DENSITY_TOL) or np.any(new_k > jam + DENSITY_TOL):
        bad = int(np.argmax(np.maximum(-new_k, new_k - jam)))
        raise SimulationFault(
            f"density {new_k[bad]} in cell {bad} left [0, {jam[bad]}] at t={t + dt:.6g}s"
        )
    np.clip(new_k, 0.0, jam, out=new_k)

    inflow = ramp_served + (0.0 if corridor.ring else q[0])
    outflow = 0.0 if corridor.ring else q[n]
    return StepResult(SimulationState(new_k, t + dt, queues), q, inflow, outflow)


def step(state: SimulationState, corridor: Corridor) -> SimulationState:
    return advance(state, corridor).state


@dataclass
class RecordSpec:
    """What to keep during a run.

    ``snapshot_every`` is the density-field cadence in steps (0 disables it);
    ``tags`` maps a label to an interface index whose flux is kept every step.
    """

    snapshot_every: int = 1
    tags: dict[str, int] = field(default_factory=dict)
    stop_on_convergence: bool = False


@dataclass
class SimulationRecord:
    times: np.ndarray
    vehicles: np.ndarray  # N(t) on the corridor, veh
    mean_flux: np.ndarray  # mean interface flux during [t_j, t_j + dt), veh/s
    inflow: np.ndarray
    outflow: np.ndarray
    snapshot_times: np.ndarray
    densities: np.ndarray  # (snapshots, cells)
    tagged_fluxes: dict[str, np.ndarray]
    final_state: SimulationState
    converged: bool
    convergence_time: float | None
    dt: float
    dx: float

    def average_flow(self, fraction: float = 0.2) -> float:
        """Time mean of the mean interface flux over the final ``fraction`` of the run."""
        if self.mean_flux.size == 0:
            return math.nan
        m = max(int(math.ceil(fraction * self.mean_flux.size)), 1)
        return float(np.mean(self.mean_flux[-m:]))

    def tagged_average(self, tag: str, fraction: float = 0.2) -> float:
        series = self.tagged_fluxes[tag]
        m = max(int(math.ceil(fraction * series.size)), 1)
        return float(np.mean(series[-m:]))


def run(
    corridor: Corridor,
    initial: np.ndarray | SimulationState,
    duration: float,
    record: RecordSpec | None = None,
    check: Callable[[StepResult], None] | None = None,
) -> SimulationRecord:
    """Step from ``initial`` for ``duration`` seconds (rounded up to whole steps)."""
    record = record or RecordSpec()
    if isinstance(initial, SimulationState):
        state = replace(initial, densities=np.array(initial.densities, dtype=float))
    else:
        k0 = np.asarray(initial, dtype=float)
        if k0.shape != (corridor.n_cells,):
            raise CorridorError(f"initial condition has shape {k0.shape}, expected ({corridor.n_cells},)")
        state = SimulationState(np.array(k0))
    if np.any(state.densities < -DENSITY_TOL) or np.any(state.densities > corridor.jam + DENSITY_TOL):
        raise SimulationFault("initial densities outside the admissible box")
    if duration < 0:
        raise ValueError("duration must be non-negative")

    n_steps = int(math.ceil(duration / corridor.dt - 1e-9)) if duration > 0 else 0
    times = [state.time]
    vehicles = [state.vehicles(corridor.dx)]
    mean_flux, inflow, outflow = [], [], []
    snap_t, snaps = [state.time], [state.densities.copy()]
    tagged = {name: [] for name in record.tags}
    quiet = 0
    converged, t_conv = False, None

    for j in range(n_steps):
        result = advance(state, corridor)
        if check is not None:
            check(result)
        change = float(np.max(np.abs(result.state.densities - state.densities)))
        state = result.state
        times.append(state.time)
        vehicles.append(state.vehicles(corridor.dx))
        mean_flux.append(float(np.mean(result.fluxes)))
        inflow.append(result.inflow)
        outflow.append(result.outflow)
        for name, idx in record.tags.items():
            tagged[name].append(result.fluxes[idx])
        if record.snapshot_every and (j + 1) % record.snapshot_every == 0:
            snap_t.append(state.time)
            snaps.append(state.densities.copy())
        quiet = quiet + 1 if change < CONVERGENCE_TOL else 0
        if not converged and quiet >= CONVERGENCE_STEPS:
            converged, t_conv = True, state.time
            if record.stop_on_convergence:
                break

    return SimulationRecord(
        times=np.array(times),
        vehicles=np.array(vehicles),
        mean_flux=np.array(mean_flux),
        inflow=np.array(inflow),
        outflow=np.array(outflow),
        snapshot_times=np.array(snap_t),
        densities=np.array(snaps),
        tagged_fluxes={name: np.array(v) for name, v in tagged.items()},
        final_state=state,
        converged=converged,
        convergence_time=t_conv,
        dt=corridor.dt,
        dx=corridor.dx,
    )


# ---------------------------------------------------------------------------
# experiment presets

RING_FD = dict(v_star=30.0, tau=1.4, k_star=1 / 7)


def preset_ring_bistability(
    epsilon: float,
    base_density: float = 2.8 / 49,
    length: float = 1960.0,
    link1_length: float = 980.0,
    dx: float = 7.0,
    dt: float = 7 / 30,
    c_star: float = 81 / 49,
    lanes: tuple[int, int] = (3, 4),
    fd_params: dict | None = None,
    bump: float = 70.0,
) -> tuple[Corridor, np.ndarray]:
    """Two-link ring with a capacity drop where the wider link 2 feeds back into link 1.

    The initial density is ``base_density`` plus a zero-mean bump on link 2:
    +epsilon on [L - bump, L) and -epsilon on [L - 2 bump, L - bump).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    params = dict(RING_FD, **(fd_params or {}))
    links = [
        Link(link1_length, TriangularFD(lanes[0], **params), "link1"),
        Link(length - link1_length, TriangularFD(lanes[1], **params), "link2"),
    ]
    corridor = Corridor(links, [Standard(), CapacityDrop(c_star)], dx, dt, ring=True)
    k0 = corridor.piecewise_density(
        [
            (0.0, length, base_density),
            (length - bump, length, epsilon),
            (length - 2 * bump, length - bump, -epsilon),
        ]
    )
    return corridor, k0


def preset_ring_uniform(density: float, **kwargs) -> tuple[Corridor, np.ndarray]:
    """The bistability ring started from a uniform density (no perturbation)."""
    return preset_ring_bistability(0.0, base_density=density, **kwargs)


def preset_lane_drop(
    entry_demand,
    exit_supply,
    upstream_length: float = 2100.0,
    downstream_length: float = 1050.0,
    dx: float = 7.0,
    dt: float = 7 / 30,
    c_star: float | None = 81 / 49,
    lanes: tuple[int, int] = (4, 3),
    fd_params: dict | None = None,
) -> Corridor:
    """Open two-link corridor with a lane drop; ``c_star=None`` gives the plain min rule."""
    params = dict(RING_FD, **(fd_params or {}))
    links = [
        Link(upstream_length, TriangularFD(lanes[0], **params), "upstream"),
        Link(downstream_length, TriangularFD(lanes[1], **params), "downstream"),
    ]
    node = Standard() if c_star is None else CapacityDrop(c_star)
    return Corridor(
        links, [node], dx, dt, ring=False, entry=ExternalDemand(entry_demand), exit=ExternalSupply(exit_supply)
    )


def preset_perturbed_riemann(
    k1: float,
    k0: float,
    k2: float,
    perturbation_length: float,
    upstream_length: float = 2100.0,
    downstream_length: float = 1050.0,
    **kwargs,
) -> tuple[Corridor, np.ndarray]:
    """Lane drop with k1 far upstream, k0 on the last ``perturbation_length`` metres before it, k2 after.

    The boundaries hold the far-field states: entry demand D(k1), exit supply S(k2).
    """
    probe = preset_lane_drop(0.0, 0.0, upstream_length, downstream_length, **kwargs)
    fd1, fd2 = probe.links[0].fd, probe.links[1].fd
    corridor = preset_lane_drop(
        fd1.demand(k1), fd2.supply(k2), upstream_length, downstream_length, **kwargs
    )
    x0 = upstream_length
    k_init = corridor.piecewise_density(
        [
            (0.0, x0 - perturbation_length, k1),
            (x0 - perturbation_length, x0, k0),
            (x0, x0 + downstream_length, k2),
        ]
    )
    return corridor, k_init


def drop_interface(corridor: Corridor) -> int:
    """Index of the first capacity-drop interface."""
    for j, node in sorted(corridor.special.items()):
        if isinstance(node, CapacityDrop):
            return j
    raise CorridorError("corridor has no capacity-drop interface")


def find_activation_threshold(
    lo: float,
    hi: float,
    tol: float = 1e-4 / 49,
    duration: float = 150.0,
    **preset_kwargs,
) -> float:
    """Bisect the smallest ring perturbation that activates the drop.

    A run counts as activated when its average flow settles within 1% of the
    dropped capacity.  Requires ``lo`` not activating and ``hi`` activating.
    """
    c_star = preset_kwargs.get("c_star", 81 / 49)

    def activated(eps):
        corridor, k0 = preset_ring_bistability(eps, **preset_kwargs)
        rec = run(corridor, k0, duration, RecordSpec(snapshot_every=0))
        return abs(rec.average_flow() - c_star) <= 0.01 * c_star

    if activated(lo) or not activated(hi):
        raise ValueError(f"threshold not bracketed by [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if activated(mid):
            hi = mid
        else:
            lo = mid
    return hi


def preset_bottleneck_breakdown(
    demand_levels: Sequence[float] = (0.7, 0.85, 0.995),
    level_duration: float = 600.0,
    disturbance_start: float | None = None,
    disturbance_duration: float = 60.0,
    disturbance_supply: float = 0.6,
    upstream_length: float = 4200.0,
    downstream_length: float = 1050.0,
    detector_offset: float = 350.0,
    c_star: float = 81 / 49,
    **kwargs,
) -> tuple[Corridor, np.ndarray, int]:
    """Lane drop that carries near-capacity free flow until a downstream jam triggers the drop.

    Entry demand steps through ``demand_levels`` (fractions of the downstream
    capacity), then stays at the last level.  At ``disturbance_start`` the exit
    supply falls to ``disturbance_supply`` times capacity for
    ``disturbance_duration`` seconds; the jam it sends upstream activates the
    drop, after which the queue discharges at ``c_star``.  Returns the corridor,
    an empty initial state and the interface index ``detector_offset`` metres
    upstream of the drop.
    """
    probe = preset_lane_drop(0.0, 0.0, upstream_length, downstream_length, c_star=c_star, **kwargs)
    c2 = probe.links[1].fd.capacity
    levels = [f * c2 for f in demand_levels]
    if disturbance_start is None:
        disturbance_start = level_duration * len(levels)

    def demand(t):
        return levels[min(int(t // level_duration), len(levels) - 1)]

    def supply(t):
        if disturbance_start <= t < disturbance_start + disturbance_duration:
            return disturbance_supply * c2
        return c2

    corridor = preset_lane_drop(demand, supply, upstream_length, downstream_length, c_star=c_star, **kwargs)
    detector = int(round((upstream_length - detector_offset) / corridor.dx))
    return corridor, np.zeros(corridor.n_cells), detector
