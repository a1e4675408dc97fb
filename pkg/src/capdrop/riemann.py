"""Exact Riemann solver at a capacity-drop interface.

The solver works in demand/supply space.  Given the initial states U1 (upstream)
and U2 (downstream) it returns the interface flux, the stationary states that
appear next to the interface on each link, and the homogeneous LWR wave that
connects each initial state to its stationary state.

``entropy_oracle`` solves the same problem by brute force: it enumerates every
combination of stationary and interior states allowed by the wave-direction
feasibility conditions, keeps those consistent with the drop rule evaluated on
the interior states, and maximizes the flux.  It shares no code with
``solve_riemann`` beyond the fundamental diagrams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fundamental import DemandSupplyState, FundamentalDiagram

NONE, SHOCK, RAREFACTION = "none", "shock", "rarefaction"


@dataclass(frozen=True)
class WaveDescriptor:
    """An LWR wave: kind plus the range of speeds it occupies in the x-t plane."""

    kind: str
    speed_range: tuple[float, float]

    def __post_init__(self):
        if self.kind not in (NONE, SHOCK, RAREFACTION):
            raise ValueError(f"unknown wave kind {self.kind!r}")
        lo, hi = self.speed_range
        if lo > hi:
            raise ValueError(f"speed range must be ordered, got {self.speed_range}")

    @property
    def min_speed(self) -> float:
        return self.speed_range[0]

    @property
    def max_speed(self) -> float:
        return self.speed_range[1]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "speed_range": list(self.speed_range)}


@dataclass(frozen=True)
class RiemannSolution:
    q: float
    up_stationary: DemandSupplyState
    down_stationary: DemandSupplyState
    up_wave: WaveDescriptor
    down_wave: WaveDescriptor

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "up_stationary": {"d": self.up_stationary.d, "s": self.up_stationary.s},
            "down_stationary": {"d": self.down_stationary.d, "s": self.down_stationary.s},
            "up_wave": self.up_wave.to_dict(),
            "down_wave": self.down_wave.to_dict(),
        }


def lwr_wave(fd: FundamentalDiagram, k_left: float, k_right: float) -> WaveDescriptor:
    """Wave of the homogeneous LWR Riemann problem with a concave flux.

    A density increase across the jump gives a shock at the Rankine-Hugoniot
    speed; a decrease gives a rarefaction fan whose speeds run from the
    characteristic speed of the left state to that of the right state.
    """
    k_left = float(fd.check_density(k_left))
    k_right = float(fd.check_density(k_right))
    if k_left == k_right:
        return WaveDescriptor(NONE, (0.0, 0.0))
    if k_left < k_right:
        speed = (fd.flow(k_right) - fd.flow(k_left)) / (k_right - k_left)
        return WaveDescriptor(SHOCK, (speed, speed))
    # the fan covers densities in (k_right, k_left): look inward from each end
    lo = fd.characteristic_speed(k_left, side="left")
    hi = fd.characteristic_speed(k_right, side="right")
    return WaveDescriptor(RAREFACTION, (lo, hi))


def solve_riemann(
    up_state: DemandSupplyState,
    down_state: DemandSupplyState,
    fd_up: FundamentalDiagram,
    fd_down: FundamentalDiagram,
    c_star: float,
) -> RiemannSolution:
    """Solve the Riemann problem at a capacity-drop interface."""
    fd_up.check_state(up_state)
    fd_down.check_state(down_state)
    d1, s2 = up_state.d, down_state.s
    c1, c2 = fd_up.capacity, fd_down.capacity

    q = d1 if d1 <= s2 else min(s2, c_star)

    up_star = DemandSupplyState(d1, c1) if q == d1 else DemandSupplyState(c1, q)
    down_star = DemandSupplyState(c2, s2) if q == s2 else DemandSupplyState(q, c2)

    # reuse the initial densities where the stationary state is the initial state,
    # so that a "none" wave is reported exactly
    k1 = fd_up.density_from_state(up_state)
    k2 = fd_down.density_from_state(down_state)
    k1_star = k1 if up_star == up_state else fd_up.density_from_state(up_star)
    k2_star = k2 if down_star == down_state else fd_down.density_from_state(down_star)

    return RiemannSolution(
        q=q,
        up_stationary=up_star,
        down_stationary=down_star,
        up_wave=lwr_wave(fd_up, k1, k1_star),
        down_wave=lwr_wave(fd_down, k2_star, k2),
    )


def solve_riemann_densities(k1, k2, fd_up, fd_down, c_star) -> RiemannSolution:
    return solve_riemann(fd_up.state_from_density(k1), fd_down.state_from_density(k2), fd_up, fd_down, c_star)


def _diagram_states(capacity: float, resolution: float, extra=()) -> np.ndarray:
    """All (d, s) pairs on a diagram of the given capacity, sampled on a grid.

    The diagram in demand/supply space is the union of the segments
    {(d, C): 0 <= d <= C} and {(C, s): 0 <= s <= C}.
    """
    n = max(int(math.ceil(1.0 / resolution)), 1)
    values = np.unique(np.concatenate([np.linspace(0.0, capacity, n + 1), np.asarray(extra, float)]))
    values = values[(values >= 0) & (values <= capacity)]
    free = np.column_stack([values, np.full_like(values, capacity)])
    congested = np.column_stack([np.full_like(values, capacity), values])
    return np.vstack([free, congested])


def _interior_rule(d1_0, s2_0, c_star):
    """Flux implied by the drop rule applied to interior states (vectorized)."""
    return np.where(d1_0 <= s2_0, d1_0, np.minimum(s2_0, c_star))


def entropy_oracle(
    up_state: DemandSupplyState,
    down_state: DemandSupplyState,
    fd_up: FundamentalDiagram,
    fd_down: FundamentalDiagram,
    c_star: float,
    resolution: float = 1e-3,
    atol: float = 1e-12,
) -> float:
    """Brute-force maximal flux over all feasible stationary/interior state combinations.

    Feasibility (wave directions on each link):

    * upstream strictly over-critical: q < d1 and U1* = U1^0 = (C1, q);
      upstream under-critical: q = d1, U1* = (q, C1) and s1^0 > d1
      (or U1^0 = U1*, no interior wave);
    * downstream strictly under-critical: q < s2 and U2* = U2^0 = (q, C2);
      downstream over-critical: q = s2, U2* = (C2, q) and d2^0 > s2
      (or U2^0 = U2*).

    The flux selection presumes a lane drop, i.e. C1 >= C2.

    A combination is admissible when q matches the drop rule evaluated on the
    interior states and respects q <= d1^0, q <= s2^0.  Candidate fluxes are a
    grid over [0, min(d1, s2)] with spacing ``resolution`` times the smaller
    capacity, plus the case boundaries d1, s2 and c_star.  Interior states are
    sampled on each diagram at the same relative resolution.
    """
    fd_up.check_state(up_state)
    fd_down.check_state(down_state)
    d1, s2 = up_state.d, down_state.s
    c1, c2 = fd_up.capacity, fd_down.capacity
    q_max = min(d1, s2)
    step = resolution * min(c1, c2)

    grid = np.arange(0.0, q_max, step) if q_max > 0 else np.zeros(0)
    specials = np.array([d1, s2, c_star, 0.0])
    candidates = np.unique(np.concatenate([grid, specials[specials <= q_max]]))

    special_values = (d1, s2, c_star, up_state.s, down_state.d)
    interior_up = _diagram_states(c1, resolution, special_values)
    interior_down = _diagram_states(c2, resolution, special_values)

    best = -math.inf
    for q in candidates[::-1]:
        # upstream options: list of arrays of admissible interior (d1^0) values
        if q < d1:
            d1_0 = np.array([c1])  # U1^0 = (C1, q)
        elif q == d1:
            # interior states behind a forward wave, or the stationary state itself
            mask = (interior_up[:, 1] > d1) | ((interior_up[:, 0] == d1) & (interior_up[:, 1] == c1))
            d1_0 = interior_up[mask, 0]
        else:
            continue
        if q < s2:
            s2_0 = np.array([c2])  # U2^0 = (q, C2)
        elif q == s2:
            mask = (interior_down[:, 0] > s2) | ((interior_down[:, 0] == c2) & (interior_down[:, 1] == s2))
            s2_0 = interior_down[mask, 1]
        else:
            continue
        if d1_0.size == 0 or s2_0.size == 0:
            continue
        a = d1_0[:, None]
        b = s2_0[None, :]
        implied = _interior_rule(a, b, c_star)
        ok = (np.abs(implied - q) <= atol) & (q <= a + atol) & (q <= b + atol)
        if np.any(ok):
            best = q
            break
    if best == -math.inf:
        raise RuntimeError(f"no admissible flux found for U1={up_state}, U2={down_state}")
    return float(best)
