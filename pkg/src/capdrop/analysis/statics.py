"""Stationary states of an open lane-drop road and the flow-density points they expose."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..fundamental import DemandSupplyState, DomainError, FundamentalDiagram


@dataclass(frozen=True)
class StaticsSolution:
    case: int
    q: float
    up_state: DemandSupplyState
    down_state: DemandSupplyState

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "q": self.q,
            "up_state": {"d": self.up_state.d, "s": self.up_state.s},
            "down_state": {"d": self.down_state.d, "s": self.down_state.s},
        }


def open_road_statics(
    d0: float, s0: float, fd1: FundamentalDiagram, fd2: FundamentalDiagram, c_star: float
) -> StaticsSolution:
    """Long-run uniform states on an initially empty road with entry demand d0 and exit supply s0.

    Case 1 (d0 <= s0): free flow on both links at q = d0.
    Case 2 (d0 > s0, s0 <= C*): both links congested at q = s0.
    Case 3 (d0 > s0 > C*): the drop is active, q = C*, link 1 congested and link 2 free.
    """
    c1, c2 = fd1.capacity, fd2.capacity
    if not 0 <= d0 <= c1 * (1 + 1e-12):
        raise DomainError(f"entry demand must lie in [0, C1={c1}], got {d0}")
    if not 0 <= s0 <= c2 * (1 + 1e-12):
        raise DomainError(f"exit supply must lie in [0, C2={c2}], got {s0}")
    if d0 <= s0:
        return StaticsSolution(1, d0, DemandSupplyState(d0, c1), DemandSupplyState(d0, c2))
    if s0 <= c_star:
        return StaticsSolution(2, s0, DemandSupplyState(c1, s0), DemandSupplyState(c2, s0))
    return StaticsSolution(3, c_star, DemandSupplyState(c1, c_star), DemandSupplyState(c_star, c2))


@dataclass
class ObservedFD:
    """Stationary (k, q) points seen on each link; arrays have shape (n, 2)."""

    upstream: np.ndarray
    downstream: np.ndarray
    upstream_cases: np.ndarray
    downstream_cases: np.ndarray


def observable_fd(
    fd1: FundamentalDiagram,
    fd2: FundamentalDiagram,
    c_star: float,
    sweep: Iterable[tuple[float, float]] | None = None,
    resolution: int = 41,
) -> ObservedFD:
    """Map boundary pairs (d0, s0) to the stationary flow-density points they produce.

    Without an explicit ``sweep`` the full box [0, C1] x [0, C2] is sampled on a
    ``resolution`` x ``resolution`` grid.  Points that occur more than once are
    kept once.
    """
    if sweep is None:
        d_values = np.linspace(0.0, fd1.capacity, resolution)
        s_values = np.linspace(0.0, fd2.capacity, resolution)
        sweep = [(d, s) for d in d_values for s in s_values]
    up, down, up_case, down_case = [], [], [], []
    seen_up, seen_down = set(), set()
    for d0, s0 in sweep:
        sol = open_road_statics(d0, s0, fd1, fd2, c_star)
        pu = (fd1.density_from_state(sol.up_state), sol.q)
        pd = (fd2.density_from_state(sol.down_state), sol.q)
        if pu not in seen_up:
            seen_up.add(pu)
            up.append(pu)
            up_case.append(sol.case)
        if pd not in seen_down:
            seen_down.add(pd)
            down.append(pd)
            down_case.append(sol.case)
    return ObservedFD(
        np.array(up).reshape(-1, 2),
        np.array(down).reshape(-1, 2),
        np.array(up_case, dtype=int),
        np.array(down_case, dtype=int),
    )
