"""Steady-state traffic laws: fundamental diagrams and the demand/supply encoding.

Units are SI throughout: density in veh/m, flow in veh/s, speed in m/s.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

# absolute slack on density bounds, absorbs drift from the time stepper
DENSITY_TOL = 1e-9
# relative slack when checking that a (d, s) pair lies on a diagram
STATE_RTOL = 1e-9


class DomainError(ValueError):
    """An input lies outside the domain of a traffic law."""


class InvalidStateError(ValueError):
    """A demand/supply pair does not lie on the given fundamental diagram."""


@dataclass(frozen=True)
class DemandSupplyState:
    """A traffic state written as (demand, supply) in veh/s."""

    d: float
    s: float

    def __post_init__(self):
        if not (self.d >= 0 and self.s >= 0):
            raise DomainError(f"demand and supply must be non-negative, got ({self.d}, {self.s})")

    @property
    def congestion_level(self) -> float:
        if self.s == 0:
            return math.inf
        return self.d / self.s

    def as_tuple(self) -> tuple[float, float]:
        return (self.d, self.s)


class FundamentalDiagram(ABC):
    """A unimodal flow-density law for one homogeneous link.

    Subclasses supply ``flow``, ``critical_density``, ``jam_density`` and
    ``characteristic_speed``.  Everything else (demand, supply, congestion level and
    its inverse) follows from unimodality and has generic implementations here.
    """

    lanes: int

    @property
    @abstractmethod
    def critical_density(self) -> float: ...

    @property
    @abstractmethod
    def jam_density(self) -> float: ...

    @property
    def capacity(self) -> float:
        return float(self.flow(self.critical_density))

    @property
    @abstractmethod
    def max_wave_speed(self) -> float:
        """Largest characteristic speed magnitude, used for the CFL bound."""

    @abstractmethod
    def _flow(self, k): ...

    @abstractmethod
    def characteristic_speed(self, k: float, side: str = "right") -> float:
        """One-sided derivative dQ/dk at ``k``; ``side`` is "left" or "right"."""

    def check_density(self, k):
        """Validate densities and clip drift within ``DENSITY_TOL`` back into range."""
        arr = np.asarray(k, dtype=float)
        jam = self.jam_density
        if np.any(~np.isfinite(arr)) or np.any(arr < -DENSITY_TOL) or np.any(arr > jam + DENSITY_TOL):
            raise DomainError(f"density outside [0, {jam}]: {k!r}")
        return np.clip(arr, 0.0, jam)

    def flow(self, k):
        return _same_kind(self._flow(self.check_density(k)), k)

    def demand(self, k):
        k = self.check_density(k)
        return _same_kind(self._flow(np.minimum(k, self.critical_density)), k)

    def supply(self, k):
        k = self.check_density(k)
        return _same_kind(self._flow(np.maximum(k, self.critical_density)), k)

    def congestion_level(self, k: float) -> float:
        d = float(self.demand(k))
        s = float(self.supply(k))
        return math.inf if s == 0 else d / s

    def density_from_congestion(self, gamma: float) -> float:
        """Density whose demand/supply ratio equals ``gamma``; gamma = inf gives jam density."""
        if gamma < 0 or math.isnan(gamma):
            raise DomainError(f"congestion level must be >= 0, got {gamma}")
        if gamma == math.inf:
            return self.jam_density
        cap = self.capacity
        if gamma <= 1:
            lo, hi, target = 0.0, self.critical_density, gamma * cap
            if target == 0:
                return 0.0
            return brentq(lambda k: float(self._flow(k)) - target, lo, hi, xtol=1e-15, rtol=1e-15)
        target = cap / gamma
        return brentq(
            lambda k: float(self._flow(k)) - target,
            self.critical_density,
            self.jam_density,
            xtol=1e-15,
            rtol=1e-15,
        )

    def state_from_density(self, k: float) -> DemandSupplyState:
        return DemandSupplyState(float(self.demand(k)), float(self.supply(k)))

    def density_from_state(self, state: DemandSupplyState) -> float:
        self.check_state(state)
        if state.s == 0:
            return self.jam_density
        return self.density_from_congestion(state.d / state.s)

    def check_state(self, state: DemandSupplyState) -> None:
        cap = self.capacity
        if not math.isclose(max(state.d, state.s), cap, rel_tol=STATE_RTOL, abs_tol=1e-15):
            raise InvalidStateError(
                f"state (d={state.d}, s={state.s}) is off the diagram: max(d, s) must equal capacity {cap}"
            )
        if min(state.d, state.s) > cap * (1 + STATE_RTOL):
            raise InvalidStateError(f"state (d={state.d}, s={state.s}) exceeds capacity {cap}")


@dataclass(frozen=True)
class TriangularFD(FundamentalDiagram):
    """Q(n, k) = min(v_star k, (n - k / k_star) / tau).

    n is the lane count, v_star the free-flow speed (m/s), tau the time gap (s)
    and k_star the per-lane jam density (veh/m).
    """

    lanes: int
    v_star: float = 30.0
    tau: float = 1.4
    k_star: float = 1 / 7

    def __post_init__(self):
        if int(self.lanes) != self.lanes or self.lanes < 1:
            raise DomainError(f"lane count must be an integer >= 1, got {self.lanes}")
        for name in ("v_star", "tau", "k_star"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive and finite, got {value}")

    @property
    def critical_density(self) -> float:
        return self.lanes * self.k_star / (1 + self.tau * self.v_star * self.k_star)

    @property
    def jam_density(self) -> float:
        return self.lanes * self.k_star

    @property
    def capacity(self) -> float:
        return self.v_star * self.critical_density

    @property
    def congested_wave_speed(self) -> float:
        return -1.0 / (self.tau * self.k_star)

    @property
    def max_wave_speed(self) -> float:
        return max(self.v_star, -self.congested_wave_speed)

    def _flow(self, k):
        return np.minimum(self.v_star * k, (self.lanes - k / self.k_star) / self.tau)

    def characteristic_speed(self, k: float, side: str = "right") -> float:
        kc = self.critical_density
        if k < kc or (k == kc and side == "left"):
            return self.v_star
        return self.congested_wave_speed

    def density_from_congestion(self, gamma: float) -> float:
        if gamma < 0 or math.isnan(gamma):
            raise DomainError(f"congestion level must be >= 0, got {gamma}")
        if gamma <= 1:
            return gamma * self.critical_density
        # congested branch: (n - k/k_star)/tau = C/gamma
        return self.k_star * (self.lanes - self.tau * self.capacity / gamma)


def _same_kind(value, like):
    """Return a Python float for scalar input and an ndarray otherwise."""
    if np.ndim(like) == 0:
        return float(value)
    return value
