"""Interface flux functions (entropy conditions) and node models.

A node model turns the demand of the upstream side and the supply of the
downstream side of an interface into the flux across it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

from .fundamental import DomainError

Rate = Union[float, Callable[[float], float]]


def _check_nonneg(**values):
    for name, value in values.items():
        if not value >= 0:
            raise DomainError(f"{name} must be non-negative, got {value}")


def standard_flux(d_up: float, s_down: float) -> float:
    """Min rule: the flux is the smaller of upstream demand and downstream supply."""
    _check_nonneg(d_up=d_up, s_down=s_down)
    return min(d_up, s_down)


def capdrop_flux(d_up: float, s_down: float, c_star: float) -> float:
    """Flux through a bottleneck whose discharge drops to ``c_star`` once a queue forms.

    The drop fires only when demand strictly exceeds supply; at d == s the
    demand passes in full.  The function is therefore discontinuous across
    the set {d = s, s > c_star}.
    """
    _check_nonneg(d_up=d_up, s_down=s_down, c_star=c_star)
    if d_up <= s_down:
        return d_up
    return min(s_down, c_star)


def merge_capdrop_flux(
    d1: float, d2: float, s3: float, alpha: float, delta: float, c3: float
) -> tuple[float, float, float]:
    """Priority merge of two upstream links into one, with a capacity drop downstream.

    Returns ``(q1, q2, q3)`` where q3 = q1 + q2 is the flux into the downstream link.
    """
    _check_nonneg(d1=d1, d2=d2, s3=s3, c3=c3)
    if not 0 < alpha < 1:
        raise DomainError(f"merge priority must lie in (0, 1), got {alpha}")
    if not 0 <= delta < 1:
        raise DomainError(f"capacity-drop ratio must lie in [0, 1), got {delta}")
    congested = d1 + d2 > s3
    s3_eff = min(s3, c3 * (1 - delta) if congested else c3)
    q1 = min(d1, max(s3_eff - d2, alpha * s3_eff))
    q2 = min(d2, max(s3_eff - d1, (1 - alpha) * s3_eff))
    # q1 + q2 equals min(d1 + d2, s3_eff) by construction; summing keeps conservation exact
    return q1, q2, q1 + q2


def _rate(value: Rate, t: float) -> float:
    return float(value(t)) if callable(value) else float(value)


class NodeModel:
    """Base class for the flux rule at one interface."""

    name = "node"

    def flux(self, d_up: float, s_down: float, t: float = 0.0) -> float:
        raise NotImplementedError

    def validate(self, c_down: float | None = None) -> None:
        """Check parameters against the capacity of the downstream link."""


@dataclass(frozen=True)
class Standard(NodeModel):
    name = "standard"

    def flux(self, d_up, s_down, t=0.0):
        return standard_flux(d_up, s_down)


@dataclass(frozen=True)
class CapacityDrop(NodeModel):
    """Lane-drop bottleneck with dropped capacity ``c_star`` (veh/s)."""

    c_star: float
    name = "capacity-drop"

    def __post_init__(self):
        if not self.c_star > 0:
            raise DomainError(f"dropped capacity must be positive, got {self.c_star}")

    @classmethod
    def from_ratio(cls, delta: float, c_down: float) -> "CapacityDrop":
        if not 0 < delta < 1:
            raise DomainError(f"capacity-drop ratio must lie in (0, 1), got {delta}")
        return cls(c_down * (1 - delta))

    def drop_ratio(self, c_down: float) -> float:
        return 1 - self.c_star / c_down

    def validate(self, c_down=None):
        if c_down is not None and not self.c_star < c_down:
            raise DomainError(
                f"dropped capacity {self.c_star} must be below the downstream capacity {c_down}"
            )

    def flux(self, d_up, s_down, t=0.0):
        return capdrop_flux(d_up, s_down, self.c_star)


@dataclass(frozen=True)
class MergeCapacityDrop(NodeModel):
    """Two-into-one merge where the downstream capacity ``c3`` drops by ``delta`` under queueing.

    In a corridor the mainline is upstream input 1; input 2 is an on-ramp fed by
    ``ramp_demand`` (veh/s, constant or a function of time) through a vertical queue.
    """

    alpha: float
    delta: float
    c3: float
    ramp_demand: Rate = 0.0
    name = "merge-capacity-drop"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError(f"merge priority must lie in (0, 1), got {self.alpha}")
        if not 0 <= self.delta < 1:
            raise DomainError(f"capacity-drop ratio must lie in [0, 1), got {self.delta}")
        if not self.c3 > 0:
            raise DomainError(f"downstream capacity must be positive, got {self.c3}")

    @property
    def c_star(self) -> float:
        return self.c3 * (1 - self.delta)

    def validate(self, c_down=None):
        if c_down is not None and not math.isclose(self.c3, c_down, rel_tol=1e-9):
            raise DomainError(f"merge c3={self.c3} does not match downstream capacity {c_down}")

    def ramp_arrivals(self, t: float) -> float:
        return _rate(self.ramp_demand, t)

    def fluxes(self, d1, d2, s3):
        return merge_capdrop_flux(d1, d2, s3, self.alpha, self.delta, self.c3)

    def flux(self, d_up, s_down, t=0.0):
        return self.fluxes(d_up, 0.0, s_down)[2]


@dataclass(frozen=True)
class ExternalDemand(NodeModel):
    """Entry boundary fed by a constant or time-varying demand ``d0`` (veh/s)."""

    d0: Rate
    name = "external-demand"

    def demand(self, t: float) -> float:
        value = _rate(self.d0, t)
        _check_nonneg(d0=value)
        return value

    def flux(self, d_up, s_down, t=0.0):
        # d_up is ignored: the boundary supplies its own demand
        return standard_flux(self.demand(t), s_down)


@dataclass(frozen=True)
class ExternalSupply(NodeModel):
    """Exit boundary with a constant or time-varying supply ``s0`` (veh/s)."""

    s0: Rate
    name = "external-supply"

    def supply(self, t: float) -> float:
        value = _rate(self.s0, t)
        _check_nonneg(s0=value)
        return value

    def flux(self, d_up, s_down, t=0.0):
        return standard_flux(d_up, self.supply(t))
