"""Stationary states and the macroscopic fundamental diagram of a two-link ring.

Link 1 occupies [0, L1] and link 2 [L1, L]; traffic flows from link 1 into
link 2 through a standard interface and from link 2 back into link 1 through a
capacity drop with dropped capacity ``c_star``.  In a stationary state the flow
q is the same everywhere, and each link is under-critical (UC), strictly
over-critical (SOC), or holds a zero-speed shock (ZS) between an
under-critical tail and an over-critical head.  The feasible combinations are
labelled (a)-(e):

    (a) link 1 UC,  link 2 UC,  q <= min(C1, C2)
    (b) link 1 UC,  link 2 ZS,  q = C*, shock at L2 in (L1, L)
    (c) link 1 UC,  link 2 SOC, q = C*
    (d) link 1 ZS,  link 2 SOC, q = C*, shock at L0 in (0, L1)
    (e) link 1 SOC, link 2 SOC, q <= C*
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ..fundamental import DENSITY_TOL, DomainError, FundamentalDiagram

SCENARIOS = ("a", "b", "c", "d", "e")


@dataclass(frozen=True)
class RingScenario:
    label: str
    q: float
    k: float
    free_parameter: float | None = None


@dataclass
class MFDBranch:
    """One sampled branch of the diagram; ``k`` and ``q`` are polylines in veh/m, veh/s."""

    label: str
    k: np.ndarray
    q: np.ndarray


@dataclass
class RingMFD:
    fd1: FundamentalDiagram
    fd2: FundamentalDiagram
    link1_length: float
    length: float
    c_star: float
    branches: list[MFDBranch] = field(default_factory=list)
    breakpoints: dict[str, float] = field(default_factory=dict)

    def branch(self, label: str) -> MFDBranch:
        for b in self.branches:
            if b.label == label:
                return b
        raise KeyError(label)

    def flows_at(self, k: float) -> list[tuple[str, float]]:
        """Every branch value at network density ``k`` as (label, q) pairs."""
        return ring_flows_at(self, k)


def scenario_density(
    label: str,
    q: float,
    fd1: FundamentalDiagram,
    fd2: FundamentalDiagram,
    link1_length: float,
    length: float,
    free_parameter: float | None = None,
) -> float:
    """Network density N / L of a stationary scenario at flow ``q``.

    ``free_parameter`` is the shock position: L2 for (b), L0 for (d).
    """
    c1, c2 = fd1.capacity, fd2.capacity
    K1, K2 = fd1.density_from_congestion, fd2.density_from_congestion
    L1, L = link1_length, length
    inv = (lambda c: math.inf if q == 0 else c / q)
    if label == "a":
        return (K1(q / c1) * L1 + K2(q / c2) * (L - L1)) / L
    if label == "b":
        L2 = free_parameter
        if L2 is None or not L1 <= L2 <= L:
            raise DomainError(f"scenario (b) needs L1 <= L2 <= L, got {L2}")
        return (K1(q / c1) * L1 + K2(q / c2) * (L2 - L1) + K2(inv(c2)) * (L - L2)) / L
    if label == "c":
        return (K1(q / c1) * L1 + K2(inv(c2)) * (L - L1)) / L
    if label == "d":
        L0 = free_parameter
        if L0 is None or not 0 <= L0 <= L1:
            raise DomainError(f"scenario (d) needs 0 <= L0 <= L1, got {L0}")
        return (K1(q / c1) * L0 + K1(inv(c1)) * (L1 - L0) + K2(inv(c2)) * (L - L1)) / L
    if label == "e":
        return (K1(inv(c1)) * L1 + K2(inv(c2)) * (L - L1)) / L
    raise ValueError(f"unknown scenario {label!r}")


def ring_mfd(
    fd1: FundamentalDiagram,
    fd2: FundamentalDiagram,
    link1_length: float,
    length: float,
    c_star: float,
    resolution: int = 200,
) -> RingMFD:
    """All five stationary branches of the ring, sampled with ``resolution`` points each.

    Branches (b), (c) and (d) share the plateau q = c_star; (b) and (d) are
    swept over their free shock positions.  ``breakpoints`` holds the exact
    branch ends.
    """
    if not 0 < link1_length < length:
        raise DomainError(f"need 0 < L1 < L, got L1={link1_length}, L={length}")
    if not 0 < c_star < fd1.capacity:
        raise DomainError(
            f"dropped capacity {c_star} must lie in (0, {fd1.capacity}), the capacity of the link after the drop"
        )
    args = (fd1, fd2, link1_length, length)
    q_free_max = min(fd1.capacity, fd2.capacity)

    def sweep_q(label, q_hi):
        qs = np.linspace(0.0, q_hi, resolution)
        ks = np.array([scenario_density(label, q, *args) for q in qs])
        return MFDBranch(label, ks, qs)

    def sweep_shock(label, lo, hi):
        pos = np.linspace(lo, hi, resolution)
        ks = np.array([scenario_density(label, c_star, *args, free_parameter=p) for p in pos])
        order = np.argsort(ks)
        return MFDBranch(label, ks[order], np.full(resolution, c_star))

    k_c = scenario_density("c", c_star, *args)
    branches = [
        sweep_q("a", q_free_max),
        sweep_shock("b", link1_length, length),
        MFDBranch("c", np.array([k_c]), np.array([c_star])),
        sweep_shock("d", 0.0, link1_length),
        sweep_q("e", c_star),
    ]
    breakpoints = {
        "free_end_k": scenario_density("a", q_free_max, *args),
        "free_end_q": q_free_max,
        "plateau_q": c_star,
        "plateau_start_k": scenario_density("b", c_star, *args, free_parameter=length),
        "plateau_c_k": k_c,
        "plateau_end_k": scenario_density("d", c_star, *args, free_parameter=0.0),
        "jam_k": scenario_density("e", 0.0, *args),
    }
    return RingMFD(fd1, fd2, link1_length, length, c_star, branches, breakpoints)


def _solve_q(label, k, mfd, q_hi):
    args = (mfd.fd1, mfd.fd2, mfd.link1_length, mfd.length)
    f = lambda q: scenario_density(label, q, *args) - k
    lo_val, hi_val = f(0.0), f(q_hi)
    tol = 1e-12 * max(abs(k), 1e-12)
    if abs(lo_val) <= tol:
        return 0.0
    if abs(hi_val) <= tol:
        return q_hi
    if lo_val * hi_val > 0:
        return None
    return brentq(f, 0.0, q_hi, xtol=1e-15, rtol=1e-15)


def ring_flows_at(mfd: RingMFD, k: float) -> list[tuple[str, float]]:
    """Flows of every stationary scenario compatible with network density ``k``."""
    bp = mfd.breakpoints
    out = []
    q_a = _solve_q("a", k, mfd, bp["free_end_q"])
    if q_a is not None:
        out.append(("a", q_a))
    slack = DENSITY_TOL
    if bp["plateau_start_k"] - slack <= k <= bp["plateau_end_k"] + slack:
        label = "b" if k < bp["plateau_c_k"] else ("c" if k == bp["plateau_c_k"] else "d")
        out.append((label, mfd.c_star))
    q_e = _solve_q("e", k, mfd, mfd.c_star)
    if q_e is not None:
        out.append(("e", q_e))
    return out


def classify_link(fd: FundamentalDiagram, densities: np.ndarray, rtol: float = 1e-6) -> str | None:
    """UC, SOC or ZS for one link's cell densities, or None if not a stationary pattern.

    Cells at critical density count as under-critical; a ZS link may contain
    intermediate cells where the discrete shock sits.
    """
    kc = fd.critical_density
    over = densities > kc * (1 + rtol)
    if not over.any():
        return "UC"
    if over.all():
        return "SOC"
    first = int(np.argmax(over))
    if over[first:].all():
        return "ZS"
    # allow one smeared cell between the two states
    if over[first + 1 :].all() and first + 1 < over.size:
        return "ZS"
    return None


_PATTERNS = {
    ("UC", "UC"): "a",
    ("UC", "ZS"): "b",
    ("UC", "SOC"): "c",
    ("ZS", "SOC"): "d",
    ("SOC", "SOC"): "e",
}


def classify_ring_state(corridor, densities: np.ndarray) -> str | None:
    """Scenario label (a)-(e) for a stationary density field on a two-link ring."""
    if not corridor.ring or len(corridor.links) != 2:
        raise ValueError("classification needs a two-link ring")
    kinds = tuple(
        classify_link(link.fd, np.asarray(densities)[sl]) for link, sl in zip(corridor.links, corridor.link_slices)
    )
    return _PATTERNS.get(kinds)


def mfd_rows(mfd: RingMFD):
    """Rows of (branch, k, q) for CSV output."""
    for b in mfd.branches:
        for k, q in zip(b.k, b.q):
            yield b.label, float(k), float(q)
