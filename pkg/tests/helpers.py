"""Shared test fixtures that are not pytest fixtures: exact-solution problems."""

import numpy as np

from capdrop.flux import ExternalDemand, ExternalSupply
from capdrop.fundamental import TriangularFD
from capdrop.riemann import lwr_wave
from capdrop.sim import Corridor, Link, RecordSpec, run

RING_PARAMS = dict(v_star=30.0, tau=1.4, k_star=1 / 7)
SHOCK_FD = TriangularFD(3, **RING_PARAMS)
K_LEFT, K_RIGHT = 2 / 49, 20 / 49  # free behind near-jam traffic: a backward-moving shock
LENGTH, X0, HORIZON = 1400.0, 700.0, 120.0


def shock_corridor(dx, fd=SHOCK_FD, k_left=K_LEFT, k_right=K_RIGHT, length=LENGTH):
    link = Link(length, fd)
    return Corridor(
        [link], [], dx, dx / fd.v_star, entry=ExternalDemand(fd.demand(k_left)), exit=ExternalSupply(fd.supply(k_right))
    )


def shock_speed(fd=SHOCK_FD, k_left=K_LEFT, k_right=K_RIGHT):
    return lwr_wave(fd, k_left, k_right).min_speed


def shock_l1_error(dx, horizon=HORIZON):
    """L1 distance between the Godunov density field and the exact shock at ``horizon``."""
    corridor = shock_corridor(dx)
    k0 = corridor.piecewise_density([(0, X0, K_LEFT), (X0, LENGTH, K_RIGHT)])
    rec = run(corridor, k0, horizon, RecordSpec(snapshot_every=0))
    t = rec.final_state.time
    xs = X0 + shock_speed() * t
    exact = corridor.piecewise_density([(0, xs, K_LEFT), (xs, LENGTH, K_RIGHT)])
    return float(np.sum(np.abs(rec.final_state.densities - exact)) * dx)


def convergence_order(dxs=(7.0, 3.5, 1.75)):
    errors = [shock_l1_error(dx) for dx in dxs]
    slope = np.polyfit(np.log(dxs), np.log(errors), 1)[0]
    return float(slope), errors
