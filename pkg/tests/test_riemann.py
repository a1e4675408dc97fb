import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capdrop.fundamental import DemandSupplyState, InvalidStateError, TriangularFD
from capdrop.riemann import (
    NONE,
    RAREFACTION,
    SHOCK,
    entropy_oracle,
    lwr_wave,
    solve_riemann,
    solve_riemann_densities,
)

from conftest import RING_PARAMS

C_STAR = 81 / 49
UP = TriangularFD(4, **RING_PARAMS)  # C1 = 120/49
DOWN = TriangularFD(3, **RING_PARAMS)  # C2 = 90/49
C1, C2 = UP.capacity, DOWN.capacity


def states(d1_or_k1, k2):
    return UP.state_from_density(d1_or_k1), DOWN.state_from_density(k2)


def assert_consistent(sol):
    assert sol.up_wave.max_speed <= 1e-12
    assert sol.down_wave.min_speed >= -1e-12
    assert min(sol.up_stationary.as_tuple()) == pytest.approx(sol.q, rel=1e-12, abs=1e-14)
    assert min(sol.down_stationary.as_tuple()) == pytest.approx(sol.q, rel=1e-12, abs=1e-14)


class TestCases:
    def test_demand_below_everything(self):
        # d1 <= min(s2, C*)
        sol = solve_riemann_densities(1.0 / 49, 1.0 / 49, UP, DOWN, C_STAR)
        assert sol.q == pytest.approx(30 / 49)
        assert sol.up_wave.kind == NONE
        assert_consistent(sol)

    def test_tie_broken_by_maximization(self):
        # C* < d1 <= s2: free flow passes at d1
        sol = solve_riemann_densities(2.8 / 49, 1.0 / 49, UP, DOWN, C_STAR)
        assert sol.q == pytest.approx(84 / 49)
        assert sol.up_stationary.as_tuple() == pytest.approx((84 / 49, C1))
        assert sol.down_stationary.as_tuple() == pytest.approx((84 / 49, C2))
        assert_consistent(sol)

    def test_drop_activates(self):
        # d1 > s2 > C*: queue spills back and the drop fires
        k2 = DOWN.density_from_congestion(C2 / 1.75)
        sol = solve_riemann_densities(3.9 / 49, k2, UP, DOWN, C_STAR)
        assert sol.q == C_STAR
        assert sol.up_stationary.as_tuple() == pytest.approx((C1, C_STAR))
        assert sol.down_stationary.as_tuple() == pytest.approx((C_STAR, C2))
        assert sol.up_wave.max_speed < 0
        assert sol.down_wave.min_speed > 0
        assert_consistent(sol)

    def test_same_configuration_without_drop(self):
        k2 = DOWN.density_from_congestion(C2 / 1.75)
        sol = solve_riemann_densities(3.9 / 49, k2, UP, DOWN, C2)
        assert sol.q == pytest.approx(1.75)
        assert sol.down_wave.kind == NONE
        assert sol.up_stationary.as_tuple() == pytest.approx((C1, 1.75))

    def test_deep_congestion_downstream(self):
        sol = solve_riemann_densities(3.2 / 49, 8 / 49, UP, DOWN, C_STAR)
        assert sol.q == pytest.approx(DOWN.supply(8 / 49))
        assert sol.q < C_STAR
        assert sol.down_wave.kind == NONE
        assert sol.up_wave.kind == SHOCK
        assert_consistent(sol)

    def test_off_diagram_state(self):
        with pytest.raises(InvalidStateError):
            solve_riemann(DemandSupplyState(1.0, 1.0), DOWN.state_from_density(0.0), UP, DOWN, C_STAR)

    def test_to_dict(self):
        d = solve_riemann_densities(2.8 / 49, 1 / 49, UP, DOWN, C_STAR).to_dict()
        assert set(d) == {"q", "up_stationary", "down_stationary", "up_wave", "down_wave"}


class TestWaves:
    def test_none(self, fd3):
        assert lwr_wave(fd3, 0.05, 0.05).kind == NONE

    def test_shock_speed(self, fd3):
        kl, kr = 2.8 / 49, 10 / 49
        w = lwr_wave(fd3, kl, kr)
        assert w.kind == SHOCK
        expected = (fd3.flow(kr) - fd3.flow(kl)) / (kr - kl)
        assert w.min_speed == w.max_speed == pytest.approx(expected)
        assert expected < 0

    def test_degenerate_rarefaction_same_branch(self, fd3):
        w = lwr_wave(fd3, 2.5 / 49, 1 / 49)
        assert w.kind == RAREFACTION
        assert w.speed_range == pytest.approx((30.0, 30.0))
        w = lwr_wave(fd3, 20 / 49, 10 / 49)
        assert w.speed_range == pytest.approx((-5.0, -5.0))

    def test_fan_across_critical(self, fd3):
        w = lwr_wave(fd3, 10 / 49, 1 / 49)
        assert w.speed_range == pytest.approx((-5.0, 30.0))


class TestOracle:
    def test_empty_upstream(self):
        u1, u2 = states(0.0, 10 / 49)
        assert entropy_oracle(u1, u2, UP, DOWN, C_STAR) == 0.0

    def test_grid_agreement(self):
        for k1 in np.linspace(0, UP.jam_density, 12):
            for k2 in np.linspace(0, DOWN.jam_density, 12):
                u1, u2 = states(k1, k2)
                q = solve_riemann(u1, u2, UP, DOWN, C_STAR).q
                assert entropy_oracle(u1, u2, UP, DOWN, C_STAR) == pytest.approx(q, abs=1e-9)

    def test_no_drop_reduces_to_min_rule(self):
        for k1 in np.linspace(0, UP.jam_density, 9):
            for k2 in np.linspace(0, DOWN.jam_density, 9):
                u1, u2 = states(k1, k2)
                assert entropy_oracle(u1, u2, UP, DOWN, C2) == pytest.approx(min(u1.d, u2.s), abs=1e-9)

    @settings(max_examples=40)
    @given(a=st.floats(0, 1), b=st.floats(0, 1), c=st.floats(0.3, 0.99))
    def test_random_agreement(self, a, b, c):
        u1, u2 = states(a * UP.jam_density, b * DOWN.jam_density)
        c_star = c * C2
        q = solve_riemann(u1, u2, UP, DOWN, c_star).q
        assert entropy_oracle(u1, u2, UP, DOWN, c_star) == pytest.approx(q, abs=1e-9)


class TestProperties:
    @given(a=st.floats(0, 1), b=st.floats(0, 1), c=st.floats(0.3, 0.99))
    def test_sign_feasibility_and_invariance(self, a, b, c):
        c_star = c * C2
        sol = solve_riemann_densities(a * UP.jam_density, b * DOWN.jam_density, UP, DOWN, c_star)
        assert_consistent(sol)
        again = solve_riemann(sol.up_stationary, sol.down_stationary, UP, DOWN, c_star)
        assert again.q == sol.q
        assert again.up_stationary == sol.up_stationary
        assert again.down_stationary == sol.down_stationary
        assert again.up_wave.kind == NONE and again.down_wave.kind == NONE

    @given(a=st.floats(0, 1), b=st.floats(0, 1))
    def test_no_drop_matches_inhomogeneous_lwr(self, a, b):
        u1, u2 = states(a * UP.jam_density, b * DOWN.jam_density)
        sol = solve_riemann(u1, u2, UP, DOWN, C2)
        q = min(u1.d, u2.s)
        assert sol.q == q
        expected_up = (u1.d, C1) if q == u1.d else (C1, q)
        expected_down = (C2, u2.s) if q == u2.s else (q, C2)
        assert sol.up_stationary.as_tuple() == pytest.approx(expected_up)
        assert sol.down_stationary.as_tuple() == pytest.approx(expected_down)
