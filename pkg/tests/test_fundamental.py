import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from capdrop.fundamental import (
    DemandSupplyState,
    DomainError,
    FundamentalDiagram,
    InvalidStateError,
    TriangularFD,
)

from conftest import RING_PARAMS

params = st.fixed_dictionaries(
    {
        "lanes": st.integers(1, 6),
        "v_star": st.floats(5.0, 45.0),
        "tau": st.floats(0.5, 3.0),
        "k_star": st.floats(0.05, 0.25),
    }
)


def closed_form_inverse(n, gamma):
    # reference parameter set only: kc = n/49, C = 30n/49
    if gamma <= 1:
        return n * gamma / 49
    return n / 7 - 6 * n / (49 * gamma)


class TestTriangularFD:
    def test_capacities_of_two_links(self, fd3, fd4):
        assert fd3.flow(3 / 49) == pytest.approx(90 / 49, rel=1e-15)
        assert fd4.flow(4 / 49) == pytest.approx(120 / 49, rel=1e-15)

    def test_empty_road(self, fd3):
        assert fd3.flow(0.0) == 0.0

    @pytest.mark.parametrize("n", range(1, 7))
    def test_reference_critical_density_and_capacity(self, n):
        fd = TriangularFD(n, **RING_PARAMS)
        assert fd.critical_density == pytest.approx(n / 49, rel=1e-14)
        assert fd.capacity == pytest.approx(30 * n / 49, rel=1e-14)
        assert fd.jam_density == pytest.approx(n / 7, rel=1e-14)

    def test_flow_formula(self, fd3):
        k = np.linspace(0, 3 / 7, 301)
        expected = np.minimum(30 * k, (3 - 7 * k) / 1.4)
        np.testing.assert_allclose(fd3.flow(k), expected, rtol=1e-13, atol=1e-15)

    def test_out_of_domain(self, fd3):
        with pytest.raises(DomainError):
            fd3.flow(-1e-3)
        with pytest.raises(DomainError):
            fd3.flow(3 / 7 + 1e-3)

    def test_edge_tolerance_absorbs_drift(self, fd3):
        assert fd3.flow(-1e-12) == 0.0
        assert fd3.flow(3 / 7 + 1e-12) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("bad", [dict(lanes=0), dict(v_star=-1.0), dict(tau=0.0), dict(k_star=math.inf)])
    def test_invalid_parameters(self, bad):
        kw = dict(lanes=2, **RING_PARAMS)
        kw.update(bad)
        with pytest.raises(DomainError):
            TriangularFD(**kw)


class TestDemandSupply:
    def test_empty(self, fd3):
        assert fd3.demand(0.0) == 0.0
        assert fd3.supply(0.0) == pytest.approx(90 / 49)

    def test_critical(self, fd3):
        kc = fd3.critical_density
        assert fd3.demand(kc) == pytest.approx(fd3.capacity)
        assert fd3.supply(kc) == pytest.approx(fd3.capacity)

    def test_jam(self, fd3):
        assert fd3.demand(3 / 7) == pytest.approx(90 / 49)
        assert fd3.supply(3 / 7) == pytest.approx(0.0, abs=1e-14)

    def test_array_input(self, fd4):
        k = np.array([0.0, 4 / 49, 4 / 7])
        np.testing.assert_allclose(fd4.demand(k), [0, 120 / 49, 120 / 49], atol=1e-14)
        np.testing.assert_allclose(fd4.supply(k), [120 / 49, 120 / 49, 0], atol=1e-14)


class TestCongestionInverse:
    def test_critical(self, fd4):
        assert fd4.density_from_congestion(1.0) == pytest.approx(4 / 49, rel=1e-14)

    def test_drop_ratio_level(self, fd3):
        assert fd3.density_from_congestion(90 / 81) == pytest.approx(4.8 / 49, rel=1e-13)

    def test_zero_and_infinity(self, fd3):
        assert fd3.density_from_congestion(0.0) == 0.0
        assert fd3.density_from_congestion(math.inf) == pytest.approx(3 / 7)

    def test_negative_rejected(self, fd3):
        with pytest.raises(DomainError):
            fd3.density_from_congestion(-0.5)

    @given(n=st.integers(1, 6), gamma=st.floats(0.0, 50.0))
    def test_closed_form_reference_parameters(self, n, gamma):
        fd = TriangularFD(n, **RING_PARAMS)
        assert fd.density_from_congestion(gamma) == pytest.approx(closed_form_inverse(n, gamma), rel=1e-12, abs=1e-15)

    @given(p=params, gamma=st.floats(0.0, 40.0))
    def test_generic_inverse_matches_closed_form(self, p, gamma):
        fd = TriangularFD(**p)
        generic = FundamentalDiagram.density_from_congestion(fd, gamma)
        assert generic == pytest.approx(fd.density_from_congestion(gamma), rel=1e-10, abs=1e-13)

    @given(p=params, u=st.floats(0.0, 1.0))
    def test_round_trip(self, p, u):
        fd = TriangularFD(**p)
        k = u * fd.jam_density * (1 - 1e-9)
        gamma = fd.congestion_level(k)
        assert fd.density_from_congestion(gamma) == pytest.approx(k, rel=1e-12, abs=1e-14)


class TestStates:
    def test_critical_round_trip(self, fd3):
        st_ = fd3.state_from_density(fd3.critical_density)
        assert st_.d == pytest.approx(fd3.capacity) and st_.s == pytest.approx(fd3.capacity)
        assert fd3.density_from_state(st_) == pytest.approx(fd3.critical_density)

    def test_free_state(self, fd3):
        st_ = fd3.state_from_density(2.8 / 49)
        assert st_.d == pytest.approx(84 / 49, rel=1e-14)
        assert st_.s == pytest.approx(90 / 49, rel=1e-14)
        assert fd3.density_from_state(st_) == pytest.approx(2.8 / 49, rel=1e-14)

    def test_empty_state(self, fd3):
        st_ = fd3.state_from_density(0.0)
        assert st_.as_tuple() == (0.0, pytest.approx(90 / 49))
        assert fd3.density_from_state(st_) == 0.0

    def test_off_diagram(self, fd3):
        with pytest.raises(InvalidStateError):
            fd3.density_from_state(DemandSupplyState(1.0, 1.0))
        with pytest.raises(DomainError):
            DemandSupplyState(-1.0, 1.0)

    def test_jam_congestion_level(self, fd3):
        assert DemandSupplyState(fd3.capacity, 0.0).congestion_level == math.inf


class TestProperties:
    @given(p=params)
    def test_unimodal_and_branches(self, p):
        fd = TriangularFD(**p)
        kc, jam, cap = fd.critical_density, fd.jam_density, fd.capacity
        assert 0 < kc < jam
        assert fd.capacity == pytest.approx(fd.v_star * kc)
        k = np.linspace(0, jam, 2001)
        q = fd.flow(k)
        free = k <= kc
        assert np.all(np.diff(q[free]) >= -1e-12)
        assert np.all(np.diff(q[~free]) <= 1e-12)
        assert q[0] == 0 and q[-1] == pytest.approx(0.0, abs=1e-12)
        d, s = fd.demand(k), fd.supply(k)
        np.testing.assert_allclose(np.minimum(d, s), q, rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(np.maximum(d, s), cap, rtol=1e-13)

    @given(p=params)
    def test_congestion_strictly_increasing(self, p):
        fd = TriangularFD(**p)
        k = np.linspace(0, fd.jam_density, 501)[:-1]
        gamma = np.array([fd.congestion_level(x) for x in k])
        assert np.all(np.diff(gamma) > 0)

    @given(p=params, u=st.floats(0.0, 1.0))
    def test_state_round_trip(self, p, u):
        fd = TriangularFD(**p)
        k = u * fd.jam_density
        assert fd.density_from_state(fd.state_from_density(k)) == pytest.approx(k, rel=1e-12, abs=1e-14)
