"""Temperature schedules, thresholds, elimination margin and sparsity ramp."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asapnas.schedules import (SchedulePolicy, ScheduleState, margin_beta, rho,
                               sparsity_schedule, temp_exponential, temp_theoretical,
                               threshold_policy)

# Independent closed-form evaluations, frozen:
#   1.3 * 0.95**50
#   sqrt(8 ln(pi^2 * 2 / 0.3)) and sqrt(2 ln(pi^2 * 2 / 0.3))
T50 = 0.1000284678597271
T_THEORY_N2 = 5.787282441066571
BETA_N2 = 2.8936412205332855

states = st.builds(
    ScheduleState,
    t=st.integers(1, 10_000),
    N=st.integers(2, 50),
    eta_L=st.floats(1e-3, 1e3),
    delta=st.floats(1e-4, 0.999),
)


class TestExponential:
    def test_initial(self):
        assert temp_exponential(1.3, 0.95, 0) == 1.3

    def test_fifty_epochs(self):
        T = temp_exponential(1.3, 0.95, 50)
        assert T == pytest.approx(T50, rel=1e-14)
        assert 0.099 <= T <= 0.101

    def test_half_life(self):
        h = math.log(2) / math.log(1 / 0.95)
        for t in (0.0, 3.0, 17.5):
            assert temp_exponential(2.0, 0.95, t + h) == pytest.approx(
                temp_exponential(2.0, 0.95, t) / 2, rel=1e-12)

    @pytest.mark.parametrize("args", [(0.0, 0.95, 1), (1.3, 1.0, 1), (1.3, 0.0, 1), (1.3, 0.95, -1)])
    def test_domain(self, args):
        with pytest.raises(ValueError):
            temp_exponential(*args)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(0.5, 0.99), st.integers(0, 200))
    def test_strictly_decreasing_and_positive(self, T0, b, t):
        # decay >= 0.5 keeps T0 * b**t well inside the float64 range
        a, c = temp_exponential(T0, b, t), temp_exponential(T0, b, t + 1)
        assert 0 < c < a


class TestTheoretical:
    def test_reference_temperature(self):
        s = ScheduleState(1, 2, 1.0, 0.1, 0.5)
        assert temp_theoretical(s) == pytest.approx(T_THEORY_N2, rel=1e-14)
        assert round(temp_theoretical(s), 3) == 5.787

    def test_reference_beta(self):
        assert margin_beta(ScheduleState(1, 2, 1.0, 0.1)) == pytest.approx(BETA_N2, rel=1e-14)
        assert round(BETA_N2, 3) == 2.894

    def test_rho_is_one_for_default_nu(self):
        for t in (1, 5, 100):
            assert ScheduleState(t, 7).rho_t == 1.0

    def test_t_zero_rejected(self):
        with pytest.raises(ValueError, match="t >= 1"):
            ScheduleState(0, 7)

    def test_bad_nu_rejected(self):
        with pytest.raises(ValueError):
            rho(3, 7, 0.0)
        with pytest.raises(ValueError):
            rho(3, 7, -1.0)

    @settings(max_examples=500, deadline=None)
    @given(states, st.floats(0.0, 1.0))
    def test_beta_identity(self, s, nu_scale):
        # any admissible nu in (0, 1/N]: log(1/(N nu)) >= 0 keeps rho in (0, 1]
        s = ScheduleState(s.t, s.N, s.eta_L, s.delta, max(nu_scale, 1e-6) / s.N)
        lhs = s.beta * 2 * s.rho_t
        assert abs(lhs - s.temperature) <= 1e-12 * max(1.0, s.temperature)

    def test_beta_decreasing_from_two(self):
        for N in (2, 5, 10):
            for delta in (0.05, 0.1, 0.2):
                b = [margin_beta(ScheduleState(t, N, 1.0, delta)) for t in range(2, 5000)]
                assert np.all(np.diff(b) < 0)

    def test_limits(self):
        s = ScheduleState(10**7, 7, 1.0, 0.1, 0.01)
        assert s.temperature < 0.01
        assert s.threshold == 0.0 or s.threshold < 1e-300
        assert abs(s.rho_t - 1.0) < 1e-6


class TestThreshold:
    def test_fixed(self):
        assert threshold_policy("fixed", 12, 7) == pytest.approx(0.4 / 7, rel=1e-15)
        assert round(threshold_policy("fixed", 0, 7), 5) == 0.05714

    def test_theoretical_at_zero(self):
        assert threshold_policy("theoretical", 0, 7, nu=1.0) == 1.0

    def test_theoretical_decay(self):
        th = [threshold_policy("theoretical", t, 7, nu=0.3) for t in range(10)]
        np.testing.assert_allclose(np.array(th[1:]) / np.array(th[:-1]), math.exp(-1), rtol=1e-12)

    def test_none(self):
        assert threshold_policy("none", 3, 7) == 0.0

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown"):
            threshold_policy("cosine", 1, 7)


class TestSparsity:
    def test_endpoints_exact(self):
        for p in (1, 3):
            assert sparsity_schedule(0.1, 0.8, 20, 29, 1.0, p, 20) == 0.1
            assert sparsity_schedule(0.1, 0.8, 20, 29, 1.0, p, 49) == 0.8

    def test_midpoint_cubic(self):
        assert sparsity_schedule(0.0, 0.8, 0, 10, 1.0, 3, 5) == pytest.approx(0.7, abs=1e-15)

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="outside"):
            sparsity_schedule(0.0, 0.8, 20, 10, 1.0, 3, 19)
        with pytest.raises(ValueError, match="outside"):
            sparsity_schedule(0.0, 0.8, 20, 10, 1.0, 3, 31)

    def test_exponent_restricted(self):
        with pytest.raises(ValueError):
            sparsity_schedule(0.0, 0.8, 0, 10, 1.0, 2, 5)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 0.5), st.floats(0.5, 1.0), st.integers(1, 60), st.sampled_from([1, 3]))
    def test_monotone(self, si, sf, n, p):
        s = [sparsity_schedule(si, sf, 0, n, 1.0, p, t) for t in range(n + 1)]
        assert all(b >= a for a, b in zip(s, s[1:]))


class TestPolicy:
    def test_exponential(self):
        pol = SchedulePolicy("exponential", T0=1.3, decay=0.95, N=7)
        assert pol.temperature(50) == pytest.approx(T50, rel=1e-14)
        assert pol.threshold(3) == pytest.approx(0.4 / 7)

    def test_constant(self):
        pol = SchedulePolicy("constant", T0=1.0, threshold="none")
        assert pol.temperature(0) == pol.temperature(49) == 1.0
        assert pol.threshold(10) == 0.0

    def test_theoretical_shifts_step(self):
        pol = SchedulePolicy("theoretical", eta_L=1.0, delta=0.1, threshold="theoretical", N=2)
        assert pol.temperature(0) == pytest.approx(T_THEORY_N2, rel=1e-14)
        assert pol.threshold(0) == pytest.approx(0.5 * math.exp(-1), rel=1e-14)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            SchedulePolicy("linear")
