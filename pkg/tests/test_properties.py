"""Property-based invariants across modules."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eprsim.estimation import orientation
from eprsim.gaussian_dynamics import NoiseChannels, propagate_moments
from eprsim.multilevel_rates import (
    PopulationState,
    PumpConfig,
    RateSet,
    propagate_populations,
)
from eprsim.records import ModeFunctional
from eprsim.spin_model import (
    GaussianState,
    ModelParams,
    css_state,
    epr_variance,
)

from test_spin_model import make_params

rates_st = st.floats(min_value=0.0, max_value=0.1)
squeeze_st = st.floats(min_value=0.05, max_value=0.95)


def params_from(s, d, gt):
    mu = 0.5 * (s + 1.0 / s)
    nu = 0.5 * (1.0 / s - s)
    return make_params(mu=mu, nu=nu, d=d, Gamma_tilde=gt)


class TestMomentInvariants:
    @settings(max_examples=30, deadline=None)
    @given(s=squeeze_st, d=st.floats(min_value=0.0, max_value=200.0),
           gt=st.floats(min_value=0.0, max_value=1.0))
    def test_symplectic_bound_preserved(self, s, d, gt):
        params = params_from(s, d, gt)
        noise = NoiseChannels(dephasing=gt)
        traj = propagate_moments(css_state(), params, noise,
                                 np.linspace(0.0, 30.0, 7))
        for state in traj.states:
            state.validate()

    @settings(max_examples=30, deadline=None)
    @given(s=squeeze_st, d=st.floats(min_value=0.0, max_value=200.0))
    def test_witness_never_below_dissipative_floor(self, s, d):
        params = params_from(s, d, 0.0)
        traj = propagate_moments(css_state(), params, NoiseChannels(),
                                 np.linspace(0.0, 50.0, 11))
        assert np.all(traj.xi >= params.squeeze_sq - 1e-9)


class TestPopulationInvariants:
    @settings(max_examples=50, deadline=None)
    @given(g34=rates_st, g43=rates_st, g_out=rates_st, g_in=rates_st,
           n44=st.floats(min_value=0.0, max_value=1.0),
           split=st.floats(min_value=0.0, max_value=1.0),
           pump=st.floats(min_value=0.0, max_value=0.3))
    def test_conserved_and_nonnegative(self, g34, g43, g_out, g_in, n44,
                                       split, pump):
        rest = 1.0 - n44
        pop0 = PopulationState(n44=n44, n43=rest * split,
                               nh=rest * (1.0 - split))
        rates = RateSet(g34=g34, g43=g43, g_out=g_out, g_in=g_in)
        cfg = PumpConfig(rate=pump) if pump > 0 else None
        series = propagate_populations(pop0, rates,
                                       np.linspace(0.0, 50.0, 11), pump=cfg)
        total = series.n44 + series.n43 + series.nh
        np.testing.assert_allclose(total, 1.0, atol=1e-8)
        assert series.n44.min() >= -1e-9
        assert series.n43.min() >= -1e-9
        assert series.nh.min() >= -1e-9


class TestWitnessSymmetry:
    @settings(max_examples=50, deadline=None)
    @given(data=st.lists(st.floats(min_value=-1.0, max_value=1.0),
                         min_size=20, max_size=20))
    def test_ensemble_exchange(self, data):
        a = np.array(data[:16]).reshape(4, 4)
        cov = a @ a.T + 2.0 * np.eye(4)
        mean = np.array(data[16:])
        swap = np.eye(4)[[2, 3, 0, 1]]
        st1 = GaussianState(mean=mean, cov=cov)
        st2 = GaussianState(mean=swap @ mean, cov=swap @ cov @ swap.T)
        assert epr_variance(st1).xi == pytest.approx(epr_variance(st2).xi,
                                                     rel=1e-12)


class TestOrientationProperties:
    dist = st.lists(st.floats(min_value=0.0, max_value=1.0),
                    min_size=9, max_size=9).filter(lambda p: sum(p) > 1e-6)

    @settings(max_examples=50, deadline=None)
    @given(p=dist)
    def test_bounded(self, p):
        p = np.array(p) / np.sum(p)
        assert -1.0 - 1e-12 <= orientation(p) <= 1.0 + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(p=dist, q=dist, lam=st.floats(min_value=0.0, max_value=1.0))
    def test_affine_in_mixtures(self, p, q, lam):
        p = np.array(p) / np.sum(p)
        q = np.array(q) / np.sum(q)
        mixed = lam * p + (1.0 - lam) * q
        assert orientation(mixed) == pytest.approx(
            lam * orientation(p) + (1.0 - lam) * orientation(q), abs=1e-9)


class TestModeNormalization:
    @settings(max_examples=50, deadline=None)
    @given(rate=st.floats(min_value=0.0, max_value=5.0),
           phase=st.sampled_from(["cos", "sin"]),
           direction=st.sampled_from(["falling", "rising"]),
           nbins=st.integers(min_value=1, max_value=400),
           dt=st.floats(min_value=0.01, max_value=1.0))
    def test_unit_norm_weights(self, rate, phase, direction, nbins, dt):
        mode = ModeFunctional(phase=phase, exponent_rate=rate,
                              direction=direction, window=(0.0, nbins * dt))
        _, w = mode.weights(dt, nbins)
        assert np.sum(w**2) == pytest.approx(1.0, abs=1e-12)


class TestParamsSerialization:
    @settings(max_examples=50, deadline=None)
    @given(s=squeeze_st, d=st.floats(min_value=0.0, max_value=1e3),
           gt=st.floats(min_value=0.0, max_value=5.0),
           eta=st.floats(min_value=0.0, max_value=1.0))
    def test_json_round_trip(self, s, d, gt, eta):
        params = params_from(s, d, gt).replace(eta=eta)
        back = ModelParams.from_json(params.to_json())
        assert back == params
