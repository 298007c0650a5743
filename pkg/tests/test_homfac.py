"""Model-free adaptive-control baseline tests."""

import math

import numpy as np
import pytest

from irltrack.homfac import (
    HomfacDivergenceError,
    HomfacParams,
    HomfacState,
    homfac_step,
    increment_bound,
)

PARAMS = HomfacParams(alpha=(0.5, 0.25, 0.125, 0.125), eta=0.8, lam=0.1,
                      mu=0.01, rho=0.8, phi0=15.0)


class TestParams:
    def test_alpha_normalized(self):
        p = HomfacParams(alpha=(2.0, 1.0, 1.0), eta=0.8, lam=0.1, mu=0.01,
                         rho=0.8, phi0=10.0)
        assert sum(p.alpha) == pytest.approx(1.0)
        assert p.alpha == pytest.approx((0.5, 0.25, 0.25))
        assert p.order == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            HomfacParams(alpha=(1.0,), eta=0.8, lam=0.0, mu=0.01, rho=0.8, phi0=1.0)
        with pytest.raises(ValueError):
            HomfacParams(alpha=(1.0,), eta=2.5, lam=0.1, mu=0.01, rho=0.8, phi0=1.0)
        with pytest.raises(ValueError):
            HomfacParams(alpha=(1.0,), eta=0.8, lam=0.1, mu=0.01, rho=0.8, phi0=0.0)


class TestStep:
    def test_zero_error_zero_du_is_fixed_point(self):
        state = HomfacState.initial(PARAMS, y0=0.3)
        u, new = homfac_step(state, y=0.3, y_d_next=0.3, p=PARAMS)
        assert u == state.u_prev
        assert new.phi_history[0] == PARAMS.phi0

    def test_zero_du_reduces_to_weighted_history(self):
        hist = (12.0, 14.0, 16.0, 18.0)
        state = HomfacState(phi_history=hist, u_prev=0.0, y_prev=0.5, du_prev=0.0)
        _, new = homfac_step(state, y=0.7, y_d_next=0.7, p=PARAMS)
        expected = sum(a * h for a, h in zip(PARAMS.alpha, hist))
        assert new.phi_history[0] == pytest.approx(expected)

    def test_reset_on_sign_flip(self):
        hist = (-5.0, -5.0, -5.0, -5.0)  # opposite sign of phi0
        state = HomfacState(phi_history=hist, u_prev=0.0, y_prev=0.0, du_prev=0.0)
        _, new = homfac_step(state, y=0.0, y_d_next=0.1, p=PARAMS)
        assert new.phi_history[0] == PARAMS.phi0

    def test_reset_on_collapse(self):
        hist = (1e-9, 1e-9, 1e-9, 1e-9)
        state = HomfacState(phi_history=hist, u_prev=0.0, y_prev=0.0, du_prev=0.0)
        _, new = homfac_step(state, y=0.0, y_d_next=0.1, p=PARAMS)
        assert new.phi_history[0] == PARAMS.phi0

    def test_geometric_error_decay_on_incremental_plant(self):
        # Plant responding to the control increment with gain b = phi0: the
        # estimator stays frozen at b and the tracking error for a step
        # reference contracts with ratio (1 - rho*b^2/(lam + b^2)).
        b = 2.0
        p = HomfacParams(alpha=(0.5, 0.25, 0.125, 0.125), eta=0.8, lam=0.1,
                         mu=0.01, rho=0.8, phi0=b)
        ratio = 1.0 - p.rho * b * b / (p.lam + b * b)
        y, y_d = 0.0, 1.0
        state = HomfacState.initial(p, y0=y)
        errors = [y_d - y]
        for _ in range(12):
            u, state = homfac_step(state, y=y, y_d_next=y_d, p=p)
            y = y + b * state.du_prev
            errors.append(y_d - y)
        for k in range(1, len(errors) - 1):
            assert errors[k + 1] == pytest.approx(errors[k] * ratio, rel=1e-6)

    def test_estimator_freezes_for_huge_mu(self):
        p = HomfacParams(alpha=(0.5, 0.25, 0.125, 0.125), eta=0.8, lam=0.1,
                         mu=1e12, rho=0.8, phi0=15.0)
        state = HomfacState(phi_history=(15.0,) * 4, u_prev=1.0, y_prev=0.0,
                            du_prev=0.5)
        _, new = homfac_step(state, y=0.9, y_d_next=1.0, p=p)
        assert new.phi_history[0] == pytest.approx(15.0, abs=1e-9)

    def test_increment_bound_holds_per_step(self):
        rng = np.random.default_rng(3)
        state = HomfacState.initial(PARAMS, y0=0.0)
        y = 0.0
        for _ in range(200):
            y_d = float(rng.uniform(-1, 1))
            u, new = homfac_step(state, y=y, y_d_next=y_d, p=PARAMS)
            du = u - state.u_prev
            assert abs(du) <= increment_bound(PARAMS, y_d - y) + 1e-12
            state = new
            y += float(rng.normal(0, 0.1))

    def test_determinism(self):
        def run():
            state = HomfacState.initial(PARAMS, y0=0.0)
            y = 0.0
            us = []
            for k in range(50):
                u, state = homfac_step(state, y=y, y_d_next=0.5, p=PARAMS)
                y = 0.9 * y + 0.05 * u
                us.append(u)
            return us

        assert run() == run()

    def test_divergence_raises(self):
        state = HomfacState(phi_history=(15.0,) * 4, u_prev=float("inf"),
                            y_prev=0.0, du_prev=0.0)
        with pytest.raises(HomfacDivergenceError):
            homfac_step(state, y=0.0, y_d_next=1.0, p=PARAMS)


def test_am_gm_bound_formula():
    assert increment_bound(PARAMS, 1.0) == pytest.approx(0.8 / (2 * math.sqrt(0.1)))
