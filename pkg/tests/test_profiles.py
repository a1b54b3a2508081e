"""Layer-orbit and profile tests.

Closed forms exist for the decoupled linear system (every orbit is an
explicit exponential), so those pin the integrator paths to 1e-8; the
nonlinear claims are slope/decay fits checked against independently derived
first-order expansions.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscint.errors import ConfigError, NoContraction, NoConvergence
from viscint.model import SYSTEMS, eigensystem
from viscint.profiles import (
    double_profile,
    hat_ell2,
    hat_lambda2,
    hat_r1,
    orbit_residual,
    stable_layer,
    tilde_r1,
    unstable_layer,
)
from viscint.solver import total_variation

UB = (0.05, -0.02)


# --------------------------------------------------------------------------
# layer orbits
# --------------------------------------------------------------------------

def test_stable_layer_linear_closed_form():
    """diag: u(x) = u_bar + (p1_0/lam1) e^{lam1 x} r1, p = p1_0 e^{lam1 x} r1."""
    sys0 = SYSTEMS["diag"]()
    ub, p10, lam1 = (0.1, -0.05), 0.02, -1.0
    orb = stable_layer(sys0, ub, p10, x_max=16.0)
    exact_u1 = ub[0] + (p10 / lam1) * np.exp(lam1 * orb.x_grid)
    exact_p1 = p10 * np.exp(lam1 * orb.x_grid)
    assert np.max(np.abs(orb.u[:, 0] - exact_u1)) <= 1e-8
    assert np.max(np.abs(orb.p[:, 0] - exact_p1)) <= 1e-8
    assert np.max(np.abs(orb.u[:, 1] - ub[1])) == 0.0  # decoupled component
    assert np.max(np.abs(orb.p[:, 1])) == 0.0


def test_stable_layer_constant_orbit():
    sys0 = SYSTEMS["diag"]()
    orb = stable_layer(sys0, UB, 0.0)
    assert np.max(np.abs(orb.u - np.array(UB))) == 0.0
    assert np.max(np.abs(orb.p)) == 0.0
    assert math.isnan(orb.decay_rate)


def test_stable_layer_decay_rate_tracks_lambda1():
    sysb = SYSTEMS["burgers-triangular"]()
    orb = stable_layer(sysb, (0.0, 0.0), 0.02)
    lam1 = float(sysb.lambda1(0.0, 0.0))
    assert abs(orb.decay_rate - lam1) <= 0.1 * abs(lam1)
    assert orb.decay_rate <= -sysb.c / 2.0


def test_orbit_residual_below_tolerance():
    sysb = SYSTEMS["burgers-triangular"]()
    orb = stable_layer(sysb, UB, 0.03)
    assert orbit_residual(sysb, orb) <= 1e-8


def test_stable_layer_guards():
    sysb = SYSTEMS["burgers-triangular"]()
    with pytest.raises(ConfigError):
        stable_layer(sysb, UB, sysb.delta_box)  # amplitude cap delta_box/4
    with pytest.raises(NoConvergence):
        # near the box edge, the orbit through p1(0)=-0.12 overshoots it
        stable_layer(sysb, (0.55, 0.0), -0.12)


def test_unstable_layer_linear_closed_form():
    sys0 = SYSTEMS["diag"]()
    orb = unstable_layer(sys0, UB, 0.03, x_max=16.0)
    exact_p2 = 0.03 * np.exp(1.0 * orb.x_grid)  # lam2 = +1, x in [-16, 0]
    assert np.max(np.abs(orb.p[:, 1] - exact_p2)) <= 1e-8
    assert orb.family == "unstable"
    assert orb.decay_rate >= sys0.c / 2.0


# --------------------------------------------------------------------------
# manifold slope and effective eigenvalue
# --------------------------------------------------------------------------

def test_hat_r1_tangency_and_decoupling():
    sysb = SYSTEMS["burgers-triangular"]()
    sys0 = SYSTEMS["diag"]()
    m0 = eigensystem(sysb, UB).r1[1]
    assert hat_r1(sysb, UB, 0.0)[1] == m0
    for p1 in (0.005, 0.02, -0.03):
        assert hat_r1(sys0, UB, p1)[1] == 0.0
        assert hat_lambda2(sys0, UB, p1) == float(sys0.lambda2(*UB))


def test_hat_r1_slope_is_order_p1():
    sysb = SYSTEMS["burgers-triangular"]()
    m0 = eigensystem(sysb, UB).r1[1]
    slopes = []
    for p1 in (0.005, 0.01, 0.02, 0.04):
        f = hat_r1(sysb, UB, p1)[1]
        assert abs(f - m0) <= 1.0 * p1
        slopes.append((f - m0) / p1)
    # linear regime: the slope itself is stable across the sweep
    assert max(slopes) - min(slopes) <= 0.2 * abs(np.mean(slopes))


@settings(max_examples=20, deadline=None)
@given(
    u1=st.floats(-0.2, 0.2), u2=st.floats(-0.2, 0.2),
    p1=st.floats(-0.05, 0.05),
)
def test_hat_ell2_duality(u1, u2, p1):
    sysb = SYSTEMS["burgers-triangular"]()
    r = hat_r1(sysb, (u1, u2), p1)
    l = hat_ell2(sysb, (u1, u2), p1)
    assert abs(l @ r) <= 1e-12
    assert l @ np.array([0.0, 1.0]) == 1.0


def test_hat_lambda2_correction_scale():
    """The p1-correction of the transport speed is bounded by the measured
    manifold slope constant."""
    sysb = SYSTEMS["burgers-triangular"]()
    m0 = eigensystem(sysb, UB).r1[1]
    C = max(abs(hat_r1(sysb, UB, p)[1] - m0) / p
            for p in (0.005, 0.01, 0.02, 0.04))
    lam2 = float(sysb.lambda2(*UB))
    gap = abs(hat_lambda2(sysb, UB, 0.02) - lam2)
    assert gap <= 0.1 * 0.02 * C
    assert hat_lambda2(sysb, UB, 0.0) == lam2


def test_tilde_r1_identities_and_first_order_oracle():
    sysb = SYSTEMS["burgers-triangular"]()
    sys0 = SYSTEMS["diag"]()
    eig = eigensystem(sysb, UB)
    m0 = float(eig.r1[1])
    assert tilde_r1(sysb, UB, 0.0, -2.0)[1] == m0
    assert np.array_equal(tilde_r1(sys0, UB, 0.03, -1.1), [1.0, 0.0])

    # independent expansion: m1 = (d1 m0 + m0 d2 m0)/(lam2 - 2 lam1 + sigma)
    h = 1e-6

    def m0f(a, b):
        return eigensystem(sysb, (a, b)).r1[1]

    d1 = (m0f(UB[0] + h, UB[1]) - m0f(UB[0] - h, UB[1])) / (2 * h)
    d2 = (m0f(UB[0], UB[1] + h) - m0f(UB[0], UB[1] - h)) / (2 * h)
    sigma = -2.0
    m1 = (d1 + m0 * d2) / (eig.lambda2 - 2 * eig.lambda1 + sigma)
    for v1 in (0.01, 0.02, 0.04):
        m = tilde_r1(sysb, UB, v1, sigma)[1]
        assert abs((m - m0) / v1 - m1) <= 1e-3 * abs(m1) + 1e-9
        assert abs(m - m0) <= 1.0 * v1

    # sigma-sensitivity is itself O(v1)
    for v1 in (0.01, 0.04):
        dm = (tilde_r1(sysb, UB, v1, sigma + 1e-4)[1]
              - tilde_r1(sysb, UB, v1, sigma - 1e-4)[1]) / 2e-4
        assert abs(dm) <= 1.0 * v1


# --------------------------------------------------------------------------
# double profile BVP
# --------------------------------------------------------------------------

ENDPTS = ((0.02, -0.01), (-0.015, 0.025))


def test_double_profile_trivial():
    sysb = SYSTEMS["burgers-triangular"]()
    prof = double_profile(sysb, ENDPTS[0], ENDPTS[0], 8.0)
    assert np.max(np.abs(prof.z - np.array(ENDPTS[0]))) == 0.0
    assert np.max(np.abs(prof.p1)) == 0.0
    assert np.max(np.abs(prof.p2)) == 0.0


def test_double_profile_linear_closed_form():
    sys0 = SYSTEMS["diag"]()
    L = 8.0
    prof = double_profile(sys0, *ENDPTS, L)
    lam1, lam2 = -1.0, 1.0
    dU = np.array(ENDPTS[1]) - np.array(ENDPTS[0])
    a = dU[0] / (math.exp(lam1 * L) - 1.0)
    b = dU[1] / (1.0 - math.exp(-lam2 * L))
    x = prof.x_grid
    z_exact = (np.array(ENDPTS[0])[None, :]
               + a * (np.exp(lam1 * x) - 1)[:, None] * np.array([1.0, 0.0])
               + b * (np.exp(lam2 * (x - L)) - math.exp(-lam2 * L))[:, None]
               * np.array([0.0, 1.0]))
    assert np.max(np.abs(prof.z - z_exact)) <= 1e-7


@pytest.fixture(scope="module")
def burgers_profile():
    sysb = SYSTEMS["burgers-triangular"]()
    return sysb, double_profile(sysb, *ENDPTS, 8.0)


def test_double_profile_endpoints_and_decay(burgers_profile):
    sysb, prof = burgers_profile
    d1 = float(np.abs(np.array(ENDPTS[1]) - np.array(ENDPTS[0])).sum())
    assert np.max(np.abs(prof.mismatch)) <= 1e-10
    assert np.allclose(prof.z[0], ENDPTS[0], atol=1e-12)
    c, L = sysb.c, 8.0
    x = prof.x_grid
    C1 = np.max(np.abs(prof.p1) / (d1 * np.exp(-c * x / 2)))
    C2 = np.max(np.abs(prof.p2) / (d1 * np.exp(c * (x - L) / 2)))
    assert C1 <= 10.0
    assert C2 <= 10.0


def test_double_profile_log_linear_fits(burgers_profile):
    _, prof = burgers_profile
    x = prof.x_grid
    for arr in (prof.p1, prof.p2):
        mask = np.abs(arr) > 1e-13
        lp = np.log(np.abs(arr[mask]))
        A = np.vstack([x[mask], np.ones(mask.sum())]).T
        _, res, *_ = np.linalg.lstsq(A, lp, rcond=None)
        r2 = 1.0 - res[0] / ((lp - lp.mean()) ** 2).sum()
        assert r2 >= 0.99


def test_double_profile_reconstruction(burgers_profile):
    """z_x equals p1 r1_hat + p2 r2 up to the O(dx^2) of the comparison
    stencil (the stored zx field is the analytic right-hand side)."""
    _, prof = burgers_profile
    zx_fd = np.gradient(prof.z, prof.x_grid, axis=0)
    assert np.max(np.abs(zx_fd[2:-2] - prof.zx[2:-2])) <= 1e-4


def test_double_profile_L_uniformity():
    sysb = SYSTEMS["burgers-triangular"]()
    tvs = [total_variation(double_profile(sysb, *ENDPTS, Lv).z)
           for Lv in (8.0, 16.0)]
    assert abs(tvs[1] - tvs[0]) <= 0.02 * tvs[0]


def test_double_profile_guards():
    sysb = SYSTEMS["burgers-triangular"]()
    with pytest.raises(ConfigError):
        double_profile(sysb, *ENDPTS, 3.0)
    with pytest.raises(NoContraction):
        # endpoint gap of O(1) demands p1 amplitudes far beyond the layer cap
        double_profile(sysb, (0.5, 0.0), (-0.5, 0.0), 8.0)
