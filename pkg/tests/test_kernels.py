"""Oracle tests for the interval Green kernels.

Every closed form is checked against an independent route: brute-force image
sums, scipy adaptive quadrature, or finite differences of a sibling kernel.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from viscint.errors import CharacteristicDrift, NonpositiveTime, TruncationOverflow
from viscint.kernels import (
    KernelSpec,
    b_kernel,
    delta_kernel,
    delta_mass,
    delta_tilde,
    delta_x_kernel,
    heat,
    j0_kernel,
    j0_x,
    jL_kernel,
    jL_x,
    kernel_norm_report,
    theta_kernel,
    theta_tilde,
    theta_x,
)

SPEC = KernelSpec(lam=1.3, L=4.0)
SPEC_NEG = KernelSpec(lam=-2.1, L=5.0)
SPEC_NODRIFT = KernelSpec(lam=0.0, L=10.0)


# ----------------------------------------------------------------- heat

def test_heat_closed_form_values():
    assert heat(1.0, 0.0) == pytest.approx(1.0 / (2.0 * math.sqrt(math.pi)), abs=1e-12)
    assert heat(0.25, 1.0) == pytest.approx(math.exp(-1.0) / math.sqrt(math.pi), abs=1e-12)


@pytest.mark.parametrize("t", [0.1, 1.0])
def test_heat_unit_mass(t):
    val, _ = quad(lambda x: heat(t, x), -20.0, 20.0, limit=200)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_heat_rejects_nonpositive_time():
    with pytest.raises(NonpositiveTime):
        heat(0.0, 1.0)
    with pytest.raises(NonpositiveTime):
        heat(-1.0, 1.0)


# ----------------------------------------------------------------- delta

def _delta_brute(spec, t, x, y, M=40):
    """Direct unstabilized series: phi * sum [G(x-y+2mL) - G(x+y+2mL)]."""
    lam, L = spec.lam, spec.L
    G = lambda z: math.exp(-z * z / (4 * t)) / (2 * math.sqrt(math.pi * t))
    s = sum(G(x - y + 2 * m * L) - G(x + y + 2 * m * L) for m in range(-M, M + 1))
    return math.exp(lam * (x - y) / 2 - lam * lam * t / 4) * s


def test_delta_matches_unstabilized_series():
    for t in (0.03, 0.2, 0.7):
        for x in (0.3, 1.7, 3.6):
            for y in (0.5, 2.0, 3.9):
                got = delta_kernel(SPEC, t, x, y).value
                want = _delta_brute(SPEC, t, x, y)
                assert got == pytest.approx(want, abs=1e-13)


def test_delta_single_gaussian_far_from_boundaries():
    # images are < 1e-100 here, so the value is the free heat kernel
    got = delta_kernel(SPEC_NODRIFT, 0.01, 5.0, 5.0)
    assert got.value == pytest.approx(heat(0.01, 0.0), abs=1e-7)
    assert got.value == pytest.approx(2.8209479, abs=1e-6)


def test_delta_dirichlet_boundaries():
    for spec in (SPEC, SPEC_NEG, SPEC_NODRIFT):
        for t in (0.05, 0.5):
            for y in (0.3, spec.L / 2, spec.L - 0.3):
                assert abs(delta_kernel(spec, t, 0.0, y).value) <= spec.tail_tol
                assert abs(delta_kernel(spec, t, spec.L, y).value) <= spec.tail_tol


def test_delta_x_mass_le_one():
    # lam=1, L=4, t=0.5, y=1: integral over x bounded by 1 (maximum principle)
    spec = KernelSpec(lam=1.0, L=4.0)
    val, _ = quad(lambda x: delta_kernel(spec, 0.5, x, 1.0).value, 0.0, 4.0, limit=200)
    assert val <= 1.0 + 1e-8


def test_delta_mass_closed_form_vs_quadrature():
    for spec in (SPEC, SPEC_NEG):
        for t in (0.05, 0.4):
            for x in (0.8, 2.5):
                q, _ = quad(
                    lambda y: delta_kernel(spec, t, x, y).value, 0.0, spec.L, limit=200
                )
                m = float(delta_mass(spec, t, np.array([x]))[0])
                assert m == pytest.approx(q, abs=1e-10)
                assert m <= 1.0 + 1e-8


def test_delta_positive_and_subprobability_no_drift():
    xs = np.linspace(0.0, 10.0, 41)
    for t in (0.1, 0.5, 1.0):
        vals = np.array([delta_kernel(SPEC_NODRIFT, t, x, 5.0).value for x in xs])
        assert np.all(vals >= -SPEC_NODRIFT.tail_tol)
        assert np.trapezoid(vals, xs) <= 1.0 + 1e-8


def test_delta_reflection_symmetry():
    # lam -> -lam with x -> L-x, y -> L-y leaves Delta invariant
    L = SPEC.L
    flipped = KernelSpec(lam=-SPEC.lam, L=L)
    for t in (0.07, 0.3):
        for x in (0.4, 1.9, 3.3):
            for y in (0.6, 2.8):
                a = delta_kernel(flipped, t, x, y).value
                b = delta_kernel(SPEC, t, L - x, L - y).value
                assert a == pytest.approx(b, abs=1e-10)


def test_delta_initial_condition_recovery():
    # int Delta(t,x,y) f(y) dy -> f(x) with error <= 1e-3 * ||f''||_inf at t=1e-4
    spec = KernelSpec(lam=0.8, L=4.0)
    f = lambda y: np.sin(2.0 * y) * np.exp(-((y - 2.0) ** 2))
    fpp_sup = 6.0  # coarse overestimate of ||f''||_inf on [0,4]
    x = 1.7
    val, _ = quad(lambda y: delta_kernel(spec, 1e-4, x, y).value * f(y), 0.0, 4.0,
                  limit=400, points=[x])
    assert abs(val - f(x)) <= 1e-3 * fpp_sup


def test_delta_x_matches_finite_difference():
    h = 1e-6
    for (t, x, y) in ((0.15, 1.2, 2.3), (0.4, 3.0, 0.9)):
        fd = (
            delta_kernel(SPEC, t, x + h, y).value - delta_kernel(SPEC, t, x - h, y).value
        ) / (2 * h)
        assert delta_x_kernel(SPEC, t, x, y).value == pytest.approx(fd, abs=1e-7)


def test_delta_pde_residual():
    # F_t + lam F_x - F_xx = 0 at interior points (steps per contract)
    rng = np.random.default_rng(7)
    worst = 0.0
    for spec in (SPEC, SPEC_NEG):
        for _ in range(60):
            t = float(rng.uniform(0.05, 1.0))
            x = float(rng.uniform(0.3, spec.L - 0.3))
            y = float(rng.uniform(0.3, spec.L - 0.3))
            hx, ht = 1e-3, 1e-4
            F = lambda tt, xx: delta_kernel(spec, tt, xx, y).value
            res = (
                (F(t + ht, x) - F(t - ht, x)) / (2 * ht)
                + spec.lam * (F(t, x + hx) - F(t, x - hx)) / (2 * hx)
                - (F(t, x + hx) - 2 * F(t, x) + F(t, x - hx)) / (hx * hx)
            )
            worst = max(worst, abs(res))
    assert worst <= 1e-3


def test_truncation_certification_raises_when_cap_too_small():
    tiny = KernelSpec(lam=0.0, L=0.5, m_max=1, tail_tol=1e-12)
    with pytest.raises(TruncationOverflow):
        delta_kernel(tiny, 1.0, 0.25, 0.25)


def test_tail_bound_reported_and_small():
    ev = delta_kernel(SPEC, 0.3, 1.0, 2.0)
    assert 0.0 <= ev.tail_bound <= SPEC.tail_tol


@settings(max_examples=60, deadline=None)
@given(
    t=st.floats(0.01, 1.0),
    x=st.floats(0.0, 4.0),
    y=st.floats(0.05, 3.95),
)
def test_delta_nonnegative_property(t, x, y):
    assert delta_kernel(SPEC, t, x, y).value >= -SPEC.tail_tol


# ----------------------------------------------------------------- delta_tilde

def test_delta_tilde_zero_at_L():
    assert delta_tilde(SPEC, 0.2, 1.3, SPEC.L).value == 0.0


def test_delta_tilde_matches_quadrature_of_delta_x():
    for (t, x, y) in ((0.1, 1.0, 0.5), (0.3, 2.2, 3.0), (0.05, 3.7, 0.2)):
        q, _ = quad(
            lambda z: delta_x_kernel(SPEC, t, x, z).value, y, SPEC.L, limit=300
        )
        assert delta_tilde(SPEC, t, x, y).value == pytest.approx(q, abs=1e-9)


def test_delta_tilde_y_derivative_is_minus_delta_x():
    h = 1e-4
    for (t, x, y) in ((0.2, 1.5, 1.0), (0.4, 2.8, 2.2)):
        dy = (
            delta_tilde(SPEC, t, x, y + h).value - delta_tilde(SPEC, t, x, y - h).value
        ) / (2 * h)
        assert dy + delta_x_kernel(SPEC, t, x, y).value == pytest.approx(0.0, abs=1e-5)


def test_delta_tilde_at_zero_plus_j_derivatives_vanish():
    # Delta~(t,x,0) + d/dx j0 + d/dx jL = 0
    for t in (0.1, 0.6):
        for x in (0.5, 2.0, 3.5):
            total = (
                delta_tilde(SPEC, t, x, 0.0).value
                + float(j0_x(SPEC, t, np.array([x]))[0])
                + float(jL_x(SPEC, t, np.array([x]))[0])
            )
            assert abs(total) <= 1e-5


# ----------------------------------------------------------------- J kernels

def test_j_kernels_steady_state_at_large_time():
    lam, L = 1.0, 4.0
    spec = KernelSpec(lam=lam, L=L)
    A = -1.0 / (math.exp(lam * L) - 1.0)
    B = math.exp(lam * L) / (math.exp(lam * L) - 1.0)
    C = 1.0 / (math.exp(lam * L) - 1.0)
    D = -1.0 / (math.exp(lam * L) - 1.0)
    for x in (0.5, 2.0, 3.5):
        assert j0_kernel(spec, 50.0, x).value == pytest.approx(A * math.exp(lam * x) + B, abs=1e-9)
        assert jL_kernel(spec, 50.0, x).value == pytest.approx(C * math.exp(lam * x) + D, abs=1e-9)


def test_j_boundary_values():
    for t in (0.1, 1.0):
        assert j0_kernel(SPEC, t, 0.0).value == pytest.approx(1.0, abs=1e-9)
        assert j0_kernel(SPEC, t, SPEC.L).value == pytest.approx(0.0, abs=1e-9)
        assert jL_kernel(SPEC, t, SPEC.L).value == pytest.approx(1.0, abs=1e-9)
        assert jL_kernel(SPEC, t, 0.0).value == pytest.approx(0.0, abs=1e-9)


def test_j_superposition_with_interior_mass():
    # j0 + jL + (evolution of initial datum 1) == 1
    for spec in (SPEC, SPEC_NEG):
        for t in (0.02, 0.3, 1.0):
            for x in (0.5, spec.L / 2, spec.L - 0.5):
                z = float(delta_mass(spec, t, np.array([x]))[0])
                total = z + j0_kernel(spec, t, x).value + jL_kernel(spec, t, x).value
                assert total == pytest.approx(1.0, abs=1e-6)


def test_j_range():
    for spec in (SPEC, SPEC_NEG):
        for t in (0.05, 0.5, 2.0):
            for x in np.linspace(0.0, spec.L, 21):
                assert 0.0 <= j0_kernel(spec, t, float(x)).value <= 1.0
                assert 0.0 <= jL_kernel(spec, t, float(x)).value <= 1.0


def test_j_x_matches_finite_difference():
    h = 1e-6
    for spec in (SPEC, SPEC_NEG):
        for (t, x) in ((0.3, 2.0), (0.08, 0.7)):
            fd = (j0_kernel(spec, t, x + h).value - j0_kernel(spec, t, x - h).value) / (2 * h)
            assert float(j0_x(spec, t, np.array([x]))[0]) == pytest.approx(fd, abs=1e-6)
            fd = (jL_kernel(spec, t, x + h).value - jL_kernel(spec, t, x - h).value) / (2 * h)
            assert float(jL_x(spec, t, np.array([x]))[0]) == pytest.approx(fd, abs=1e-6)


def test_j_pde_residual():
    rng = np.random.default_rng(11)
    for spec in (SPEC, SPEC_NEG):
        for _ in range(40):
            t = float(rng.uniform(0.05, 1.0))
            x = float(rng.uniform(0.3, spec.L - 0.3))
            hx, ht = 1e-3, 1e-4
            for F in (lambda tt, xx: j0_kernel(spec, tt, xx).value,
                      lambda tt, xx: jL_kernel(spec, tt, xx).value):
                res = (
                    (F(t + ht, x) - F(t - ht, x)) / (2 * ht)
                    + spec.lam * (F(t, x + hx) - F(t, x - hx)) / (2 * hx)
                    - (F(t, x + hx) - 2 * F(t, x) + F(t, x - hx)) / (hx * hx)
                )
                assert abs(res) <= 1e-3


def test_j_refuses_characteristic_drift():
    with pytest.raises(CharacteristicDrift):
        j0_kernel(KernelSpec(lam=0.0, L=4.0), 0.5, 1.0)
    with pytest.raises(CharacteristicDrift):
        jL_kernel(KernelSpec(lam=1e-9, L=4.0), 0.5, 1.0)


def test_j_kernels_survive_rescaled_intervals():
    # lam*L ~ -480 / +510: closed forms must not overflow and must superpose
    for spec in (KernelSpec(lam=-1.2, L=400.0), KernelSpec(lam=1.7, L=300.0)):
        for x in (0.5, spec.L / 2, spec.L - 0.5):
            z = float(delta_mass(spec, 0.5, np.array([x]))[0])
            j0v = j0_kernel(spec, 0.5, x).value
            jLv = jL_kernel(spec, 0.5, x).value
            assert 0.0 <= j0v <= 1.0 and 0.0 <= jLv <= 1.0
            assert z + j0v + jLv == pytest.approx(1.0, abs=1e-8)


# ----------------------------------------------------------------- theta family

def test_theta_x_dirichlet_derivative_vanishes_at_zero():
    for (t, y) in ((0.1, 1.5), (0.5, 3.0)):
        assert abs(theta_x(SPEC, t, 0.0, y)) <= 1e-12


def test_theta_x_neumann_at_L():
    for (t, y) in ((0.1, 1.5), (0.5, 3.0)):
        assert abs(theta_x(SPEC, t, SPEC.L, y)) <= 1e-4


def test_theta_vanishes_at_zero():
    assert theta_kernel(SPEC, 0.3, 0.0, 1.0).value == 0.0


def test_theta_x_is_x_derivative_of_theta():
    h = 1e-5
    t, x, y = 0.15, 1.2, 0.7
    fd = (theta_kernel(SPEC, t, x + h, y).value - theta_kernel(SPEC, t, x - h, y).value) / (2 * h)
    assert theta_x(SPEC, t, x, y) == pytest.approx(fd, abs=1e-7)


def test_theta_antiderivative_reproduces_delta():
    # the cross-kernel identity: int_y^L theta_x dxi == Delta(t,x,y)
    for spec in (SPEC, SPEC_NEG):
        for (t, x, y) in ((0.1, 1.0, 0.5), (0.3, 2.2, 3.0), (0.05, spec.L - 0.3, 0.2)):
            tt = theta_tilde(spec, t, x, y)
            dd = delta_kernel(spec, t, x, y).value
            assert tt == pytest.approx(dd, abs=1e-5)


def test_b_kernel_boundary_value_and_range():
    assert b_kernel(SPEC, 0.2, 0.0).value == pytest.approx(1.0, abs=1e-6)
    for x in (0.5, 2.0, 3.9):
        v = b_kernel(SPEC, 0.2, x).value
        assert -1e-6 <= v <= 1.0 + 1e-6


def test_b_x_plus_theta_tilde_at_zero_vanishes():
    h = 1e-4
    x = 2.0
    bx = (b_kernel(SPEC, 0.2, x + h).value - b_kernel(SPEC, 0.2, x - h).value) / (2 * h)
    assert bx + theta_tilde(SPEC, 0.2, x, 0.0) == pytest.approx(0.0, abs=1e-6)


def test_theta_pde_defect_is_boundary_flux_gradient():
    # Theta cannot satisfy the PDE and the antiderivative identity at once;
    # its residual equals Delta_xy(t,0,y), uniformly in x.  Pin that.
    t, y = 0.2, 2.1
    h = 1e-4

    def residual(x):
        ht, hx = 2e-5, 2e-4
        T = lambda tt, xx: theta_kernel(SPEC, tt, xx, y).value
        return (
            (T(t + ht, x) - T(t - ht, x)) / (2 * ht)
            + SPEC.lam * (T(t, x + hx) - T(t, x - hx)) / (2 * hx)
            - (T(t, x + hx) - 2 * T(t, x) + T(t, x - hx)) / (hx * hx)
        )

    dxp = delta_kernel(SPEC, t, h, y + h).value / h
    dxm = delta_kernel(SPEC, t, h, y - h).value / h
    delta_xy_at_0 = (dxp - dxm) / (2 * h)
    r1, r2 = residual(0.9), residual(3.1)
    assert r1 == pytest.approx(r2, abs=1e-3)          # x-independent
    assert r1 == pytest.approx(delta_xy_at_0, abs=1e-3)  # equals the flux gradient


# ----------------------------------------------------------------- norm report

def test_norm_report_scaling():
    spec = KernelSpec(lam=1.0, L=4.0)
    t_grid = [1e-3, 1e-2, 1e-1, 1.0]
    rows = kernel_norm_report(spec, t_grid, y=2.0, nx=801)
    assert all(np.isfinite(list(r.values())).all() for r in rows)
    for key in ("delta_x_l1_sqrt_t", "j_xx_l1_sqrt_t", "delta_tilde_x_l1_sqrt_t"):
        vals = [r[key] for r in rows]
        assert max(vals) / min(vals) < 3.0, key
    for r in rows:
        assert r["delta_l1"] <= 1.0 + 1e-6
        assert 0.0 <= r["sup_j"] <= 1.0


def test_norm_report_no_drift_subprobability():
    # J columns are NaN at lam=0 (undefined); the Delta columns must hold
    rows = kernel_norm_report(SPEC_NODRIFT, [0.1, 0.5, 1.0], y=5.0, nx=401)
    for r in rows:
        assert r["delta_l1"] <= 1.0 + 1e-8
        assert math.isnan(r["sup_j"])
