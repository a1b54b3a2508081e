"""Gradient decomposition of a solved run into waves and boundary layers.

Given a solution u of the viscous system on [0,L], its gradient is split as

    u_x = v1*rt1(u, v1, sigma1) + v2*r2 + p1*rh1(u, p1) + p2*r2
    u_t = w1*rt1(u, v1, sigma1) + w2*r2

where rt1 is the travelling-wave direction of the first family moving at the
measured speed sigma1 = -w1/v1 (cut off to the eigenvalue at u* when the
ratio is meaningless), rh1 is the stable-manifold direction of the boundary
layer, and r2 = (0,1) is exact for triangular systems.

The components solve scalar advection-diffusion laws in conservation form,

    v1_t + (lambda1(u) v1)_x - v1_xx = 0
    p1_t + (lambda1(u) p1)_x - p1_xx = 0
    p2_t + (lambda_hat2(u,p1) p2)_x - p2_xx = 0
    v2_t + (lambda2(u) v2)_x - v2_xx = s1,

the first three source-free: all the coupling is pushed into the single
source s1 of the second-family wave component.  We march the three clean
laws with coefficients frozen from the stored solution, close v2 pointwise
by subtraction from the gradient identity, and *measure* s1 as the discrete
residual of v2 in its law.  Time-differentiating the gradient identity gives
two pointwise checks that cost nothing to evaluate:

    w1 = v1_x - lambda1 v1 + p1_x - lambda1 p1            (exact)
    w2 = v2_x - lambda2 v2 + p2_x - lambda_hat2 p2 + e    (defect e, small)

The first row is also how the inflow condition for v1 at x=L is imposed.

Boundary conditions (lambda1 < 0 < lambda2 on the box, so family 1 flows
left and family 2 flows right):

    v1(t,0) = 0                         v1 outflow absorbed at x=0
    (v1_x - lambda1 v1)(t,L) = w1(t,L)  inflow flux from the w-identity
    p1(t,0) = <l1, u_x(t,0)>            layer amplitude pinned at its wall
    (p1_x - lambda1 p1)(t,L) = 0        no layer content enters at x=L
    p2(t,L) = <lt2, u_x(t,L)> - p1 <lt2, rh1>
    (p2_x - lambda_hat2 p2)(t,0) = 0
    v2(t,L) = 0                         (holds through the subtraction)

with v1(0,x) = <l1, u0'> and p1(0,.) = p2(0,.) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import (
    ConfigError,
    CutoffDominates,
    NoConvergence,
    NumericalError,
)
from .model import TriangularSystem
from .profiles import P_SPACING, U_SPACING, _lattice_corner
from .solver import (
    SolveReport,
    _first_order_minus,
    _first_order_plus,
    _one_sided_minus,
    _one_sided_plus,
)

__all__ = [
    "DecompFields",
    "SourceBudget",
    "decompose",
    "theta_cutoff",
    "source_budget",
    "exp_decay_check",
    "time_integrability_check",
    "reconstruction_residual",
    "w_identity_residual",
]

RATIO_FLOOR = 1e-12          # |v1| below this makes w1/v1 meaningless
CFL_MARCH = 0.4              # advective bound for the component marches


# --------------------------------------------------------------------------
# Cutoff and speed sigma1
# --------------------------------------------------------------------------

def theta_cutoff(s, delta_hat):
    """Odd C^2 cutoff: identity on |s| <= d, zero beyond 3d, quintic bridge.

    The bridge is the unique quintic matching value, slope and curvature of
    the identity at d and of zero at 3d.  C^2 attachment to the identity
    forces a small overshoot (max ~1.27 d near the start of the bridge), so
    the bridge is not monotone; what the decomposition relies on is only
    that theta is odd, smooth, exact below d and dead above 3d.
    """
    s = np.asarray(s, dtype=float)
    d = float(delta_hat)
    if d <= 0:
        raise ConfigError("delta_hat must be positive")
    a = np.abs(s)
    out = np.where(a <= d, s, 0.0)
    mid = (a > d) & (a < 3 * d)
    if np.any(mid):
        xi = (a[mid] - d) / (2 * d)
        h00 = 1 + xi ** 3 * (-10 + xi * (15 - 6 * xi))
        h10 = xi * (1 + xi ** 2 * (-6 + xi * (8 - 3 * xi)))
        out[mid] = np.sign(s[mid]) * d * (h00 + 2 * h10)
    if out.ndim == 0:
        return float(out)
    return out


def _sigma1(lam1_star, w1, v1, delta_hat):
    """sigma1 = lambda1* - theta(w1/v1 + lambda1*), with the ratio guarded.

    Where |v1| < RATIO_FLOOR the ratio is treated as infinite, theta
    evaluates to zero and sigma1 falls back to lambda1*.  Returns
    (sigma1, arg, defined) with arg = w1/v1 + lambda1* (+-inf where
    undefined) for cutoff diagnostics.
    """
    defined = np.abs(v1) >= RATIO_FLOOR
    arg = np.where(defined, np.inf * np.sign(w1 + (w1 == 0.0)), 0.0)
    np.divide(w1, v1, out=arg, where=defined)
    arg[defined] += lam1_star
    arg[~defined] = np.inf
    th = np.zeros_like(w1)
    th[defined] = theta_cutoff(arg[defined], delta_hat)
    return lam1_star - th, arg, defined


# --------------------------------------------------------------------------
# Vectorized frame fields
# --------------------------------------------------------------------------

def _eval2(fun, u1, u2):
    out = np.empty(np.broadcast(u1, u2).shape, dtype=float)
    out[...] = fun(u1, u2)
    return out


def _m0_grid(sys, u1, u2):
    lam1 = _eval2(sys.lambda1, u1, u2)
    lam2 = _eval2(sys.lambda2, u1, u2)
    return _eval2(sys.g, u1, u2) / (lam1 - lam2)


def _m0_partials_grid(sys: TriangularSystem, u1, u2):
    h = 1e-5
    lo1 = sys.u_star.u1 - sys.delta_box
    hi1 = sys.u_star.u1 + sys.delta_box
    lo2 = sys.u_star.u2 - sys.delta_box
    hi2 = sys.u_star.u2 + sys.delta_box
    a1, b1 = np.maximum(u1 - h, lo1), np.minimum(u1 + h, hi1)
    a2, b2 = np.maximum(u2 - h, lo2), np.minimum(u2 + h, hi2)
    d1 = (_m0_grid(sys, b1, u2) - _m0_grid(sys, a1, u2)) / (b1 - a1)
    d2 = (_m0_grid(sys, u1, b2) - _m0_grid(sys, u1, a2)) / (b2 - a2)
    return d1, d2


def _tilde_m_grid(sys: TriangularSystem, u1, u2, v1, sigma1):
    """Second component of rt1(u, v1, sigma1), vectorized.

    Same linear invariance solve as profiles.tilde_r1; exact eigenvector
    slope where |v1| is negligible.
    """
    lam1 = _eval2(sys.lambda1, u1, u2)
    lam2 = _eval2(sys.lambda2, u1, u2)
    m0 = _eval2(sys.g, u1, u2) / (lam1 - lam2)
    d1m0, d2m0 = _m0_partials_grid(sys, u1, u2)
    gap = lam2 - lam1
    denom = gap + (sigma1 - lam1) - v1 * d2m0
    bad = np.abs(denom) < sys.c
    if np.any(bad):
        raise NumericalError(
            f"invariance solve degenerate at {int(bad.sum())} grid points "
            f"(min |denominator| {np.abs(denom).min():.3g} below c = {sys.c})"
        )
    m = ((gap + (sigma1 - lam1)) * m0 + v1 * d1m0) / denom
    return np.where(np.abs(v1) < 1e-14, m0, m)


_KEY_J, _KEY_K = 128, 4096


def _f_hat_grid(sys: TriangularSystem, u1, u2, p1):
    """Layer slope f(u, p1), trilinear from the orbit lattice, vectorized.

    Shares corner values with the scalar reader in `profiles` (same memo,
    same spacing), so pointwise it agrees with profiles.hat_r1 exactly.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    out = _m0_grid(sys, u1, u2)
    mask = np.abs(p1) >= 1e-12
    if not mask.any():
        return out
    ti = (u1[mask] - sys.u_star.u1) / U_SPACING
    tj = (u2[mask] - sys.u_star.u2) / U_SPACING
    tk = p1[mask] / P_SPACING
    i0 = np.floor(ti).astype(np.int64)
    j0 = np.floor(tj).astype(np.int64)
    k0 = np.floor(tk).astype(np.int64)
    wi, wj, wk = ti - i0, tj - j0, tk - k0
    if (np.abs(i0).max() >= 62 or np.abs(j0).max() >= 62
            or np.abs(k0).max() >= 2046):
        raise NumericalError("layer-slope lattice query far outside its chart")
    vals = np.zeros(ti.shape)
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                w = ((wi if di else 1 - wi) * (wj if dj else 1 - wj)
                     * (wk if dk else 1 - wk))
                key = (((i0 + di + 64) * _KEY_J + (j0 + dj + 64)) * _KEY_K
                       + (k0 + dk + 2048))
                uniq, inv = np.unique(key, return_inverse=True)
                kk = uniq % _KEY_K - 2048
                rest = uniq // _KEY_K
                jj = rest % _KEY_J - 64
                ii = rest // _KEY_J - 64
                try:
                    corner = np.array(
                        [_lattice_corner(sys, int(a), int(b), int(c))
                         for a, b, c in zip(ii, jj, kk)]
                    )
                except (ConfigError, NoConvergence) as exc:
                    raise NumericalError(
                        f"layer-slope lattice query outside its chart: {exc}"
                    ) from exc
                vals += w * corner[inv]
    out[mask] = vals
    return out


def _lambda_hat2_rows(sys: TriangularSystem, u1, u2, p1):
    """lambda2(u) - p1 * df/du2 (u, p1); mirrors profiles.hat_lambda2."""
    lam2 = _eval2(sys.lambda2, u1, u2)
    h = U_SPACING
    hi = sys.u_star.u2 + sys.delta_box
    lo = sys.u_star.u2 - sys.delta_box
    up = np.minimum(u2 + h, hi)
    dn = np.maximum(u2 - h, lo)
    dfdu2 = (_f_hat_grid(sys, u1, up, p1) - _f_hat_grid(sys, u1, dn, p1))
    dfdu2 /= (up - dn)
    return lam2 - p1 * dfdu2


# --------------------------------------------------------------------------
# Stacked finite differences (time rows x space columns)
# --------------------------------------------------------------------------

def _ddx_rows(a, dx):
    d = np.empty_like(a)
    d[:, 1:-1] = (a[:, 2:] - a[:, :-2]) / (2 * dx)
    d[:, 0] = (-3 * a[:, 0] + 4 * a[:, 1] - a[:, 2]) / (2 * dx)
    d[:, -1] = (3 * a[:, -1] - 4 * a[:, -2] + a[:, -3]) / (2 * dx)
    return d


def _ddt_rows(a, dt):
    d = np.empty_like(a)
    d[1:-1] = (a[2:] - a[:-2]) / (2 * dt)
    d[0] = (-3 * a[0] + 4 * a[1] - a[2]) / (2 * dt)
    d[-1] = (3 * a[-1] - 4 * a[-2] + a[-3]) / (2 * dt)
    return d


def _d2dx_rows(a, dx):
    d = np.empty_like(a)
    d[:, 1:-1] = (a[:, 2:] - 2 * a[:, 1:-1] + a[:, :-2]) / (dx * dx)
    d[:, 0] = d[:, 1]
    d[:, -1] = d[:, -2]
    return d


def _conservation_residual(phi, c, dx, dt):
    """phi_t + (c phi)_x - phi_xx by centered differences on stored rows."""
    return _ddt_rows(phi, dt) + _ddx_rows(c * phi, dx) - _d2dx_rows(phi, dx)


# --------------------------------------------------------------------------
# Scalar conservation-form march
# --------------------------------------------------------------------------

def _flux_divergence(c, phi, dx, order):
    """(c phi)_x on interior nodes, differenced against the sign of c."""
    q = c * phi
    if order == 2:
        dm, dp = _one_sided_minus(q, dx), _one_sided_plus(q, dx)
    else:
        dm, dp = _first_order_minus(q, dx), _first_order_plus(q, dx)
    return np.where(c[1:-1] >= 0, dm, dp)


def _set_bc_rows(ab, rhs, bc0, bcL, c_new, dx):
    """Write the boundary rows of the banded system.

    Dirichlet rows are identities; Robin rows impose the one-sided
    second-order flux (phi_x - c phi) = value with c read from the
    transport coefficient at the wall.
    """
    kind0, val0 = bc0
    if kind0 == "dirichlet":
        ab[2, 0] = 1.0
        rhs[0] = val0
    else:
        ab[2, 0] = -1.5 / dx - c_new[0]
        ab[1, 1] = 2.0 / dx
        ab[0, 2] = -0.5 / dx
        rhs[0] = val0
    kindL, valL = bcL
    if kindL == "dirichlet":
        ab[2, -1] = 1.0
        rhs[-1] = valL
    else:
        ab[2, -1] = 1.5 / dx - c_new[-1]
        ab[3, -2] = -2.0 / dx
        ab[4, -3] = 0.5 / dx
        rhs[-1] = valL


def _march_scalar(phi0, nt, coeff_pair, bc0_of, bcL_of, dx, dt, theta, order):
    """March phi_t + (c phi)_x = phi_xx with per-step coefficients and BCs.

    coeff_pair(k) returns the coefficient rows at the step's base and end
    times; bc0_of/bcL_of return ("dirichlet", value) or ("robin", flux)
    evaluated at the end time.  Heun predictor-corrector on the advective
    flux, theta-implicit diffusion, banded solves of bandwidth (2,2) so the
    second-order Robin rows fit.
    """
    nx = len(phi0)
    r = theta * dt / (dx * dx)
    re = (1.0 - theta) * dt / (dx * dx)
    template = np.zeros((5, nx))
    template[2, 1:-1] = 1 + 2 * r
    template[1, 2:] = -r
    template[3, :-2] = -r
    out = np.empty((nt, nx))
    out[0] = phi0
    phi = np.array(phi0, dtype=float)
    for k in range(1, nt):
        c_old, c_new = coeff_pair(k)
        base = phi.copy()
        base[1:-1] += re * (phi[2:] - 2 * phi[1:-1] + phi[:-2])
        e0 = -_flux_divergence(c_old, phi, dx, order)
        ab = template.copy()
        rhs = base.copy()
        rhs[1:-1] += dt * e0
        _set_bc_rows(ab, rhs, bc0_of(k), bcL_of(k), c_new, dx)
        star = solve_banded((2, 2), ab, rhs)
        e1 = -_flux_divergence(c_new, star, dx, order)
        rhs = base.copy()
        rhs[1:-1] += 0.5 * dt * (e0 + e1)
        _set_bc_rows(ab, rhs, bc0_of(k), bcL_of(k), c_new, dx)
        phi = solve_banded((2, 2), ab, rhs)
        out[k] = phi
    return out


# --------------------------------------------------------------------------
# The decomposition
# --------------------------------------------------------------------------

@dataclass
class DecompFields:
    """Wave/layer split of a stored run; all arrays are (nt, nx)."""

    x: np.ndarray
    t: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    sigma1: np.ndarray
    source_residual_s1: np.ndarray
    e_defect: np.ndarray
    delta_hat: float
    delta1: float
    meta: dict = field(default_factory=dict)

    @property
    def theta_params(self):
        return {"delta_hat": self.delta_hat}

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])


def decompose(sys: TriangularSystem, report: SolveReport,
              delta_hat: float) -> DecompFields:
    """Split the stored gradient of `report` into the six component fields.

    Requires the full uniform time history of a finite-difference run (the
    marches reuse its grid, scheme weight and upwind order).  delta_hat is
    the half-width of the identity region of the speed cutoff; it must
    exceed 10*delta1 and stay below 1/3.  When 10*delta1 >= 1/3 that window
    is empty and only the largest admissible cutoff delta_hat = 1/3 is
    accepted (recorded in meta["delta_hat_relaxed"]).

    Raises CutoffDominates when more than half of the points carrying
    first-family wave content have their measured speed cut off -- the
    split is not meaningful there, the data is too large.
    """
    if report.diverged:
        raise ConfigError("cannot decompose a diverged run")
    gf = report.field
    nt, nx = gf.nt, gf.nx
    if nt < 3:
        raise ConfigError("need at least 3 stored time rows")
    if nx < 5:
        raise ConfigError("need at least 5 space nodes")
    steps = np.diff(gf.t)
    if not np.allclose(steps, steps[0], rtol=1e-8, atol=1e-14):
        raise ConfigError("decompose needs uniformly stored time rows "
                          "(re-run the solve with store='all')")
    dt = float(steps[0])
    dx = gf.dx
    x, t = gf.x, gf.t

    d1 = report.delta1()
    third = 1.0 / 3.0
    if not 0.0 < delta_hat <= third + 1e-12:
        raise ConfigError(f"delta_hat must lie in (0, 1/3], got {delta_hat}")
    relaxed = False
    if math.isfinite(d1) and d1 > 0.0:
        if 10.0 * d1 < third:
            if delta_hat <= 10.0 * d1:
                raise ConfigError(
                    f"delta_hat = {delta_hat} must exceed 10*delta1 = {10 * d1:.4g}"
                )
        elif abs(delta_hat - third) > 1e-9:
            raise ConfigError(
                f"10*delta1 = {10 * d1:.4g} >= 1/3 leaves no admissible "
                f"delta_hat window; only delta_hat = 1/3 is accepted"
            )
        else:
            relaxed = True

    theta = float(report.meta.get("theta_scheme", 0.5))
    order = int(report.meta.get("upwind_order", 2))

    U = gf.u
    u1, u2 = U[:, :, 0], U[:, :, 1]
    lam1 = _eval2(sys.lambda1, u1, u2)
    lam2 = _eval2(sys.lambda2, u1, u2)
    vmax = max(np.abs(lam1).max(), np.abs(lam2).max())
    if dt > CFL_MARCH * dx / vmax * (1 + 1e-6):
        raise ConfigError(
            f"stored time step {dt:.3e} too coarse for the component marches "
            f"(advective bound {CFL_MARCH * dx / vmax:.3e}); "
            "re-run the solve with store='all'"
        )

    UX = _ddx_rows(U, dx)
    UT = _ddt_rows(U, dt)
    w1 = UT[:, :, 0]
    lam1_star = float(sys.lambda1(sys.u_star.u1, sys.u_star.u2))

    v1 = _march_scalar(
        UX[0, :, 0], nt,
        coeff_pair=lambda k: (lam1[k - 1], lam1[k]),
        bc0_of=lambda k: ("dirichlet", 0.0),
        bcL_of=lambda k: ("robin", w1[k, -1]),
        dx=dx, dt=dt, theta=theta, order=order,
    )
    p1 = _march_scalar(
        np.zeros(nx), nt,
        coeff_pair=lambda k: (lam1[k - 1], lam1[k]),
        bc0_of=lambda k: ("dirichlet", UX[k, 0, 0]),
        bcL_of=lambda k: ("robin", 0.0),
        dx=dx, dt=dt, theta=theta, order=order,
    )

    sigma1, arg, defined = _sigma1(lam1_star, w1, v1, delta_hat)

    m_tilde = _tilde_m_grid(sys, u1, u2, v1, sigma1)

    f_at_L = _f_hat_grid(sys, u1[:, -1], u2[:, -1], p1[:, -1])
    m_at_L = m_tilde[:, -1]
    p2_wall = (UX[:, -1, 1] - m_at_L * UX[:, -1, 0]) \
        - p1[:, -1] * (f_at_L - m_at_L)

    def lamhat2_pair(k):
        lagged = p1[k - 1]
        return (
            _lambda_hat2_rows(sys, u1[k - 1], u2[k - 1], lagged),
            _lambda_hat2_rows(sys, u1[k], u2[k], lagged),
        )

    p2 = _march_scalar(
        np.zeros(nx), nt,
        coeff_pair=lamhat2_pair,
        bc0_of=lambda k: ("robin", 0.0),
        bcL_of=lambda k: ("dirichlet", p2_wall[k]),
        dx=dx, dt=dt, theta=theta, order=order,
    )

    f_hat = _f_hat_grid(sys, u1, u2, p1)
    v2 = UX[:, :, 1] - v1 * m_tilde - p1 * f_hat - p2
    w2 = UT[:, :, 1] - w1 * m_tilde

    lam_hat2 = _lambda_hat2_rows(sys, u1, u2, p1)
    s1 = _conservation_residual(v2, lam2, dx, dt)
    e = w2 - (_ddx_rows(v2, dx) - lam2 * v2
              + _ddx_rows(p2, dx) - lam_hat2 * p2)

    # Cutoff health.  The measured speed -w1/v1 of a diffusing wave always
    # carries an O(curvature/slope) correction, so |arg| > delta_hat on
    # crests and tails is normal and harmless (its cost is budgeted by the
    # cutoff-active source group).  What invalidates the split is sigma1
    # being *fully* clamped -- |arg| >= 3 delta_hat, no speed information
    # at all -- on the dominant share of the gradient mass being split.
    clamped = np.abs(v1) * (np.abs(arg) >= 3.0 * delta_hat)
    total = np.abs(v1) + np.abs(v2) + np.abs(p1) + np.abs(p2)
    denom = total.sum()
    frac = float(clamped.sum() / denom) if denom > 0 else 0.0
    if frac > 0.5:
        raise CutoffDominates(
            f"speed cutoff saturated on {100 * frac:.0f}% of the decomposed "
            f"gradient mass (> 50%): data too large for a meaningful split"
        )

    return DecompFields(
        x=x, t=t, v1=v1, v2=v2, p1=p1, p2=p2, w1=w1, w2=w2,
        sigma1=sigma1, source_residual_s1=s1, e_defect=e,
        delta_hat=float(delta_hat),
        delta1=float(d1) if math.isfinite(d1) else math.nan,
        meta={
            "system": sys.name,
            "L": gf.L,
            "T": float(t[-1]),
            "c": sys.c,
            "dx": dx,
            "dt": dt,
            "theta_scheme": theta,
            "upwind_order": order,
            "cutoff_active_fraction": float(frac),
            "delta_hat_relaxed": relaxed,
            "lambda1": lam1,
            "lambda2": lam2,
            "lambda_hat2": lam_hat2,
            "m_tilde": m_tilde,
            "f_hat": f_hat,
        },
    )


# --------------------------------------------------------------------------
# Pointwise identities
# --------------------------------------------------------------------------

def reconstruction_residual(fields: DecompFields, report: SolveReport):
    """Per-component max residual of u_x against the assembled split.

    The second component vanishes by construction (v2 is defined by
    subtraction); the first measures the gap between the marched v1 + p1
    and the stored derivative -- two independent discretizations of the
    same scalar law.
    """
    gf = report.field
    UX = _ddx_rows(gf.u, gf.dx)
    m, f = fields.meta["m_tilde"], fields.meta["f_hat"]
    comp1 = UX[:, :, 0] - (fields.v1 + fields.p1)
    comp2 = UX[:, :, 1] - (fields.v1 * m + fields.v2
                           + fields.p1 * f + fields.p2)
    return float(np.abs(comp1).max()), float(np.abs(comp2).max())


def w_identity_residual(fields: DecompFields):
    """w1 - (v1_x - lambda1 v1 + p1_x - lambda1 p1), as an (nt, nx) array."""
    lam1 = fields.meta["lambda1"]
    dx = fields.dx
    return fields.w1 - (_ddx_rows(fields.v1, dx) - lam1 * fields.v1
                        + _ddx_rows(fields.p1, dx) - lam1 * fields.p1)


# --------------------------------------------------------------------------
# Budgets and checks
# --------------------------------------------------------------------------

@dataclass
class SourceBudget:
    """Quadratures of everything the BV argument needs to be small."""

    integral_s1: float           # iint |s1| dx dt
    integral_s2: float           # iint |s2| dx dt (residual of w2's law)
    boundary_integrals: dict     # the six boundary flux time-integrals
    e_integral: float            # iint |e| dx dt
    e_boundary: float            # int |e(s, 0)| ds
    termwise: dict               # the five grouped interaction bounds


def _iint(a, x, t):
    return float(np.trapezoid(np.trapezoid(np.abs(a), x, axis=1), t))


def source_budget(fields: DecompFields, report: SolveReport) -> SourceBudget:
    """Evaluate the source and boundary-flux budget of a decomposition.

    Boundary entries are int |phi_x - c phi| dt at the named wall; the two
    Robin-enforced ones (p1 at L, p2 at 0) should sit at discretization
    level.  The termwise dict integrates the five interaction groups that
    dominate |s1| + |s2|: transversal wave interactions, wave-layer, layer-
    layer, the variation of the measured speed sigma1 where it is trusted,
    and the region where the cutoff is active.
    """
    x, t, dx, dt = fields.x, fields.t, fields.dx, fields.dt
    d1 = fields.delta1 if math.isfinite(fields.delta1) else 0.0
    lam1 = fields.meta["lambda1"]
    lam2 = fields.meta["lambda2"]
    lam_hat2 = fields.meta["lambda_hat2"]
    v1, v2, p1, p2 = fields.v1, fields.v2, fields.p1, fields.p2
    w1, w2 = fields.w1, fields.w2

    v1x, v2x = _ddx_rows(v1, dx), _ddx_rows(v2, dx)
    p1x, p2x = _ddx_rows(p1, dx), _ddx_rows(p2, dx)
    w1x, w2x = _ddx_rows(w1, dx), _ddx_rows(w2, dx)

    fl_v1 = v1x - lam1 * v1
    fl_v2 = v2x - lam2 * v2
    fl_p1 = p1x - lam1 * p1
    fl_p2 = p2x - lam_hat2 * p2
    boundary = {
        "v2_at_0": float(np.trapezoid(np.abs(fl_v2[:, 0]), t)),
        "v1_at_L": float(np.trapezoid(np.abs(fl_v1[:, -1]), t)),
        "p1_at_0": float(np.trapezoid(np.abs(fl_p1[:, 0]), t)),
        "p1_at_L": float(np.trapezoid(np.abs(fl_p1[:, -1]), t)),
        "p2_at_0": float(np.trapezoid(np.abs(fl_p2[:, 0]), t)),
        "p2_at_L": float(np.trapezoid(np.abs(fl_p2[:, -1]), t)),
    }

    s2 = _conservation_residual(w2, lam2, dx, dt)

    absv = {1: np.abs(v1), 2: np.abs(v2)}
    absw = {1: np.abs(w1), 2: np.abs(w2)}
    absvx = {1: np.abs(v1x), 2: np.abs(v2x)}
    abswx = {1: np.abs(w1x), 2: np.abs(w2x)}
    absp = {1: np.abs(p1), 2: np.abs(p2)}
    abspx = {1: np.abs(p1x), 2: np.abs(p2x)}

    interaction = np.zeros_like(v1)
    for i, j in ((1, 2), (2, 1)):
        interaction += absv[i] * (absv[j] + absvx[j] + absw[j] + abswx[j])
        interaction += absw[i] * (absw[j] + absvx[j])
    wave_layer = np.zeros_like(v1)
    for i in (1, 2):
        for j in (1, 2):
            wave_layer += (absp[i] + abspx[i]) * (
                absv[j] + absvx[j] + absw[j] + abswx[j])
    layer_layer = np.abs(fl_p1) * (abspx[1] + absp[2])

    ratio = np.where(np.abs(v1) >= RATIO_FLOOR, w1 / np.where(
        np.abs(v1) >= RATIO_FLOOR, v1, 1.0), 0.0)
    chi = (np.abs(w1) <= d1 * np.abs(v1)).astype(float)
    sigma_var = (np.abs(w1 * v1x - v1 * w1x)
                 + v1 ** 2 * _ddx_rows(ratio, dx) ** 2 * chi)
    cutoff_active = np.abs(w1 + fields.sigma1 * v1) * (
        absv[1] + absvx[1] + absw[1] + abswx[1])

    budget = SourceBudget(
        integral_s1=_iint(fields.source_residual_s1, x, t),
        integral_s2=_iint(s2, x, t),
        boundary_integrals=boundary,
        e_integral=_iint(fields.e_defect, x, t),
        e_boundary=float(np.trapezoid(np.abs(fields.e_defect[:, 0]), t)),
        termwise={
            "interaction": _iint(interaction, x, t),
            "wave_layer": _iint(wave_layer, x, t),
            "layer_layer": _iint(layer_layer, x, t),
            "sigma_variation": _iint(sigma_var, x, t),
            "cutoff_active": _iint(cutoff_active, x, t),
        },
    )
    flat = [budget.integral_s1, budget.integral_s2, budget.e_integral,
            budget.e_boundary, *budget.boundary_integrals.values(),
            *budget.termwise.values()]
    if not all(math.isfinite(v) for v in flat):
        raise NumericalError("source budget contains non-finite entries")
    return budget


def exp_decay_check(fields: DecompFields) -> dict:
    """Envelope prefactors of the layer fields against their exponentials.

    C1 is the smallest constant with |p1| <= C1 delta1 exp(-c x / 2)
    everywhere, C2 the analogue for |p2| against exp(c (x - L) / 2);
    ok iff both are at most 20.
    """
    c = fields.meta["c"]
    L = fields.meta["L"]
    d1 = fields.delta1 if math.isfinite(fields.delta1) else 0.0
    env1 = np.exp(-c * fields.x / 2.0)
    env2 = np.exp(c * (fields.x - L) / 2.0)

    def prefactor(p, env):
        peak = np.abs(p).max()
        if peak == 0.0:
            return 0.0
        if d1 <= 0.0:
            return math.inf
        return float((np.abs(p) / (d1 * env)).max())

    c1 = prefactor(fields.p1, env1)
    c2 = prefactor(fields.p2, env2)
    return {"C1": c1, "C2": c2, "ok": bool(c1 <= 20.0 and c2 <= 20.0)}


def time_integrability_check(fields: DecompFields,
                             y_values=None) -> dict:
    """Time integrals of the wave fields at fixed depths y.

    Integrates |v_i|, |v_ix|, |w_i|, |w_ix| over the stored window at each
    requested y (default 0, L/2, L, snapped to the grid) and records the
    largest column in units of delta1.
    """
    L = fields.meta["L"]
    if y_values is None:
        y_values = (0.0, L / 2.0, L)
    x, t, dx = fields.x, fields.t, fields.dx
    idx = [int(np.argmin(np.abs(x - y))) for y in y_values]
    cols = {
        "v1": fields.v1, "v1x": _ddx_rows(fields.v1, dx),
        "w1": fields.w1, "w1x": _ddx_rows(fields.w1, dx),
        "v2": fields.v2, "v2x": _ddx_rows(fields.v2, dx),
        "w2": fields.w2, "w2x": _ddx_rows(fields.w2, dx),
    }
    table = {
        name: np.array([np.trapezoid(np.abs(a[:, j]), t) for j in idx])
        for name, a in cols.items()
    }
    peak = max(float(v.max()) for v in table.values())
    d1 = fields.delta1 if math.isfinite(fields.delta1) else 0.0
    if peak == 0.0:
        big_c = 0.0
    elif d1 > 0.0:
        big_c = peak / d1
    else:
        big_c = math.inf
    return {
        "y": [float(x[j]) for j in idx],
        "table": table,
        "C": big_c,
        "ok": bool(math.isfinite(big_c)),
    }
