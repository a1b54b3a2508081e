"""Inviscid Riemann and boundary-Riemann solvers.

The zero-viscosity solutions constructed here are the limits of the parabolic
runs as the viscosity vanishes; locally they are self-similar fans of
elementary waves.  The states connectable to an anchor state by waves of one
family form a curve obtained as a fixed point of the envelope system

    u(tau)     = anchor + int_0^tau  rt_fam(u, v, sigma) dtau,
    f(tau)     = int_0^tau lambda_fam(u) dtau,
    v(tau)     = env f - f,
    sigma(tau) = d(env f)/dtau,

where env is the least concave majorant of f for s > 0 and the greatest
convex minorant for s < 0 -- the classical entropy choice: chords where the
jump is compressive (shock pieces travelling at the chord slope), f itself
where the wave spreads (rarefaction pieces).  The curve is traversed from the
anchor (tau = 0, the fast edge of its fan) toward tau = s, and sigma is
nonincreasing along the traversal for either sign of s.

Boundary problems attach one wall object each: at x = 0 the hyperbolic trace
is connected to the boundary datum through a stable orbit of
u_xx = A(u) u_x (a family-1 layer); at the right wall through an unstable
orbit (family-2 layer).  Both wall solves are damped Newton iterations; the
lower-triangular structure pins part of the answer exactly (family-1 curves
move u1 by exactly their parameter, right-wall layers move only u2), which
supplies the starting guesses and, for the right wall, reduces the mirror
composition u0 = T1_{s1} u_trace, ubL = Z_{s2} u_trace to a single scalar
unknown.

Conventions: fans evaluate at xi = x/t (for the right wall, xi = (x-L)/t,
which is nonpositive inside the domain); when xi ties the speed of a jump,
the state on the left of the jump is returned.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from .decomposition import _tilde_m_grid
from .errors import (
    ConfigError,
    NoContraction,
    NoConvergence,
    NoSolution,
    NumericalError,
)
from .model import State, TriangularSystem, eigensystem
from .profiles import LayerOrbit, stable_layer, unstable_layer

ENVELOPE_N = 400          # tau samples per admissible curve
CURVE_TOL = 1e-10
EMPTY_WAVE = 1e-13        # |s| below this is "no wave of that family"
LAYER_EFOLDS = 11.0       # decay lengths per wall-layer orbit domain


# --------------------------------------------------------------------------
# Concave envelopes
# --------------------------------------------------------------------------

def envelope_concave(tau, f):
    """Least concave majorant of the samples (tau, f), with its derivative.

    tau must be strictly increasing with at least 3 points.  Returns
    (env, denv): env[i] >= f[i] with equality at both ends and at every hull
    vertex; denv[i] is the slope of the hull segment to the right of tau[i]
    (the last entry repeats its neighbour), a nonincreasing sequence.
    Collinear points are kept as hull vertices, so affine stretches of f are
    reproduced to round-off (bitwise when the samples are exactly collinear).
    """
    tau = np.asarray(tau, dtype=float)
    f = np.asarray(f, dtype=float)
    n = len(tau)
    if n < 3:
        raise ConfigError(f"envelope needs at least 3 samples, got {n}")
    if np.any(np.diff(tau) <= 0.0):
        raise ConfigError("envelope grid must be strictly increasing")
    hull = []
    for i in range(n):
        while len(hull) >= 2:
            i1, i2 = hull[-2], hull[-1]
            cross = (tau[i2] - tau[i1]) * (f[i] - f[i1]) \
                - (f[i2] - f[i1]) * (tau[i] - tau[i1])
            if cross > 0.0:      # middle point strictly below the chord
                hull.pop()
            else:
                break
        hull.append(i)
    env = np.interp(tau, tau[hull], f[hull])
    env = np.maximum(env, f)     # guard round-off below f between vertices
    denv = np.empty(n)
    denv[:-1] = np.diff(env) / np.diff(tau)
    denv[-1] = denv[-2]
    return env, denv


def _signed_envelope(tau, f):
    """Envelope along a traversal-ordered grid (0 -> s, either sign of s).

    For s > 0: least concave majorant; for s < 0: greatest convex minorant,
    computed as -conc(-f) on the reversed grid.  Returns (env, sigma) in
    traversal order; env - f has the sign of s, sigma is nonincreasing.
    """
    if len(tau) >= 2 and tau[1] >= tau[0]:
        return envelope_concave(tau, f)
    env_r, _ = envelope_concave(tau[::-1], -f[::-1])
    env = -env_r[::-1]
    sigma = np.empty(len(tau))
    sigma[:-1] = np.diff(env) / np.diff(tau)
    sigma[-1] = sigma[-2]
    return env, sigma


# --------------------------------------------------------------------------
# Admissible-state curves
# --------------------------------------------------------------------------

def _refined_m(sys, u, tau, v, sigma, sweeps=2):
    """Second component of the family-1 travelling direction along a curve.

    Along a shock piece traversed from its fast (anchor) side the gradient
    coefficient of the underlying viscous profile is -v (the envelope gap is
    nonnegative for s > 0 while u1 falls across a compressive profile), so
    the pointwise linear invariance solve is seeded at -v.  Fixed sweeps of
    the exact profile relation

        p1 dm/dtau = (lambda2 - lambda1) (m - m0),      p1 = -v,

    follow; the wave speed cancels in it, each sweep gains one order in v,
    and on rarefaction stretches (v = 0) m stays exactly m0.  Two sweeps put
    the closure error below the quadrature error of the curve integral for
    every |s| up to the box scale.
    """
    m = _tilde_m_grid(sys, u[:, 0], u[:, 1], -v, sigma)
    lam1 = np.broadcast_to(
        np.asarray(sys.lambda1(u[:, 0], u[:, 1]), dtype=float), v.shape)
    lam2 = np.broadcast_to(
        np.asarray(sys.lambda2(u[:, 0], u[:, 1]), dtype=float), v.shape)
    gv = np.broadcast_to(
        np.asarray(sys.g(u[:, 0], u[:, 1]), dtype=float), v.shape)
    gap = lam2 - lam1
    m0 = gv / (lam1 - lam2)
    for _ in range(sweeps):
        m = m0 - v * np.gradient(m, tau) / gap
    return m

@dataclass(frozen=True)
class AdmissibleCurve:
    """One-family wave curve through `anchor`, traversed from tau=0 to s.

    samples: u[k] is the state at tau[k]; v[k] the wave strength (the gap
    between the integrated speed and its envelope, signed like s); sigma[k]
    the assigned propagation speed, nonincreasing along the traversal.
    """

    family: int
    anchor: np.ndarray
    s_max: float
    tau: np.ndarray
    u: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def endpoint(self) -> np.ndarray:
        return self.u[-1].copy()

    @property
    def is_empty(self) -> bool:
        return abs(self.s_max) <= EMPTY_WAVE


def _trivial_curve(sys, family, anchor, s):
    star = eigensystem(sys, State.of(tuple(anchor)))
    lam = star.lambda1 if family == 1 else star.lambda2
    one = np.array([0.0, s])
    return AdmissibleCurve(
        family=family, anchor=np.asarray(anchor, float), s_max=float(s),
        tau=one, u=np.vstack([anchor, anchor]),
        v=np.zeros(2), sigma=np.full(2, lam),
        meta={"iterations": 0},
    )


def admissible_curve(sys: TriangularSystem, family: int, anchor, s: float,
                     tol: float = CURVE_TOL, n: int = ENVELOPE_N,
                     max_iter: int = 60) -> AdmissibleCurve:
    """Fixed point of the envelope system for one wave family.

    Family 2 moves along r2 = (0,1) exactly, so its state samples are exact
    after one pass and only the envelope matters; family 1 iterates the
    travelling-wave direction (1, m~(u, v, sigma)) until successive state
    curves agree to `tol` in the sup norm.
    """
    if family not in (1, 2):
        raise ConfigError(f"family must be 1 or 2, got {family}")
    anchor = State.of(anchor).as_array()
    s = float(s)
    if abs(s) <= EMPTY_WAVE:
        return _trivial_curve(sys, family, anchor, s)

    tau = np.linspace(0.0, s, n)
    star = eigensystem(sys, State.of(tuple(anchor)))
    lam_fun = sys.lambda1 if family == 1 else sys.lambda2
    r0 = star.r1 if family == 1 else star.r2
    u = anchor + tau[:, None] * r0

    prev_gap = math.inf
    for it in range(1, max_iter + 1):
        lam = np.broadcast_to(
            np.asarray(lam_fun(u[:, 0], u[:, 1]), dtype=float), tau.shape)
        f = cumulative_trapezoid(lam, tau, initial=0.0)
        env, sigma = _signed_envelope(tau, f)
        v = env - f
        if family == 2:
            direction = np.tile(np.array([0.0, 1.0]), (n, 1))
        else:
            m = _refined_m(sys, u, tau, v, sigma)
            direction = np.stack([np.ones(n), m], axis=-1)
        u_new = anchor + cumulative_trapezoid(direction, tau, initial=0.0,
                                              axis=0)
        gap = float(np.abs(u_new - u).max())
        u = u_new
        if gap <= tol:
            lam = np.broadcast_to(
                np.asarray(lam_fun(u[:, 0], u[:, 1]), dtype=float), tau.shape)
            f = cumulative_trapezoid(lam, tau, initial=0.0)
            env, sigma = _signed_envelope(tau, f)
            v = env - f
            return AdmissibleCurve(
                family=family, anchor=anchor, s_max=s, tau=tau, u=u,
                v=v, sigma=sigma, meta={"iterations": it},
            )
        if it > 3 and gap > prev_gap:
            raise NoContraction(
                f"wave-curve fixed point diverging at |s| = {abs(s):.3g}",
                factor=gap / prev_gap,
            )
        prev_gap = gap
    raise NoContraction(
        f"wave-curve fixed point did not reach {tol:.1e} in {max_iter} sweeps",
        factor=gap / prev_gap if math.isfinite(prev_gap) else math.inf,
    )


# --------------------------------------------------------------------------
# Damped Newton on Lipschitz maps
# --------------------------------------------------------------------------

def _newton_damped(fun, x0, tol=1e-10, max_iter=40, fd_step=1e-7):
    """Newton with forward-difference Jacobian and Armijo backtracking.

    Works in any small dimension; envelope switches make `fun` only
    Lipschitz, which the damping absorbs.  Raises NoSolution when no damped
    step reduces the residual.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    k = len(x)
    F = np.atleast_1d(fun(x))
    nrm = float(np.abs(F).max())
    for _ in range(max_iter):
        if nrm <= tol:
            return x
        J = np.empty((k, k))
        for j in range(k):
            h = fd_step * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += h
            J[:, j] = (np.atleast_1d(fun(xp)) - F) / h
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise NoSolution(f"singular Jacobian in wave solve: {exc}")
        alpha = 1.0
        while alpha >= 2.0 ** -12:
            xn = x + alpha * step
            Fn = np.atleast_1d(fun(xn))
            nn = float(np.abs(Fn).max())
            if nn <= (1.0 - 1e-4 * alpha) * nrm:
                x, F, nrm = xn, Fn, nn
                break
            alpha *= 0.5
        else:
            raise NoSolution(
                f"no damped step reduces the residual (|F| = {nrm:.3e})"
            )
    if nrm <= tol:
        return x
    raise NoSolution(f"wave solve stalled at residual {nrm:.3e}")


# --------------------------------------------------------------------------
# Wave fans
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _FanBranch:
    """One family's waves, speed-searchable: sigma nonincreasing with tau."""

    curve: AdmissibleCurve

    @property
    def speed_min(self):
        return float(self.curve.sigma[-1])

    @property
    def speed_max(self):
        return float(self.curve.sigma[0])

    def sample(self, xi):
        """State at x/t = xi: sigma inversion, interpolated on rarefactions.

        On a flat sigma run (a jump) the inversion is set-valued; the left
        state -- the sample with the largest tau among the ties -- is
        returned, so evaluation right at a shock speed gives the slow side.
        """
        sig = self.curve.sigma
        u = self.curve.u
        # last index with sigma >= xi  (sigma nonincreasing)
        idx = int(np.searchsorted(-sig, -xi, side="right")) - 1
        idx = min(max(idx, 0), len(sig) - 1)
        if idx < len(sig) - 1 and sig[idx] > xi > sig[idx + 1]:
            w = (sig[idx] - xi) / (sig[idx] - sig[idx + 1])
            return u[idx] + w * (u[idx + 1] - u[idx])
        return u[idx].copy()


@dataclass
class WaveFan:
    """Self-similar fan: ordered wave segments plus optional wall objects.

    `segments` lists constant regions, rarefaction-like pieces and jumps in
    increasing-speed order; `trace0` is the hyperbolic trace at the active
    wall for boundary fans (u(t,0+), or u(t,L-) for the right wall);
    `left_layer` is the wall layer orbit attached there (stable at x=0,
    unstable at x=L -- the name follows the x=0 case, which the right wall
    mirrors).
    """

    segments: List[dict]
    left_layer: Optional[LayerOrbit] = None
    trace0: Optional[State] = None
    meta: dict = field(default_factory=dict)
    _branches: List[_FanBranch] = field(default_factory=list, repr=False)
    _consts: List[np.ndarray] = field(default_factory=list, repr=False)

    def evaluate(self, xi):
        """State at x/t = xi (scalar or array)."""
        xi_arr = np.asarray(xi, dtype=float)
        if xi_arr.ndim == 0:
            return self._eval_scalar(float(xi_arr))
        out = np.empty(xi_arr.shape + (2,))
        flat = xi_arr.reshape(-1)
        for k, val in enumerate(flat):
            out.reshape(-1, 2)[k] = self._eval_scalar(float(val))
        return out

    def _eval_scalar(self, xi):
        for i, br in enumerate(self._branches):
            if xi < br.speed_min:
                return self._consts[i].copy()
            if xi <= br.speed_max:
                return br.sample(xi)
        return self._consts[-1].copy()


def _constant_segment(state, lo, hi):
    return {"speed_lo": lo, "speed_hi": hi, "kind": "constant_state",
            "states": [np.asarray(state, float).copy()]}


def _branch_segments(curve: AdmissibleCurve, flat_tol=1e-9):
    """Split a curve into jump and rarefaction-like segments.

    Grid intervals sharing one envelope slope form a hull segment; hull
    segments spanning several intervals are jumps (chords -- including
    contacts, where v = 0 but all speeds coincide), the maximal runs of
    single-interval segments are rarefaction-like.
    """
    tau, u, sig = curve.tau, curve.u, curve.sigma
    n = len(tau)
    if n < 2:
        return []
    scale = max(1.0, float(np.abs(sig).max()))
    slopes = sig[:-1]
    runs = []                   # (start_interval, end_interval) inclusive
    start = 0
    for i in range(1, n - 1):
        if abs(slopes[i] - slopes[start]) > flat_tol * scale:
            runs.append((start, i - 1))
            start = i
    runs.append((start, n - 2))
    segments = []
    rare_start = None

    def flush_rare(last_iv):
        nonlocal rare_start
        if rare_start is None:
            return
        a, b = rare_start, last_iv
        segments.append({
            "speed_lo": float(sig[b]), "speed_hi": float(sig[a]),
            "kind": "rarefaction_like",
            "states": [u[b + 1].copy(), u[a].copy()],
        })
        rare_start = None

    for a, b in runs:
        if b > a:               # chord across several intervals: a jump
            flush_rare(a - 1)
            segments.append({
                "speed_lo": float(slopes[a]), "speed_hi": float(slopes[a]),
                "kind": "jump",
                "states": [u[b + 1].copy(), u[a].copy()],
            })
        else:
            if rare_start is None:
                rare_start = a
    flush_rare(runs[-1][1])
    # traversal order has decreasing speed; fans list increasing speed
    return segments[::-1]


def _assemble_fan(branches, consts, left_layer=None, trace0=None, meta=None):
    live = [_FanBranch(c) for c in branches if not c.is_empty]
    segs = []
    lo = -math.inf
    kept = [consts[0]]
    ptr = 0
    for c in branches:
        if c.is_empty:
            ptr += 1
            continue
        br = _FanBranch(c)
        segs.append(_constant_segment(kept[-1], lo, br.speed_min))
        segs.extend(_branch_segments(c))
        lo = br.speed_max
        ptr += 1
        kept.append(consts[ptr])
    segs.append(_constant_segment(kept[-1], lo, math.inf))
    return WaveFan(segments=segs, left_layer=left_layer, trace0=trace0,
                   meta=meta or {}, _branches=live, _consts=kept)


# --------------------------------------------------------------------------
# The Riemann solver
# --------------------------------------------------------------------------

def _check_box(sys, *states):
    for st in states:
        a = State.of(st)
        if not sys.in_box(a.u1, a.u2):
            raise ConfigError(
                f"state {a} outside the admissible box of half-width "
                f"{sys.delta_box}"
            )


def solve_riemann(sys: TriangularSystem, u_minus, u_plus,
                  tol: float = 1e-10) -> WaveFan:
    """Fan between far states: u_minus = T1_{s1} (T2_{s2} u_plus).

    The two amplitudes are found by damped Newton; the starting guess is the
    coordinate split of u_minus - u_plus in the eigenbasis at u_plus (exact
    for constant-coefficient systems, and s1 is exact for every triangular
    system since family-1 curves move u1 by exactly s1).
    """
    um = State.of(u_minus).as_array()
    up = State.of(u_plus).as_array()
    _check_box(sys, tuple(um), tuple(up))
    delta = um - up
    if np.abs(delta).max() <= EMPTY_WAVE:
        c1 = _trivial_curve(sys, 1, up, 0.0)
        c2 = _trivial_curve(sys, 2, up, 0.0)
        return _assemble_fan([c1, c2], [um, up.copy(), up],
                             meta={"s1": 0.0, "s2": 0.0, "middle": up.copy()})

    star = eigensystem(sys, State.of(tuple(up)))
    s0 = np.array([float(star.ell1 @ delta), float(star.ell2 @ delta)])

    def curves(s):
        c2 = admissible_curve(sys, 2, up, s[1], tol=tol)
        c1 = admissible_curve(sys, 1, c2.endpoint, s[0], tol=tol)
        return c1, c2

    def residual(s):
        c1, _ = curves(s)
        return c1.endpoint - um

    try:
        s = _newton_damped(residual, s0, tol=tol)
    except NumericalError as exc:
        raise NoSolution(f"Riemann data outside the solvable ball: {exc}")
    s[np.abs(s) <= 10.0 * tol] = 0.0    # sub-tolerance strengths are no wave
    c1, c2 = curves(s)
    mid = c2.endpoint
    return _assemble_fan(
        [c1, c2], [um, mid, up],
        meta={"s1": float(s[0]), "s2": float(s[1]), "middle": mid,
              "residual": float(np.abs(c1.endpoint - um).max())},
    )


# --------------------------------------------------------------------------
# Wall layers and boundary curves
# --------------------------------------------------------------------------

def _solve_layer_strength(wall_offset, s, root_sign, lam_local, cap):
    """Root of wall_offset(p0) = s, bracketing from the linear estimate.

    The offset is monotone in p0 (toward root_sign) with slope ~ 1/lambda at
    the origin, so p0 ~ |s|*lambda; candidates grow from just above that,
    clipped at the layer solver's strength cap.  An orbit that escapes while
    expanding means the requested offset is not achievable.
    """
    lo, f_lo = 0.0, -s
    hi_prev = 0.0
    for k in (1.05, 1.35, 1.8, 2.4, 3.2, 4.5, 6.0):
        hi = root_sign * min(abs(s) * lam_local * k, cap)
        if abs(hi) <= abs(hi_prev):
            break
        try:
            f_hi = wall_offset(hi) - s
        except (NoConvergence, ConfigError) as exc:
            raise NoConvergence(
                f"wall layer escapes before reaching offset {s:.3g}: {exc}"
            )
        if f_lo * f_hi <= 0.0:
            a, b = sorted((lo, hi))
            return brentq(lambda p: wall_offset(p) - s, a, b,
                          xtol=1e-14, rtol=8.9e-16)
        lo, f_lo, hi_prev = hi, f_hi, hi
    raise NoConvergence(
        f"could not bracket the wall layer for offset {s:.3g}"
    )


def _layer_domain(lam_local):
    """Orbit domain length: enough decay lengths for a small endpoint gap,
    short enough that shooting against the growing mode stays conditioned."""
    return min(16.0, max(6.0, LAYER_EFOLDS / max(lam_local, 0.25)))


def _z1_shoot(sys: TriangularSystem, u_bar, s1: float):
    """Stable orbit through u_bar whose wall value offsets u1 by s1.

    Returns (wall state, orbit).  The wall offset is monotone in the orbit
    strength p1(0) (the first layer equation is p1' = lambda1 p1 with
    lambda1 <= -c), so a bracketed root find is safe.
    """
    ub = State.of(u_bar).as_array()
    lam_local = abs(float(sys.lambda1(ub[0], ub[1])))
    xm = _layer_domain(lam_local)
    if abs(s1) <= EMPTY_WAVE:
        orbit = stable_layer(sys, tuple(ub), 0.0, x_max=xm)
        return ub.copy(), orbit

    def wall_offset(p10):
        orbit = stable_layer(sys, tuple(ub), p10, x_max=xm)
        return float(orbit.u[0, 0] - ub[0])

    cap = 0.25 * sys.delta_box * (1.0 - 1e-9)
    p10 = _solve_layer_strength(wall_offset, s1, -math.copysign(1.0, s1),
                                lam_local, cap)
    orbit = stable_layer(sys, tuple(ub), p10, x_max=xm)
    return orbit.u[0].copy(), orbit


def boundary_curve_Z1(sys: TriangularSystem, u_bar, s1: float) -> State:
    """Point of the stable boundary curve: wall states of layers into u_bar.

    Parameterized by the offset of the first component, so the tangent at
    s1 = 0 is r1(u_bar) normalized to first component 1.
    """
    state, _ = _z1_shoot(sys, u_bar, s1)
    return State(float(state[0]), float(state[1]))


def _z2_right_shoot(sys: TriangularSystem, u_bar, s2: float):
    """Unstable orbit through u_bar whose wall value offsets u2 by s2.

    The right-wall mirror of _z1_shoot: for lower-triangular systems the
    unstable manifold of the layer equation keeps u1 frozen exactly, so the
    wall state is (u_bar1, u_bar2 + s2).
    """
    ub = State.of(u_bar).as_array()
    lam_local = abs(float(sys.lambda2(ub[0], ub[1])))
    xm = _layer_domain(lam_local)
    if abs(s2) <= EMPTY_WAVE:
        orbit = unstable_layer(sys, tuple(ub), 0.0, x_max=xm)
        return ub.copy(), orbit

    def wall_offset(p20):
        orbit = unstable_layer(sys, tuple(ub), p20, x_max=xm)
        return float(orbit.u[-1, 1] - ub[1])

    cap = 0.25 * sys.delta_box * (1.0 - 1e-9)
    p20 = _solve_layer_strength(wall_offset, s2, math.copysign(1.0, s2),
                                lam_local, cap)
    orbit = unstable_layer(sys, tuple(ub), p20, x_max=xm)
    return orbit.u[-1].copy(), orbit


# --------------------------------------------------------------------------
# The boundary Riemann solver
# --------------------------------------------------------------------------

def solve_boundary_riemann(sys: TriangularSystem, u0, ub,
                           side: str = "left_x0",
                           tol: float = 1e-10) -> WaveFan:
    """Fan + wall layer for constant data u0 inside, ub on one wall.

    left_x0: solves ub = Z1_{s1}(T2_{s2} u0); the fan carries the entering
    family-2 waves, trace0 = T2_{s2} u0 is the hyperbolic trace (not, in
    general, the boundary datum), and left_layer connects ub to trace0.

    right_xL: the mirror problem.  Family-1 waves enter; the composition
    u0 = T1_{s1} u_trace, ub = Z_{s2} u_trace collapses to one scalar
    unknown (the trace's second component) because the right-wall layer
    moves only u2 and family-1 curves move u1 by exactly s1.  The fan is
    parameterized by xi = (x - L)/t <= 0, trace0 is u(t, L-), and
    left_layer holds the (unstable) layer at x = L.
    """
    u0 = State.of(u0).as_array()
    ubv = State.of(ub).as_array()
    _check_box(sys, tuple(u0), tuple(ubv))
    if side == "left_x0":
        return _boundary_left(sys, u0, ubv, tol)
    if side == "right_xL":
        return _boundary_right(sys, u0, ubv, tol)
    raise ConfigError(f"side must be left_x0 or right_xL, got {side!r}")


def _boundary_left(sys, u0, ub, tol):
    delta = ub - u0
    if np.abs(delta).max() <= EMPTY_WAVE:
        orbit = _z1_shoot(sys, u0, 0.0)[1]
        c2 = _trivial_curve(sys, 2, u0, 0.0)
        fan = _assemble_fan(
            [c2], [u0.copy(), u0.copy()], left_layer=orbit,
            trace0=State(float(u0[0]), float(u0[1])),
            meta={"side": "left_x0", "s1": 0.0, "s2": 0.0,
                  "layer_endpoint_gap": 0.0},
        )
        fan.segments[0]["speed_lo"] = 0.0
        return fan
    star = eigensystem(sys, State.of(tuple(u0)))
    s0 = np.array([float(star.ell1 @ delta), float(star.ell2 @ delta)])

    def pieces(s):
        c2 = admissible_curve(sys, 2, u0, s[1], tol=tol)
        wall, orbit = _z1_shoot(sys, c2.endpoint, s[0])
        return c2, wall, orbit

    def residual(s):
        _, wall, _ = pieces(s)
        return wall - ub

    try:
        s = _newton_damped(residual, s0, tol=tol)
    except NumericalError as exc:
        raise NoSolution(f"boundary data outside the solvable ball: {exc}")
    s[np.abs(s) <= 10.0 * tol] = 0.0
    c2, wall, orbit = pieces(s)
    trace = c2.endpoint
    # distance from equilibrium at the truncated far end of the orbit
    # (the state is seeded there, so |p| carries the actual mismatch)
    gap = float(max(np.abs(orbit.u[-1] - trace).max(),
                    np.abs(orbit.p[-1]).max()))
    fan = _assemble_fan(
        [c2], [trace, u0.copy()], left_layer=orbit,
        trace0=State(float(trace[0]), float(trace[1])),
        meta={"side": "left_x0", "s1": float(s[0]), "s2": float(s[1]),
              "layer_endpoint_gap": gap,
              "residual": float(np.abs(wall - ub).max())},
    )
    fan.segments[0]["speed_lo"] = 0.0   # fan lives in x/t >= 0
    return fan


def _boundary_right(sys, u0, ub, tol):
    delta = ub - u0
    if np.abs(delta).max() <= EMPTY_WAVE:
        orbit = _z2_right_shoot(sys, u0, 0.0)[1]
        c1 = _trivial_curve(sys, 1, u0, 0.0)
        fan = _assemble_fan(
            [c1], [u0.copy(), u0.copy()], left_layer=orbit,
            trace0=State(float(u0[0]), float(u0[1])),
            meta={"side": "right_xL", "s1": 0.0, "s2": 0.0,
                  "layer_endpoint_gap": 0.0},
        )
        fan.segments[-1]["speed_hi"] = 0.0
        return fan
    s1 = float(u0[0] - ub[0])    # layer keeps u1, the curve moves it by s1
    star = eigensystem(sys, State.of(tuple(u0)))

    def trace_of(y):
        return np.array([ub[0], float(y)])

    def residual(yv):
        c1 = admissible_curve(sys, 1, trace_of(yv[0]), s1, tol=tol)
        return np.array([c1.endpoint[1] - u0[1]])

    y0 = np.array([u0[1] - s1 * float(star.r1[1])])
    try:
        y = _newton_damped(residual, y0, tol=tol)
    except NumericalError as exc:
        raise NoSolution(f"boundary data outside the solvable ball: {exc}")
    trace = trace_of(y[0])
    c1 = admissible_curve(sys, 1, trace, s1, tol=tol)
    s2 = float(ub[1] - trace[1])
    if abs(s2) <= 10.0 * tol:
        s2 = 0.0
    wall, orbit = _z2_right_shoot(sys, trace, s2)
    gap = float(max(np.abs(orbit.u[0] - trace).max(),
                    np.abs(orbit.p[0]).max()))
    fan = _assemble_fan(
        [c1], [u0.copy(), trace], left_layer=orbit,
        trace0=State(float(trace[0]), float(trace[1])),
        meta={"side": "right_xL", "s1": s1, "s2": s2,
              "layer_endpoint_gap": gap,
              "residual": float(np.abs(wall - ub).max())},
    )
    fan.segments[-1]["speed_hi"] = 0.0  # fan lives in (x - L)/t <= 0
    return fan
