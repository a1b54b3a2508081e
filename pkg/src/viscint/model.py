"""2x2 triangular strictly hyperbolic systems.

A system is the matrix field

    A(u) = [[lambda1(u1), 0         ],
            [g(u1,u2),    lambda2(u1,u2)]]

together with a reference state ``u_star``, a box half-width ``delta_box``
defining the admissible neighborhood

    K = { u : |u - u_star|_inf <= delta_box },

and a separation speed ``c > 0`` certifying

    lambda1(u) < -c < 0 < c < lambda2(u)   for all u in K,

so that both boundaries of the space interval are noncharacteristic.  The
eigenvectors are normalized so that the first component of r1 is 1 and
r2 = (0,1):

    r1 = (1, g/(lambda1 - lambda2)),   ell1 = (1, 0),
    r2 = (0, 1),                       ell2 = (-g/(lambda1 - lambda2), 1).

Smoothness requirement: all coefficient callables must be C^2-evaluable
(finite differences are used for every derivative we need); they must accept
numpy arrays and broadcast elementwise.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DegenerateSpectrum, OutOfNeighborhood

__all__ = [
    "State",
    "TriangularSystem",
    "SpectralData",
    "HyperbolicityCertificate",
    "eigensystem",
    "certify_hyperbolic",
    "get_system",
    "system_from_affine",
    "SYSTEMS",
]


@dataclass(frozen=True)
class State:
    """A point in state space."""

    u1: float
    u2: float

    def __post_init__(self):
        if not (math.isfinite(self.u1) and math.isfinite(self.u2)):
            raise ValueError("state components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2], dtype=float)

    @staticmethod
    def of(value) -> "State":
        if isinstance(value, State):
            return value
        a = np.asarray(value, dtype=float).reshape(2)
        return State(float(a[0]), float(a[1]))


def _fd_step(u):
    return 1e-6 * (1.0 + np.abs(u))


@dataclass(frozen=True)
class TriangularSystem:
    """Coefficients and admissibility data of one triangular system.

    ``lambda1`` must depend on u1 only (the first equation decouples); this is
    not enforceable on black-box callables, but `certify_hyperbolic` samples
    would expose violations of the separation, and the (1,2) entry of A is
    structurally zero.

    The derivative evaluators return the pair of partials (d/du1, d/du2); when
    not supplied they fall back to central finite differences with step
    1e-6*(1+|u|), which is all the accuracy the wave decomposition needs
    (first derivatives enter at O(delta1)).
    """

    name: str
    lambda1: Callable
    lambda2: Callable
    g: Callable
    u_star: State
    delta_box: float
    c: float
    dlambda1: Optional[Callable] = None
    dlambda2: Optional[Callable] = None
    dg: Optional[Callable] = None

    def A(self, u1, u2):
        """Matrix entries as (a11, a21, a22); a12 is identically 0."""
        return self.lambda1(u1, u2), self.g(u1, u2), self.lambda2(u1, u2)

    def in_box(self, u1, u2, margin: float = 1.0) -> bool:
        half = margin * self.delta_box
        return bool(
            np.all(np.abs(np.asarray(u1) - self.u_star.u1) <= half)
            and np.all(np.abs(np.asarray(u2) - self.u_star.u2) <= half)
        )

    def _partials(self, f, u1, u2):
        h1 = _fd_step(u1)
        h2 = _fd_step(u2)
        d1 = (f(u1 + h1, u2) - f(u1 - h1, u2)) / (2.0 * h1)
        d2 = (f(u1, u2 + h2) - f(u1, u2 - h2)) / (2.0 * h2)
        return d1, d2

    def grad_lambda1(self, u1, u2):
        if self.dlambda1 is not None:
            return self.dlambda1(u1, u2)
        return self._partials(self.lambda1, u1, u2)

    def grad_lambda2(self, u1, u2):
        if self.dlambda2 is not None:
            return self.dlambda2(u1, u2)
        return self._partials(self.lambda2, u1, u2)

    def grad_g(self, u1, u2):
        if self.dg is not None:
            return self.dg(u1, u2)
        return self._partials(self.g, u1, u2)

    def max_speed(self, samples: int = 9) -> float:
        """Largest |lambda_i| over a tensor grid on K (used for CFL numbers)."""
        s = np.linspace(-self.delta_box, self.delta_box, samples)
        U1, U2 = np.meshgrid(self.u_star.u1 + s, self.u_star.u2 + s, indexing="ij")
        l1 = np.broadcast_to(self.lambda1(U1, U2), U1.shape)
        l2 = np.broadcast_to(self.lambda2(U1, U2), U1.shape)
        return float(max(np.max(np.abs(l1)), np.max(np.abs(l2))))

    def with_params(self, **kw) -> "TriangularSystem":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class SpectralData:
    """Eigensystem of A at one state, in the normalization above."""

    lambda1: float
    lambda2: float
    r1: np.ndarray
    r2: np.ndarray
    ell1: np.ndarray
    ell2: np.ndarray


class HyperbolicityCertificate:
    def __init__(self, c_measured: float, ok: bool, violator: Optional[State] = None):
        self.c_measured = c_measured
        self.ok = ok
        self.violator = violator

    def __repr__(self):  # pragma: no cover
        return f"HyperbolicityCertificate(c_measured={self.c_measured:.6g}, ok={self.ok})"


def eigensystem(sys: TriangularSystem, u, strict_box: bool = True) -> SpectralData:
    """Eigenvalues, eigenvectors and dual base of A(u).

    Closed form from triangularity: the second component of r1 is
    g/(lambda1-lambda2), and ell2 = (-g/(lambda1-lambda2), 1).  Refuses states
    outside K rather than regularizing, and refuses spectra closer than the
    certified separation 2c.
    """
    u = State.of(u)
    if strict_box and not sys.in_box(u.u1, u.u2, margin=1.0 + 1e-12):
        raise OutOfNeighborhood(f"state {u} outside the box of half-width {sys.delta_box}")
    l1 = float(sys.lambda1(u.u1, u.u2))
    l2 = float(sys.lambda2(u.u1, u.u2))
    if abs(l1 - l2) < 2.0 * sys.c:
        raise DegenerateSpectrum(
            f"|lambda1-lambda2| = {abs(l1 - l2):.3g} < 2c = {2 * sys.c:.3g} at {u}"
        )
    gv = float(sys.g(u.u1, u.u2))
    m0 = gv / (l1 - l2)
    return SpectralData(
        lambda1=l1,
        lambda2=l2,
        r1=np.array([1.0, m0]),
        r2=np.array([0.0, 1.0]),
        ell1=np.array([1.0, 0.0]),
        ell2=np.array([-m0, 1.0]),
    )


def certify_hyperbolic(sys: TriangularSystem, samples: int = 9) -> HyperbolicityCertificate:
    """Scan a tensor grid over K and measure the separation speed.

    Returns the grid minimum of min(-lambda1, lambda2); ``ok`` iff it exceeds
    sys.c.  Never raises: a violation is reported with the violating state.
    """
    if samples < 4:
        raise ConfigError("certify_hyperbolic needs at least 4 samples per axis")
    s = np.linspace(-sys.delta_box, sys.delta_box, samples)
    U1, U2 = np.meshgrid(sys.u_star.u1 + s, sys.u_star.u2 + s, indexing="ij")
    l1 = np.broadcast_to(np.asarray(sys.lambda1(U1, U2), dtype=float), U1.shape)
    l2 = np.broadcast_to(np.asarray(sys.lambda2(U1, U2), dtype=float), U1.shape)
    sep = np.minimum(-l1, l2)
    k = np.unravel_index(int(np.argmin(sep)), sep.shape)
    c_measured = float(sep[k])
    ok = bool(c_measured > sys.c)
    violator = None if ok else State(float(U1[k]), float(U2[k]))
    return HyperbolicityCertificate(c_measured, ok, violator)


# -------------------------------------------------------------------------
# Built-in registry and config-friendly constructors
# -------------------------------------------------------------------------

def _const(v):
    return lambda u1, u2: v + 0.0 * np.asarray(u1)


def _make_diag():
    return TriangularSystem(
        name="diag",
        lambda1=_const(-1.0),
        lambda2=_const(1.0),
        g=_const(0.0),
        u_star=State(0.0, 0.0),
        delta_box=0.6,
        c=0.5,
        dlambda1=lambda u1, u2: (0.0 * np.asarray(u1), 0.0 * np.asarray(u1)),
        dlambda2=lambda u1, u2: (0.0 * np.asarray(u1), 0.0 * np.asarray(u1)),
        dg=lambda u1, u2: (0.0 * np.asarray(u1), 0.0 * np.asarray(u1)),
    )


def _make_const_coupled():
    s = _make_diag()
    return dataclasses.replace(s, name="const-coupled", g=_const(1.0))


def _make_burgers_triangular():
    one = lambda u1, u2: 1.0 + 0.0 * np.asarray(u1)
    zero = lambda u1, u2: 0.0 * np.asarray(u1)
    return TriangularSystem(
        name="burgers-triangular",
        lambda1=lambda u1, u2: -2.0 + np.asarray(u1, dtype=float),
        lambda2=lambda u1, u2: 2.0 + np.asarray(u2, dtype=float),
        g=lambda u1, u2: np.asarray(u1, dtype=float) + 0.0 * np.asarray(u2),
        u_star=State(0.0, 0.0),
        delta_box=0.6,
        c=1.0,
        dlambda1=lambda u1, u2: (one(u1, u2), zero(u1, u2)),
        dlambda2=lambda u1, u2: (zero(u1, u2), one(u1, u2)),
        dg=lambda u1, u2: (one(u1, u2), zero(u1, u2)),
    )


SYSTEMS = {
    "diag": _make_diag,
    "const-coupled": _make_const_coupled,
    "burgers-triangular": _make_burgers_triangular,
}


def get_system(name: str) -> TriangularSystem:
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown system {name!r}; known: {', '.join(sorted(SYSTEMS))}"
        ) from None


_AFFINE_TERM = re.compile(
    r"""\s*(?P<sign>[+-]?)\s*
        (?:
            (?P<coef>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)\s*(?:\*\s*(?P<var1>u1|u2))?
          | (?P<var2>u1|u2)
        )\s*""",
    re.VERBOSE,
)


def parse_affine(expr: str):
    """Parse an affine expression in u1, u2 like ``-2 + u1`` or ``0.5*u2 - 1``.

    Returns (c0, c1, c2) with expr = c0 + c1*u1 + c2*u2.  Deliberately tiny:
    configs must not execute code, and affine coefficients cover every built-in
    and the intended config use.
    """
    c = [0.0, 0.0, 0.0]
    pos = 0
    expr = expr.strip()
    if not expr:
        raise ConfigError("empty coefficient expression")
    while pos < len(expr):
        m = _AFFINE_TERM.match(expr, pos)
        if not m or m.end() == pos:
            raise ConfigError(f"cannot parse affine expression {expr!r} at {expr[pos:]!r}")
        sign = -1.0 if m.group("sign") == "-" else 1.0
        var = m.group("var1") or m.group("var2")
        coef = float(m.group("coef")) if m.group("coef") is not None else 1.0
        if var is None:
            c[0] += sign * coef
        else:
            c[1 if var == "u1" else 2] += sign * coef
        pos = m.end()
    return tuple(c)


def system_from_affine(
    name: str,
    lambda1: str,
    lambda2: str,
    g: str,
    u_star=(0.0, 0.0),
    delta_box: float = 0.6,
    c: float = 0.5,
) -> TriangularSystem:
    """Build a system from affine coefficient strings (config front end)."""
    a0, a1, a2 = parse_affine(lambda1)
    if a2 != 0.0:
        raise ConfigError("lambda1 must depend on u1 only (triangular form)")
    b0, b1, b2 = parse_affine(lambda2)
    g0, g1, g2 = parse_affine(g)

    def lam1(u1, u2):
        return a0 + a1 * np.asarray(u1, dtype=float) + 0.0 * np.asarray(u2)

    def lam2(u1, u2):
        return b0 + b1 * np.asarray(u1, dtype=float) + b2 * np.asarray(u2, dtype=float)

    def gfun(u1, u2):
        return g0 + g1 * np.asarray(u1, dtype=float) + g2 * np.asarray(u2, dtype=float)

    return TriangularSystem(
        name=name,
        lambda1=lam1,
        lambda2=lam2,
        g=gfun,
        u_star=State.of(u_star),
        delta_box=float(delta_box),
        c=float(c),
    )
