"""Exception hierarchy.

Configuration problems and numerical failures are kept apart so the CLI can
map them to distinct exit codes (2 and 3 respectively).
"""


class ViscintError(Exception):
    """Base class for everything raised on purpose by this package."""


class ConfigError(ViscintError):
    """Bad user input: unknown keys, unparsable coefficients, missing files."""


class NumericalError(ViscintError):
    """Base class for runtime numerical failures."""


# --- model ---------------------------------------------------------------

class OutOfNeighborhood(NumericalError):
    """State left the admissible box K around the reference state."""


class DegenerateSpectrum(NumericalError):
    """Eigenvalues came closer than the certified separation 2c."""


# --- kernels -------------------------------------------------------------

class NonpositiveTime(NumericalError):
    pass


class TruncationOverflow(NumericalError):
    """The image series did not reach tail_tol within m_max shells."""


class CharacteristicDrift(NumericalError):
    """J kernels need lambda != 0; their closed form divides by e^(lam L) - 1."""


class QuadratureFailure(NumericalError):
    pass


# --- solver / profiles / riemann ------------------------------------------

class Diverged(NumericalError):
    """A marching solution left the 1.5*K overshoot margin."""


class StabilityViolation(NumericalError):
    """Grid violates the advective CFL / cell-Peclet preconditions."""


class NoContraction(NumericalError):
    """A fixed-point iteration failed to contract (data too large)."""

    def __init__(self, message, factor=None):
        super().__init__(message)
        self.factor = factor


class NoConvergence(NumericalError):
    """A shooting / orbit computation escaped the admissible region."""


class NoSolution(NumericalError):
    """Nonlinear solve (Riemann / boundary Riemann) left the solvability ball."""


class CutoffDominates(NumericalError):
    """The speed cutoff is active on most of the domain; decomposition moot."""


class TraceUndefined(NumericalError):
    """One-sided averages did not stabilize; not a usable Lebesgue point."""
