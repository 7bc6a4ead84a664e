"""Exception types shared across the package."""


class UAMOError(Exception):
    """Base class for package errors."""


class InvalidParameterError(UAMOError, ValueError):
    """Parameter outside its admissible range."""


class SingularCoinError(UAMOError):
    """Coin entry q22 vanishes, so the transfer matrix is undefined."""


class SingularCocycleError(UAMOError):
    """The cocycle denominator vanishes on the requested phase."""


class WindowTooSmallError(UAMOError):
    """Lattice window cannot hold the light cone of the evolution."""


class NonConvergenceError(UAMOError):
    """A numerical routine failed to reach its tolerance."""


class DegenerateSeriesError(UAMOError):
    """Input series carries no information (zero variance, empty)."""
