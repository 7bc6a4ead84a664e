"""Numerics for the unitary almost-Mathieu quantum walk W = S Q."""

__version__ = "0.1.0"

from . import cmv, cocycle, core, duality, spectrum, walk, walk2d  # noqa: E402
from .cmv import *  # noqa: E402,F401,F403
from .cocycle import *  # noqa: E402,F401,F403
from .core import *  # noqa: E402,F401,F403
from .duality import *  # noqa: E402,F401,F403
from .errors import *  # noqa: E402,F401,F403
from .spectrum import *  # noqa: E402,F401,F403
from .walk import *  # noqa: E402,F401,F403
from .walk2d import *  # noqa: E402,F401,F403

__all__ = (["__version__"] + core.__all__ + walk.__all__ + walk2d.__all__ + cocycle.__all__
           + spectrum.__all__ + duality.__all__ + cmv.__all__
           + ["UAMOError", "InvalidParameterError", "SingularCoinError", "SingularCocycleError",
              "WindowTooSmallError", "NonConvergenceError", "DegenerateSeriesError"])
