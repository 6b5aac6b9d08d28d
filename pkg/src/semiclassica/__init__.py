"""Classical, one-loop effective and quantum dynamics of the rescaled
oscillator ``V = (q1^2 + q2^2) / 2 + q1^2 q2^2``."""

__version__ = "0.1.0"

from .model import ModelParams, PhaseState  # noqa: E402
from .errors import SemiclassicaError  # noqa: E402

__all__ = ["ModelParams", "PhaseState", "SemiclassicaError", "__version__"]
