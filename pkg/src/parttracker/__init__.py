"""Part-based dual-pathway visual tracker."""

__version__ = "0.1.0"

from .config import TrackerConfig, load_config
from .errors import InvalidInputError, NumericalError

__all__ = ["TrackerConfig", "load_config", "InvalidInputError", "NumericalError"]
