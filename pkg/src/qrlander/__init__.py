"""Reinforcement learning for a 2D rocket lander with a variational quantum Q-network."""

from .errors import ConfigError, FormatError, InputError, QrlanderError, StructureError, UsageError

__version__ = "0.1.0"

__all__ = ["ConfigError", "FormatError", "InputError", "QrlanderError", "StructureError", "UsageError"]
