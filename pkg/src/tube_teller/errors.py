from __future__ import annotations

from typing import ClassVar


class TubeTellerError(Exception):
    """Base class for every error raised on purpose by this package. The
    command line maps each subclass to its own exit code."""

    exit_code: ClassVar[int] = 4


class ConfigError(TubeTellerError, ValueError):
    """Invalid configuration keys, flags or parameter values."""

    exit_code: ClassVar[int] = 2


class DataError(TubeTellerError, ValueError):
    """Unreadable files, inconsistent dimensions or coordinates outside
    of the raster they refer to."""

    exit_code: ClassVar[int] = 3


class TrainingError(TubeTellerError):
    """Training can't continue (degenerate sample sets, diverging loss)."""
