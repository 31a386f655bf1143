# src/errors.py
from pathlib import Path
from typing import Optional


class SimulatorError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigError(SimulatorError, ValueError):
    """Unknown config key, malformed value, or a value outside its domain."""


class DeviceModelError(SimulatorError, ValueError):
    """An argument lies outside the domain of a device-model function."""


class ShapeError(SimulatorError, ValueError):
    """Array dimensions do not match the network layout."""


class DataFormatError(SimulatorError, ValueError):
    """An input data file cannot be parsed."""


class IdxFormatError(DataFormatError):
    """Structural corruption in an IDX file."""

    def __init__(self, message: str, path: Optional[Path] = None, offset: int = 0):
        self.path = Path(path) if path is not None else None
        self.offset = offset
        where = f"{self.path.name}, " if self.path is not None else ""
        super().__init__(f"{message} ({where}byte offset {offset})")


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


class NumericalAbortError(SimulatorError, RuntimeError):
    """A non-finite value appeared during training."""

    def __init__(self, epoch: int, batch: int, layer: str, detail: str = "non-finite value"):
        self.epoch = epoch
        self.batch = batch
        self.layer = layer
        super().__init__(f"{detail} in {layer} at epoch {epoch}, batch {batch}")
