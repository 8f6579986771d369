from pathlib import Path
from typing import Optional, Union


class MuseError(Exception):
    """Base class for errors raised by the answer ranker"""


class ConfigError(MuseError, ValueError):
    """Invalid or unknown configuration values"""


class CorpusFormatError(MuseError, ValueError):
    """A record in a JSON-lines input file does not match its schema"""

    def __init__(self, path: Union[str, Path], line_no: Optional[int], message: str):
        self.path = str(path)
        self.line_no = line_no
        self.message = message
        where = f"{self.path}:{line_no}" if line_no is not None else self.path
        super().__init__(f"{where}: {message}")


class CheckpointMismatchError(MuseError, RuntimeError):
    """A checkpoint does not fit the requested configuration"""

    def __init__(self, key: str, expected, found):
        self.key = key
        super().__init__(f"checkpoint mismatch on '{key}': expected {expected!r}, found {found!r}")


class NumericError(MuseError, FloatingPointError):
    """Non-finite values appeared during encoding or training"""
