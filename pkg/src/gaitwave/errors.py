"""Exception types shared across the toolkit."""


class GaitwaveError(Exception):
    """Base class for toolkit-specific failures."""


class FormatError(GaitwaveError):
    """A file does not follow the canonical on-disk format."""


class TruncationError(FormatError):
    """Recording payload size disagrees with its header."""


class SpecError(GaitwaveError, ValueError):
    """A generator spec or experiment config is invalid."""


class ConfigError(GaitwaveError, ValueError):
    """A model or experiment configuration is invalid."""


class StratificationError(GaitwaveError, ValueError):
    """A class has too few windows to be split across train/val/test."""


class TrainingFailure(GaitwaveError, RuntimeError):
    """Training diverged (non-finite loss)."""

    # epoch is defaulted so the exception survives pickling across process
    # boundaries (unpickling reconstructs via cls(*args) before restoring
    # attributes)
    def __init__(self, message: str, epoch: int = -1):
        super().__init__(message)
        self.epoch = epoch
