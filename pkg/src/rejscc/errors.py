"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Inconsistent or impossible configuration (wrong divisibility, shape mismatch...)."""


class DegenerateSignalError(ValueError):
    """An all-zero symbol vector reached power normalization."""


class OutageError(RuntimeError):
    """Channel gain magnitude too small to equalize."""


class ProtocolError(RuntimeError):
    """Transmission session misuse: out-of-order blocks, gaps, or exhausted sessions."""


class CheckpointMismatchError(RuntimeError):
    """Checkpoint incompatible with the requested model/scenario dimensions."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; a diagnostic checkpoint was written."""
